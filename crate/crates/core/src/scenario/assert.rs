//! Trace assertion language. Evaluation is a pure function of the trace.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::crypto::{packet_header, srtp_derive};
use crate::netsim::{Layer, TraceEvent};

/// Selects trace events. Every present field must match; string fields are
/// regular expressions searched within the event field.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secured: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Assertion {
    /// The steps occur in this order, not necessarily adjacent.
    Ordered {
        #[serde(default)]
        name: Option<String>,
        steps: Vec<Matcher>,
    },
    Present {
        #[serde(default)]
        name: Option<String>,
        #[serde(rename = "match")]
        matcher: Matcher,
    },
    /// No event matches, and no matching payload contains the literal.
    Absent {
        #[serde(default)]
        name: Option<String>,
        #[serde(rename = "match", default)]
        matcher: Option<Matcher>,
        #[serde(default)]
        payload: Option<String>,
    },
    Count {
        #[serde(default)]
        name: Option<String>,
        #[serde(rename = "match")]
        matcher: Matcher,
        #[serde(default)]
        equals: Option<usize>,
        #[serde(default)]
        at_least: Option<usize>,
        #[serde(default)]
        at_most: Option<usize>,
    },
    /// Every matching event sits on one of `lans`; at least one must match.
    LanLocality {
        #[serde(default)]
        name: Option<String>,
        #[serde(rename = "match")]
        matcher: Matcher,
        lans: Vec<String>,
    },
    /// Media packets of `call_id` on the relay decrypt under the key the
    /// registrar recorded, and fail under any other key.
    SrtpDecrypt {
        #[serde(default)]
        name: Option<String>,
        call_id: String,
        #[serde(default = "default_min_packets")]
        min_packets: usize,
    },
}

fn default_min_packets() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssertError {
    #[error("malformed assertion: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    /// Index of the step or event where evaluation first failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<usize>,
}

struct Compiled {
    layer: Option<Layer>,
    summary: Option<Regex>,
    src: Option<Regex>,
    dst: Option<Regex>,
    lan: Option<Regex>,
    secured: Option<bool>,
}

fn re(field: &str, p: &Option<String>) -> Result<Option<Regex>, AssertError> {
    p.as_ref()
        .map(|s| Regex::new(s).map_err(|e| AssertError::Malformed(format!("{field} {s:?}: {e}"))))
        .transpose()
}

impl Matcher {
    pub fn summary(layer: Layer, pattern: &str) -> Self {
        Matcher {
            layer: Some(layer),
            summary: Some(pattern.to_string()),
            ..Default::default()
        }
    }

    fn compile(&self) -> Result<Compiled, AssertError> {
        Ok(Compiled {
            layer: self.layer,
            summary: re("summary", &self.summary)?,
            src: re("src", &self.src)?,
            dst: re("dst", &self.dst)?,
            lan: re("lan", &self.lan)?,
            secured: self.secured,
        })
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(l) = self.layer {
            parts.push(format!("layer={l}"));
        }
        for (k, v) in [
            ("summary", &self.summary),
            ("src", &self.src),
            ("dst", &self.dst),
            ("lan", &self.lan),
        ] {
            if let Some(v) = v {
                parts.push(format!("{k}~/{v}/"));
            }
        }
        if let Some(s) = self.secured {
            parts.push(format!("secured={s}"));
        }
        if parts.is_empty() {
            "any".into()
        } else {
            parts.join(" ")
        }
    }
}

impl Compiled {
    fn matches(&self, e: &TraceEvent) -> bool {
        self.layer.is_none_or(|l| l == e.layer)
            && self.summary.as_ref().is_none_or(|r| r.is_match(&e.summary))
            && self.src.as_ref().is_none_or(|r| r.is_match(&e.src))
            && self.dst.as_ref().is_none_or(|r| r.is_match(&e.dst))
            && self.lan.as_ref().is_none_or(|r| r.is_match(&e.lan))
            && self.secured.is_none_or(|s| s == e.secured)
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

impl Assertion {
    pub fn name(&self) -> String {
        let (n, default) = match self {
            Assertion::Ordered { name, steps } => (name, format!("ordered[{}]", steps.len())),
            Assertion::Present { name, matcher } => {
                (name, format!("present {}", matcher.describe()))
            }
            Assertion::Absent {
                name,
                payload,
                matcher,
            } => (
                name,
                match (payload, matcher) {
                    (Some(p), _) => format!("absent payload {p:?}"),
                    (None, Some(m)) => format!("absent {}", m.describe()),
                    (None, None) => "absent".into(),
                },
            ),
            Assertion::Count { name, matcher, .. } => {
                (name, format!("count {}", matcher.describe()))
            }
            Assertion::LanLocality { name, lans, .. } => {
                (name, format!("lan locality {}", lans.join(",")))
            }
            Assertion::SrtpDecrypt { name, call_id, .. } => {
                (name, format!("srtp decrypt {call_id}"))
            }
        };
        n.clone().unwrap_or(default)
    }

    pub fn evaluate(&self, trace: &[TraceEvent]) -> Result<Verdict, AssertError> {
        let name = self.name();
        let verdict = |pass: bool, detail: String, first_failure: Option<usize>| Verdict {
            name: name.clone(),
            pass,
            detail,
            first_failure,
        };
        match self {
            Assertion::Ordered { steps, .. } => {
                if steps.is_empty() {
                    return Err(AssertError::Malformed(
                        "ordered needs at least one step".into(),
                    ));
                }
                let compiled = steps
                    .iter()
                    .map(Matcher::compile)
                    .collect::<Result<Vec<_>, _>>()?;
                let mut pos = 0usize;
                let mut last_seq = None;
                for (i, c) in compiled.iter().enumerate() {
                    match trace[pos..].iter().position(|e| c.matches(e)) {
                        Some(off) => {
                            last_seq = Some(trace[pos + off].seq);
                            pos += off + 1;
                        }
                        None => {
                            let after = last_seq
                                .map_or("start of trace".to_string(), |s| format!("seq {s}"));
                            return Ok(verdict(
                                false,
                                format!(
                                    "step {i} ({}) not found after {after}",
                                    steps[i].describe()
                                ),
                                Some(i),
                            ));
                        }
                    }
                }
                Ok(verdict(
                    true,
                    format!("{} steps matched", steps.len()),
                    None,
                ))
            }
            Assertion::Present { matcher, .. } => {
                let c = matcher.compile()?;
                match trace.iter().find(|e| c.matches(e)) {
                    Some(e) => Ok(verdict(true, format!("seq {}", e.seq), None)),
                    None => Ok(verdict(
                        false,
                        format!("no event matches {}", matcher.describe()),
                        Some(0),
                    )),
                }
            }
            Assertion::Absent {
                matcher, payload, ..
            } => {
                if matcher.is_none() && payload.is_none() {
                    return Err(AssertError::Malformed(
                        "absent needs match or payload".into(),
                    ));
                }
                let c = matcher.as_ref().map(Matcher::compile).transpose()?;
                let hit = trace.iter().find(|e| {
                    c.as_ref().is_none_or(|c| c.matches(e))
                        && payload.as_ref().is_none_or(|p| {
                            e.payload
                                .as_deref()
                                .is_some_and(|b| contains(b, p.as_bytes()))
                        })
                });
                match hit {
                    Some(e) => Ok(verdict(
                        false,
                        format!("seq {} {} {}: {}", e.seq, e.lan, e.layer, e.summary),
                        Some(e.seq as usize),
                    )),
                    None => Ok(verdict(true, "not found".into(), None)),
                }
            }
            Assertion::Count {
                matcher,
                equals,
                at_least,
                at_most,
                ..
            } => {
                if equals.is_none() && at_least.is_none() && at_most.is_none() {
                    return Err(AssertError::Malformed(
                        "count needs equals, at_least or at_most".into(),
                    ));
                }
                let c = matcher.compile()?;
                let hits: Vec<&TraceEvent> = trace.iter().filter(|e| c.matches(e)).collect();
                let n = hits.len();
                let ok = equals.is_none_or(|x| n == x)
                    && at_least.is_none_or(|x| n >= x)
                    && at_most.is_none_or(|x| n <= x);
                let want = [("==", equals), (">=", at_least), ("<=", at_most)]
                    .iter()
                    .filter_map(|(op, v)| v.map(|v| format!("{op}{v}")))
                    .collect::<Vec<_>>()
                    .join(" ");
                let first = if ok {
                    None
                } else {
                    let cap = equals.or(*at_most);
                    Some(cap.and_then(|c| hits.get(c)).map_or(0, |e| e.seq as usize))
                };
                Ok(verdict(
                    ok,
                    format!("{n} matching events, want {want}"),
                    first,
                ))
            }
            Assertion::LanLocality { matcher, lans, .. } => {
                let c = matcher.compile()?;
                let hits: Vec<&TraceEvent> = trace.iter().filter(|e| c.matches(e)).collect();
                if hits.is_empty() {
                    return Ok(verdict(
                        false,
                        format!("no event matches {}", matcher.describe()),
                        Some(0),
                    ));
                }
                match hits.iter().find(|e| !lans.contains(&e.lan)) {
                    Some(e) => Ok(verdict(
                        false,
                        format!("seq {} on {} ({})", e.seq, e.lan, e.summary),
                        Some(e.seq as usize),
                    )),
                    None => Ok(verdict(
                        true,
                        format!("{} events on {}", hits.len(), lans.join(",")),
                        None,
                    )),
                }
            }
            Assertion::SrtpDecrypt {
                call_id,
                min_packets,
                ..
            } => Ok(srtp_check(trace, call_id, *min_packets, verdict)),
        }
    }
}

/// Parses a registrar key observation note:
/// `registrar: sdes <dir> <call_id> ssrc=<hex> key=<hex>`.
pub fn parse_sdes_note(summary: &str) -> Option<(String, u32, Vec<u8>)> {
    let rest = summary.strip_prefix("registrar: sdes ")?;
    let mut it = rest.split_whitespace();
    let _dir = it.next()?;
    let call = it.next()?.to_string();
    let ssrc = u32::from_str_radix(it.next()?.strip_prefix("ssrc=")?, 16).ok()?;
    let key = hex::decode(it.next()?.strip_prefix("key=")?).ok()?;
    Some((call, ssrc, key))
}

fn srtp_check(
    trace: &[TraceEvent],
    call_id: &str,
    min_packets: usize,
    verdict: impl Fn(bool, String, Option<usize>) -> Verdict,
) -> Verdict {
    let keys: BTreeMap<u32, Vec<u8>> = trace
        .iter()
        .filter(|e| e.layer == Layer::Sdp)
        .filter_map(|e| parse_sdes_note(&e.summary))
        .filter(|(c, _, _)| c == call_id)
        .map(|(_, ssrc, key)| (ssrc, key))
        .collect();
    if keys.is_empty() {
        return verdict(
            false,
            format!("registrar recorded no key for {call_id}"),
            Some(0),
        );
    }
    let prefix = format!("relay {call_id} ");
    let packets: Vec<&TraceEvent> = trace
        .iter()
        .filter(|e| {
            e.layer == Layer::Media && e.summary.starts_with(&prefix) && e.payload.is_some()
        })
        .collect();
    if packets.len() < min_packets {
        return verdict(
            false,
            format!("{} relayed packets, want >= {min_packets}", packets.len()),
            Some(0),
        );
    }
    let wrong_key = [0x5au8; 46];
    for e in &packets {
        let pkt = e.payload.as_deref().unwrap();
        let Some((_, _, ssrc)) = packet_header(pkt) else {
            return verdict(
                false,
                format!("seq {} is not an SRTP packet", e.seq),
                Some(e.seq as usize),
            );
        };
        let Some(key) = keys.get(&ssrc) else {
            return verdict(
                false,
                format!("seq {} ssrc {ssrc:08x} has no recorded key", e.seq),
                Some(e.seq as usize),
            );
        };
        let (mk, ms) = key.split_at(key.len().min(32));
        let opened = srtp_derive(mk, ms, ssrc).and_then(|mut c| c.unprotect(pkt));
        if opened.is_err() {
            return verdict(
                false,
                format!("seq {} did not decrypt with the recorded key", e.seq),
                Some(e.seq as usize),
            );
        }
        let (wk, ws) = wrong_key.split_at(32);
        if srtp_derive(wk, ws, ssrc)
            .and_then(|mut c| c.unprotect(pkt))
            .is_ok()
        {
            return verdict(
                false,
                format!("seq {} decrypted under an unrelated key", e.seq),
                Some(e.seq as usize),
            );
        }
        if pkt.windows(12).any(|w| w == b"MEDIA-CANARY") {
            return verdict(
                false,
                format!("seq {} carries plaintext media", e.seq),
                Some(e.seq as usize),
            );
        }
    }
    verdict(
        true,
        format!(
            "{} relayed packets decrypt only with the recorded master key",
            packets.len()
        ),
        None,
    )
}

/// Parses an assertion file: a JSON array of assertions or `{"assertions": [...]}`.
pub fn parse_assertions(text: &str) -> Result<Vec<Assertion>, AssertError> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| AssertError::Malformed(e.to_string()))?;
    let list = match v {
        serde_json::Value::Object(mut m) if m.contains_key("assertions") => {
            m.remove("assertions").unwrap()
        }
        other => other,
    };
    let list: Vec<Assertion> = match list {
        serde_json::Value::Array(_) => serde_json::from_value(list),
        single => serde_json::from_value(single).map(|a| vec![a]),
    }
    .map_err(|e| AssertError::Malformed(e.to_string()))?;
    for a in &list {
        a.evaluate(&[])?;
    }
    Ok(list)
}

pub fn evaluate_all(
    trace: &[TraceEvent],
    assertions: &[Assertion],
) -> Result<Vec<Verdict>, AssertError> {
    assertions.iter().map(|a| a.evaluate(trace)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, layer: Layer, lan: &str, summary: &str, payload: Option<&[u8]>) -> TraceEvent {
        TraceEvent {
            seq,
            t_ms: seq,
            src: "a".into(),
            dst: "b".into(),
            lan: lan.into(),
            secured: payload.is_none(),
            layer,
            summary: summary.into(),
            payload: payload.map(<[u8]>::to_vec),
        }
    }

    fn trace() -> Vec<TraceEvent> {
        vec![
            ev(0, Layer::Oobe, "pairing:Amazon-345", "ping", Some(b"x")),
            ev(1, Layer::Oobe, "pairing:Amazon-345", "ping 200", Some(b"y")),
            ev(
                2,
                Layer::Oobe,
                "pairing:Amazon-345",
                "getDeviceDetails",
                Some(b"z"),
            ),
            ev(3, Layer::Media, "home", "srtp call-1 seq=0", Some(b"\x80")),
            ev(
                4,
                Layer::Oobe,
                "pairing:Amazon-345",
                "connectToAP",
                Some(b"ciphertext"),
            ),
        ]
    }

    fn ordered(names: &[&str]) -> Assertion {
        Assertion::Ordered {
            name: None,
            steps: names
                .iter()
                .map(|n| Matcher::summary(Layer::Oobe, &format!("^{n}$")))
                .collect(),
        }
    }

    #[test]
    fn ordered_subsequence_and_first_failure() {
        let t = trace();
        assert!(
            ordered(&["ping", "getDeviceDetails", "connectToAP"])
                .evaluate(&t)
                .unwrap()
                .pass
        );
        let v = ordered(&["ping", "connectToAP", "getDeviceDetails"])
            .evaluate(&t)
            .unwrap();
        assert!(!v.pass);
        assert_eq!(v.first_failure, Some(2));
        assert!(v.detail.contains("after seq 4"), "{}", v.detail);
    }

    #[test]
    fn absent_payload_literal() {
        let t = trace();
        let a = |p: &str| Assertion::Absent {
            name: None,
            matcher: Some(Matcher {
                lan: Some("^pairing:".into()),
                ..Default::default()
            }),
            payload: Some(p.into()),
        };
        assert!(a("passphrase-canary").evaluate(&t).unwrap().pass);
        let v = a("cipher").evaluate(&t).unwrap();
        assert!(!v.pass);
        assert_eq!(v.first_failure, Some(4));
    }

    #[test]
    fn count_and_locality() {
        let t = trace();
        let media = Matcher {
            layer: Some(Layer::Media),
            ..Default::default()
        };
        let on_cloud = Matcher {
            lan: Some("^cloud$".into()),
            ..media.clone()
        };
        let count = |m: &Matcher, n| Assertion::Count {
            name: None,
            matcher: m.clone(),
            equals: Some(n),
            at_least: None,
            at_most: None,
        };
        assert!(count(&on_cloud, 0).evaluate(&t).unwrap().pass);
        assert!(count(&media, 1).evaluate(&t).unwrap().pass);
        assert!(!count(&media, 2).evaluate(&t).unwrap().pass);
        let loc = |lans: &[&str]| Assertion::LanLocality {
            name: None,
            matcher: media.clone(),
            lans: lans.iter().map(|s| s.to_string()).collect(),
        };
        assert!(loc(&["home"]).evaluate(&t).unwrap().pass);
        assert!(!loc(&["cloud"]).evaluate(&t).unwrap().pass);
    }

    #[test]
    fn malformed_assertions_are_errors() {
        assert!(parse_assertions("{\"kind\":\"ordered\",\"steps\":[]}").is_err());
        assert!(parse_assertions("{\"kind\":\"present\",\"match\":{\"summary\":\"(\"}}").is_err());
        assert!(parse_assertions("{\"kind\":\"count\",\"match\":{}}").is_err());
        assert!(parse_assertions("{\"kind\":\"bogus\"}").is_err());
        assert!(parse_assertions("not json").is_err());
        let ok =
            parse_assertions("[{\"kind\":\"present\",\"match\":{\"layer\":\"oobe\"}}]").unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn evaluation_is_pure() {
        let t = trace();
        let a = ordered(&["ping", "connectToAP"]);
        assert_eq!(a.evaluate(&t).unwrap(), a.evaluate(&t).unwrap());
    }

    #[test]
    fn sdes_note_round_trip() {
        let (c, s, k) =
            parse_sdes_note("registrar: sdes offer call-3 ssrc=deadbeef key=0102").unwrap();
        assert_eq!((c.as_str(), s, k), ("call-3", 0xdeadbeef, vec![1, 2]));
        assert!(parse_sdes_note("registrar: forked").is_none());
    }
}
