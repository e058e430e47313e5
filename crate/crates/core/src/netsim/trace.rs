//! Trace events: the omniscient, layered record of everything that crosses
//! the fabric. Secured traffic is recorded without payload bytes.

use std::fmt;
use std::io::{self, BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Http,
    Oobe,
    Sip,
    Sdp,
    Control,
    Media,
    Sys,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Http => "http",
            Layer::Oobe => "oobe",
            Layer::Sip => "sip",
            Layer::Sdp => "sdp",
            Layer::Control => "control",
            Layer::Media => "media",
            Layer::Sys => "sys",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown layer {s:?}"))
    }
}

/// Sender-supplied description of a message, recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annot {
    pub layer: Layer,
    pub summary: String,
}

impl Annot {
    pub fn new(layer: Layer, summary: impl Into<String>) -> Self {
        Annot {
            layer,
            summary: summary.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub t_ms: u64,
    pub src: String,
    pub dst: String,
    pub lan: String,
    pub secured: bool,
    pub layer: Layer,
    pub summary: String,
    #[serde(
        rename = "payload_b64",
        default,
        skip_serializing_if = "Option::is_none",
        with = "payload_b64"
    )]
    pub payload: Option<Vec<u8>>,
}

mod payload_b64 {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_str(&B64.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| B64.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

pub fn write_jsonl(events: &[TraceEvent], mut out: impl Write) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(events: &[TraceEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_jsonl(input: impl BufRead) -> io::Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("trace line {}: {e}", i + 1),
            )
        })?;
        events.push(ev);
    }
    Ok(events)
}

/// SHA-256 over the JSON-lines rendering, hex encoded.
pub fn trace_hash(events: &[TraceEvent]) -> String {
    hex::encode(Sha256::digest(to_jsonl(events)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secured_events_have_no_payload_field() {
        let e = TraceEvent {
            seq: 0,
            t_ms: 1,
            src: "a".into(),
            dst: "b".into(),
            lan: "l".into(),
            secured: true,
            layer: Layer::Sip,
            summary: "INVITE".into(),
            payload: None,
        };
        let line = serde_json::to_string(&e).unwrap();
        assert!(!line.contains("payload"));
        let mut open = e.clone();
        open.secured = false;
        open.payload = Some(b"hi".to_vec());
        let text = to_jsonl(&[e.clone(), open.clone()]);
        assert!(String::from_utf8_lossy(&text).contains("\"payload_b64\":\"aGk=\""));
        assert_eq!(read_jsonl(&text[..]).unwrap(), vec![e, open]);
    }
}
