//! Golden wire corpus: raw message bytes next to JSON sidecars describing the
//! expected parse. Canonical messages must re-serialize byte for byte.

use std::path::{Path, PathBuf};

use echo_testbed::wire::{
    control_decode, control_encode, http_parse, http_serialize, oobe_decode, oobe_decode_response,
    sdp_decode, sdp_encode, sip_parse, sip_serialize, CandidateKind, SipStart,
};
use serde_json::Value;

fn corpus() -> Vec<(PathBuf, Vec<u8>, Value)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let Some(stem) = name.strip_suffix(".expect.json") else {
            continue;
        };
        let raw = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| {
                let n = p.file_name().unwrap().to_str().unwrap();
                n.starts_with(&format!("{stem}.")) && !n.ends_with(".expect.json")
            })
            .unwrap_or_else(|| panic!("no raw file for {name}"));
        let expect: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        out.push((raw.clone(), std::fs::read(&raw).unwrap(), expect));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn header_names(h: &echo_testbed::wire::Headers) -> Vec<String> {
    h.iter().map(|(n, _)| n.to_string()).collect()
}

fn names(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

fn check_sip(raw: &[u8], want: &Value) {
    let m = sip_parse(raw).unwrap();
    match (&m.start, want.get("request"), want.get("status")) {
        (SipStart::Request { method, uri }, Some(r), None) => {
            assert_eq!(method.to_string(), r.as_str().unwrap());
            assert_eq!(uri, want["uri"].as_str().unwrap());
        }
        (SipStart::Response { status, reason }, None, Some(s)) => {
            assert_eq!(u64::from(*status), s.as_u64().unwrap());
            assert_eq!(reason, want["reason"].as_str().unwrap());
        }
        other => panic!("start line mismatch: {other:?}"),
    }
    assert_eq!(m.call_id(), want["call_id"].as_str().unwrap());
    let (num, method) = m.cseq().unwrap();
    assert_eq!(u64::from(num), want["cseq"][0].as_u64().unwrap());
    assert_eq!(method.to_string(), want["cseq"][1].as_str().unwrap());
    assert_eq!(header_names(&m.headers), names(&want["header_names"]));
    for (k, v) in want["headers"].as_object().unwrap() {
        assert_eq!(m.header(k), v.as_str(), "header {k}");
    }
    assert_eq!(m.body.len() as u64, want["body_len"].as_u64().unwrap());
    if want.get("body_is_sdp").is_some() {
        sdp_decode(&m.body).unwrap();
    }
    assert_eq!(sip_serialize(&m).unwrap(), raw);
}

fn check_http(raw: &[u8], want: &Value) {
    let m = http_parse(raw).unwrap();
    assert_eq!(header_names(&m.headers), names(&want["header_names"]));
    let env = if let Some(s) = want.get("status") {
        let (status, env) = oobe_decode_response(&m).unwrap();
        assert_eq!(u64::from(status), s.as_u64().unwrap());
        env
    } else {
        assert_eq!(m.method(), want["method"].as_str());
        assert_eq!(m.path(), want["path"].as_str());
        oobe_decode(&m).unwrap()
    };
    assert_eq!(env.method, want["oobe_method"].as_str().unwrap());
    assert_eq!(Value::Object(env.args), want["oobe_args"]);
    assert_eq!(http_serialize(&m).unwrap(), raw);
}

fn check_sdp(raw: &[u8], want: &Value) {
    let b = sdp_decode(raw).unwrap();
    assert_eq!(b.session_id, want["session_id"].as_u64().unwrap());
    assert_eq!(b.address.to_string(), want["address"].as_str().unwrap());
    assert_eq!(
        u64::from(b.media_port),
        want["media_port"].as_u64().unwrap()
    );
    assert_eq!(u64::from(b.ssrc), want["ssrc"].as_u64().unwrap());
    let cands: Vec<(String, String, u64)> = b
        .candidates
        .iter()
        .map(|c| {
            let k = if c.kind == CandidateKind::Host {
                "host"
            } else {
                "relay"
            };
            (k.to_string(), c.address.to_string(), u64::from(c.port))
        })
        .collect();
    let want_c: Vec<(String, String, u64)> = want["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c[0].as_str().unwrap().into(),
                c[1].as_str().unwrap().into(),
                c[2].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(cands, want_c);
    assert_eq!(b.crypto.suite, want["suite"].as_str().unwrap());
    assert_eq!(
        hex::encode(&b.crypto.key_salt),
        want["key_salt_hex"].as_str().unwrap()
    );
    assert_eq!(sdp_encode(&b).unwrap(), raw);
}

fn check_control(raw: &[u8], want: &Value) {
    let m = control_decode(raw).unwrap();
    assert_eq!(m.interface, want["interface"].as_str().unwrap());
    assert_eq!(m.name, want["name"].as_str().unwrap());
    assert_eq!(m.unknown, want["unknown"].as_bool().unwrap());
    let raw_json: Value = serde_json::from_slice(raw).unwrap();
    assert_eq!(m.payload, raw_json["payload"]);
    assert_eq!(control_decode(&control_encode(&m)).unwrap(), m);
}

#[test]
fn every_corpus_entry_matches_its_sidecar() {
    let entries = corpus();
    assert!(entries.len() >= 10, "corpus has {} entries", entries.len());
    for (path, raw, want) in &entries {
        eprintln!("checking {}", path.display());
        match want["kind"].as_str().unwrap() {
            "sip" => check_sip(raw, want),
            "http" => check_http(raw, want),
            "sdp" => check_sdp(raw, want),
            "control" => check_control(raw, want),
            k => panic!("unknown kind {k}"),
        }
    }
}

#[test]
fn corrupted_corpus_entries_fail_cleanly() {
    for (path, raw, want) in corpus() {
        let kind = want["kind"].as_str().unwrap();
        for cut in [0, 1, raw.len() / 2, raw.len().saturating_sub(1)] {
            let r = &raw[..cut];
            let failed = match kind {
                "sip" => sip_parse(r).is_err(),
                "http" => http_parse(r).is_err(),
                "sdp" => sdp_decode(r).is_err(),
                _ => control_decode(r).is_err(),
            };
            assert!(failed, "{} truncated to {cut} still parsed", path.display());
        }
    }
}

#[test]
fn sip_without_call_id_is_rejected() {
    let raw = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/cancel.sip"))
        .unwrap();
    let text = String::from_utf8(raw).unwrap();
    let stripped: String = text
        .split_inclusive("\r\n")
        .filter(|l| !l.starts_with("Call-ID:"))
        .collect();
    let err = sip_parse(stripped.as_bytes()).unwrap_err();
    assert!(
        err.to_string().contains("missing mandatory header"),
        "{err}"
    );
}
