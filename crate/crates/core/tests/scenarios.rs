use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;

use echo_testbed::crypto::srtp_derive;
use echo_testbed::device::Device;
use echo_testbed::netsim::{to_jsonl, trace_hash, Layer, TraceEvent};
use echo_testbed::scenario::{
    execute, list_scenarios, run, Executed, Scenario, SCENARIO_EVENT_BUDGET,
};

const PASSPHRASE: &[u8] = b"passphrase-canary-7f3a";
const COOKIE: &[u8] = b"cookie-canary-";
const MEDIA: &[u8] = b"MEDIA-CANARY";

fn exec(name: &str) -> Executed {
    let s = Scenario::builtin(name).unwrap();
    execute(&s, s.seed).unwrap()
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

fn clear_payloads(trace: &[TraceEvent]) -> impl Iterator<Item = (&TraceEvent, &[u8])> {
    trace
        .iter()
        .filter(|e| !e.secured)
        .filter_map(|e| e.payload.as_deref().map(|p| (e, p)))
}

fn summary_hits(trace: &[TraceEvent], layer: Layer, pat: &str) -> usize {
    trace
        .iter()
        .filter(|e| e.layer == layer && e.summary.contains(pat))
        .count()
}

#[test]
fn every_builtin_passes() {
    for name in list_scenarios() {
        let s = Scenario::builtin(name).unwrap();
        let r = run(&s, s.seed).unwrap();
        assert!(r.passed(), "{name}: {:?}", r.first_failure());
    }
}

#[test]
fn builtins_hold_across_seeds() {
    for name in list_scenarios() {
        let s = Scenario::builtin(name).unwrap();
        for seed in [1, 2, 0xdead_beef] {
            let r = run(&s, seed).unwrap();
            assert!(r.passed(), "{name} seed {seed}: {:?}", r.first_failure());
        }
    }
}

#[test]
fn runs_are_byte_identical_and_bounded() {
    let start = Instant::now();
    for name in list_scenarios() {
        let s = Scenario::builtin(name).unwrap();
        let a = run(&s, s.seed).unwrap();
        let b = run(&s, s.seed).unwrap();
        assert_eq!(to_jsonl(&a.trace), to_jsonl(&b.trace), "{name}");
        assert_eq!(trace_hash(&a.trace), trace_hash(&b.trace));
        assert!(
            a.events < SCENARIO_EVENT_BUDGET,
            "{name}: {} events",
            a.events
        );
    }
    assert!(
        start.elapsed() < Duration::from_secs(30),
        "{:?}",
        start.elapsed()
    );
}

#[test]
fn seed_reaches_clear_traffic() {
    let s = Scenario::builtin("pair").unwrap();
    let a = run(&s, s.seed).unwrap();
    let b = run(&s, s.seed + 1).unwrap();
    assert_ne!(trace_hash(&a.trace), trace_hash(&b.trace));
}

#[test]
fn pair_is_fast_and_ends_provisioned() {
    let s = Scenario::builtin("pair").unwrap();
    let start = Instant::now();
    let ex = execute(&s, s.seed).unwrap();
    assert!(
        start.elapsed() < Duration::from_secs(1),
        "{:?}",
        start.elapsed()
    );
    let d: &Device = ex.device("echo1").unwrap();
    assert_eq!(d.mode.as_str(), "paired");
    assert_eq!(d.registration.as_str(), "registered");
    assert!(d.owns_grant_key().is_some());
    let g = d.grant.as_ref().unwrap();
    assert!(!g.auth_token.is_empty());
    assert_eq!(g.friendly_name, "Echo-0345");
    assert_eq!(
        ex.cloud()
            .state
            .owners
            .get(&d.identity.serial)
            .map(String::as_str),
        Some("alice")
    );
    assert!(d.avs_up);
}

#[test]
fn secrets_never_cross_the_fabric_in_clear() {
    for name in list_scenarios() {
        let ex = exec(name);
        let trace = ex.trace();
        let mut needles: Vec<Vec<u8>> = vec![PASSPHRASE.to_vec(), COOKIE.to_vec(), MEDIA.to_vec()];
        for id in ex.devices.keys() {
            let d = ex.device(id).unwrap();
            let secret = d.identity.secret;
            needles.push(secret.to_vec());
            needles.push(hex::encode(secret).into_bytes());
            needles.push(B64.encode(secret).into_bytes());
            needles.push(d.identity.keypair.to_secret_bytes().to_vec());
            needles.push(
                B64.encode(d.identity.keypair.to_secret_bytes())
                    .into_bytes(),
            );
            if let Some(g) = &d.grant {
                needles.push(g.private_key.clone().into_bytes());
                needles.push(B64.decode(&g.private_key).unwrap());
                needles.push(g.auth_token.clone().into_bytes());
            }
        }
        for (e, p) in clear_payloads(trace) {
            for n in &needles {
                assert!(
                    !contains(p, n),
                    "{name}: secret in clear at seq {} ({})",
                    e.seq,
                    e.summary
                );
            }
        }
    }
}

#[test]
fn eavesdropper_gets_code_and_blob_only() {
    let ex = exec("pair_eavesdrop");
    let a = ex.attacker("eve").unwrap();
    assert!(a.loot.link_code.is_some());
    assert!(a.loot.credential_armor.is_some());
    assert!(a.loot.plaintext_messages > 0);
    for (e, p) in clear_payloads(ex.trace()).filter(|(e, _)| e.lan.starts_with("pairing:")) {
        assert!(!contains(p, PASSPHRASE), "seq {}", e.seq);
        assert!(!contains(p, COOKIE), "seq {}", e.seq);
    }
    let armor = a.loot.credential_armor.as_ref().unwrap();
    assert!(!contains(armor.as_bytes(), PASSPHRASE));
    assert!(a.loot.secured_messages > 0);
    let code = a.loot.link_code.clone().unwrap();
    let dev = ex.device("echo1").unwrap();
    assert_eq!(dev.link_code.as_deref(), Some(code.as_str()));
}

#[test]
fn hijack_outcomes() {
    let blocked = exec("hijack_registered");
    let a = blocked.attacker("eve").unwrap();
    assert_eq!(a.hijack_status, Some(409));
    assert!(!a.device_claimed);
    assert_eq!(blocked.cloud().state.owners["G090LF1172610345"], "alice");

    let won = exec("hijack_deregistered");
    let a = won.attacker("eve").unwrap();
    assert_eq!(a.hijack_status, Some(200));
    assert!(a.device_claimed);
    assert_eq!(won.cloud().state.owners["G090LF1172610345"], "mallory");
}

#[test]
fn avs_replay_window() {
    let ex = exec("avs_replay");
    assert_eq!(ex.cloud().accepted, 1);
    assert_eq!(ex.cloud().rejected, 1);
    assert_eq!(
        summary_hits(ex.trace(), Layer::Control, "stale timestamp"),
        1
    );
    let ex = exec("avs_handshake");
    assert!(ex.cloud().refresh_acks >= 1);
    assert_eq!(ex.cloud().rejected, 0);
}

#[test]
fn intercom_media_stays_local() {
    let ex = exec("intercom_same_lan");
    let media: Vec<&TraceEvent> = ex
        .trace()
        .iter()
        .filter(|e| e.layer == Layer::Media)
        .collect();
    assert!(!media.is_empty());
    assert!(
        media.iter().all(|e| e.lan == "home"),
        "media left the home LAN"
    );
    assert!(!ex
        .trace()
        .iter()
        .any(|e| e.summary == "SipClient.AcceptCall"));
}

#[test]
fn fork_relay_payloads_open_with_registrar_keys_only() {
    let ex = exec("call_cross_lan_fork");
    let trace = ex.trace();
    assert_eq!(
        trace
            .iter()
            .filter(|e| e.layer == Layer::Sip
                && e.summary.starts_with("INVITE ")
                && e.src.starts_with("cloud-sip"))
            .count(),
        2
    );
    assert_eq!(
        trace
            .iter()
            .filter(|e| e.layer == Layer::Sip && e.summary.starts_with("CANCEL "))
            .count(),
        1
    );

    let keys = ex.cloud().registrar.observed_keys_for("call-1");
    assert_eq!(keys.len(), 2);
    let relayed: Vec<&[u8]> = trace
        .iter()
        .filter(|e| e.layer == Layer::Media && e.summary.starts_with("relay call-1 "))
        .filter_map(|e| e.payload.as_deref())
        .collect();
    assert!(relayed.len() >= 40);
    for (i, pkt) in relayed.iter().enumerate() {
        let ssrc = u32::from_be_bytes(pkt[8..12].try_into().unwrap());
        let k = keys
            .iter()
            .find(|k| k.ssrc == ssrc)
            .expect("ssrc recorded by registrar");
        let plain = srtp_derive(&k.key, &k.salt, ssrc)
            .unwrap()
            .unprotect(pkt)
            .unwrap();
        assert!(contains(&plain, MEDIA), "packet {i}");
        let mut wrong = k.key;
        wrong[0] ^= 1;
        assert!(srtp_derive(&wrong, &k.salt, ssrc)
            .unwrap()
            .unprotect(pkt)
            .is_err());
        assert!(!contains(pkt, MEDIA));
    }
    for e in trace.iter().filter(|e| e.layer == Layer::Media) {
        assert!(
            e.src.starts_with("cloud-relay") || e.dst.starts_with("cloud-relay"),
            "seq {} bypasses the relay",
            e.seq
        );
    }
}

#[test]
fn token_reuse_is_forbidden() {
    let ex = exec("token_reuse");
    let trace = ex.trace();
    assert!(trace.iter().any(|e| e.layer == Layer::Sip
        && e.summary.starts_with("403 ")
        && e.src.starts_with("cloud-sip")));
    assert_eq!(
        trace
            .iter()
            .filter(|e| e.summary.contains("call-2 established"))
            .count(),
        0
    );
}

#[test]
fn pstn_call_terminates_at_gateway() {
    let ex = exec("call_pstn");
    assert!(ex
        .trace()
        .iter()
        .any(|e| e.layer == Layer::Sys && e.summary.contains("established path=gateway")));
}
