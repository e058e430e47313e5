//! Checks shared by the property suites and the acceptance report. Each
//! takes an explicit seed so reruns are reproducible.

#![allow(dead_code)]

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use echo_testbed::avs::{
    build_negotiation, negotiation_payload, split_negotiation, NegotiationClaims,
};
use echo_testbed::cloud::CloudState;
use echo_testbed::crypto::{
    decrypt_credential, encrypt_credential, keygen, mint_call_token, self_sign, srtp_derive,
    verify_call_token, AsymKeypair, CallType, CryptoError, NonceCache, WifiCredential,
};

pub const CALLER: &str = "sip:acct-alice@comms.cloud.test";
pub const CALLEE: &str = "sip:dev-G090LF1172620456@comms.cloud.test";

const URI_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.:@;=";

fn edit(rng: &mut impl Rng, s: &str) -> String {
    let mut b: Vec<char> = s.chars().collect();
    let i = rng.gen_range(0..b.len());
    let c = URI_CHARS[rng.gen_range(0..URI_CHARS.len())] as char;
    match rng.gen_range(0..7) {
        0 => b[i] = c,
        1 => b.insert(i, c),
        2 => {
            b.remove(i);
        }
        3 => {
            b[i] = if b[i].is_ascii_lowercase() {
                b[i].to_ascii_uppercase()
            } else {
                b[i].to_ascii_lowercase()
            }
        }
        4 => b.push(';'),
        5 => b.extend(" ".chars()),
        _ => b.insert(0, '\u{200b}'),
    }
    b.into_iter().collect()
}

/// A caller/callee pair that differs from the bound pair in at least one
/// position.
pub fn perturb(rng: &mut impl Rng, caller: &str, callee: &str) -> (String, String) {
    loop {
        let (c, d) = match rng.gen_range(0..5) {
            0 => (edit(rng, caller), callee.to_string()),
            1 => (caller.to_string(), edit(rng, callee)),
            2 => (edit(rng, caller), edit(rng, callee)),
            3 => (callee.to_string(), caller.to_string()),
            _ => {
                let other = format!(
                    "sip:dev-G090LF11726{:05}@comms.cloud.test",
                    rng.gen_range(0..100_000)
                );
                if rng.gen_bool(0.5) {
                    (caller.to_string(), other)
                } else {
                    (other, callee.to_string())
                }
            }
        };
        if c != caller || d != callee {
            return (c, d);
        }
    }
}

/// Returns (trials, false accepts). Every trial uses a fresh nonce cache so
/// a rejection can only come from the URI binding.
pub fn token_uri_false_accepts(trials: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = keygen(&mut rng);
    let token = mint_call_token(
        &key,
        CALLER,
        CALLEE,
        CallType::Intercom,
        120,
        1_000,
        &mut rng,
    )
    .unwrap();
    assert!(verify_call_token(
        key.public(),
        &token,
        CALLER,
        CALLEE,
        1_001,
        &mut NonceCache::new()
    ));
    let mut accepts = 0;
    for _ in 0..trials {
        let (c, d) = perturb(&mut rng, CALLER, CALLEE);
        if verify_call_token(key.public(), &token, &c, &d, 1_001, &mut NonceCache::new()) {
            accepts += 1;
        }
    }
    (trials, accepts)
}

pub fn random_credential(rng: &mut impl Rng) -> WifiCredential {
    let ssid_len = rng.gen_range(1..=32);
    let ssid: String = (0..ssid_len)
        .map(|_| rng.gen_range(0x20u8..0x7f) as char)
        .collect();
    if rng.gen_bool(0.1) {
        return WifiCredential::open(&ssid);
    }
    let n = rng.gen_range(8..=63);
    let pass: String = (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => char::from_u32(rng.gen_range(0xa1..0x3000)).unwrap_or('x'),
            _ => rng.gen_range(0x20u8..0x7f) as char,
        })
        .collect();
    WifiCredential::psk(&ssid, &pass)
}

/// Returns the number of credentials that failed to round-trip, or that
/// opened under a different device's key.
pub fn credential_round_trip_failures(cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let devices: Vec<AsymKeypair> = (0..8).map(|_| keygen(&mut rng)).collect();
    let certs: Vec<_> = devices
        .iter()
        .enumerate()
        .map(|(i, k)| self_sign(k, &format!("SER{i:03}")))
        .collect();
    let mut failures = 0;
    for i in 0..cases {
        let cred = random_credential(&mut rng);
        let d = i % devices.len();
        let blob = encrypt_credential(&cred, &certs[d], &mut rng).unwrap();
        let back = decrypt_credential(&blob, &devices[d]);
        let other = decrypt_credential(&blob, &devices[(d + 1) % devices.len()]);
        if back.as_ref() != Ok(&cred) || other.is_ok() {
            failures += 1;
        }
    }
    failures
}

/// Sends `packets` random payloads, delivers them with bounded reordering,
/// then replays every one. Returns a description of the first violation.
pub fn srtp_round_trip_and_replay(packets: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut mk = [0u8; 32];
    let mut ms = [0u8; 14];
    rng.fill_bytes(&mut mk);
    rng.fill_bytes(&mut ms);
    let ssrc = rng.gen();
    let mut tx = srtp_derive(&mk, &ms, ssrc).unwrap();
    let mut rx = srtp_derive(&mk, &ms, ssrc).unwrap();
    let mut sent = Vec::with_capacity(packets);
    for _ in 0..packets {
        let len = rng.gen_range(1..200);
        let mut p = vec![0u8; len];
        rng.fill_bytes(&mut p);
        let pkt = tx.protect(&p).map_err(|e| e.to_string())?;
        if len >= 8 && pkt.windows(8).any(|w| w == &p[..8]) {
            return Err("plaintext prefix visible in packet".into());
        }
        sent.push((p, pkt));
    }
    let mut order: Vec<usize> = (0..packets).collect();
    for chunk in order.chunks_mut(16) {
        for i in (1..chunk.len()).rev() {
            let j = rng.gen_range(0..=i);
            chunk.swap(i, j);
        }
    }
    for &i in &order {
        let (p, pkt) = &sent[i];
        match rx.unprotect(pkt) {
            Ok(out) if out == *p => {}
            Ok(_) => return Err(format!("packet {i} decrypted to different bytes")),
            Err(e) => return Err(format!("packet {i} rejected: {e}")),
        }
    }
    for (i, (_, pkt)) in sent.iter().enumerate() {
        if rx.unprotect(pkt) != Err(CryptoError::Replay) {
            return Err(format!("replay of packet {i} not rejected"));
        }
    }
    Ok(())
}

/// Flips one random byte (random non-zero XOR) of the signed section of a
/// valid NegotiationCommand, `trials` times. Returns (baseline accepted,
/// rejected count).
pub fn negotiation_flip_rejections(trials: usize, seed: u64) -> (bool, usize) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut cloud = CloudState::new(&mut rng);
    let serial = "G090LF1172610345";
    let device_type = "A3S5BH2HU6VAYF";
    let mut secret = [0u8; 32];
    rng.fill_bytes(&mut secret);
    cloud.add_inventory(device_type, serial, secret);
    cloud.add_account("alice", "pw-alice", &mut rng);
    let grant = cloud.provision(serial, "alice", 10_000, &mut rng).unwrap();
    let key = AsymKeypair::from_secret_bytes(&B64.decode(&grant.private_key).unwrap()).unwrap();
    let claims = NegotiationClaims {
        device_type: device_type.into(),
        serial: serial.into(),
        auth_token: grant.auth_token.clone(),
        timestamp: 10_000,
    };
    let payload = build_negotiation(&claims, &key);
    let baseline = cloud.avs_accept(&payload, 10_010).is_ok();
    let (signed, sig) = split_negotiation(&payload).unwrap();
    let mut rejected = 0;
    for _ in 0..trials {
        let mut m = signed.clone();
        let i = rng.gen_range(0..m.len());
        m[i] ^= rng.gen_range(1..=255u8);
        if cloud
            .avs_accept(&negotiation_payload(&m, &sig), 10_010)
            .is_err()
        {
            rejected += 1;
        }
    }
    (baseline, rejected)
}
