mod common;

use std::sync::LazyLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use echo_testbed::crypto::{
    keygen, mint_call_token, sign_detached, srtp_derive, verify_call_token, verify_detached,
    AsymKeypair, CallAuthToken, CallType, CryptoError, NonceCache,
};

use common::{CALLEE, CALLER};

static FIXTURE: LazyLock<(AsymKeypair, CallAuthToken)> = LazyLock::new(|| {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let key = keygen(&mut rng);
    let token =
        mint_call_token(&key, CALLER, CALLEE, CallType::Regular, 120, 50, &mut rng).unwrap();
    (key, token)
});

fn uri_edit() -> impl Strategy<Value = (String, String)> {
    let uri = "sip:[a-zA-Z0-9._-]{1,24}@[a-z0-9.]{1,20}";
    prop_oneof![
        (uri, Just(CALLEE.to_string())),
        (Just(CALLER.to_string()), uri),
        (uri, uri),
        any::<u64>().prop_map(|s| common::perturb(
            &mut ChaCha20Rng::seed_from_u64(s),
            CALLER,
            CALLEE
        )),
    ]
    .prop_filter("must differ from the bound pair", |(c, d)| {
        c != CALLER || d != CALLEE
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn token_never_accepted_for_other_uris((caller, callee) in uri_edit()) {
        let (key, token) = &*FIXTURE;
        let mut fresh = NonceCache::new();
        prop_assert!(!verify_call_token(key.public(), token, &caller, &callee, 60, &mut fresh));
        prop_assert!(verify_call_token(key.public(), token, CALLER, CALLEE, 60, &mut NonceCache::new()));
    }

    #[test]
    fn signature_does_not_transfer(m in proptest::collection::vec(any::<u8>(), 0..96),
                                   m2 in proptest::collection::vec(any::<u8>(), 0..96),
                                   seed in 0u64..4) {
        prop_assume!(m != m2);
        let key = keygen(&mut ChaCha20Rng::seed_from_u64(seed));
        let sig = sign_detached(&key, &m);
        prop_assert!(verify_detached(key.public(), &m, &sig));
        prop_assert!(!verify_detached(key.public(), &m2, &sig));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn session_keys_are_distinct(mk in any::<[u8; 32]>(), ms in any::<[u8; 14]>(), ssrc in any::<u32>()) {
        let ctx = srtp_derive(&mk, &ms, ssrc).unwrap();
        prop_assert_ne!(&ctx.cipher_key()[..20], &ctx.auth_key()[..]);
        prop_assert_ne!(&ctx.cipher_key()[..14], &ctx.session_salt()[..]);
        prop_assert_ne!(&ctx.cipher_key()[..], &mk[..]);
    }

    #[test]
    fn credential_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let device = keygen(&mut rng);
        let other = keygen(&mut rng);
        let cert = echo_testbed::crypto::self_sign(&device, "SER001");
        let cred = common::random_credential(&mut rng);
        let blob = echo_testbed::crypto::encrypt_credential(&cred, &cert, &mut rng).unwrap();
        prop_assert_eq!(echo_testbed::crypto::decrypt_credential(&blob, &device).unwrap(), cred);
        prop_assert!(echo_testbed::crypto::decrypt_credential(&blob, &other).is_err());
    }

    #[test]
    fn srtp_tamper_is_detected(payload in proptest::collection::vec(any::<u8>(), 1..160),
                               pos in any::<prop::sample::Index>(),
                               flip in 1u8..=255) {
        let mut tx = srtp_derive(&[1; 32], &[2; 14], 77).unwrap();
        let mut rx = srtp_derive(&[1; 32], &[2; 14], 77).unwrap();
        let mut pkt = tx.protect(&payload).unwrap();
        let i = pos.index(pkt.len());
        pkt[i] ^= flip;
        prop_assert!(rx.unprotect(&pkt).is_err());
        prop_assert!(rx.highest_received().is_none());
    }
}

#[test]
fn token_perturbations_seeded_sweep() {
    let (n, accepts) = common::token_uri_false_accepts(10_000, 0x7e57);
    assert_eq!((n, accepts), (10_000, 0));
}

#[test]
fn token_is_single_use() {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let key = keygen(&mut rng);
    let token =
        mint_call_token(&key, CALLER, CALLEE, CallType::Regular, 120, 50, &mut rng).unwrap();
    let mut cache = NonceCache::new();
    assert!(verify_call_token(
        key.public(),
        &token,
        CALLER,
        CALLEE,
        60,
        &mut cache
    ));
    assert!(!verify_call_token(
        key.public(),
        &token,
        CALLER,
        CALLEE,
        61,
        &mut cache
    ));
    let fresh =
        mint_call_token(&key, CALLER, CALLEE, CallType::Regular, 120, 62, &mut rng).unwrap();
    assert!(verify_call_token(
        key.public(),
        &fresh,
        CALLER,
        CALLEE,
        63,
        &mut cache
    ));
    assert!(!verify_call_token(
        key.public(),
        &fresh,
        CALLER,
        CALLEE,
        63 + 120,
        &mut NonceCache::new()
    ));
}

#[test]
fn credentials_round_trip_thousand() {
    assert_eq!(common::credential_round_trip_failures(1_000, 0xc4ed), 0);
}

#[test]
fn srtp_thousand_packets_then_replay() {
    common::srtp_round_trip_and_replay(1_000, 0x5e7f).unwrap();
}

#[test]
fn srtp_window_edges() {
    let mut tx = srtp_derive(&[9; 32], &[8; 14], 1).unwrap();
    let mut rx = srtp_derive(&[9; 32], &[8; 14], 1).unwrap();
    let pkts: Vec<Vec<u8>> = (0..100)
        .map(|i| tx.protect(&[i as u8; 4]).unwrap())
        .collect();
    rx.unprotect(&pkts[99]).unwrap();
    assert_eq!(rx.unprotect(&pkts[99 - 63]).unwrap(), [36; 4]);
    assert_eq!(rx.unprotect(&pkts[99 - 64]), Err(CryptoError::Replay));
}

#[test]
fn negotiation_byte_flips_all_rejected() {
    let (baseline, rejected) = common::negotiation_flip_rejections(100, 0xf11b);
    assert!(baseline, "unmodified negotiation must be accepted");
    assert_eq!(rejected, 100);
}
