//! Link-code uniqueness under load, checked against the birthday bound from
//! `tests/oracles/crypto_oracle.py`.

use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use echo_testbed::cloud::{random_code, CloudState, LINK_CODE_ALPHABET, LINK_CODE_LEN};

/// sum_{k<1000} k / 36^5
const LINKCODE_EXPECTED_REGEN_1000: f64 = 0.008260816758116143;

#[test]
fn codes_use_the_documented_alphabet() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let c = random_code(&mut rng);
        assert_eq!(c.len(), LINK_CODE_LEN);
        assert!(c.bytes().all(|b| LINK_CODE_ALPHABET.contains(&b)), "{c}");
    }
}

#[test]
fn brute_force_regenerations_match_birthday_bound() {
    let trials = 2_000;
    let live = 1_000;
    let mut rng = ChaCha20Rng::seed_from_u64(0xb1d4);
    let mut regen = 0u64;
    for _ in 0..trials {
        let mut seen = HashSet::with_capacity(live);
        for _ in 0..live {
            while !seen.insert(random_code(&mut rng)) {
                regen += 1;
            }
        }
    }
    let mean = regen as f64 / trials as f64;
    let sd_of_mean = (LINKCODE_EXPECTED_REGEN_1000 / trials as f64).sqrt();
    assert!(mean < 1.0);
    assert!(
        (mean - LINKCODE_EXPECTED_REGEN_1000).abs() < 5.0 * sd_of_mean,
        "mean {mean} vs expected {LINKCODE_EXPECTED_REGEN_1000}"
    );
}

#[test]
fn cloud_keeps_a_thousand_live_codes_unique() {
    let mut total_regen = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut cloud = CloudState::new(&mut rng);
        let mut codes = HashSet::new();
        for i in 0..1_000 {
            let serial = format!("G090LF11726{i:05}");
            let mut secret = [0u8; 32];
            rng.fill_bytes(&mut secret);
            cloud.add_inventory("A3S5BH2HU6VAYF", &serial, secret);
            let code = cloud
                .create_link_code("A3S5BH2HU6VAYF", &serial, &secret, 100, &mut rng)
                .unwrap();
            assert!(codes.insert(code), "duplicate live code");
        }
        total_regen += cloud.link_code_regenerations;
    }
    assert!(
        (total_regen as f64 / 10.0) < 1.0,
        "{total_regen} regenerations over 10 runs"
    );
}
