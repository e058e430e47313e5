//! Known-answer tests. Every constant here was produced by
//! `tests/oracles/crypto_oracle.py`, which uses the Python `cryptography`
//! package and shares no code with this crate.

use echo_testbed::crypto::{aes256_cbc_encrypt_blocks, srtp_derive, CryptoError};

const AES256_CBC_ZERO: &str = "dc95c078a2408989ad48a21492842087";
const AES256_CBC_SEQ: &str = "b746e4f1bce2352d20440b8a2e0eb8fd68c1fcd0d00fcac779ecaadacde7e51a";

const SRTP_CK: &str = "cf74b7d06f50fcb330938b117fb7890a57b0695942a38ab00fc18f18cd0207a3";
const SRTP_AK: &str = "45364b07e6088516ff74f83634378d6504a20cf5";
const SRTP_SALT: &str = "bc5fadccb9f941b149a16e859c98";
const SRTP_PKT: &str =
    "806f0001000000a0deadbeefc35bc97f66c5b7fd999a822fd8cdb2f7b2d64b1e12b530c189126d";

fn srtp_master() -> ([u8; 32], [u8; 14]) {
    let mut mk = [0u8; 32];
    let mut ms = [0u8; 14];
    for (i, b) in mk.iter_mut().enumerate() {
        *b = ((7 * i + 3) % 256) as u8;
    }
    for (i, b) in ms.iter_mut().enumerate() {
        *b = ((11 * i + 5) % 256) as u8;
    }
    (mk, ms)
}

#[test]
fn aes256_cbc_zero_block() {
    let ct = aes256_cbc_encrypt_blocks(&[0; 32], &[0; 16], &[0; 16]).unwrap();
    assert_eq!(hex::encode(ct), AES256_CBC_ZERO);
}

#[test]
fn aes256_cbc_two_blocks_chain() {
    let key: [u8; 32] = std::array::from_fn(|i| i as u8);
    let iv: [u8; 16] = std::array::from_fn(|i| (16 + i) as u8);
    let ct = aes256_cbc_encrypt_blocks(&key, &iv, b"The quick brown fox jumps over t").unwrap();
    assert_eq!(hex::encode(ct), AES256_CBC_SEQ);
}

#[test]
fn aes256_cbc_rejects_partial_blocks() {
    assert!(aes256_cbc_encrypt_blocks(&[0; 32], &[0; 16], &[0; 15]).is_err());
}

#[test]
fn srtp_session_keys() {
    let (mk, ms) = srtp_master();
    let ctx = srtp_derive(&mk, &ms, 0xDEAD_BEEF).unwrap();
    assert_eq!(hex::encode(ctx.cipher_key()), SRTP_CK);
    assert_eq!(hex::encode(ctx.auth_key()), SRTP_AK);
    assert_eq!(hex::encode(ctx.session_salt()), SRTP_SALT);
}

#[test]
fn srtp_packet() {
    let (mk, ms) = srtp_master();
    let mut tx = srtp_derive(&mk, &ms, 0xDEAD_BEEF).unwrap();
    tx.set_send_index(1);
    tx.set_timestamp(160);
    let pkt = tx.protect(b"media-canary-0001").unwrap();
    assert_eq!(hex::encode(&pkt), SRTP_PKT);

    let mut rx = srtp_derive(&mk, &ms, 0xDEAD_BEEF).unwrap();
    let oracle = hex::decode(SRTP_PKT).unwrap();
    assert_eq!(rx.unprotect(&oracle).unwrap(), b"media-canary-0001");
    assert_eq!(rx.unprotect(&oracle), Err(CryptoError::Replay));
}
