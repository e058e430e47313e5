//! Cloud-opaque device authentication token.
//!
//! Layout: `wrapped content key (72) ‖ IV (16) ‖ AES-256-CBC(claims) ‖
//! HMAC-SHA256 tag (32)`. The content key is wrapped to the cloud keypair;
//! encryption and MAC keys are HKDF-derived from it. Only the holder of the
//! cloud private key can open a token, and any modified byte breaks either
//! the unwrap or the tag.

use base64::engine::general_purpose::URL_SAFE_NO_PAD as B64URL;
use base64::Engine;
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::credential::{cbc_decrypt_pkcs7, cbc_encrypt_pkcs7};
use super::keys::{unwrap_key, wrap_key, AsymKeypair, WRAPPED_KEY_LEN};
use super::CryptoError;

const TAG_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthClaims {
    pub account: String,
    pub serial: String,
    pub issued: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AuthToken(pub Vec<u8>);

impl AuthToken {
    pub fn to_text(&self) -> String {
        B64URL.encode(&self.0)
    }

    pub fn from_text(s: &str) -> Result<Self, CryptoError> {
        B64URL
            .decode(s)
            .map(AuthToken)
            .map_err(|_| CryptoError::Malformed("auth token encoding".into()))
    }
}

fn subkeys(content_key: &[u8; 32]) -> ([u8; 32], [u8; 32]) {
    let hk = Hkdf::<Sha256>::new(None, content_key);
    let mut enc = [0u8; 32];
    let mut mac = [0u8; 32];
    hk.expand(b"auth-token enc", &mut enc).unwrap();
    hk.expand(b"auth-token mac", &mut mac).unwrap();
    (enc, mac)
}

pub fn mint_auth_token(
    cloud: &AsymKeypair,
    account: &str,
    serial: &str,
    now_s: u64,
    rng: &mut impl RngCore,
) -> AuthToken {
    let claims = AuthClaims {
        account: account.to_string(),
        serial: serial.to_string(),
        issued: now_s,
    };
    let mut content_key = [0u8; 32];
    let mut iv = [0u8; 16];
    rng.fill_bytes(&mut content_key);
    rng.fill_bytes(&mut iv);
    let (enc, mac_key) = subkeys(&content_key);
    let mut out = wrap_key(cloud.public(), &content_key, rng);
    out.extend_from_slice(&iv);
    out.extend_from_slice(&cbc_encrypt_pkcs7(
        &enc,
        &iv,
        &serde_json::to_vec(&claims).unwrap(),
    ));
    let mut mac = Hmac::<Sha256>::new_from_slice(&mac_key).unwrap();
    mac.update(&out);
    out.extend_from_slice(&mac.finalize().into_bytes());
    AuthToken(out)
}

pub fn open_auth_token(cloud: &AsymKeypair, token: &AuthToken) -> Result<AuthClaims, CryptoError> {
    let b = &token.0;
    if b.len() < WRAPPED_KEY_LEN + 16 + 16 + TAG_LEN {
        return Err(CryptoError::Truncated);
    }
    let content_key = unwrap_key(cloud, &b[..WRAPPED_KEY_LEN])?;
    let (enc, mac_key) = subkeys(&content_key);
    let (body, tag) = b.split_at(b.len() - TAG_LEN);
    let mut mac = Hmac::<Sha256>::new_from_slice(&mac_key).unwrap();
    mac.update(body);
    mac.verify_slice(tag).map_err(|_| CryptoError::Auth)?;
    let iv: [u8; 16] = body[WRAPPED_KEY_LEN..WRAPPED_KEY_LEN + 16]
        .try_into()
        .unwrap();
    let plain = cbc_decrypt_pkcs7(&enc, &iv, &body[WRAPPED_KEY_LEN + 16..])?;
    serde_json::from_slice(&plain).map_err(|_| CryptoError::Malformed("auth token claims".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keys::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_and_binding() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let cloud = keygen(&mut rng);
        let t = mint_auth_token(&cloud, "acct-1", "SERIAL-A", 1000, &mut rng);
        let claims = open_auth_token(&cloud, &t).unwrap();
        assert_eq!(claims.account, "acct-1");
        assert_eq!(claims.serial, "SERIAL-A");
        assert_ne!(claims.serial, "SERIAL-B");
        assert_eq!(claims.issued, 1000);
        assert_eq!(AuthToken::from_text(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn every_byte_flip_is_detected() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let cloud = keygen(&mut rng);
        let t = mint_auth_token(&cloud, "acct-1", "S1", 0, &mut rng);
        for i in 0..t.0.len() {
            let mut bad = t.clone();
            bad.0[i] ^= 0x01;
            assert!(
                open_auth_token(&cloud, &bad).is_err(),
                "flip at {i} accepted"
            );
        }
    }

    #[test]
    fn opaque_to_other_keys() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let cloud = keygen(&mut rng);
        let other = keygen(&mut rng);
        let t = mint_auth_token(&cloud, "a", "s", 0, &mut rng);
        assert!(open_auth_token(&other, &t).is_err());
    }
}
