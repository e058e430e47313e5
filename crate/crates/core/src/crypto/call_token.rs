//! Single-use call authorization tokens carried in the `X-authtoken` SIP
//! header. A token is bound to the exact caller and callee URIs and signed by
//! the caller account's key.

use std::collections::BTreeMap;

use base64::engine::general_purpose::URL_SAFE_NO_PAD as B64URL;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::keys::{sign_detached, verify_detached, AsymKeypair, PublicKey, SIGNATURE_LEN};
use super::CryptoError;

const CONTEXT: &[u8] = b"echo-testbed call token v1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CallType {
    Regular,
    Intercom,
}

impl CallType {
    fn code(self) -> u8 {
        match self {
            CallType::Regular => 0,
            CallType::Intercom => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(CallType::Regular),
            1 => Some(CallType::Intercom),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallAuthToken {
    pub caller: String,
    pub callee: String,
    pub call_type: CallType,
    pub issued_at: u64,
    pub ttl: u32,
    pub nonce: [u8; 16],
    pub signature: [u8; SIGNATURE_LEN],
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl CallAuthToken {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut v = CONTEXT.to_vec();
        put_str(&mut v, &self.caller);
        put_str(&mut v, &self.callee);
        v.push(self.call_type.code());
        v.extend_from_slice(&self.issued_at.to_be_bytes());
        v.extend_from_slice(&self.ttl.to_be_bytes());
        v.extend_from_slice(&self.nonce);
        v
    }

    pub fn encode(&self) -> String {
        let mut v = self.signed_bytes()[CONTEXT.len()..].to_vec();
        v.extend_from_slice(&self.signature);
        B64URL.encode(v)
    }

    pub fn decode(text: &str) -> Result<Self, CryptoError> {
        let bad = || CryptoError::Malformed("call token".into());
        let b = B64URL.decode(text.trim()).map_err(|_| bad())?;
        let mut pos = 0usize;
        let mut next = |n: usize| -> Result<&[u8], CryptoError> {
            if b.len() < pos + n {
                return Err(bad());
            }
            let s = &b[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let caller_len = u16::from_be_bytes(next(2)?.try_into().unwrap()) as usize;
        let caller = String::from_utf8(next(caller_len)?.to_vec()).map_err(|_| bad())?;
        let callee_len = u16::from_be_bytes(next(2)?.try_into().unwrap()) as usize;
        let callee = String::from_utf8(next(callee_len)?.to_vec()).map_err(|_| bad())?;
        let call_type = CallType::from_code(next(1)?[0]).ok_or_else(bad)?;
        let issued_at = u64::from_be_bytes(next(8)?.try_into().unwrap());
        let ttl = u32::from_be_bytes(next(4)?.try_into().unwrap());
        let nonce = next(16)?.try_into().unwrap();
        let signature = next(SIGNATURE_LEN)?.try_into().unwrap();
        if pos != b.len() {
            return Err(bad());
        }
        Ok(CallAuthToken {
            caller,
            callee,
            call_type,
            issued_at,
            ttl,
            nonce,
            signature,
        })
    }
}

/// Nonces of tokens that have been presented with a valid signature.
#[derive(Debug, Default, Clone)]
pub struct NonceCache {
    seen: BTreeMap<[u8; 16], u64>,
}

impl NonceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, nonce: &[u8; 16]) -> bool {
        self.seen.contains_key(nonce)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mint_call_token(
    key: &AsymKeypair,
    caller: &str,
    callee: &str,
    call_type: CallType,
    ttl: u32,
    now_s: u64,
    rng: &mut impl RngCore,
) -> Result<CallAuthToken, CryptoError> {
    if ttl == 0 {
        return Err(CryptoError::InvalidArgument("ttl must be positive".into()));
    }
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);
    let mut token = CallAuthToken {
        caller: caller.to_string(),
        callee: callee.to_string(),
        call_type,
        issued_at: now_s,
        ttl,
        nonce,
        signature: [0; SIGNATURE_LEN],
    };
    token.signature = sign_detached(key, &token.signed_bytes());
    Ok(token)
}

/// True iff the signature verifies, both URIs match exactly, the token has
/// not expired and its nonce was never presented before. Any token with a
/// valid signature burns its nonce, so a false result is final.
pub fn verify_call_token(
    public: &PublicKey,
    token: &CallAuthToken,
    caller: &str,
    callee: &str,
    now_s: u64,
    cache: &mut NonceCache,
) -> bool {
    if !verify_detached(public, &token.signed_bytes(), &token.signature) {
        return false;
    }
    let fresh = !cache.contains(&token.nonce);
    cache
        .seen
        .entry(token.nonce)
        .or_insert(token.issued_at + u64::from(token.ttl));
    fresh
        && token.caller == caller
        && token.callee == callee
        && now_s < token.issued_at + u64::from(token.ttl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keys::keygen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const A: &str = "sip:dev-a@comms.test";
    const B: &str = "sip:dev-b@comms.test";

    fn fixture() -> (ChaCha20Rng, AsymKeypair) {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let kp = keygen(&mut rng);
        (rng, kp)
    }

    #[test]
    fn mint_verify_once() {
        let (mut rng, kp) = fixture();
        let t = mint_call_token(&kp, A, B, CallType::Intercom, 60, 100, &mut rng).unwrap();
        let mut cache = NonceCache::new();
        assert!(verify_call_token(kp.public(), &t, A, B, 100, &mut cache));
        assert!(!verify_call_token(kp.public(), &t, A, B, 100, &mut cache));
    }

    #[test]
    fn swapped_callee_rejected() {
        let (mut rng, kp) = fixture();
        let t = mint_call_token(&kp, A, B, CallType::Regular, 60, 100, &mut rng).unwrap();
        let mut cache = NonceCache::new();
        assert!(!verify_call_token(
            kp.public(),
            &t,
            A,
            "sip:dev-c@comms.test",
            100,
            &mut cache
        ));
        // Monotone: the correct URIs no longer help.
        assert!(!verify_call_token(kp.public(), &t, A, B, 100, &mut cache));
    }

    #[test]
    fn expiry() {
        let (mut rng, kp) = fixture();
        let t = mint_call_token(&kp, A, B, CallType::Regular, 60, 100, &mut rng).unwrap();
        assert!(!verify_call_token(
            kp.public(),
            &t,
            A,
            B,
            161,
            &mut NonceCache::new()
        ));
        assert!(!verify_call_token(
            kp.public(),
            &t,
            A,
            B,
            160,
            &mut NonceCache::new()
        ));
        assert!(verify_call_token(
            kp.public(),
            &t,
            A,
            B,
            159,
            &mut NonceCache::new()
        ));
    }

    #[test]
    fn zero_ttl_refused() {
        let (mut rng, kp) = fixture();
        assert!(mint_call_token(&kp, A, B, CallType::Regular, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn encode_decode_and_forgery() {
        let (mut rng, kp) = fixture();
        let other = keygen(&mut rng);
        let t = mint_call_token(&kp, A, B, CallType::Intercom, 60, 5, &mut rng).unwrap();
        let back = CallAuthToken::decode(&t.encode()).unwrap();
        assert_eq!(back, t);
        assert!(!verify_call_token(
            other.public(),
            &t,
            A,
            B,
            5,
            &mut NonceCache::new()
        ));
        let mut forged = t.clone();
        forged.callee = "sip:evil@comms.test".into();
        let mut cache = NonceCache::new();
        assert!(!verify_call_token(
            kp.public(),
            &forged,
            A,
            "sip:evil@comms.test",
            5,
            &mut cache
        ));
        // A forgery does not burn the genuine token's nonce.
        assert!(verify_call_token(kp.public(), &t, A, B, 5, &mut cache));
        assert!(CallAuthToken::decode("!!").is_err());
        assert!(CallAuthToken::decode(&t.encode()[..20]).is_err());
    }
}
