//! Asymmetric keypairs, detached signatures, self-signed pairing
//! certificates and key wrapping.
//!
//! One keypair carries two halves derived from the same seeded draw: an
//! Ed25519 key for signatures and an X25519 key for wrapping symmetric keys
//! (ephemeral-static agreement, HKDF-SHA256, RFC 3394 AES key wrap).

use aes_kw::KekAes256;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hkdf::Hkdf;
use rand::RngCore;
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

use super::CryptoError;

pub const SIGNATURE_LEN: usize = 64;
pub const PUBLIC_KEY_LEN: usize = 64;
/// Ephemeral X25519 public key followed by the 40-byte AES-KW output.
pub const WRAPPED_KEY_LEN: usize = 32 + 40;

const CERT_CONTEXT: &[u8] = b"echo-testbed pairing certificate v1\0";
const WRAP_INFO: &[u8] = b"echo-testbed key wrap v1";

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PublicKey {
    verify: [u8; 32],
    agree: [u8; 32],
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", self.key_id())
    }
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out[..32].copy_from_slice(&self.verify);
        out[32..].copy_from_slice(&self.agree);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PUBLIC_KEY_LEN {
            return Err(CryptoError::Malformed("public key length".into()));
        }
        let mut verify = [0u8; 32];
        let mut agree = [0u8; 32];
        verify.copy_from_slice(&bytes[..32]);
        agree.copy_from_slice(&bytes[32..]);
        VerifyingKey::from_bytes(&verify)
            .map_err(|_| CryptoError::Malformed("verifying key".into()))?;
        Ok(PublicKey { verify, agree })
    }

    pub fn to_base64(&self) -> String {
        B64.encode(self.to_bytes())
    }

    pub fn from_base64(s: &str) -> Result<Self, CryptoError> {
        let bytes = B64
            .decode(s)
            .map_err(|_| CryptoError::Malformed("public key base64".into()))?;
        Self::from_bytes(&bytes)
    }

    /// First 8 bytes of SHA-256 over the encoded key, hex.
    pub fn key_id(&self) -> String {
        hex::encode(&Sha256::digest(self.to_bytes())[..8])
    }
}

#[derive(Clone)]
pub struct AsymKeypair {
    signing: SigningKey,
    agreement: StaticSecret,
    public: PublicKey,
}

impl std::fmt::Debug for AsymKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AsymKeypair")
            .field("key_id", &self.key_id())
            .finish_non_exhaustive()
    }
}

impl PartialEq for AsymKeypair {
    fn eq(&self, other: &Self) -> bool {
        self.to_secret_bytes() == other.to_secret_bytes()
    }
}

impl AsymKeypair {
    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> String {
        self.public.key_id()
    }

    /// 64 bytes of private material; only ever sent over secured channels.
    pub fn to_secret_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.signing.to_bytes());
        out[32..].copy_from_slice(&self.agreement.to_bytes());
        out
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let bytes: [u8; 64] = bytes
            .try_into()
            .map_err(|_| CryptoError::Malformed("private key length".into()))?;
        let mut sign_seed = [0u8; 32];
        let mut agree_seed = [0u8; 32];
        sign_seed.copy_from_slice(&bytes[..32]);
        agree_seed.copy_from_slice(&bytes[32..]);
        Ok(Self::from_seeds(sign_seed, agree_seed))
    }

    fn from_seeds(sign_seed: [u8; 32], agree_seed: [u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(&sign_seed);
        let agreement = StaticSecret::from(agree_seed);
        let public = PublicKey {
            verify: signing.verifying_key().to_bytes(),
            agree: XPublic::from(&agreement).to_bytes(),
        };
        AsymKeypair {
            signing,
            agreement,
            public,
        }
    }
}

/// Generates a keypair from the injected RNG only.
pub fn keygen(rng: &mut impl RngCore) -> AsymKeypair {
    let mut sign_seed = [0u8; 32];
    let mut agree_seed = [0u8; 32];
    rng.fill_bytes(&mut sign_seed);
    rng.fill_bytes(&mut agree_seed);
    AsymKeypair::from_seeds(sign_seed, agree_seed)
}

pub fn sign_detached(key: &AsymKeypair, msg: &[u8]) -> [u8; SIGNATURE_LEN] {
    key.signing.sign(msg).to_bytes()
}

/// Never errors: malformed keys or signatures simply fail to verify.
pub fn verify_detached(public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool {
    let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
        return false;
    };
    let Ok(vk) = VerifyingKey::from_bytes(&public.verify) else {
        return false;
    };
    vk.verify(msg, &sig).is_ok()
}

fn kek(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> KekAes256 {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(eph);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(WRAP_INFO, &mut okm)
        .expect("32 bytes is a valid HKDF length");
    KekAes256::from(okm)
}

/// Wraps a 32-byte content key to `recipient`.
pub fn wrap_key(recipient: &PublicKey, key: &[u8; 32], rng: &mut impl RngCore) -> Vec<u8> {
    let mut eph_seed = [0u8; 32];
    rng.fill_bytes(&mut eph_seed);
    let eph = StaticSecret::from(eph_seed);
    let eph_pub = XPublic::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublic::from(recipient.agree));
    let mut out = vec![0u8; WRAPPED_KEY_LEN];
    out[..32].copy_from_slice(&eph_pub);
    kek(shared.as_bytes(), &eph_pub, &recipient.agree)
        .wrap(key, &mut out[32..])
        .expect("AES-KW output buffer sized for a 32-byte key");
    out
}

pub fn unwrap_key(keypair: &AsymKeypair, wrapped: &[u8]) -> Result<[u8; 32], CryptoError> {
    if wrapped.len() != WRAPPED_KEY_LEN {
        return Err(CryptoError::UnwrapFailed);
    }
    let eph_pub: [u8; 32] = wrapped[..32].try_into().unwrap();
    let shared = keypair.agreement.diffie_hellman(&XPublic::from(eph_pub));
    let mut key = [0u8; 32];
    kek(shared.as_bytes(), &eph_pub, &keypair.public.agree)
        .unwrap(&wrapped[32..], &mut key)
        .map_err(|_| CryptoError::UnwrapFailed)?;
    Ok(key)
}

/// Self-signed pairing certificate binding a device serial to a public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceCertificate {
    pub subject: String,
    pub public: PublicKey,
    pub signature: [u8; SIGNATURE_LEN],
}

const PEM_BEGIN: &str = "-----BEGIN PAIRING CERTIFICATE-----";
const PEM_END: &str = "-----END PAIRING CERTIFICATE-----";

impl DeviceCertificate {
    fn tbs(subject: &str, public: &PublicKey) -> Vec<u8> {
        let mut v = CERT_CONTEXT.to_vec();
        v.extend_from_slice(&(subject.len() as u16).to_be_bytes());
        v.extend_from_slice(subject.as_bytes());
        v.extend_from_slice(&public.to_bytes());
        v
    }

    pub fn verify(&self) -> bool {
        verify_detached(
            &self.public,
            &Self::tbs(&self.subject, &self.public),
            &self.signature,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&(self.subject.len() as u16).to_be_bytes());
        v.extend_from_slice(self.subject.as_bytes());
        v.extend_from_slice(&self.public.to_bytes());
        v.extend_from_slice(&self.signature);
        v
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        let bad = |m: &str| CryptoError::Malformed(format!("certificate: {m}"));
        if b.len() < 2 {
            return Err(bad("truncated"));
        }
        let n = u16::from_be_bytes([b[0], b[1]]) as usize;
        if b.len() != 2 + n + PUBLIC_KEY_LEN + SIGNATURE_LEN {
            return Err(bad("length"));
        }
        let subject = std::str::from_utf8(&b[2..2 + n])
            .map_err(|_| bad("subject utf-8"))?
            .to_string();
        let public = PublicKey::from_bytes(&b[2 + n..2 + n + PUBLIC_KEY_LEN])?;
        let signature = b[2 + n + PUBLIC_KEY_LEN..].try_into().unwrap();
        Ok(DeviceCertificate {
            subject,
            public,
            signature,
        })
    }

    pub fn to_pem(&self) -> String {
        armor(PEM_BEGIN, PEM_END, &self.to_bytes())
    }

    pub fn from_pem(text: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(&dearmor(PEM_BEGIN, PEM_END, text)?)
    }
}

pub fn self_sign(keypair: &AsymKeypair, serial: &str) -> DeviceCertificate {
    let tbs = DeviceCertificate::tbs(serial, keypair.public());
    DeviceCertificate {
        subject: serial.to_string(),
        public: *keypair.public(),
        signature: sign_detached(keypair, &tbs),
    }
}

pub(crate) fn armor(begin: &str, end: &str, data: &[u8]) -> String {
    let b64 = B64.encode(data);
    let mut out = String::with_capacity(b64.len() + begin.len() + end.len() + 8);
    out.push_str(begin);
    out.push('\n');
    for chunk in b64.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(chunk).unwrap());
        out.push('\n');
    }
    out.push_str(end);
    out.push('\n');
    out
}

pub(crate) fn dearmor(begin: &str, end: &str, text: &str) -> Result<Vec<u8>, CryptoError> {
    let text = text.trim();
    let inner = text
        .strip_prefix(begin)
        .and_then(|t| t.strip_suffix(end))
        .ok_or_else(|| CryptoError::Malformed("armor markers".into()))?;
    let b64: String = inner.split_whitespace().collect();
    B64.decode(b64)
        .map_err(|_| CryptoError::Malformed("armor base64".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn same_seed_same_keypair() {
        let a = keygen(&mut ChaCha20Rng::seed_from_u64(9));
        let b = keygen(&mut ChaCha20Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_ne!(a, keygen(&mut ChaCha20Rng::seed_from_u64(10)));
    }

    #[test]
    fn certificate_verifies_only_under_own_key() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = keygen(&mut rng);
        let other = keygen(&mut rng);
        let cert = self_sign(&kp, "G090LF1181234567");
        assert!(cert.verify());
        let tbs = DeviceCertificate::tbs(&cert.subject, &cert.public);
        assert!(!verify_detached(other.public(), &tbs, &cert.signature));
        let back = DeviceCertificate::from_pem(&cert.to_pem()).unwrap();
        assert_eq!(back, cert);
        let mut forged = cert.clone();
        forged.subject = "G090LF1181234568".into();
        assert!(!forged.verify());
    }

    #[test]
    fn sign_verify_and_bit_flip() {
        let kp = keygen(&mut ChaCha20Rng::seed_from_u64(2));
        let msg = b"negotiate".to_vec();
        let sig = sign_detached(&kp, &msg);
        assert!(verify_detached(kp.public(), &msg, &sig));
        let mut flipped = msg.clone();
        flipped[0] ^= 1;
        assert!(!verify_detached(kp.public(), &flipped, &sig));
        assert!(!verify_detached(kp.public(), &msg, &sig[..63]));
    }

    #[test]
    fn wrap_unwrap() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = keygen(&mut rng);
        let other = keygen(&mut rng);
        let key = [0x5a; 32];
        let wrapped = wrap_key(kp.public(), &key, &mut rng);
        assert_eq!(unwrap_key(&kp, &wrapped).unwrap(), key);
        assert_eq!(unwrap_key(&other, &wrapped), Err(CryptoError::UnwrapFailed));
    }

    #[test]
    fn secret_bytes_round_trip() {
        let kp = keygen(&mut ChaCha20Rng::seed_from_u64(4));
        assert_eq!(
            AsymKeypair::from_secret_bytes(&kp.to_secret_bytes()).unwrap(),
            kp
        );
    }
}
