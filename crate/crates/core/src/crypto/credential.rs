//! Wi-Fi credential envelope: AES-256-CBC under a fresh content key, the key
//! wrapped to the device certificate, packed in a minimal CMS-shaped
//! structure and ASCII-armored.

use aes::cipher::{
    block_padding::NoPadding, block_padding::Pkcs7, BlockDecryptMut, BlockEncryptMut, KeyIvInit,
};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::keys::{armor, dearmor, unwrap_key, wrap_key, AsymKeypair, DeviceCertificate};
use super::CryptoError;

type Aes256CbcEnc = cbc::Encryptor<aes::Aes256>;
type Aes256CbcDec = cbc::Decryptor<aes::Aes256>;

const ARMOR_BEGIN: &str = "-----BEGIN PKCS7-----";
const ARMOR_END: &str = "-----END PKCS7-----";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WifiSecurity {
    Open,
    Psk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WifiCredential {
    pub ssid: String,
    pub security: WifiSecurity,
    #[serde(default)]
    pub passphrase: String,
}

impl WifiCredential {
    pub fn psk(ssid: &str, passphrase: &str) -> Self {
        WifiCredential {
            ssid: ssid.to_string(),
            security: WifiSecurity::Psk,
            passphrase: passphrase.to_string(),
        }
    }

    pub fn open(ssid: &str) -> Self {
        WifiCredential {
            ssid: ssid.to_string(),
            security: WifiSecurity::Open,
            passphrase: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), CryptoError> {
        let bad = |m: &str| Err(CryptoError::InvalidCredential(m.to_string()));
        if self.ssid.is_empty() || self.ssid.len() > 32 {
            return bad("ssid must be 1-32 bytes");
        }
        match self.security {
            WifiSecurity::Psk => {
                let n = self.passphrase.chars().count();
                if !(8..=63).contains(&n) {
                    return bad("psk passphrase must be 8-63 characters");
                }
            }
            WifiSecurity::Open if !self.passphrase.is_empty() => {
                return bad("open network with a passphrase");
            }
            WifiSecurity::Open => {}
        }
        Ok(())
    }

    fn canonical(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("credential serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedCredentialBlob {
    pub wrapped_key: Vec<u8>,
    pub iv: [u8; 16],
    pub ciphertext: Vec<u8>,
}

impl EncryptedCredentialBlob {
    /// `u16 wrapped length ‖ wrapped key ‖ IV ‖ ciphertext`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(2 + self.wrapped_key.len() + 16 + self.ciphertext.len());
        v.extend_from_slice(&(self.wrapped_key.len() as u16).to_be_bytes());
        v.extend_from_slice(&self.wrapped_key);
        v.extend_from_slice(&self.iv);
        v.extend_from_slice(&self.ciphertext);
        v
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        if b.len() < 2 {
            return Err(CryptoError::Truncated);
        }
        let n = u16::from_be_bytes([b[0], b[1]]) as usize;
        if b.len() < 2 + n + 16 {
            return Err(CryptoError::Truncated);
        }
        let blob = EncryptedCredentialBlob {
            wrapped_key: b[2..2 + n].to_vec(),
            iv: b[2 + n..2 + n + 16].try_into().unwrap(),
            ciphertext: b[2 + n + 16..].to_vec(),
        };
        blob.check_shape()?;
        Ok(blob)
    }

    pub fn to_armor(&self) -> String {
        armor(ARMOR_BEGIN, ARMOR_END, &self.to_bytes())
    }

    pub fn from_armor(text: &str) -> Result<Self, CryptoError> {
        Self::from_bytes(&dearmor(ARMOR_BEGIN, ARMOR_END, text)?)
    }

    fn check_shape(&self) -> Result<(), CryptoError> {
        if self.ciphertext.is_empty() || !self.ciphertext.len().is_multiple_of(16) {
            return Err(CryptoError::Truncated);
        }
        Ok(())
    }
}

/// Raw AES-256-CBC over whole blocks, no padding.
pub fn aes256_cbc_encrypt_blocks(
    key: &[u8; 32],
    iv: &[u8; 16],
    data: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if !data.len().is_multiple_of(16) {
        return Err(CryptoError::Malformed(
            "input is not a whole number of blocks".into(),
        ));
    }
    Ok(Aes256CbcEnc::new(key.into(), iv.into()).encrypt_padded_vec_mut::<NoPadding>(data))
}

pub(crate) fn cbc_encrypt_pkcs7(key: &[u8; 32], iv: &[u8; 16], data: &[u8]) -> Vec<u8> {
    Aes256CbcEnc::new(key.into(), iv.into()).encrypt_padded_vec_mut::<Pkcs7>(data)
}

pub(crate) fn cbc_decrypt_pkcs7(
    key: &[u8; 32],
    iv: &[u8; 16],
    data: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if data.is_empty() || !data.len().is_multiple_of(16) {
        return Err(CryptoError::Truncated);
    }
    Aes256CbcDec::new(key.into(), iv.into())
        .decrypt_padded_vec_mut::<Pkcs7>(data)
        .map_err(|_| CryptoError::BadPadding)
}

pub fn encrypt_credential(
    cred: &WifiCredential,
    cert: &DeviceCertificate,
    rng: &mut impl RngCore,
) -> Result<EncryptedCredentialBlob, CryptoError> {
    cred.validate()?;
    let mut key = [0u8; 32];
    let mut iv = [0u8; 16];
    rng.fill_bytes(&mut key);
    rng.fill_bytes(&mut iv);
    let ciphertext = cbc_encrypt_pkcs7(&key, &iv, &cred.canonical());
    let wrapped_key = wrap_key(&cert.public, &key, rng);
    Ok(EncryptedCredentialBlob {
        wrapped_key,
        iv,
        ciphertext,
    })
}

pub fn decrypt_credential(
    blob: &EncryptedCredentialBlob,
    keypair: &AsymKeypair,
) -> Result<WifiCredential, CryptoError> {
    blob.check_shape()?;
    let key = unwrap_key(keypair, &blob.wrapped_key)?;
    let plain = cbc_decrypt_pkcs7(&key, &blob.iv, &blob.ciphertext)?;
    let cred: WifiCredential = serde_json::from_slice(&plain)
        .map_err(|_| CryptoError::Malformed("credential plaintext".into()))?;
    cred.validate()?;
    Ok(cred)
}
