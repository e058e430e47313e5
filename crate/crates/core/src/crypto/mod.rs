//! Application-layer cryptography. Every operation that needs randomness
//! takes the RNG as an argument; nothing reads ambient entropy.

mod auth_token;
mod call_token;
mod credential;
mod keys;
mod srtp;

pub use auth_token::{mint_auth_token, open_auth_token, AuthClaims, AuthToken};
pub use call_token::{mint_call_token, verify_call_token, CallAuthToken, CallType, NonceCache};
pub use credential::{
    aes256_cbc_encrypt_blocks, decrypt_credential, encrypt_credential, EncryptedCredentialBlob,
    WifiCredential, WifiSecurity,
};
pub use keys::{
    keygen, self_sign, sign_detached, unwrap_key, verify_detached, wrap_key, AsymKeypair,
    DeviceCertificate, PublicKey, SIGNATURE_LEN,
};
pub use srtp::{packet_header, srtp_derive, SrtpContext, MAX_INDEX, REPLAY_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("unwrap failed")]
    UnwrapFailed,
    #[error("bad padding")]
    BadPadding,
    #[error("truncated")]
    Truncated,
    #[error("auth")]
    Auth,
    #[error("replay")]
    Replay,
    #[error("unknown ssrc {0:#010x}")]
    UnknownSsrc(u32),
    #[error("srtp packet index exhausted")]
    SequenceExhausted,
    #[error("invalid credential: {0}")]
    InvalidCredential(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed: {0}")]
    Malformed(String),
}
