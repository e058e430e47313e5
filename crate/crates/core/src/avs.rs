//! The voice-service connection handshake shared by device and cloud.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::crypto::{sign_detached, AsymKeypair};

/// Accepted clock difference between device and cloud, in seconds.
pub const NEGOTIATION_WINDOW_S: u64 = 300;

/// Subsystems the cloud refreshes after accepting a connection.
pub const REFRESH_SUBSYSTEMS: &[&str] =
    &["System", "Settings", "Alerts", "AudioPlayer", "SipClient"];

/// Reconnect delays in seconds: 1, 2, 4, ... capped at 60.
pub const BACKOFF_CAP_S: u64 = 60;
/// Connection attempts before the device gives up until the next trigger.
pub const MAX_CONNECT_ATTEMPTS: u32 = 6;

pub fn backoff_delay_s(attempt: u32) -> u64 {
    1u64.checked_shl(attempt)
        .unwrap_or(u64::MAX)
        .min(BACKOFF_CAP_S)
}

/// The signed section of a NegotiationCommand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiationClaims {
    pub device_type: String,
    pub serial: String,
    pub auth_token: String,
    pub timestamp: u64,
}

/// Builds the NegotiationCommand payload: the signed JSON bytes and a
/// detached signature over exactly those bytes, both base64.
pub fn build_negotiation(claims: &NegotiationClaims, key: &AsymKeypair) -> Value {
    let signed = serde_json::to_vec(claims).expect("claims serialize");
    let sig = sign_detached(key, &signed);
    json!({
        "signed_b64": B64.encode(&signed),
        "signature_b64": B64.encode(sig),
    })
}

/// Splits a payload into (signed bytes, signature). Parsing the claims is
/// left to the verifier so it can check the signature first.
pub fn split_negotiation(payload: &Value) -> Option<(Vec<u8>, Vec<u8>)> {
    let signed = B64.decode(payload.get("signed_b64")?.as_str()?).ok()?;
    let sig = B64.decode(payload.get("signature_b64")?.as_str()?).ok()?;
    Some((signed, sig))
}

pub fn negotiation_payload(signed: &[u8], signature: &[u8]) -> Value {
    json!({
        "signed_b64": B64.encode(signed),
        "signature_b64": B64.encode(signature),
    })
}
