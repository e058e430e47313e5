//! Companion-app emulator and the on-path attacker.

mod attacker;
mod pairing;

pub use attacker::{Attacker, AttackerConfig, Loot};
pub use pairing::{
    ClientConfig, ClientState, PairingClient, PING_TIMEOUT_MS, REGISTRATION_TIMEOUT_MS,
};

use crate::transport::json_body;
use crate::wire::{http_parse, oobe_decode, oobe_decode_response, OobeEnvelope};

/// A parsed message seen on an OOBE channel.
#[derive(Debug, Clone, PartialEq)]
pub enum OobeSeen {
    Request(OobeEnvelope),
    Response(u16, OobeEnvelope),
}

/// Best-effort interpretation of plaintext OOBE bytes.
pub fn parse_oobe(bytes: &[u8]) -> Option<OobeSeen> {
    let msg = http_parse(bytes).ok()?;
    if msg.method().is_some() {
        oobe_decode(&msg).ok().map(OobeSeen::Request)
    } else {
        oobe_decode_response(&msg)
            .ok()
            .map(|(s, e)| OobeSeen::Response(s, e))
    }
}

/// Status and JSON body of an HTTP response.
pub fn parse_json_response(bytes: &[u8]) -> Option<(u16, serde_json::Value)> {
    let msg = http_parse(bytes).ok()?;
    Some((msg.status()?, json_body(&msg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{http_serialize, oobe_encode, oobe_encode_response};

    #[test]
    fn parses_both_directions() {
        let req = OobeEnvelope::new("getLinkCode");
        let bytes = http_serialize(&oobe_encode(&req).unwrap()).unwrap();
        assert_eq!(parse_oobe(&bytes), Some(OobeSeen::Request(req)));
        let resp = OobeEnvelope::new("getLinkCode").with_arg("code", "ABC123");
        let bytes = http_serialize(&oobe_encode_response(&resp, 200).unwrap()).unwrap();
        assert_eq!(parse_oobe(&bytes), Some(OobeSeen::Response(200, resp)));
        assert_eq!(parse_oobe(b"garbage"), None);
    }
}
