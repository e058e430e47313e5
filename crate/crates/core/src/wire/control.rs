//! Cloud control-plane messages exchanged over the persistent voice-service
//! connection, e.g. `SipClient.BeginCall`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::WireError;

pub mod names {
    pub const SYSTEM: &str = "System";
    pub const SIP_CLIENT: &str = "SipClient";

    pub const NEGOTIATION_COMMAND: &str = "NegotiationCommand";
    pub const NEGOTIATION_ACCEPTED: &str = "NegotiationAccepted";
    pub const NEGOTIATION_REJECTED: &str = "NegotiationRejected";
    pub const REFRESH_STATE: &str = "RefreshState";
    pub const REFRESH_STATE_ACK: &str = "RefreshStateAck";
    pub const UNSUPPORTED: &str = "Unsupported";

    pub const CONFIGURE_COMMS_REQUEST: &str = "ConfigureCommsRequest";
    pub const CONFIGURE_COMMS: &str = "ConfigureComms";
    pub const WARM_UP: &str = "WarmUp";
    pub const BEGIN_CALL: &str = "BeginCall";
    pub const ACCEPT_CALL: &str = "AcceptCall";
    pub const END_CALL: &str = "EndCall";
    pub const OUTBOUND_CALL_REQUESTED: &str = "OutboundCallRequested";
    pub const OUTBOUND_CALL_ACCEPTED: &str = "OutboundCallAccepted";
    pub const INBOUND_CALL_RECEIVED: &str = "InboundCallReceived";
    pub const CALL_FAILED: &str = "CallFailed";
    pub const CALL_DISCONNECTED: &str = "CallDisconnected";
    pub const REGISTRATION_STATE: &str = "RegistrationState";
}

use names::*;

/// The command set the testbed knows about. Anything else decodes with
/// `unknown` set.
pub const KNOWN_COMMANDS: &[(&str, &str)] = &[
    (SYSTEM, NEGOTIATION_COMMAND),
    (SYSTEM, NEGOTIATION_ACCEPTED),
    (SYSTEM, NEGOTIATION_REJECTED),
    (SYSTEM, REFRESH_STATE),
    (SYSTEM, REFRESH_STATE_ACK),
    (SYSTEM, UNSUPPORTED),
    (SIP_CLIENT, CONFIGURE_COMMS_REQUEST),
    (SIP_CLIENT, CONFIGURE_COMMS),
    (SIP_CLIENT, WARM_UP),
    (SIP_CLIENT, BEGIN_CALL),
    (SIP_CLIENT, ACCEPT_CALL),
    (SIP_CLIENT, END_CALL),
    (SIP_CLIENT, OUTBOUND_CALL_REQUESTED),
    (SIP_CLIENT, OUTBOUND_CALL_ACCEPTED),
    (SIP_CLIENT, INBOUND_CALL_RECEIVED),
    (SIP_CLIENT, CALL_FAILED),
    (SIP_CLIENT, CALL_DISCONNECTED),
    (SIP_CLIENT, REGISTRATION_STATE),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlMessage {
    pub interface: String,
    pub name: String,
    #[serde(default)]
    pub payload: Value,
    #[serde(skip)]
    pub unknown: bool,
}

impl ControlMessage {
    pub fn new(interface: &str, name: &str, payload: Value) -> Self {
        ControlMessage {
            interface: interface.to_string(),
            name: name.to_string(),
            payload,
            unknown: !is_known(interface, name),
        }
    }

    pub fn is(&self, interface: &str, name: &str) -> bool {
        self.interface == interface && self.name == name
    }

    pub fn qualified_name(&self) -> String {
        format!("{}.{}", self.interface, self.name)
    }
}

pub fn is_known(interface: &str, name: &str) -> bool {
    KNOWN_COMMANDS
        .iter()
        .any(|(i, n)| *i == interface && *n == name)
}

pub fn control_encode(msg: &ControlMessage) -> Vec<u8> {
    serde_json::to_vec(msg).expect("control messages always serialize")
}

pub fn control_decode(bytes: &[u8]) -> Result<ControlMessage, WireError> {
    let mut msg: ControlMessage =
        serde_json::from_slice(bytes).map_err(|e| WireError::Control(e.to_string()))?;
    msg.unknown = !is_known(&msg.interface, &msg.name);
    Ok(msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn end_call_decodes() {
        let m = control_decode(
            br#"{"interface":"SipClient","name":"EndCall","payload":{"call_id":"x"}}"#,
        )
        .unwrap();
        assert!(m.is(SIP_CLIENT, END_CALL));
        assert!(!m.unknown);
    }

    #[test]
    fn begin_call_round_trip() {
        let m = ControlMessage::new(
            SIP_CLIENT,
            BEGIN_CALL,
            json!({"token": "t0k", "caller": "sip:a@x", "callee": "sip:b@x",
                   "relay": {"address": "52.0.0.4", "port": 50000}}),
        );
        assert_eq!(control_decode(&control_encode(&m)).unwrap(), m);
    }

    #[test]
    fn unknown_command_is_flagged() {
        let m = control_decode(br#"{"interface":"Future","name":"X","payload":null}"#).unwrap();
        assert!(m.unknown);
    }

    #[test]
    fn non_json_is_an_error() {
        assert!(control_decode(b"\x00\x01garbage").is_err());
    }
}
