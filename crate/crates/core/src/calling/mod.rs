//! The SIP user agent embedded in each device, and its media sessions.

mod ua;

use std::net::SocketAddrV4;

use serde::{Deserialize, Serialize};

use crate::crypto::CryptoError;
use crate::netsim::{HostId, Net, NetError};
use crate::wire::{CandidateKind, SdpBody};

pub use ua::{
    BeginCall, CallState, MediaStats, UserAgent, DEFAULT_FRAMES_PER_CALL, FRAME_INTERVAL_MS,
    FRAME_LEN,
};

/// SIP settings pushed to a device after its voice-service session is up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommsConfig {
    pub sip_username: String,
    pub registrar_domain: String,
    pub registrar_host: String,
    pub registrar_port: u16,
    pub credential: String,
    pub account_uri: String,
    pub device_uri: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegState {
    Unregistered,
    Registering,
    Registered,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Caller,
    Callee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warming,
    Inviting,
    Ringing,
    Established,
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaPath {
    Direct,
    Relay,
    Gateway,
}

impl MediaPath {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaPath::Direct => "direct",
            MediaPath::Relay => "relay",
            MediaPath::Gateway => "gateway",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallError {
    #[error("not registered")]
    NotRegistered,
    #[error("busy")]
    Busy,
    #[error("unknown call {0}")]
    UnknownCall(String),
    #[error("call not established")]
    NotEstablished,
    #[error("bad payload: {0}")]
    BadPayload(String),
    #[error("no usable candidate")]
    NoCandidate,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Picks the media path towards `peer`: a mutually reachable host candidate
/// wins, otherwise the relay. Gateway legs always use the gateway.
pub fn select_path(
    net: &Net,
    host: HostId,
    peer: &SdpBody,
    relay: Option<SocketAddrV4>,
    gateway: bool,
) -> Result<(MediaPath, SocketAddrV4), CallError> {
    let host_cand = peer
        .candidate(CandidateKind::Host)
        .map(|c| SocketAddrV4::new(c.address, c.port));
    if gateway {
        return host_cand
            .map(|a| (MediaPath::Gateway, a))
            .ok_or(CallError::NoCandidate);
    }
    if let Some(a) = host_cand {
        if net.mutually_reachable(host, *a.ip()) {
            return Ok((MediaPath::Direct, a));
        }
    }
    let relay = relay.or_else(|| {
        peer.candidate(CandidateKind::Relay)
            .map(|c| SocketAddrV4::new(c.address, c.port))
    });
    relay
        .map(|a| (MediaPath::Relay, a))
        .ok_or(CallError::NoCandidate)
}
