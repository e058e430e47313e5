//! Deterministic discrete-event network fabric.

pub mod fabric;
pub mod scheduler;
pub mod sim;
pub mod trace;

use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};

pub use fabric::{Channel, Host, Lan, Net, Observation, PairingNetwork, HOP_MS, WAN_HOPS};
pub use scheduler::{Scheduler, DEFAULT_EVENT_BUDGET};
pub use sim::{Action, Node, NodeEvent, Sim, TimerTag};
pub use trace::{read_jsonl, to_jsonl, trace_hash, write_jsonl, Annot, Layer, TraceEvent};

macro_rules! id_type {
    ($name:ident, $inner:ty, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(HostId, u32, "host");
id_type!(LanId, u32, "lan");
id_type!(NodeId, u32, "node");
id_type!(ChannelId, u64, "chan");
id_type!(TapId, u32, "tap");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("event budget of {budget} exhausted at t={now_ms}ms with {pending} events pending")]
    BudgetExceeded {
        budget: u64,
        now_ms: u64,
        pending: usize,
    },
    #[error("{0} unreachable")]
    Unreachable(Ipv4Addr),
    #[error("connection to {0} refused")]
    Refused(SocketAddrV4),
    #[error("prefix {0} already in use")]
    PrefixCollision(String),
    #[error("bad prefix {0:?}")]
    BadPrefix(String),
    #[error("name {0:?} already in use")]
    DuplicateName(String),
    #[error("address {0} outside LAN prefix")]
    AddressOutsidePrefix(Ipv4Addr),
    #[error("address {0} in use")]
    AddressInUse(Ipv4Addr),
    #[error("no free address on LAN")]
    AddressExhausted,
    #[error("host already attached to LAN")]
    AlreadyAttached,
    #[error("host not attached to LAN")]
    NotAttached,
    #[error("unknown LAN")]
    UnknownLan,
    #[error("unknown channel")]
    UnknownChannel,
    #[error("channel closed")]
    ChannelClosed,
    #[error("observer is not on the tapped LAN")]
    NotOnLan,
    #[error("no network with SSID {0:?}")]
    WrongSsid(String),
    #[error("network {0:?} torn down")]
    TornDown(String),
    #[error("port {0} in use")]
    PortInUse(u16),
}
