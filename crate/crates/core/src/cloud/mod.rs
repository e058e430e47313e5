//! Mock cloud: rendezvous, accounts, voice service, SIP registrar, relay and
//! a terminating gateway.

pub mod endpoints;
mod node;
pub mod registrar;
pub mod relay;
pub mod state;

pub use node::{Cloud, DeviceEvent, IssuedToken, CLOUD_LAN, CLOUD_PREFIX, HTTPS_PORT};
pub use state::*;
