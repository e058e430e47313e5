pub mod avs;
pub mod calling;
pub mod client;
pub mod cloud;
pub mod crypto;
pub mod device;
pub mod netsim;
pub mod scenario;
pub mod transport;
pub mod wire;
