//! Multi-camera video chat simulator.

pub mod bench;
pub mod compositor;
pub mod frame;
#[cfg(feature = "gateway")]
pub mod gateway;
pub mod protocol;
pub mod session;
pub mod sources;
pub mod switching;
pub mod wire;
