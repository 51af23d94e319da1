//! Networking layer of the video test harness: session description, the
//! line-delimited JSON control protocol, RTP transports (UDP unicast,
//! UDP multicast, TCP), deterministic loss impairment, wire capture, and
//! the server/client session drivers built from those pieces.

pub mod capture;
pub mod client;
pub mod control;
pub mod impair;
pub mod server;
pub mod session;
pub mod transport;
