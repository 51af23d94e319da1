//! Core building blocks for end-to-end video transmission testing: raw video
//! I/O, a GOP-structured toy codec with loss concealment, RTP packetization,
//! packet trace capture files, and the offline metric set (QoS, bitstream and
//! picture quality) behind a pluggable meter registry.

pub mod bitstream;
pub mod codec;
pub mod metrics;
pub mod qos;
pub mod rawvideo;
pub mod rtp;
pub mod synth;
pub mod trace;
pub mod vq;
