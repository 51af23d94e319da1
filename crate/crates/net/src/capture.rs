//! Capture sink: every datagram the receiver sees is synthesized into an
//! Ethernet/IPv4/UDP frame and appended here, concurrently with reception,
//! then flushed to a PCAP file when the session ends.
//!
//! TCP-transported packets are logged the same way — as the UDP datagrams
//! they would have been — so one trace format feeds the same offline
//! analysis regardless of transport. The trace is a measurement record of
//! RTP payloads and arrival times, not a byte-accurate wire tap.

use std::io;
use std::net::SocketAddrV4;
use std::path::Path;
use std::sync::{Arc, Mutex};

use vt_core::trace::{self, CapturedPacket};

/// Thread-safe, append-only packet log. Clones share the same log.
#[derive(Clone, Default)]
pub struct CaptureSink {
    packets: Arc<Mutex<Vec<CapturedPacket>>>,
}

impl CaptureSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one already-framed packet.
    pub fn append(&self, packet: CapturedPacket) {
        self.packets
            .lock()
            .expect("capture sink poisoned")
            .push(packet);
    }

    /// Synthesizes a UDP frame for `payload` and appends it stamped with
    /// `arrival` (seconds since the Unix epoch). A payload too large for a
    /// UDP datagram cannot be framed and is logged and dropped rather than
    /// aborting reception.
    pub fn record_datagram(
        &self,
        src: SocketAddrV4,
        dst: SocketAddrV4,
        payload: &[u8],
        arrival: f64,
    ) {
        match trace::synthesize_frame(src, dst, payload) {
            Ok(frame) => self.append(CapturedPacket::at_time(arrival, frame)),
            Err(e) => log::warn!("capture skipped a {}-byte payload: {e}", payload.len()),
        }
    }

    pub fn len(&self) -> usize {
        self.packets.lock().expect("capture sink poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A copy of the log in append order.
    pub fn snapshot(&self) -> Vec<CapturedPacket> {
        self.packets.lock().expect("capture sink poisoned").clone()
    }

    /// Writes the log to a classic PCAP file in append order.
    pub fn write_trace(&self, path: &Path) -> io::Result<()> {
        let packets = self.snapshot();
        let mut file = std::fs::File::create(path)?;
        trace::write_pcap(&packets, &mut file)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }
}
