//! Stream transport: paced senders and capturing receivers for RTP over
//! UDP unicast, UDP multicast, and TCP (length-prefixed framing).
//!
//! The receiver stamps every packet on arrival with the local wall clock
//! advanced by the monotonic clock (wall anchor taken once at start), logs
//! it to the capture sink as it arrives, and stops on the stream's final
//! marker, on an idle gap, or at a hard deadline — whichever comes first.

use std::io::{self, Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, SocketAddrV4, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use socket2::{Domain, Socket, Type};
use thiserror::Error;

use vt_core::rtp::{self, RtpHeader, RtpPacket};

use crate::capture::CaptureSink;
use crate::session::Transport;

/// Receive poll granularity; also bounds shutdown latency.
const POLL_INTERVAL: Duration = Duration::from_millis(50);
/// How long the receiver keeps draining after seeing the final marker, to
/// catch duplicates or stragglers still in flight.
const FINAL_DRAIN: Duration = Duration::from_millis(80);
/// Kernel receive buffer requested for UDP sockets; bursts at pacing 0 can
/// otherwise overflow the default loopback buffer.
const UDP_RECV_BUFFER: usize = 4 << 20;
/// Burst brake: one short sleep per this many packets when sending.
const THROTTLE_EVERY: usize = 64;
const THROTTLE_PAUSE: Duration = Duration::from_micros(400);

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("multicast send/receive requires a group address")]
    MissingGroup,
    #[error("destination {0} is not a multicast group")]
    NotMulticast(Ipv4Addr),
    #[error("socket i/o: {0}")]
    Io(#[from] io::Error),
}

/// Summary of one send pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendReport {
    pub packets_sent: usize,
    pub bytes_sent: u64,
    pub duration_seconds: f64,
}

/// One packet as received: raw bytes plus arrival time in seconds since the
/// Unix epoch (wall anchor + monotonic offset).
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPacket {
    pub data: Vec<u8>,
    pub arrival: f64,
}

fn frame_index_deadlines(packets: &[RtpPacket], fps: (u32, u32), pacing: f64) -> Vec<f64> {
    // Packets belonging to frame n may not leave before n·den/num·pacing
    // seconds after stream start; frame boundaries are timestamp changes.
    let per_frame = f64::from(fps.1) / f64::from(fps.0) * pacing;
    let mut deadlines = Vec::with_capacity(packets.len());
    let mut frame = 0u32;
    let mut last_ts = packets.first().map(|p| p.header.timestamp);
    for packet in packets {
        if Some(packet.header.timestamp) != last_ts {
            frame += 1;
            last_ts = Some(packet.header.timestamp);
        }
        deadlines.push(f64::from(frame) * per_frame);
    }
    deadlines
}

/// Sends `packets` to `dest` over `transport`, pacing frames against the
/// nominal rate scaled by `pacing` (0 = as fast as possible). A short
/// throttle pause every few dozen packets keeps bursts from overflowing
/// receive buffers.
pub fn send_stream(
    packets: &[RtpPacket],
    transport: Transport,
    dest: SocketAddr,
    fps: (u32, u32),
    pacing: f64,
) -> Result<SendReport, TransportError> {
    assert!(
        pacing >= 0.0 && pacing.is_finite(),
        "pacing must be finite and nonnegative"
    );
    let deadlines = frame_index_deadlines(packets, fps, pacing);
    let start = Instant::now();
    let mut bytes_sent = 0u64;

    let mut send_all = |mut send_one: Box<dyn FnMut(&[u8]) -> io::Result<usize>>| {
        for (i, packet) in packets.iter().enumerate() {
            let wire = packet.to_bytes();
            loop {
                let elapsed = start.elapsed().as_secs_f64();
                if elapsed >= deadlines[i] {
                    break;
                }
                thread::sleep(Duration::from_secs_f64(
                    (deadlines[i] - elapsed).min(POLL_INTERVAL.as_secs_f64()),
                ));
            }
            send_one(&wire)?;
            bytes_sent += wire.len() as u64;
            if (i + 1) % THROTTLE_EVERY == 0 {
                thread::sleep(THROTTLE_PAUSE);
            }
        }
        Ok::<(), io::Error>(())
    };

    match transport {
        Transport::UdpUnicast | Transport::UdpMulticast => {
            if transport == Transport::UdpMulticast {
                let IpAddr::V4(ip) = dest.ip() else {
                    return Err(TransportError::MissingGroup);
                };
                if !ip.is_multicast() {
                    return Err(TransportError::NotMulticast(ip));
                }
            }
            let socket = UdpSocket::bind((Ipv4Addr::UNSPECIFIED, 0))?;
            if transport == Transport::UdpMulticast {
                socket.set_multicast_loop_v4(true)?;
                socket.set_multicast_ttl_v4(1)?;
            }
            send_all(Box::new(move |wire| socket.send_to(wire, dest)))?;
        }
        Transport::Tcp => {
            let stream = TcpStream::connect_timeout(&dest, Duration::from_secs(10))?;
            stream.set_nodelay(true)?;
            let mut stream = stream;
            send_all(Box::new(move |wire| {
                let framed = rtp::frame_for_stream(wire);
                stream.write_all(&framed)?;
                Ok(framed.len())
            }))?;
        }
    }

    Ok(SendReport {
        packets_sent: packets.len(),
        bytes_sent,
        duration_seconds: start.elapsed().as_secs_f64(),
    })
}

/// How a receiver listens and when it gives up.
#[derive(Debug, Clone)]
pub struct ReceiveConfig {
    pub transport: Transport,
    /// Port to bind (0 = ephemeral; the handle reports the actual port).
    pub bind_port: u16,
    /// Group to join when transport is udp_multicast.
    pub multicast_group: Option<Ipv4Addr>,
    /// Stop after this long without receiving anything.
    pub idle_timeout: Duration,
    /// Hard cap on the whole receive phase.
    pub overall_deadline: Duration,
}

impl Default for ReceiveConfig {
    fn default() -> Self {
        Self {
            transport: Transport::UdpUnicast,
            bind_port: 0,
            multicast_group: None,
            idle_timeout: Duration::from_secs(2),
            overall_deadline: Duration::from_secs(120),
        }
    }
}

const NO_FINAL_TS: u64 = u64::MAX;

/// A receiver running on its own thread. The socket is bound before
/// `start_receiver` returns, so the sender may start immediately.
pub struct ReceiverHandle {
    local_port: u16,
    final_ts: Arc<AtomicU64>,
    worker: JoinHandle<Result<Vec<ReceivedPacket>, TransportError>>,
}

impl ReceiverHandle {
    /// The port actually bound (resolves a 0 bind port).
    pub fn local_port(&self) -> u16 {
        self.local_port
    }

    /// Announces the RTP timestamp of the stream's last frame; a packet
    /// carrying it with the marker bit ends the receive phase early (after a
    /// short drain) instead of waiting out the idle timeout.
    pub fn set_final_timestamp(&self, ts: u32) {
        self.final_ts.store(u64::from(ts), Ordering::Relaxed);
    }

    /// Waits for the receive phase to end and returns the packets in
    /// arrival order.
    pub fn join(self) -> Result<Vec<ReceivedPacket>, TransportError> {
        self.worker.join().expect("receiver thread panicked")
    }
}

/// Arrival clock: wall anchor taken once, advanced by the monotonic clock.
struct ArrivalClock {
    wall_anchor: f64,
    instant_anchor: Instant,
}

impl ArrivalClock {
    fn new() -> Self {
        let wall_anchor = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .expect("system clock before 1970")
            .as_secs_f64();
        Self {
            wall_anchor,
            instant_anchor: Instant::now(),
        }
    }

    fn now(&self) -> f64 {
        self.wall_anchor + self.instant_anchor.elapsed().as_secs_f64()
    }
}

fn as_v4(addr: SocketAddr) -> SocketAddrV4 {
    match addr {
        SocketAddr::V4(v4) => v4,
        SocketAddr::V6(v6) => SocketAddrV4::new(
            v6.ip().to_ipv4_mapped().unwrap_or(Ipv4Addr::UNSPECIFIED),
            v6.port(),
        ),
    }
}

/// Tracks the stop conditions common to all receive loops.
struct StopState {
    started: Instant,
    last_data: Instant,
    drain_until: Option<Instant>,
    idle_timeout: Duration,
    overall_deadline: Duration,
    final_ts: Arc<AtomicU64>,
}

impl StopState {
    fn new(idle_timeout: Duration, overall_deadline: Duration, final_ts: Arc<AtomicU64>) -> Self {
        let now = Instant::now();
        Self {
            started: now,
            last_data: now,
            drain_until: None,
            idle_timeout,
            overall_deadline,
            final_ts,
        }
    }

    fn on_packet(&mut self, data: &[u8]) {
        self.last_data = Instant::now();
        if self.drain_until.is_some() {
            return;
        }
        let final_ts = self.final_ts.load(Ordering::Relaxed);
        if final_ts == NO_FINAL_TS {
            return;
        }
        if let Ok(header) = RtpHeader::parse(data) {
            if header.marker && u64::from(header.timestamp) == final_ts {
                self.drain_until = Some(Instant::now() + FINAL_DRAIN);
            }
        }
    }

    fn should_stop(&self) -> bool {
        if let Some(drain_until) = self.drain_until {
            return Instant::now() >= drain_until;
        }
        self.last_data.elapsed() >= self.idle_timeout
            || self.started.elapsed() >= self.overall_deadline
    }
}

fn bind_udp(config: &ReceiveConfig) -> Result<UdpSocket, TransportError> {
    let socket = Socket::new(Domain::IPV4, Type::DGRAM, None)?;
    let _ = socket.set_recv_buffer_size(UDP_RECV_BUFFER);
    if config.transport == Transport::UdpMulticast {
        socket.set_reuse_address(true)?;
    }
    socket.bind(&SocketAddr::from((Ipv4Addr::UNSPECIFIED, config.bind_port)).into())?;
    if config.transport == Transport::UdpMulticast {
        let group = config.multicast_group.ok_or(TransportError::MissingGroup)?;
        if !group.is_multicast() {
            return Err(TransportError::NotMulticast(group));
        }
        socket.join_multicast_v4(&group, &Ipv4Addr::UNSPECIFIED)?;
    }
    let socket: UdpSocket = socket.into();
    socket.set_read_timeout(Some(POLL_INTERVAL))?;
    Ok(socket)
}

/// Binds per the config and starts the receive loop on a worker thread.
/// Every received packet is appended to `sink` as it arrives.
pub fn start_receiver(
    config: ReceiveConfig,
    sink: CaptureSink,
) -> Result<ReceiverHandle, TransportError> {
    let final_ts = Arc::new(AtomicU64::new(NO_FINAL_TS));
    let thread_final_ts = Arc::clone(&final_ts);

    match config.transport {
        Transport::UdpUnicast | Transport::UdpMulticast => {
            let socket = bind_udp(&config)?;
            let local_port = socket.local_addr()?.port();
            // In the synthesized capture frames, the destination is the group
            // for multicast and loopback:port for a wildcard unicast bind.
            let capture_dst = match (config.transport, config.multicast_group) {
                (Transport::UdpMulticast, Some(group)) => SocketAddrV4::new(group, local_port),
                _ => SocketAddrV4::new(Ipv4Addr::LOCALHOST, local_port),
            };
            let worker = thread::Builder::new()
                .name("rtp-recv-udp".to_owned())
                .spawn(move || receive_udp(socket, capture_dst, &config, sink, thread_final_ts))
                .expect("spawn receiver thread");
            Ok(ReceiverHandle {
                local_port,
                final_ts,
                worker,
            })
        }
        Transport::Tcp => {
            let listener = TcpListener::bind((Ipv4Addr::UNSPECIFIED, config.bind_port))?;
            let local_port = listener.local_addr()?.port();
            listener.set_nonblocking(true)?;
            let worker = thread::Builder::new()
                .name("rtp-recv-tcp".to_owned())
                .spawn(move || receive_tcp(listener, local_port, &config, sink, thread_final_ts))
                .expect("spawn receiver thread");
            Ok(ReceiverHandle {
                local_port,
                final_ts,
                worker,
            })
        }
    }
}

fn receive_udp(
    socket: UdpSocket,
    capture_dst: SocketAddrV4,
    config: &ReceiveConfig,
    sink: CaptureSink,
    final_ts: Arc<AtomicU64>,
) -> Result<Vec<ReceivedPacket>, TransportError> {
    let clock = ArrivalClock::new();
    let mut stop = StopState::new(config.idle_timeout, config.overall_deadline, final_ts);
    let mut packets = Vec::new();
    let mut buf = vec![0u8; 65536];

    loop {
        match socket.recv_from(&mut buf) {
            Ok((len, src)) => {
                let arrival = clock.now();
                let data = buf[..len].to_vec();
                sink.record_datagram(as_v4(src), capture_dst, &data, arrival);
                stop.on_packet(&data);
                packets.push(ReceivedPacket { data, arrival });
            }
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::TimedOut => {
            }
            Err(e) => return Err(e.into()),
        }
        if stop.should_stop() {
            return Ok(packets);
        }
    }
}

fn receive_tcp(
    listener: TcpListener,
    local_port: u16,
    config: &ReceiveConfig,
    sink: CaptureSink,
    final_ts: Arc<AtomicU64>,
) -> Result<Vec<ReceivedPacket>, TransportError> {
    let clock = ArrivalClock::new();
    let mut stop = StopState::new(config.idle_timeout, config.overall_deadline, final_ts);

    // Wait for the sender's connection; silence is bounded by the same
    // idle/deadline rules as the data phase.
    let (stream, peer) = loop {
        match listener.accept() {
            Ok(accepted) => break accepted,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if stop.should_stop() {
                    return Ok(Vec::new());
                }
                thread::sleep(POLL_INTERVAL);
            }
            Err(e) => return Err(e.into()),
        }
    };
    stream.set_read_timeout(Some(POLL_INTERVAL))?;
    let mut stream = stream;
    let capture_dst = SocketAddrV4::new(Ipv4Addr::LOCALHOST, local_port);
    let capture_src = as_v4(peer);

    let mut packets = Vec::new();
    let mut unframer = rtp::TcpUnframer::new();
    let mut buf = vec![0u8; 65536];
    loop {
        match stream.read(&mut buf) {
            // Disconnect ends the stream; whatever arrived so far stands.
            Ok(0) => return Ok(packets),
            Ok(len) => {
                let arrival = clock.now();
                for data in unframer.push(&buf[..len]) {
                    sink.record_datagram(capture_src, capture_dst, &data, arrival);
                    stop.on_packet(&data);
                    packets.push(ReceivedPacket { data, arrival });
                }
            }
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock || e.kind() == io::ErrorKind::TimedOut => {
            }
            Err(e) => return Err(e.into()),
        }
        if stop.should_stop() {
            return Ok(packets);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vt_core::codec::{encode, EncodedStream};
    use vt_core::rtp::{depacketize, media_timestamp, packetize, StreamParams};
    use vt_core::synth::{moving_video, SynthSpec};

    fn test_stream(frames: usize, fps: (u32, u32)) -> EncodedStream {
        let video = moving_video(&SynthSpec {
            width: 32,
            height: 32,
            fps_num: fps.0,
            fps_den: fps.1,
            frame_count: frames,
            seed: 5,
            ..Default::default()
        });
        encode(&video, 5, 0)
    }

    fn run_round_trip(transport: Transport, group: Option<Ipv4Addr>) {
        let stream = test_stream(12, (25, 1));
        let packets = packetize(&stream, 0xABCD_0001, 100, 300);
        let sink = CaptureSink::new();
        let receiver = start_receiver(
            ReceiveConfig {
                transport,
                multicast_group: group,
                idle_timeout: Duration::from_millis(800),
                ..Default::default()
            },
            sink.clone(),
        )
        .unwrap();
        receiver.set_final_timestamp(media_timestamp(11, 25, 1));

        let dest_ip = group
            .map(IpAddr::V4)
            .unwrap_or(IpAddr::V4(Ipv4Addr::LOCALHOST));
        let report = send_stream(
            &packets,
            transport,
            SocketAddr::new(dest_ip, receiver.local_port()),
            (25, 1),
            0.0,
        )
        .unwrap();
        assert_eq!(report.packets_sent, packets.len());

        let received = receiver.join().unwrap();
        assert_eq!(
            received.len(),
            packets.len(),
            "lossless loopback must deliver everything"
        );
        // Arrival times are nondecreasing.
        assert!(received.windows(2).all(|w| w[0].arrival <= w[1].arrival));
        // Capture completeness: one sink entry per received packet.
        assert_eq!(sink.len(), received.len());

        let parsed: Vec<RtpPacket> = received
            .iter()
            .map(|p| RtpPacket::parse(&p.data).unwrap())
            .collect();
        let rebuilt = depacketize(&parsed, &StreamParams::from(&stream));
        assert_eq!(rebuilt, stream);
    }

    #[test]
    fn udp_unicast_round_trip() {
        run_round_trip(Transport::UdpUnicast, None);
    }

    #[test]
    fn udp_multicast_round_trip() {
        run_round_trip(Transport::UdpMulticast, Some(Ipv4Addr::new(239, 90, 90, 9)));
    }

    #[test]
    fn tcp_round_trip() {
        run_round_trip(Transport::Tcp, None);
    }

    #[test]
    fn pacing_enforces_frame_deadlines() {
        let stream = test_stream(10, (100, 1));
        let packets = packetize(&stream, 1, 0, 400);
        let sink = CaptureSink::new();
        let receiver = start_receiver(
            ReceiveConfig {
                idle_timeout: Duration::from_millis(500),
                ..Default::default()
            },
            sink,
        )
        .unwrap();
        receiver.set_final_timestamp(media_timestamp(9, 100, 1));
        let dest = SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), receiver.local_port());
        let report = send_stream(&packets, Transport::UdpUnicast, dest, (100, 1), 1.0).unwrap();
        // Frame 9 may not leave before 9 × 10 ms.
        assert!(
            report.duration_seconds >= 0.09,
            "sent in {}",
            report.duration_seconds
        );
        assert!(!receiver.join().unwrap().is_empty());
    }

    #[test]
    fn idle_timeout_returns_empty_when_nothing_arrives() {
        let sink = CaptureSink::new();
        let receiver = start_receiver(
            ReceiveConfig {
                idle_timeout: Duration::from_millis(200),
                ..Default::default()
            },
            sink,
        )
        .unwrap();
        let start = Instant::now();
        let packets = receiver.join().unwrap();
        assert!(packets.is_empty());
        assert!(start.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn tcp_disconnect_yields_partial_list() {
        let stream = test_stream(12, (25, 1));
        let packets = packetize(&stream, 2, 0, 300);
        let sink = CaptureSink::new();
        let receiver = start_receiver(
            ReceiveConfig {
                transport: Transport::Tcp,
                idle_timeout: Duration::from_secs(5),
                ..Default::default()
            },
            sink,
        )
        .unwrap();
        // Send only the first three framed packets, then disconnect.
        let dest = SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), receiver.local_port());
        let mut conn = TcpStream::connect(dest).unwrap();
        for packet in &packets[..3] {
            conn.write_all(&rtp::frame_for_stream(&packet.to_bytes()))
                .unwrap();
        }
        drop(conn);
        let received = receiver.join().unwrap();
        assert_eq!(received.len(), 3);
    }
}
