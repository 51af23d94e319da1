//! Classic PCAP capture files and application-level frame synthesis.
//!
//! The receive path logs every RTP packet it sees as a synthesized
//! Ethernet/IPv4/UDP frame, so the trace is bit-compatible with standard
//! tools without requiring a privileged sniffer. Files use the classic
//! little-endian layout (magic 0xA1B2C3D4, version 2.4, snaplen 65535,
//! link type 1); the reader also accepts byte-swapped files.
//!
//! [`extract_rtp_records`] turns a trace back into the per-packet tuples the
//! QoS measures consume: size, unwrapped sequence number, media timestamp in
//! seconds, and arrival time.

use std::io::{self, Read, Write};
use std::net::SocketAddrV4;

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use thiserror::Error;

use crate::rtp::{RtpHeader, SeqUnwrapper, RTP_CLOCK_HZ};

pub const PCAP_MAGIC: u32 = 0xA1B2_C3D4;
pub const PCAP_GLOBAL_HEADER_LEN: usize = 24;
pub const PCAP_RECORD_HEADER_LEN: usize = 16;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const SNAPLEN: u32 = 65_535;
/// Largest UDP payload that fits an IPv4 datagram (65535 - 20 - 8).
pub const MAX_UDP_PAYLOAD: usize = 65_507;

const ETHERNET_HEADER_LEN: usize = 14;
const IPV4_HEADER_LEN: usize = 20;
const UDP_HEADER_LEN: usize = 8;
/// Total encapsulation overhead of a synthesized frame.
pub const FRAME_OVERHEAD: usize = ETHERNET_HEADER_LEN + IPV4_HEADER_LEN + UDP_HEADER_LEN;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("bad capture-file magic")]
    BadMagic,
    #[error("unsupported link type {0} (only Ethernet is accepted)")]
    UnsupportedLinkType(u32),
    #[error("truncated capture record")]
    TruncatedRecord,
    #[error("snaplen-truncated packet rejected (captured {incl}, original {orig})")]
    SnaplenTruncated { incl: u32, orig: u32 },
    #[error("record timestamp has {0} microseconds (must be < 1000000)")]
    BadTimestamp(u32),
    #[error("UDP payload of {0} bytes exceeds the IPv4 maximum")]
    OversizePayload(usize),
    #[error("not an Ethernet/IPv4/UDP frame: {0}")]
    MalformedFrame(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One captured link-layer frame with a microsecond timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapturedPacket {
    pub ts_sec: u32,
    pub ts_usec: u32,
    pub data: Vec<u8>,
}

impl CapturedPacket {
    pub fn new(ts_sec: u32, ts_usec: u32, data: Vec<u8>) -> Self {
        assert!(ts_usec < 1_000_000, "ts_usec must be below one second");
        Self {
            ts_sec,
            ts_usec,
            data,
        }
    }

    /// Splits fractional seconds into the stored (sec, usec) pair.
    pub fn at_time(time: f64, data: Vec<u8>) -> Self {
        assert!(
            time >= 0.0 && time.is_finite(),
            "capture time must be a finite non-negative value"
        );
        let sec = time.floor();
        let mut usec = ((time - sec) * 1e6).round() as u32;
        let mut sec = sec as u32;
        if usec >= 1_000_000 {
            sec += 1;
            usec = 0;
        }
        Self::new(sec, usec, data)
    }

    /// Arrival time in fractional seconds.
    pub fn time(&self) -> f64 {
        f64::from(self.ts_sec) + f64::from(self.ts_usec) * 1e-6
    }
}

/// Per-packet QoS tuple extracted from a trace: payload size, unwrapped RTP
/// sequence number, media timestamp in seconds, and arrival time. Lists are
/// sorted by arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    /// UDP payload length, i.e. the full RTP packet size in bytes.
    pub size: usize,
    /// 16-bit sequence number unwrapped to a monotone integer.
    pub seq: u64,
    /// RTP timestamp converted to seconds (ticks / 90000).
    pub rtp_ts: f64,
    /// Capture timestamp in fractional seconds.
    pub arrival: f64,
}

/// Writes a classic little-endian capture file.
pub fn write_pcap<W: Write>(packets: &[CapturedPacket], writer: &mut W) -> Result<(), TraceError> {
    writer.write_u32::<LittleEndian>(PCAP_MAGIC)?;
    writer.write_u16::<LittleEndian>(2)?;
    writer.write_u16::<LittleEndian>(4)?;
    writer.write_i32::<LittleEndian>(0)?; // thiszone
    writer.write_u32::<LittleEndian>(0)?; // sigfigs
    writer.write_u32::<LittleEndian>(SNAPLEN)?;
    writer.write_u32::<LittleEndian>(LINKTYPE_ETHERNET)?;
    for packet in packets {
        assert!(
            packet.ts_usec < 1_000_000,
            "ts_usec must be below one second"
        );
        let len = packet.data.len() as u32;
        writer.write_u32::<LittleEndian>(packet.ts_sec)?;
        writer.write_u32::<LittleEndian>(packet.ts_usec)?;
        writer.write_u32::<LittleEndian>(len)?; // incl_len
        writer.write_u32::<LittleEndian>(len)?; // orig_len
        writer.write_all(&packet.data)?;
    }
    Ok(())
}

/// Reads a classic capture file in either byte order. Rejects non-Ethernet
/// link types and records truncated by a snaplen (incl_len ≠ orig_len).
pub fn read_pcap<R: Read>(reader: &mut R) -> Result<Vec<CapturedPacket>, TraceError> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| TraceError::BadMagic)?;
    if u32::from_le_bytes(magic) == PCAP_MAGIC {
        read_pcap_body::<LittleEndian, R>(reader)
    } else if u32::from_be_bytes(magic) == PCAP_MAGIC {
        read_pcap_body::<BigEndian, R>(reader)
    } else {
        Err(TraceError::BadMagic)
    }
}

fn read_pcap_body<B: ByteOrder, R: Read>(
    reader: &mut R,
) -> Result<Vec<CapturedPacket>, TraceError> {
    let mut rest_of_header = [0u8; PCAP_GLOBAL_HEADER_LEN - 4];
    reader
        .read_exact(&mut rest_of_header)
        .map_err(|_| TraceError::TruncatedRecord)?;
    let network = B::read_u32(&rest_of_header[16..20]);
    if network != LINKTYPE_ETHERNET {
        return Err(TraceError::UnsupportedLinkType(network));
    }

    let mut packets = Vec::new();
    loop {
        let mut record_header = [0u8; PCAP_RECORD_HEADER_LEN];
        match reader.read(&mut record_header)? {
            0 => break,
            n if n < PCAP_RECORD_HEADER_LEN => {
                reader
                    .read_exact(&mut record_header[n..])
                    .map_err(|_| TraceError::TruncatedRecord)?;
            }
            _ => {}
        }
        let ts_sec = B::read_u32(&record_header[0..4]);
        let ts_usec = B::read_u32(&record_header[4..8]);
        let incl = B::read_u32(&record_header[8..12]);
        let orig = B::read_u32(&record_header[12..16]);
        if incl != orig {
            return Err(TraceError::SnaplenTruncated { incl, orig });
        }
        if ts_usec >= 1_000_000 {
            return Err(TraceError::BadTimestamp(ts_usec));
        }
        let mut data = vec![0u8; incl as usize];
        reader
            .read_exact(&mut data)
            .map_err(|_| TraceError::TruncatedRecord)?;
        packets.push(CapturedPacket {
            ts_sec,
            ts_usec,
            data,
        });
    }
    Ok(packets)
}

/// Ones'-complement sum over the IPv4 header with the checksum field zeroed.
fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for pair in header.chunks(2) {
        let word = u32::from(pair[0]) << 8 | u32::from(*pair.get(1).unwrap_or(&0));
        sum += word;
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Wraps an RTP packet in Ethernet II + IPv4 + UDP headers (zero MACs, TTL
/// 64, correct IPv4 header checksum, UDP checksum 0).
pub fn synthesize_frame(
    src: SocketAddrV4,
    dst: SocketAddrV4,
    rtp_bytes: &[u8],
) -> Result<Vec<u8>, TraceError> {
    if rtp_bytes.len() > MAX_UDP_PAYLOAD {
        return Err(TraceError::OversizePayload(rtp_bytes.len()));
    }
    let mut frame = Vec::with_capacity(FRAME_OVERHEAD + rtp_bytes.len());

    // Ethernet II: zero destination and source MACs, IPv4 ethertype.
    frame.extend_from_slice(&[0u8; 12]);
    frame.extend_from_slice(&[0x08, 0x00]);

    let total_len = (IPV4_HEADER_LEN + UDP_HEADER_LEN + rtp_bytes.len()) as u16;
    let mut ip = [0u8; IPV4_HEADER_LEN];
    ip[0] = 0x45; // version 4, IHL 5
    ip[2..4].copy_from_slice(&total_len.to_be_bytes());
    ip[8] = 64; // TTL
    ip[9] = 17; // UDP
    ip[12..16].copy_from_slice(&src.ip().octets());
    ip[16..20].copy_from_slice(&dst.ip().octets());
    let checksum = ipv4_checksum(&ip);
    ip[10..12].copy_from_slice(&checksum.to_be_bytes());
    frame.extend_from_slice(&ip);

    let udp_len = (UDP_HEADER_LEN + rtp_bytes.len()) as u16;
    frame.extend_from_slice(&src.port().to_be_bytes());
    frame.extend_from_slice(&dst.port().to_be_bytes());
    frame.extend_from_slice(&udp_len.to_be_bytes());
    frame.extend_from_slice(&[0, 0]); // UDP checksum 0: legal for IPv4
    frame.extend_from_slice(rtp_bytes);
    Ok(frame)
}

/// A UDP datagram parsed back out of a link-layer frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDatagram<'a> {
    pub src: SocketAddrV4,
    pub dst: SocketAddrV4,
    pub payload: &'a [u8],
}

/// Parses an Ethernet II / IPv4 / UDP frame. Header checksums are not
/// verified: captures from offloading stacks routinely carry zeros.
pub fn parse_udp_frame(data: &[u8]) -> Result<ParsedDatagram<'_>, TraceError> {
    if data.len() < ETHERNET_HEADER_LEN + IPV4_HEADER_LEN + UDP_HEADER_LEN {
        return Err(TraceError::MalformedFrame(
            "frame shorter than the minimal headers",
        ));
    }
    if data[12..14] != [0x08, 0x00] {
        return Err(TraceError::MalformedFrame("ethertype is not IPv4"));
    }
    let ip = &data[ETHERNET_HEADER_LEN..];
    if ip[0] >> 4 != 4 {
        return Err(TraceError::MalformedFrame("IP version is not 4"));
    }
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    if ihl < IPV4_HEADER_LEN || ip.len() < ihl + UDP_HEADER_LEN {
        return Err(TraceError::MalformedFrame(
            "IPv4 header length out of range",
        ));
    }
    if ip[9] != 17 {
        return Err(TraceError::MalformedFrame("protocol is not UDP"));
    }
    let src_ip = std::net::Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = std::net::Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let udp = &ip[ihl..];
    let src_port = u16::from_be_bytes([udp[0], udp[1]]);
    let dst_port = u16::from_be_bytes([udp[2], udp[3]]);
    let udp_len = usize::from(u16::from_be_bytes([udp[4], udp[5]]));
    if udp_len < UDP_HEADER_LEN || udp.len() < udp_len {
        return Err(TraceError::MalformedFrame("UDP length field out of range"));
    }
    Ok(ParsedDatagram {
        src: SocketAddrV4::new(src_ip, src_port),
        dst: SocketAddrV4::new(dst_ip, dst_port),
        payload: &udp[UDP_HEADER_LEN..udp_len],
    })
}

/// Filters a trace to UDP datagrams bound for `dst_port`, parses them as RTP
/// and returns per-packet records sorted by arrival, along with the number
/// of datagrams on the port that failed to parse (skipped, not fatal).
pub fn extract_rtp_records(
    packets: &[CapturedPacket],
    dst_port: u16,
) -> (Vec<PacketRecord>, usize) {
    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut unwrapper = SeqUnwrapper::new();
    for packet in packets {
        let Ok(datagram) = parse_udp_frame(&packet.data) else {
            continue;
        };
        if datagram.dst.port() != dst_port {
            continue;
        }
        match RtpHeader::parse(datagram.payload) {
            Ok(header) => records.push(PacketRecord {
                size: datagram.payload.len(),
                seq: unwrapper.unwrap_seq(header.sequence),
                rtp_ts: f64::from(header.timestamp) / f64::from(RTP_CLOCK_HZ),
                arrival: packet.time(),
            }),
            Err(_) => skipped += 1,
        }
    }
    records.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
    (records, skipped)
}
