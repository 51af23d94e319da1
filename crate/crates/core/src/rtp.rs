//! RTP packetization of coded video frame records.
//!
//! Headers are the fixed 12-byte big-endian layout (version 2, no padding,
//! no extension, no CSRCs). Each coded frame record is split into payload
//! chunks of at most `max_payload` bytes; all packets of one frame share a
//! media timestamp on the 90 kHz clock and the last one carries the marker
//! bit. The depacketizer tolerates reordering and loss: a frame whose chunks
//! are incomplete is discarded, which the decoder then conceals.
//!
//! For stream transports, packets are framed with a 16-bit big-endian length
//! prefix; [`TcpUnframer`] reassembles packets from an arbitrary byte
//! stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{EncodedFrame, EncodedStream};

pub const RTP_HEADER_LEN: usize = 12;
pub const RTP_CLOCK_HZ: u32 = 90_000;
/// Dynamic payload type used for the coded video stream.
pub const DEFAULT_PAYLOAD_TYPE: u8 = 96;
/// Default payload chunk limit; keeps packets under a common 1500 MTU.
pub const DEFAULT_MAX_PAYLOAD: usize = 1400;

#[derive(Debug, Error)]
pub enum RtpError {
    #[error("packet shorter than the fixed header")]
    TooShort,
    #[error("unsupported RTP version {0}")]
    BadVersion(u8),
    #[error("length-prefixed frame is truncated")]
    TruncatedFraming,
}

/// The fixed RTP header fields this tool uses. Padding, extension and CSRC
/// count are always zero on send and rejected content is ignored on parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtpHeader {
    pub marker: bool,
    pub payload_type: u8,
    pub sequence: u16,
    pub timestamp: u32,
    pub ssrc: u32,
}

impl RtpHeader {
    pub fn to_bytes(&self) -> [u8; RTP_HEADER_LEN] {
        let mut out = [0u8; RTP_HEADER_LEN];
        out[0] = 2 << 6;
        out[1] = (u8::from(self.marker) << 7) | (self.payload_type & 0x7F);
        out[2..4].copy_from_slice(&self.sequence.to_be_bytes());
        out[4..8].copy_from_slice(&self.timestamp.to_be_bytes());
        out[8..12].copy_from_slice(&self.ssrc.to_be_bytes());
        out
    }

    pub fn parse(data: &[u8]) -> Result<Self, RtpError> {
        if data.len() < RTP_HEADER_LEN {
            return Err(RtpError::TooShort);
        }
        let version = data[0] >> 6;
        if version != 2 {
            return Err(RtpError::BadVersion(version));
        }
        Ok(Self {
            marker: data[1] & 0x80 != 0,
            payload_type: data[1] & 0x7F,
            sequence: u16::from_be_bytes([data[2], data[3]]),
            timestamp: u32::from_be_bytes([data[4], data[5], data[6], data[7]]),
            ssrc: u32::from_be_bytes([data[8], data[9], data[10], data[11]]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtpPacket {
    pub header: RtpHeader,
    pub payload: Vec<u8>,
}

impl RtpPacket {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RTP_HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn parse(data: &[u8]) -> Result<Self, RtpError> {
        let header = RtpHeader::parse(data)?;
        Ok(Self {
            header,
            payload: data[RTP_HEADER_LEN..].to_vec(),
        })
    }
}

/// Media timestamp of frame `n` on the 90 kHz clock, rounded to nearest.
/// Wraps modulo 2^32 like the wire field.
pub fn media_timestamp(frame_number: u32, fps_num: u32, fps_den: u32) -> u32 {
    assert!(fps_num > 0 && fps_den > 0, "frame rate must be positive");
    let ticks = (2 * u128::from(frame_number) * u128::from(RTP_CLOCK_HZ) * u128::from(fps_den)
        + u128::from(fps_num))
        / (2 * u128::from(fps_num));
    ticks as u32
}

/// Stream parameters a receiver needs to rebuild an [`EncodedStream`] from
/// packets; the packets themselves only carry frame records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamParams {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub gop_size: u32,
    pub quant_shift: u8,
}

impl From<&EncodedStream> for StreamParams {
    fn from(stream: &EncodedStream) -> Self {
        Self {
            width: stream.width,
            height: stream.height,
            fps_num: stream.fps_num,
            fps_den: stream.fps_den,
            gop_size: stream.gop_size,
            quant_shift: stream.quant_shift,
        }
    }
}

impl StreamParams {
    /// An [`EncodedStream`] with these parameters and the given frames.
    pub fn into_stream(self, frames: Vec<EncodedFrame>) -> EncodedStream {
        EncodedStream {
            width: self.width,
            height: self.height,
            fps_num: self.fps_num,
            fps_den: self.fps_den,
            gop_size: self.gop_size,
            quant_shift: self.quant_shift,
            frames,
        }
    }
}

/// Splits every frame record of `stream` into RTP packets.
///
/// Sequence numbers increment by one per packet starting at `initial_seq`
/// (wrapping); all packets of a frame share its media timestamp and the last
/// carries the marker bit.
pub fn packetize(
    stream: &EncodedStream,
    ssrc: u32,
    initial_seq: u16,
    max_payload: usize,
) -> Vec<RtpPacket> {
    assert!(max_payload > 0, "max_payload must be positive");
    let mut packets = Vec::new();
    let mut sequence = initial_seq;
    for frame in &stream.frames {
        let record = frame.to_record();
        let timestamp = media_timestamp(frame.frame_number, stream.fps_num, stream.fps_den);
        let chunks: Vec<&[u8]> = record.chunks(max_payload).collect();
        for (index, chunk) in chunks.iter().enumerate() {
            packets.push(RtpPacket {
                header: RtpHeader {
                    marker: index == chunks.len() - 1,
                    payload_type: DEFAULT_PAYLOAD_TYPE,
                    sequence,
                    timestamp,
                    ssrc,
                },
                payload: chunk.to_vec(),
            });
            sequence = sequence.wrapping_add(1);
        }
    }
    packets
}

/// Extends 16-bit sequence numbers to a monotone 64-bit counter.
///
/// A decrease of more than 2^15 relative to the previous value is treated as
/// a wrap; smaller decreases are reordering within the current cycle.
#[derive(Debug, Default)]
pub struct SeqUnwrapper {
    last: Option<(u16, u64)>,
}

impl SeqUnwrapper {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn unwrap_seq(&mut self, sequence: u16) -> u64 {
        let value = match self.last {
            None => u64::from(sequence),
            Some((prev_seq, prev_value)) => {
                let delta = sequence.wrapping_sub(prev_seq);
                if delta < 0x8000 {
                    // Forward step (or exact repeat), possibly crossing a wrap.
                    prev_value + u64::from(delta)
                } else {
                    // Reordered packet from earlier in the current cycle; may
                    // underflow below cycle start for pre-wrap stragglers.
                    let back = u64::from(prev_seq.wrapping_sub(sequence));
                    prev_value.saturating_sub(back)
                }
            }
        };
        let anchor = self.last.map(|(_, v)| v).unwrap_or(0);
        // Keep the anchor at the highest value seen so far.
        if self.last.is_none() || value > anchor {
            self.last = Some((sequence, value));
        }
        value
    }
}

/// Rebuilds an [`EncodedStream`] from received packets.
///
/// Packets may arrive reordered. A frame is kept only when all of its chunks
/// are present (consecutive sequence numbers ending in a marker) and the
/// reassembled record parses; anything else is dropped and left to the
/// decoder's concealment.
pub fn depacketize(packets: &[RtpPacket], params: &StreamParams) -> EncodedStream {
    let mut unwrapper = SeqUnwrapper::new();
    let mut ordered: Vec<(u64, &RtpPacket)> = packets
        .iter()
        .map(|p| (unwrapper.unwrap_seq(p.header.sequence), p))
        .collect();
    ordered.sort_by_key(|&(seq, _)| seq);
    ordered.dedup_by_key(|&mut (seq, _)| seq);

    let mut frames: Vec<EncodedFrame> = Vec::new();
    let mut index = 0;
    while index < ordered.len() {
        let timestamp = ordered[index].1.header.timestamp;
        let mut end = index;
        while end < ordered.len() && ordered[end].1.header.timestamp == timestamp {
            end += 1;
        }
        let group = &ordered[index..end];
        index = end;

        let consecutive = group.windows(2).all(|w| w[1].0 == w[0].0 + 1);
        let terminated = group.last().is_some_and(|&(_, p)| p.header.marker);
        if !(consecutive && terminated) {
            continue;
        }
        let mut record = Vec::new();
        for &(_, packet) in group {
            record.extend_from_slice(&packet.payload);
        }
        if let Ok(frame) = EncodedFrame::from_record(&record) {
            frames.push(frame);
        }
    }

    frames.sort_by_key(|f| f.frame_number);
    frames.dedup_by_key(|f| f.frame_number);
    params.into_stream(frames)
}

/// Length-prefixes one packet for a stream transport (16-bit big-endian).
pub fn frame_for_stream(packet: &[u8]) -> Vec<u8> {
    assert!(
        packet.len() <= u16::MAX as usize,
        "packet too large for 16-bit framing"
    );
    let mut out = Vec::with_capacity(2 + packet.len());
    out.extend_from_slice(&(packet.len() as u16).to_be_bytes());
    out.extend_from_slice(packet);
    out
}

/// Incremental parser for length-prefixed packets on a byte stream.
#[derive(Debug, Default)]
pub struct TcpUnframer {
    buffer: Vec<u8>,
}

impl TcpUnframer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds bytes in; returns every packet completed by them.
    pub fn push(&mut self, data: &[u8]) -> Vec<Vec<u8>> {
        self.buffer.extend_from_slice(data);
        let mut packets = Vec::new();
        let mut offset = 0;
        while self.buffer.len() - offset >= 2 {
            let len = u16::from_be_bytes([self.buffer[offset], self.buffer[offset + 1]]) as usize;
            if self.buffer.len() - offset - 2 < len {
                break;
            }
            packets.push(self.buffer[offset + 2..offset + 2 + len].to_vec());
            offset += 2 + len;
        }
        self.buffer.drain(..offset);
        packets
    }

    /// True when no partial packet is pending.
    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }
}
