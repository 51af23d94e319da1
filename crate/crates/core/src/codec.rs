//! GOP-structured intra/delta codec with receiver-side loss concealment.
//!
//! Frames are quantized by a bit-shift, then coded either as an I-frame
//! (RLE of the planes) or as a P-frame (RLE of the byte-wise wrapping delta
//! against the previous quantized frame). The decoder keeps the frame rate
//! constant: a lost frame is concealed by duplicating the last output frame,
//! and a lost I-frame drops its whole GOP. GOPs lost before anything was
//! decoded produce no output at all and are accounted in `start_offset`.
//!
//! Elementary-stream container (VTES, little-endian):
//!
//! ```text
//! file:  "VTES" | version u8=1 | width u16 | height u16 | fps_num u16 |
//!        fps_den u16 | gop_size u16 | quant_shift u8
//! frame: sync u8=0x46 | type u8 ('I'|'P') | frame_number u32 |
//!        payload_len u32 | payload
//! ```

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rawvideo::{FrameBuffer, RawVideo};

pub const VTES_MAGIC: &[u8; 4] = b"VTES";
pub const VTES_VERSION: u8 = 1;
const FRAME_SYNC: u8 = 0x46;
/// Serialized frame record header: sync + type + frame_number + payload_len.
pub const FRAME_HEADER_LEN: usize = 10;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("truncated RLE run token")]
    TruncatedRun,
    #[error("RLE run of length zero")]
    ZeroRun,
    #[error("bad VTES magic")]
    BadMagic,
    #[error("unsupported VTES version {0}")]
    BadVersion(u8),
    #[error("bad frame sync byte 0x{0:02x}")]
    BadSync(u8),
    #[error("unknown frame type byte 0x{0:02x}")]
    BadFrameType(u8),
    #[error("frame numbers must be strictly increasing (saw {0} after {1})")]
    NonMonotonicFrame(u32, u32),
    #[error("frame {number}: type {found:?} does not match its GOP position")]
    TypeMismatch { number: u32, found: FrameType },
    #[error("frame {number}: decoded payload is {got} bytes, expected {want}")]
    GeometryMismatch {
        number: u32,
        got: usize,
        want: usize,
    },
    #[error("truncated VTES stream")]
    Truncated,
    #[error("expected {expected} output frames, produced {produced}")]
    FrameCountMismatch { expected: usize, produced: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
}

impl FrameType {
    fn to_byte(self) -> u8 {
        match self {
            FrameType::I => b'I',
            FrameType::P => b'P',
        }
    }

    fn from_byte(byte: u8) -> Result<Self, CodecError> {
        match byte {
            b'I' => Ok(FrameType::I),
            b'P' => Ok(FrameType::P),
            other => Err(CodecError::BadFrameType(other)),
        }
    }
}

/// One coded frame record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrame {
    pub frame_type: FrameType,
    pub frame_number: u32,
    pub payload: Vec<u8>,
}

impl EncodedFrame {
    /// Length of the serialized record including its header.
    pub fn size(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len()
    }

    /// Serializes the frame record (sync, type, number, length, payload).
    pub fn to_record(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size());
        out.push(FRAME_SYNC);
        out.push(self.frame_type.to_byte());
        out.extend_from_slice(&self.frame_number.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one complete frame record; the buffer must contain exactly one.
    pub fn from_record(data: &[u8]) -> Result<Self, CodecError> {
        if data.len() < FRAME_HEADER_LEN {
            return Err(CodecError::Truncated);
        }
        if data[0] != FRAME_SYNC {
            return Err(CodecError::BadSync(data[0]));
        }
        let frame_type = FrameType::from_byte(data[1])?;
        let frame_number = u32::from_le_bytes(data[2..6].try_into().unwrap());
        let payload_len = u32::from_le_bytes(data[6..10].try_into().unwrap()) as usize;
        if data.len() != FRAME_HEADER_LEN + payload_len {
            return Err(CodecError::Truncated);
        }
        Ok(Self {
            frame_type,
            frame_number,
            payload: data[FRAME_HEADER_LEN..].to_vec(),
        })
    }
}

/// A coded stream: geometry, rate, GOP parameters and the frame records that
/// survived transmission (gaps mean losses).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub gop_size: u32,
    pub quant_shift: u8,
    pub frames: Vec<EncodedFrame>,
}

impl EncodedStream {
    /// Total size of all serialized frame records in bytes.
    pub fn coded_len(&self) -> usize {
        self.frames.iter().map(EncodedFrame::size).sum()
    }

    /// Mean bitrate of the coded stream in kbit/s, from record sizes and the
    /// nominal frame rate over the stream's reference duration.
    pub fn bitrate_kbps(&self, reference_frames: usize) -> f64 {
        if reference_frames == 0 {
            return 0.0;
        }
        let seconds = reference_frames as f64 * f64::from(self.fps_den) / f64::from(self.fps_num);
        self.coded_len() as f64 * 8.0 / seconds / 1000.0
    }
}

/// What the decoder saw and did, per reference frame index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeReport {
    /// True where the reference index decoded from a received frame.
    pub present: Vec<bool>,
    /// Frames concealed by duplicating the previous output frame.
    pub duplicated: usize,
    /// GOP indices whose I-frame was lost (the whole GOP is dropped).
    pub dropped_gops: Vec<usize>,
    /// 0, or -k when the first k reference frames were undecodable and the
    /// output starts k frames late.
    pub start_offset: i64,
}

/// Run-length encodes `data`: `0x00` + little-endian u16 run length stands
/// for a zero run, any other byte is a literal. Runs longer than 65535 split.
pub fn rle_compress(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() / 4 + 16);
    let mut i = 0;
    while i < data.len() {
        if data[i] == 0 {
            let mut run = 1usize;
            while i + run < data.len() && data[i + run] == 0 && run < 65535 {
                run += 1;
            }
            out.push(0x00);
            out.extend_from_slice(&(run as u16).to_le_bytes());
            i += run;
        } else {
            out.push(data[i]);
            i += 1;
        }
    }
    out
}

/// Exact inverse of [`rle_compress`].
pub fn rle_decompress(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(data.len());
    let mut i = 0;
    while i < data.len() {
        if data[i] == 0 {
            if i + 2 >= data.len() {
                return Err(CodecError::TruncatedRun);
            }
            let run = u16::from_le_bytes([data[i + 1], data[i + 2]]) as usize;
            if run == 0 {
                return Err(CodecError::ZeroRun);
            }
            out.resize(out.len() + run, 0);
            i += 3;
        } else {
            out.push(data[i]);
            i += 1;
        }
    }
    Ok(out)
}

fn quantize(data: &[u8], shift: u8) -> Vec<u8> {
    data.iter().map(|&v| (v >> shift) << shift).collect()
}

/// Encodes `video` with the given GOP length and quantization shift.
///
/// Frame 0 and every `gop_size`-th frame is an I-frame carrying the RLE of
/// its quantized planes; every other frame is a P-frame carrying the RLE of
/// the wrapping byte delta against the previous quantized frame.
pub fn encode(video: &RawVideo, gop_size: u32, quant_shift: u8) -> EncodedStream {
    assert!(gop_size >= 1, "gop_size must be at least 1");
    assert!(quant_shift <= 7, "quant_shift must be in 0..=7");
    assert!(!video.frames.is_empty(), "cannot encode an empty video");

    let mut frames = Vec::with_capacity(video.frames.len());
    let mut prev: Option<Vec<u8>> = None;
    for (number, frame) in video.frames.iter().enumerate() {
        let quantized = quantize(&frame.concat_planes(), quant_shift);
        let number = number as u32;
        let (frame_type, payload) = if number % gop_size == 0 {
            (FrameType::I, rle_compress(&quantized))
        } else {
            let previous = prev.as_ref().expect("P-frame always has a predecessor");
            let delta: Vec<u8> = quantized
                .iter()
                .zip(previous)
                .map(|(&cur, &prv)| cur.wrapping_sub(prv))
                .collect();
            (FrameType::P, rle_compress(&delta))
        };
        frames.push(EncodedFrame {
            frame_type,
            frame_number: number,
            payload,
        });
        prev = Some(quantized);
    }

    EncodedStream {
        width: video.width,
        height: video.height,
        fps_num: video.fps_num,
        fps_den: video.fps_den,
        gop_size,
        quant_shift,
        frames,
    }
}

/// Decodes a possibly gappy stream, keeping the frame rate constant.
///
/// Per reference index: a received I-frame decodes intra; a received P-frame
/// applies its delta to the previously output frame (which may be a concealed
/// duplicate); an absent frame duplicates the previous output. A GOP whose
/// I-frame is absent is dropped wholesale. Absences before the first decoded
/// frame produce no output and decrement `start_offset` instead.
pub fn decode(
    stream: &EncodedStream,
    expected_frames: usize,
) -> Result<(RawVideo, DecodeReport), CodecError> {
    let gop = stream.gop_size as usize;
    let frame_len = crate::rawvideo::i420_frame_len(stream.width, stream.height);

    let mut by_number = std::collections::BTreeMap::new();
    for frame in &stream.frames {
        let expected_type = if frame.frame_number % stream.gop_size == 0 {
            FrameType::I
        } else {
            FrameType::P
        };
        if frame.frame_type != expected_type {
            return Err(CodecError::TypeMismatch {
                number: frame.frame_number,
                found: frame.frame_type,
            });
        }
        by_number.insert(frame.frame_number as usize, frame);
    }

    let mut video = RawVideo::new(stream.width, stream.height, stream.fps_num, stream.fps_den);
    let mut present = vec![false; expected_frames];
    let mut dropped_gops = Vec::new();
    let mut duplicated = 0usize;
    let mut start_offset = 0i64;
    // Last output frame as quantized plane bytes; deltas chain off it.
    let mut prev_output: Option<Vec<u8>> = None;

    let mut gop_start = 0usize;
    while gop_start < expected_frames {
        let gop_end = (gop_start + gop).min(expected_frames);
        let i_frame_ok = by_number.get(&gop_start).is_some();
        if !i_frame_ok {
            dropped_gops.push(gop_start / gop);
        }
        for index in gop_start..gop_end {
            let received = if i_frame_ok {
                by_number.get(&index)
            } else {
                None
            };
            match received {
                Some(frame) => {
                    let decoded = rle_decompress(&frame.payload)?;
                    if decoded.len() != frame_len {
                        return Err(CodecError::GeometryMismatch {
                            number: frame.frame_number,
                            got: decoded.len(),
                            want: frame_len,
                        });
                    }
                    let output = match frame.frame_type {
                        FrameType::I => decoded,
                        FrameType::P => {
                            let base = prev_output
                                .as_ref()
                                .expect("P decodes after its GOP's I-frame");
                            decoded
                                .iter()
                                .zip(base)
                                .map(|(&d, &b)| b.wrapping_add(d))
                                .collect()
                        }
                    };
                    video.push_frame(
                        FrameBuffer::from_concat(stream.width, stream.height, &output)
                            .expect("length checked above"),
                    );
                    present[index] = true;
                    prev_output = Some(output);
                }
                None => match &prev_output {
                    Some(last) => {
                        video.push_frame(
                            FrameBuffer::from_concat(stream.width, stream.height, last)
                                .expect("previous output has valid length"),
                        );
                        duplicated += 1;
                    }
                    None => start_offset -= 1,
                },
            }
        }
        gop_start = gop_end;
    }

    debug_assert_eq!(
        video.frame_count() as i64,
        expected_frames as i64 + start_offset
    );
    Ok((
        video,
        DecodeReport {
            present,
            duplicated,
            dropped_gops,
            start_offset,
        },
    ))
}

/// Aligns a decoded video with its reference when the stream's first GOP(s)
/// were lost: trims the first `|start_offset|` reference frames so both sides
/// have equal length. Errors if the counts still disagree afterwards.
pub fn dismiss_first_gop(
    rx: RawVideo,
    mut reference: RawVideo,
    report: &DecodeReport,
) -> Result<(RawVideo, RawVideo), CodecError> {
    if report.start_offset < 0 {
        let skip = (-report.start_offset) as usize;
        if skip <= reference.frames.len() {
            reference.frames.drain(..skip);
        }
    }
    if rx.frames.len() != reference.frames.len() {
        return Err(CodecError::FrameCountMismatch {
            expected: reference.frames.len(),
            produced: rx.frames.len(),
        });
    }
    Ok((rx, reference))
}

/// Writes the VTES container form of `stream`.
pub fn write_vtes<W: Write>(stream: &EncodedStream, writer: &mut W) -> Result<(), CodecError> {
    writer.write_all(VTES_MAGIC)?;
    writer.write_u8(VTES_VERSION)?;
    writer.write_u16::<LittleEndian>(stream.width as u16)?;
    writer.write_u16::<LittleEndian>(stream.height as u16)?;
    writer.write_u16::<LittleEndian>(stream.fps_num as u16)?;
    writer.write_u16::<LittleEndian>(stream.fps_den as u16)?;
    writer.write_u16::<LittleEndian>(stream.gop_size as u16)?;
    writer.write_u8(stream.quant_shift)?;
    for frame in &stream.frames {
        writer.write_all(&frame.to_record())?;
    }
    Ok(())
}

/// Reads a VTES container. Frame numbers must be strictly increasing.
pub fn read_vtes<R: Read>(reader: &mut R) -> Result<EncodedStream, CodecError> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| CodecError::BadMagic)?;
    if &magic != VTES_MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = reader.read_u8()?;
    if version != VTES_VERSION {
        return Err(CodecError::BadVersion(version));
    }
    let width = u32::from(reader.read_u16::<LittleEndian>()?);
    let height = u32::from(reader.read_u16::<LittleEndian>()?);
    let fps_num = u32::from(reader.read_u16::<LittleEndian>()?);
    let fps_den = u32::from(reader.read_u16::<LittleEndian>()?);
    let gop_size = u32::from(reader.read_u16::<LittleEndian>()?);
    let quant_shift = reader.read_u8()?;

    let mut frames: Vec<EncodedFrame> = Vec::new();
    loop {
        let sync = match reader.read_u8() {
            Ok(byte) => byte,
            Err(ref e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if sync != FRAME_SYNC {
            return Err(CodecError::BadSync(sync));
        }
        let frame_type =
            FrameType::from_byte(reader.read_u8().map_err(|_| CodecError::Truncated)?)?;
        let frame_number = reader
            .read_u32::<LittleEndian>()
            .map_err(|_| CodecError::Truncated)?;
        let payload_len = reader
            .read_u32::<LittleEndian>()
            .map_err(|_| CodecError::Truncated)? as usize;
        let mut payload = vec![0u8; payload_len];
        reader
            .read_exact(&mut payload)
            .map_err(|_| CodecError::Truncated)?;
        if let Some(last) = frames.last() {
            if frame_number <= last.frame_number {
                return Err(CodecError::NonMonotonicFrame(
                    frame_number,
                    last.frame_number,
                ));
            }
        }
        frames.push(EncodedFrame {
            frame_type,
            frame_number,
            payload,
        });
    }

    Ok(EncodedStream {
        width,
        height,
        fps_num,
        fps_den,
        gop_size,
        quant_shift,
        frames,
    })
}

/// `write_vtes` into a fresh byte buffer.
pub fn vtes_to_vec(stream: &EncodedStream) -> Vec<u8> {
    let mut out = Vec::new();
    write_vtes(stream, &mut out).expect("writing to a Vec cannot fail");
    out
}
