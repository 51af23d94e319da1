//! Uncompressed I420 video in the YUV4MPEG2 container.
//!
//! The writer emits a canonical header (`YUV4MPEG2 W<w> H<h> F<n>:<d> Ip A1:1
//! C420`); the reader accepts any tag ordering but only the C420 colourspace
//! (or an absent colourspace tag, which defaults to it).

use std::io::{self, BufRead, BufReader, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Y4mError {
    #[error("malformed YUV4MPEG2 signature: {0}")]
    MalformedSignature(String),
    #[error("malformed header tag `{0}`")]
    MalformedTag(String),
    #[error("missing required header tag {0}")]
    MissingTag(&'static str),
    #[error("unsupported colourspace `{0}` (only C420 is accepted)")]
    UnsupportedColourspace(String),
    #[error("frame dimensions must be even and positive, got {0}x{1}")]
    BadGeometry(u32, u32),
    #[error("truncated frame payload (frame {0})")]
    TruncatedFrame(usize),
    #[error("malformed FRAME marker (frame {0})")]
    MalformedFrameMarker(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One uncompressed I420 picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    width: u32,
    height: u32,
    y_plane: Vec<u8>,
    u_plane: Vec<u8>,
    v_plane: Vec<u8>,
}

impl FrameBuffer {
    /// Builds a frame, asserting the I420 plane geometry.
    pub fn new(
        width: u32,
        height: u32,
        y_plane: Vec<u8>,
        u_plane: Vec<u8>,
        v_plane: Vec<u8>,
    ) -> Self {
        assert!(
            width > 0 && height > 0 && width % 2 == 0 && height % 2 == 0,
            "frame dimensions must be even and positive, got {width}x{height}"
        );
        assert_eq!(y_plane.len(), (width * height) as usize, "luma plane size");
        assert_eq!(u_plane.len(), chroma_len(width, height), "U plane size");
        assert_eq!(v_plane.len(), chroma_len(width, height), "V plane size");
        Self {
            width,
            height,
            y_plane,
            u_plane,
            v_plane,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn y_plane(&self) -> &[u8] {
        &self.y_plane
    }

    pub fn u_plane(&self) -> &[u8] {
        &self.u_plane
    }

    pub fn v_plane(&self) -> &[u8] {
        &self.v_plane
    }

    /// Total payload size of one frame in bytes (Y + U + V).
    pub fn payload_len(&self) -> usize {
        self.y_plane.len() + self.u_plane.len() + self.v_plane.len()
    }

    /// Planes concatenated in Y, U, V order.
    pub fn concat_planes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_len());
        out.extend_from_slice(&self.y_plane);
        out.extend_from_slice(&self.u_plane);
        out.extend_from_slice(&self.v_plane);
        out
    }

    /// Rebuilds a frame from concatenated Y,U,V bytes. Returns `None` on a
    /// length mismatch.
    pub fn from_concat(width: u32, height: u32, data: &[u8]) -> Option<Self> {
        let y_len = (width * height) as usize;
        let c_len = chroma_len(width, height);
        if data.len() != y_len + 2 * c_len {
            return None;
        }
        Some(Self::new(
            width,
            height,
            data[..y_len].to_vec(),
            data[y_len..y_len + c_len].to_vec(),
            data[y_len + c_len..].to_vec(),
        ))
    }
}

fn chroma_len(width: u32, height: u32) -> usize {
    ((width / 2) * (height / 2)) as usize
}

/// Expected I420 payload size for the given dimensions.
pub fn i420_frame_len(width: u32, height: u32) -> usize {
    (width * height) as usize + 2 * chroma_len(width, height)
}

/// An uncompressed video: geometry, frame-rate rational and ordered frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawVideo {
    pub width: u32,
    pub height: u32,
    pub fps_num: u32,
    pub fps_den: u32,
    pub frames: Vec<FrameBuffer>,
}

impl RawVideo {
    pub fn new(width: u32, height: u32, fps_num: u32, fps_den: u32) -> Self {
        assert!(fps_num > 0 && fps_den > 0, "frame rate must be positive");
        Self {
            width,
            height,
            fps_num,
            fps_den,
            frames: Vec::new(),
        }
    }

    /// Appends a frame, asserting it matches the video geometry.
    pub fn push_frame(&mut self, frame: FrameBuffer) {
        assert_eq!(
            (frame.width, frame.height),
            (self.width, self.height),
            "frame geometry must match the video"
        );
        self.frames.push(frame);
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

/// Parses a YUV4MPEG2 stream. Only C420 (or an absent colourspace tag) is
/// accepted; header tags other than W, H, F and C are ignored.
pub fn read_y4m<R: Read>(reader: R) -> Result<RawVideo, Y4mError> {
    let mut reader = BufReader::new(reader);
    let mut signature = Vec::new();
    reader.read_until(b'\n', &mut signature)?;
    if signature.last() == Some(&b'\n') {
        signature.pop();
    }
    let signature = String::from_utf8(signature)
        .map_err(|_| Y4mError::MalformedSignature("non-UTF8 header".into()))?;

    let mut parts = signature.split(' ');
    if parts.next() != Some("YUV4MPEG2") {
        return Err(Y4mError::MalformedSignature(signature.clone()));
    }

    let mut width = None;
    let mut height = None;
    let mut fps = None;
    for tag in parts {
        if tag.is_empty() {
            continue;
        }
        let (key, value) = tag.split_at(1);
        match key {
            "W" => {
                width = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| Y4mError::MalformedTag(tag.into()))?,
                )
            }
            "H" => {
                height = Some(
                    value
                        .parse::<u32>()
                        .map_err(|_| Y4mError::MalformedTag(tag.into()))?,
                )
            }
            "F" => {
                let (num, den) = value
                    .split_once(':')
                    .ok_or_else(|| Y4mError::MalformedTag(tag.into()))?;
                let num = num
                    .parse::<u32>()
                    .map_err(|_| Y4mError::MalformedTag(tag.into()))?;
                let den = den
                    .parse::<u32>()
                    .map_err(|_| Y4mError::MalformedTag(tag.into()))?;
                if num == 0 || den == 0 {
                    return Err(Y4mError::MalformedTag(tag.into()));
                }
                fps = Some((num, den));
            }
            "C" => {
                if value != "420" {
                    return Err(Y4mError::UnsupportedColourspace(format!("C{value}")));
                }
            }
            // Interlacing, aspect and extension tags are parsed and ignored.
            "I" | "A" | "X" => {}
            _ => return Err(Y4mError::MalformedTag(tag.into())),
        }
    }

    let width = width.ok_or(Y4mError::MissingTag("W"))?;
    let height = height.ok_or(Y4mError::MissingTag("H"))?;
    let (fps_num, fps_den) = fps.ok_or(Y4mError::MissingTag("F"))?;
    if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
        return Err(Y4mError::BadGeometry(width, height));
    }

    let mut video = RawVideo::new(width, height, fps_num, fps_den);
    let frame_len = i420_frame_len(width, height);
    let mut index = 0usize;
    loop {
        let mut marker = Vec::new();
        let n = reader.read_until(b'\n', &mut marker)?;
        if n == 0 {
            break; // clean end of stream at a frame boundary
        }
        if !marker.starts_with(b"FRAME") || marker.last() != Some(&b'\n') {
            return Err(Y4mError::MalformedFrameMarker(index));
        }
        let mut data = vec![0u8; frame_len];
        read_exact_or(&mut reader, &mut data).map_err(|_| Y4mError::TruncatedFrame(index))?;
        let y_len = (width * height) as usize;
        let c_len = chroma_len(width, height);
        video.push_frame(FrameBuffer::new(
            width,
            height,
            data[..y_len].to_vec(),
            data[y_len..y_len + c_len].to_vec(),
            data[y_len + c_len..].to_vec(),
        ));
        index += 1;
    }
    Ok(video)
}

fn read_exact_or<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<()> {
    reader.read_exact(buf)
}

/// Writes the canonical YUV4MPEG2 form of `video`.
pub fn write_y4m<W: Write>(video: &RawVideo, writer: &mut W) -> Result<(), Y4mError> {
    write!(
        writer,
        "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C420\n",
        video.width, video.height, video.fps_num, video.fps_den
    )?;
    for frame in &video.frames {
        writer.write_all(b"FRAME\n")?;
        writer.write_all(&frame.y_plane)?;
        writer.write_all(&frame.u_plane)?;
        writer.write_all(&frame.v_plane)?;
    }
    Ok(())
}

/// `write_y4m` into a fresh byte buffer.
pub fn y4m_to_vec(video: &RawVideo) -> Vec<u8> {
    let mut out = Vec::new();
    write_y4m(video, &mut out).expect("writing to a Vec cannot fail");
    out
}
