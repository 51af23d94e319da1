//! Builds a metric-registry context from artifact files on disk.
//!
//! The analysis step works entirely offline: it accepts whichever artifacts
//! a run left behind (packet trace, received stream, received video,
//! reference video, session record) and fills in as much of the context as
//! those files allow. Anything missing simply leaves its field empty, and
//! the registry reports the affected measures as skipped.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use vt_core::codec::{self, EncodedStream};
use vt_core::metrics::AnalysisContext;
use vt_core::rawvideo::{read_y4m, RawVideo};
use vt_core::trace::{extract_rtp_records, parse_udp_frame, read_pcap};
use vt_net::client::{REF_RAW_FILE, RX_ENCODED_FILE, RX_RAW_FILE, SESSION_META_FILE, TRACE_FILE};
use vt_net::session::SessionRecord;

use crate::config::SessionSection;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl ContextError {
    fn format(path: &Path, message: impl std::fmt::Display) -> Self {
        ContextError::Format {
            path: path.to_owned(),
            message: message.to_string(),
        }
    }

    /// True when the file existed but its contents were not in the expected
    /// format (as opposed to plain I/O failure).
    pub fn is_format(&self) -> bool {
        matches!(self, ContextError::Format { .. })
    }
}

/// The artifact files of one run; every slot is optional.
#[derive(Debug, Clone, Default)]
pub struct RunInputs {
    pub label: String,
    pub trace: Option<PathBuf>,
    pub rx_encoded: Option<PathBuf>,
    pub rx_raw: Option<PathBuf>,
    pub ref_raw: Option<PathBuf>,
    pub session_meta: Option<PathBuf>,
}

impl RunInputs {
    /// Picks up whichever artifacts exist under `dir` by their standard
    /// names (the layout `vt run` produces).
    pub fn from_dir(dir: &Path) -> Self {
        let pick = |name: &str| {
            let path = dir.join(name);
            path.is_file().then_some(path)
        };
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Self {
            label,
            trace: pick(TRACE_FILE),
            rx_encoded: pick(RX_ENCODED_FILE),
            rx_raw: pick(RX_RAW_FILE),
            ref_raw: pick(REF_RAW_FILE),
            session_meta: pick(SESSION_META_FILE),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_none()
            && self.rx_encoded.is_none()
            && self.rx_raw.is_none()
            && self.ref_raw.is_none()
            && self.session_meta.is_none()
    }
}

/// One run's context plus human-readable notes about how it was assembled
/// (alignment decisions, fallbacks); the notes land in the report.
#[derive(Debug)]
pub struct LoadedRun {
    pub label: String,
    pub context: AnalysisContext,
    pub notes: Vec<String>,
}

fn open(path: &Path) -> Result<BufReader<File>, ContextError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| ContextError::Read {
            path: path.to_owned(),
            source,
        })
}

fn load_y4m(path: &Path) -> Result<RawVideo, ContextError> {
    let mut reader = open(path)?;
    read_y4m(&mut reader).map_err(|e| ContextError::format(path, e))
}

fn load_vtes(path: &Path) -> Result<EncodedStream, ContextError> {
    let mut reader = open(path)?;
    codec::read_vtes(&mut reader).map_err(|e| ContextError::format(path, e))
}

/// Loads one run's artifacts into an analysis context.
///
/// The session section supplies the encoder settings used to rebuild the
/// reference stream from the pristine reference video; the toy encoder is
/// deterministic, so this reproduces the server's stream byte for byte.
pub fn load_run(inputs: &RunInputs, session: &SessionSection) -> Result<LoadedRun, ContextError> {
    let mut ctx = AnalysisContext::default();
    let mut notes = Vec::new();

    if let Some(path) = &inputs.session_meta {
        let reader = open(path)?;
        let record: SessionRecord =
            serde_json::from_reader(reader).map_err(|e| ContextError::format(path, e))?;
        if record.rtt_samples.is_empty() {
            notes.push("session record has no RTT samples; latency skipped".to_owned());
        } else {
            ctx.rtt_samples = Some(record.rtt_samples.clone());
        }
        ctx.session_meta = Some(record.to_session_meta());
    }

    if let Some(path) = &inputs.trace {
        let mut reader = open(path)?;
        let packets = read_pcap(&mut reader).map_err(|e| ContextError::format(path, e))?;
        // The capture's RTP flow is identified by the destination port of
        // its first frame (the session record stores the requested port,
        // which may have been 0 = ephemeral).
        match packets.iter().find_map(|p| parse_udp_frame(&p.data).ok()) {
            Some(first) => {
                let port = first.dst.port();
                let (records, skipped) = extract_rtp_records(&packets, port);
                if skipped > 0 {
                    notes.push(format!(
                        "{skipped} captured packet(s) not parseable as RTP to port {port} \
                         were ignored"
                    ));
                }
                ctx.packet_records = Some(records);
            }
            None => notes.push("trace contains no parseable UDP frames".to_owned()),
        }
    }

    if let Some(path) = &inputs.rx_encoded {
        ctx.rx_encoded = Some(load_vtes(path)?);
    }

    let ref_full = inputs.ref_raw.as_deref().map(load_y4m).transpose()?;
    let rx_file = inputs.rx_raw.as_deref().map(load_y4m).transpose()?;

    // Re-derive the decode report from the received stream. The received
    // video file already holds the sustained output, but only the stream
    // says how many frames were concealed and whether leading GOPs died.
    let mut decoded_rx: Option<RawVideo> = None;
    if let Some(stream) = &ctx.rx_encoded {
        let expected = match (&ref_full, stream.frames.last()) {
            (Some(reference), _) => reference.frames.len(),
            (None, Some(last)) => last.frame_number as usize + 1,
            (None, None) => 0,
        };
        let path = inputs
            .rx_encoded
            .as_deref()
            .expect("stream was loaded from this path");
        let (video, report) =
            codec::decode(stream, expected).map_err(|e| ContextError::format(path, e))?;
        ctx.decode_report = Some(report);
        decoded_rx = Some(video);
    }

    // The received video: prefer the file, fall back to the decode.
    let rx_video = match (rx_file, decoded_rx) {
        (Some(file), _) => Some(file),
        (None, Some(decoded)) => {
            notes.push("received video reconstructed by decoding the received stream".to_owned());
            Some(decoded)
        }
        (None, None) => None,
    };

    match (rx_video, ref_full) {
        (Some(rx), Some(reference)) => {
            // Align: when leading GOPs were lost the received video is short
            // by |start_offset| frames and the reference drops its head.
            let report = ctx.decode_report.clone().unwrap_or_else(|| {
                let missing = reference.frames.len() as i64 - rx.frames.len() as i64;
                if missing > 0 {
                    notes.push(format!(
                        "no received stream available; inferring {missing} dismissed leading \
                         frame(s) from the length difference"
                    ));
                }
                vt_core::codec::DecodeReport {
                    present: vec![true; rx.frames.len()],
                    duplicated: 0,
                    dropped_gops: Vec::new(),
                    start_offset: -missing.max(0),
                }
            });
            match codec::dismiss_first_gop(rx, reference, &report) {
                Ok((rx_aligned, ref_aligned)) => {
                    if report.start_offset < 0 {
                        notes.push(format!(
                            "first {} reference frame(s) dismissed to realign after leading loss",
                            -report.start_offset
                        ));
                    }
                    ctx.rx_raw = Some(rx_aligned);
                    ctx.ref_raw = Some(ref_aligned);
                }
                Err(e) => {
                    notes.push(format!("cannot align received and reference video: {e}"));
                }
            }
        }
        (Some(rx), None) => ctx.rx_raw = Some(rx),
        (None, _) => {}
    }

    // The reference stream backs the bitstream measures and the reference
    // MOS; rebuild it with the session's encoder settings.
    if let Some(path) = &inputs.ref_raw {
        let pristine = load_y4m(path)?;
        ctx.ref_encoded = Some(codec::encode(
            &pristine,
            u32::from(session.gop_size),
            session.quant_shift,
        ));
    }

    Ok(LoadedRun {
        label: inputs.label.clone(),
        context: ctx,
        notes,
    })
}
