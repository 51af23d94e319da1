//! Client session runner: negotiates over the control protocol, receives
//! the RTP stream while logging every packet to the capture sink, then
//! decodes with the frame-rate sustainer and writes the session artifacts:
//! the network trace (PCAP), the received encoded stream (VTES), the
//! received raw video (Y4M), the reference raw video (Y4M), and a session
//! record with timing and RTT samples.

use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use vt_core::codec::{decode, vtes_to_vec, CodecError, DecodeReport};
use vt_core::rawvideo::{read_y4m, write_y4m, RawVideo, Y4mError};
use vt_core::rtp::{media_timestamp, RtpPacket};

use crate::capture::CaptureSink;
use crate::control::{
    handshake, measure_rtt, ClientMessage, ControlChannel, ControlError, ServerMessage,
};
use crate::session::{SessionConfig, SessionError, SessionRecord};
use crate::transport::{start_receiver, ReceiveConfig, TransportError};

pub const TRACE_FILE: &str = "trace.pcap";
pub const RX_ENCODED_FILE: &str = "rx.vtes";
pub const RX_RAW_FILE: &str = "rx.y4m";
pub const REF_RAW_FILE: &str = "ref.y4m";
pub const SESSION_META_FILE: &str = "session_meta.json";

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("cannot resolve control endpoint {0}")]
    BadControlAddress(String),
    #[error("unexpected setup reply: {0}")]
    BadSetupReply(String),
    #[error("no packets received before the timeout")]
    NoPackets,
    #[error("received stream: {0}")]
    Codec(#[from] CodecError),
    #[error("reference video {path}: {source}")]
    Reference {
        path: PathBuf,
        #[source]
        source: Y4mError,
    },
    #[error("artifact i/o: {0}")]
    Io(#[from] io::Error),
}

/// Client-side knobs that are not part of the session description.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Round-trip samples to collect before streaming.
    pub rtt_count: usize,
    /// Receive ends after this long with no data.
    pub idle_timeout: Duration,
    /// Hard cap on the receive phase; must cover the paced stream duration.
    pub overall_deadline: Duration,
    pub connect_timeout: Duration,
    /// Port advertised to the server in place of the locally bound one —
    /// set this to an impairment proxy's listen port to route the stream
    /// through it.
    pub advertised_rtp_port: Option<u16>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            rtt_count: 8,
            idle_timeout: Duration::from_secs(2),
            overall_deadline: Duration::from_secs(120),
            connect_timeout: Duration::from_secs(10),
            advertised_rtp_port: None,
        }
    }
}

/// Where everything landed, plus the in-memory results a caller usually
/// wants right away.
#[derive(Debug, Clone)]
pub struct TestArtifacts {
    pub trace_path: PathBuf,
    pub rx_encoded_path: PathBuf,
    pub rx_raw_path: PathBuf,
    pub ref_raw_path: PathBuf,
    pub session_meta_path: PathBuf,
    pub decode_report: DecodeReport,
    pub session: SessionRecord,
}

fn resolve_control(config: &SessionConfig) -> Result<SocketAddr, ClientError> {
    let endpoint = format!("{}:{}", config.control_host, config.control_port);
    endpoint
        .to_socket_addrs()
        .map_err(|_| ClientError::BadControlAddress(endpoint.clone()))?
        .next()
        .ok_or(ClientError::BadControlAddress(endpoint))
}

/// Runs one complete test session against a server and writes the artifacts
/// into `out_dir`. The reference video is copied out of `database_dir` (the
/// same database the server streams from) so the artifact set is complete
/// and analysis can run anywhere.
pub fn run_client(
    config: &SessionConfig,
    database_dir: &Path,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<TestArtifacts, ClientError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let mut channel = ControlChannel::connect(resolve_control(config)?, options.connect_timeout)?;
    handshake(&mut channel)?;
    let rtt_samples = measure_rtt(&mut channel, options.rtt_count)?;

    // Bind before setup: the server is told the real (or proxy) port.
    let sink = CaptureSink::new();
    let receiver = start_receiver(
        ReceiveConfig {
            transport: config.transport,
            bind_port: config.rtp_port,
            multicast_group: config.multicast_group,
            idle_timeout: options.idle_timeout,
            overall_deadline: options.overall_deadline,
        },
        sink.clone(),
    )?;

    let mut effective = config.clone();
    effective.rtp_port = options.advertised_rtp_port.unwrap_or(receiver.local_port());

    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock before 1970")
        .as_secs_f64();
    let receive_started = Instant::now();

    let (frame_count, params, total_encoded_bytes) =
        match channel.request(&ClientMessage::Setup { config: effective })? {
            ServerMessage::Ok {
                frame_count,
                params,
                total_encoded_bytes,
                ..
            } => (frame_count, params, total_encoded_bytes),
            other => return Err(ClientError::BadSetupReply(format!("{other:?}"))),
        };
    if frame_count > 0 {
        receiver.set_final_timestamp(media_timestamp(
            frame_count - 1,
            params.fps_num,
            params.fps_den,
        ));
    }

    channel.send(&ClientMessage::Play)?;
    let received = receiver.join()?;
    let duration_seconds = receive_started.elapsed().as_secs_f64();

    // Best-effort goodbye; the artifacts matter more than the reply.
    if channel.send(&ClientMessage::Teardown).is_ok() {
        let _ = channel.recv::<ServerMessage>();
    }

    if received.is_empty() {
        return Err(ClientError::NoPackets);
    }

    // Reassemble. Packets that fail to parse as RTP are still in the trace;
    // the depacketizer sees only the well-formed ones.
    let packets: Vec<RtpPacket> = received
        .iter()
        .filter_map(|p| RtpPacket::parse(&p.data).ok())
        .collect();
    let rx_stream = vt_core::rtp::depacketize(&packets, &params);
    let (rx_raw, decode_report) = decode(&rx_stream, frame_count as usize)?;

    // Reference video, restamped to the session's nominal rate so offline
    // re-encoding reproduces the server's stream exactly.
    let ref_path_in = database_dir.join(config.video_file_name());
    let file = File::open(&ref_path_in).map_err(|e| ClientError::Reference {
        path: ref_path_in.clone(),
        source: Y4mError::Io(e),
    })?;
    let mut reference: RawVideo =
        read_y4m(BufReader::new(file)).map_err(|source| ClientError::Reference {
            path: ref_path_in.clone(),
            source,
        })?;
    reference.fps_num = config.fps_num;
    reference.fps_den = config.fps_den;

    // Artifacts.
    let trace_path = out_dir.join(TRACE_FILE);
    let rx_encoded_path = out_dir.join(RX_ENCODED_FILE);
    let rx_raw_path = out_dir.join(RX_RAW_FILE);
    let ref_raw_path = out_dir.join(REF_RAW_FILE);
    let session_meta_path = out_dir.join(SESSION_META_FILE);

    sink.write_trace(&trace_path)?;
    std::fs::write(&rx_encoded_path, vtes_to_vec(&rx_stream))?;
    let mut rx_file = BufWriter::new(File::create(&rx_raw_path)?);
    write_y4m(&rx_raw, &mut rx_file).map_err(y4m_io)?;
    drop(rx_file);
    let mut ref_file = BufWriter::new(File::create(&ref_raw_path)?);
    write_y4m(&reference, &mut ref_file).map_err(y4m_io)?;
    drop(ref_file);

    let seconds = f64::from(frame_count) * f64::from(config.fps_den) / f64::from(config.fps_num);
    let session = SessionRecord {
        config: config.clone(),
        started_unix,
        duration_seconds,
        frame_count,
        width: params.width as u16,
        height: params.height as u16,
        total_encoded_bytes,
        bitrate_kbps: if seconds > 0.0 {
            total_encoded_bytes as f64 * 8.0 / seconds / 1000.0
        } else {
            0.0
        },
        packets_received: received.len() as u64,
        rtt_samples,
    };
    let meta_file = File::create(&session_meta_path)?;
    serde_json::to_writer_pretty(BufWriter::new(meta_file), &session)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;

    Ok(TestArtifacts {
        trace_path,
        rx_encoded_path,
        rx_raw_path,
        ref_raw_path,
        session_meta_path,
        decode_report,
        session,
    })
}

fn y4m_io(e: Y4mError) -> ClientError {
    match e {
        Y4mError::Io(e) => ClientError::Io(e),
        other => ClientError::Io(io::Error::new(
            io::ErrorKind::InvalidData,
            other.to_string(),
        )),
    }
}
