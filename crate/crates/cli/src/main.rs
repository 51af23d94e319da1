//! `vt` — the command-line front end of the video test harness.
//!
//! Subcommands cover the whole pipeline: `serve` a video database, `run` a
//! full client session (stream, capture, decode, analyze), plus standalone
//! `send` / `recv` / `impair` building blocks, `encode` / `decode` codec
//! utilities, and offline `analyze` over recorded artifacts.
//!
//! Exit codes: 0 = requested pipeline completed (skipped measures are data,
//! not errors); 2 = invocation problems (bad flags, missing or invalid
//! config, malformed input files); 1 = runtime failures.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::thread;
use std::time::Duration;

use clap::{ArgAction, Parser, Subcommand};
use log::LevelFilter;

use vt_cli::config::{ConfigError, ToolConfig};
use vt_cli::context::{load_run, ContextError, RunInputs};
use vt_cli::report::{write_reports, Provenance, Report, RunReport, ToolInfo, SCHEMA_VERSION};
use vt_core::codec::{self, CodecError, EncodedStream};
use vt_core::rawvideo::{self, RawVideo, Y4mError};
use vt_core::rtp::{self, RtpPacket, StreamParams, DEFAULT_MAX_PAYLOAD};
use vt_net::capture::CaptureSink;
use vt_net::client::{run_client, RunOptions};
use vt_net::impair::{ImpairError, ImpairProxy};
use vt_net::server::{serve, INITIAL_SEQ, SERVER_SSRC};
use vt_net::session::Transport;
use vt_net::transport::{send_stream, start_receiver, ReceiveConfig};

#[derive(Parser)]
#[command(
    name = "vt",
    version,
    about = "Video-over-IP test harness: stream, impair, capture, and grade"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a directory of Y4M videos to clients until interrupted.
    Serve {
        /// Tool configuration (supplies defaults for the flags below).
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Video database directory (overrides the config).
        #[arg(long)]
        database: Option<PathBuf>,
        /// Control port to listen on (overrides the config; 0 = ephemeral).
        #[arg(long)]
        port: Option<u16>,
    },
    /// Run a full client session against a server, then analyze it.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Artifact/report directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send an encoded stream as RTP to a destination (no control channel).
    Send {
        /// Encoded stream to transmit.
        input: PathBuf,
        /// Destination address, e.g. 127.0.0.1:5004 or 239.1.2.3:5004.
        #[arg(long)]
        dest: SocketAddr,
        /// udp_unicast (udp), udp_multicast (multicast), or tcp.
        #[arg(long, default_value = "udp")]
        transport: Transport,
        /// Send-rate scale: 1.0 = real time, 0 = as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        pacing: f64,
        #[arg(long, default_value_t = SERVER_SSRC)]
        ssrc: u32,
        #[arg(long, default_value_t = INITIAL_SEQ)]
        initial_seq: u16,
        /// Largest RTP payload per packet, bytes.
        #[arg(long, default_value_t = DEFAULT_MAX_PAYLOAD)]
        max_payload: usize,
        /// Also write the stream parameters a receiver needs, as JSON.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Receive RTP packets, capture them, and optionally rebuild the stream.
    Recv {
        /// Port to bind (0 = ephemeral; the bound port is printed).
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// udp_unicast (udp), udp_multicast (multicast), or tcp.
        #[arg(long, default_value = "udp")]
        transport: Transport,
        /// Multicast group to join (required for udp_multicast).
        #[arg(long)]
        group: Option<Ipv4Addr>,
        /// Write the packet capture here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Rebuild the encoded stream here (requires --params).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Stream parameters JSON produced by `vt send --params-out`.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Give up after this many seconds without a packet.
        #[arg(long, default_value_t = 2.0)]
        idle_timeout: f64,
        /// Hard cap on the whole receive phase, seconds.
        #[arg(long, default_value_t = 120.0)]
        deadline: f64,
        /// Total frames expected (with --params, ends the wait early).
        #[arg(long)]
        frames: Option<u32>,
    },
    /// Forward UDP datagrams with seeded random loss until interrupted.
    Impair {
        /// Drop probability in [0, 1].
        #[arg(long)]
        loss: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Port or address to listen on (a bare port binds 0.0.0.0).
        #[arg(long)]
        listen: String,
        /// Where surviving datagrams go, e.g. 127.0.0.1:6004.
        #[arg(long)]
        forward: SocketAddr,
    },
    /// Encode a Y4M video into the toy GOP stream format.
    Encode {
        input: PathBuf,
        output: PathBuf,
        /// Frames per group-of-pictures (first of each is an I-frame).
        #[arg(long, default_value_t = 15)]
        gop: u32,
        /// Quantization shift, 0..=7 (0 = lossless).
        #[arg(long, default_value_t = 0)]
        quant: u8,
        /// Also write the stream parameters a receiver needs, as JSON.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Decode an encoded stream to Y4M, sustaining the nominal frame rate.
    Decode {
        input: PathBuf,
        output: PathBuf,
        /// Frames in the original video; defaults to the last frame number
        /// in the stream plus one (exact when the tail arrived intact).
        #[arg(long)]
        expected_frames: Option<usize>,
    },
    /// Compute the metric set over recorded artifacts and write reports.
    Analyze {
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Report directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run directories holding artifacts by their standard names
        /// (trace.pcap, rx.vtes, rx.y4m, ref.y4m, session_meta.json).
        runs: Vec<PathBuf>,
        /// Packet capture file (alternative to run directories).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Received encoded stream.
        #[arg(long)]
        rx_vtes: Option<PathBuf>,
        /// Received (decoded, sustained) video.
        #[arg(long)]
        rx_y4m: Option<PathBuf>,
        /// Pristine reference video.
        #[arg(long)]
        ref_y4m: Option<PathBuf>,
        /// Session record JSON from a client run.
        #[arg(long)]
        session_meta: Option<PathBuf>,
    },
}

/// CLI failure split by who got it wrong: `Usage` (exit 2) for invocation,
/// configuration, and input-format problems; `Runtime` (exit 1) otherwise.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ContextError> for CliError {
    fn from(e: ContextError) -> Self {
        if e.is_format() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn usage(message: impl std::fmt::Display) -> CliError {
    CliError::Usage(message.to_string())
}

fn runtime(message: impl std::fmt::Display) -> CliError {
    CliError::Runtime(message.to_string())
}

// ---------------------------------------------------------------------------
// Logging: a plain stderr logger, filtered by -v count.

struct StderrLogger;

static LOGGER: StderrLogger = StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, _: &log::Metadata<'_>) -> bool {
        true
    }

    fn log(&self, record: &log::Record<'_>) {
        eprintln!(
            "[{:<5}] {}: {}",
            record.level(),
            record.target(),
            record.args()
        );
    }

    fn flush(&self) {}
}

fn init_logger(verbosity: u8) {
    let level = match verbosity {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        2 => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(level);
    }
}

// ---------------------------------------------------------------------------
// File helpers with exit-code classification.

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))
}

fn read_y4m_file(path: &Path) -> Result<RawVideo, CliError> {
    let mut reader = open_input(path)?;
    rawvideo::read_y4m(&mut reader).map_err(|e| match e {
        Y4mError::Io(io) => runtime(format!("{}: {io}", path.display())),
        other => usage(format!("{}: {other}", path.display())),
    })
}

fn write_y4m_file(video: &RawVideo, path: &Path) -> Result<(), CliError> {
    let mut writer = create_output(path)?;
    rawvideo::write_y4m(video, &mut writer)
        .map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn read_vtes_file(path: &Path) -> Result<EncodedStream, CliError> {
    let mut reader = open_input(path)?;
    codec::read_vtes(&mut reader).map_err(|e| match e {
        CodecError::Io(io) => runtime(format!("{}: {io}", path.display())),
        other => usage(format!("{}: {other}", path.display())),
    })
}

fn write_vtes_file(stream: &EncodedStream, path: &Path) -> Result<(), CliError> {
    let mut writer = create_output(path)?;
    codec::write_vtes(stream, &mut writer)
        .map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ToolConfig, CliError> {
    match path {
        Some(p) => Ok(ToolConfig::load(p)?),
        None => Ok(ToolConfig::default()),
    }
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logger(cli.verbose);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("vt: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("vt: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Serve {
            config,
            database,
            port,
        } => cmd_serve(config, database, port),
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Send {
            input,
            dest,
            transport,
            pacing,
            ssrc,
            initial_seq,
            max_payload,
            params_out,
        } => cmd_send(
            &input,
            dest,
            transport,
            pacing,
            ssrc,
            initial_seq,
            max_payload,
            params_out,
        ),
        Command::Recv {
            port,
            transport,
            group,
            trace,
            output,
            params,
            idle_timeout,
            deadline,
            frames,
        } => cmd_recv(
            port,
            transport,
            group,
            trace,
            output,
            params,
            idle_timeout,
            deadline,
            frames,
        ),
        Command::Impair {
            loss,
            seed,
            listen,
            forward,
        } => cmd_impair(loss, seed, &listen, forward),
        Command::Encode {
            input,
            output,
            gop,
            quant,
            params_out,
        } => cmd_encode(&input, &output, gop, quant, params_out),
        Command::Decode {
            input,
            output,
            expected_frames,
        } => cmd_decode(&input, &output, expected_frames),
        Command::Analyze {
            config,
            out,
            runs,
            trace,
            rx_vtes,
            rx_y4m,
            ref_y4m,
            session_meta,
        } => cmd_analyze(
            config,
            out,
            runs,
            trace,
            rx_vtes,
            rx_y4m,
            ref_y4m,
            session_meta,
        ),
    }
}

fn cmd_serve(
    config_path: Option<PathBuf>,
    database: Option<PathBuf>,
    port: Option<u16>,
) -> Result<(), CliError> {
    let config = load_config(config_path.as_deref())?;
    let database = database
        .or_else(|| config.database_dir.clone())
        .ok_or_else(|| usage("no video database: pass --database or set database_dir"))?;
    if !database.is_dir() {
        return Err(usage(format!(
            "database directory {} does not exist",
            database.display()
        )));
    }
    let port = port.unwrap_or(config.session.control_port);
    let server = serve(&database, port).map_err(runtime)?;
    println!(
        "vt server: control on port {}, serving {}",
        server.control_port(),
        database.display()
    );
    // Runs until the process is interrupted.
    loop {
        thread::sleep(Duration::from_secs(3600));
    }
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let config = ToolConfig::load(config_path)?;
    let session = config.session.to_session_config()?;
    let database = config.database_dir()?.to_owned();
    let out_dir = out.unwrap_or_else(|| config.output_dir.clone());

    let options = RunOptions {
        advertised_rtp_port: config.session.advertised_rtp_port,
        ..Default::default()
    };
    let artifacts = run_client(&session, &database, &out_dir, &options).map_err(runtime)?;
    println!(
        "session complete: {} frames over {}, {} packets received in {:.3}s",
        artifacts.session.frame_count,
        session.transport,
        artifacts.session.packets_received,
        artifacts.session.duration_seconds
    );
    println!(
        "decode: {} present, {} concealed, {} GOP(s) dropped, start offset {}",
        artifacts
            .decode_report
            .present
            .iter()
            .filter(|&&p| p)
            .count(),
        artifacts.decode_report.duplicated,
        artifacts.decode_report.dropped_gops.len(),
        artifacts.decode_report.start_offset
    );

    analyze_runs(&config, vec![RunInputs::from_dir(&out_dir)], &out_dir)
}

#[allow(clippy::too_many_arguments)]
fn cmd_send(
    input: &Path,
    dest: SocketAddr,
    transport: Transport,
    pacing: f64,
    ssrc: u32,
    initial_seq: u16,
    max_payload: usize,
    params_out: Option<PathBuf>,
) -> Result<(), CliError> {
    if max_payload == 0 {
        return Err(usage("--max-payload must be at least 1"));
    }
    if !pacing.is_finite() || pacing < 0.0 {
        return Err(usage("--pacing must be finite and nonnegative"));
    }
    let stream = read_vtes_file(input)?;
    if let Some(path) = params_out {
        write_params_file(&stream, &path)?;
    }
    let packets = rtp::packetize(&stream, ssrc, initial_seq, max_payload);
    let report = send_stream(
        &packets,
        transport,
        dest,
        (stream.fps_num, stream.fps_den),
        pacing,
    )
    .map_err(runtime)?;
    println!(
        "{}",
        serde_json::json!({
            "packets_sent": report.packets_sent,
            "bytes_sent": report.bytes_sent,
            "duration_seconds": report.duration_seconds,
        })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_recv(
    port: u16,
    transport: Transport,
    group: Option<Ipv4Addr>,
    trace: Option<PathBuf>,
    output: Option<PathBuf>,
    params: Option<PathBuf>,
    idle_timeout: f64,
    deadline: f64,
    frames: Option<u32>,
) -> Result<(), CliError> {
    if output.is_some() && params.is_none() {
        return Err(usage("--output needs --params to interpret the stream"));
    }
    if trace.is_none() && output.is_none() {
        return Err(usage("nothing to do: pass --trace and/or --output"));
    }
    let stream_params: Option<StreamParams> = match &params {
        Some(path) => {
            let reader = open_input(path)?;
            Some(
                serde_json::from_reader(reader)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };

    let receive_config = ReceiveConfig {
        transport,
        bind_port: port,
        multicast_group: group,
        idle_timeout: Duration::from_secs_f64(idle_timeout),
        overall_deadline: Duration::from_secs_f64(deadline),
    };
    let sink = CaptureSink::new();
    let receiver = start_receiver(receive_config, sink.clone()).map_err(runtime)?;
    eprintln!("vt recv: listening on port {}", receiver.local_port());
    if let (Some(p), Some(n)) = (&stream_params, frames) {
        if n > 0 {
            receiver.set_final_timestamp(rtp::media_timestamp(n - 1, p.fps_num, p.fps_den));
        }
    }
    let received = receiver.join().map_err(runtime)?;

    if let Some(path) = &trace {
        sink.write_trace(path)
            .map_err(|e| runtime(format!("writing {}: {e}", path.display())))?;
    }
    let mut rebuilt_frames = None;
    if let (Some(path), Some(p)) = (&output, &stream_params) {
        let parsed: Vec<RtpPacket> = received
            .iter()
            .filter_map(|r| RtpPacket::parse(&r.data).ok())
            .collect();
        let stream = rtp::depacketize(&parsed, p);
        rebuilt_frames = Some(stream.frames.len());
        write_vtes_file(&stream, path)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "packets_received": received.len(),
            "trace": trace.as_deref().map(Path::display).map(|d| d.to_string()),
            "output": output.as_deref().map(Path::display).map(|d| d.to_string()),
            "frames_rebuilt": rebuilt_frames,
        })
    );
    Ok(())
}

fn cmd_impair(loss: f64, seed: u64, listen: &str, forward: SocketAddr) -> Result<(), CliError> {
    let listen_addr: SocketAddr = if listen.contains(':') {
        listen
            .parse()
            .map_err(|e| usage(format!("--listen {listen}: {e}")))?
    } else {
        let port: u16 = listen
            .parse()
            .map_err(|e| usage(format!("--listen {listen}: {e}")))?;
        SocketAddr::new(IpAddr::V4(Ipv4Addr::UNSPECIFIED), port)
    };
    let proxy = ImpairProxy::spawn(listen_addr, forward, loss, seed).map_err(|e| match e {
        ImpairError::BadLossProbability(_) => usage(e),
        other => runtime(other),
    })?;
    println!(
        "vt impair: {} -> {} with loss probability {} (seed {})",
        proxy.listen_addr(),
        forward,
        loss,
        seed
    );
    // Runs until the process is interrupted.
    loop {
        thread::sleep(Duration::from_secs(10));
        let stats = proxy.stats();
        log::info!(
            "impair: {} received, {} forwarded, {} dropped",
            stats.received.load(Ordering::Relaxed),
            stats.forwarded.load(Ordering::Relaxed),
            stats.dropped.load(Ordering::Relaxed)
        );
    }
}

fn write_params_file(stream: &EncodedStream, path: &Path) -> Result<(), CliError> {
    let mut writer = create_output(path)?;
    serde_json::to_writer_pretty(&mut writer, &StreamParams::from(stream)).map_err(runtime)?;
    use std::io::Write as _;
    writer
        .write_all(b"\n")
        .and_then(|()| writer.flush())
        .map_err(runtime)?;
    Ok(())
}

fn cmd_encode(
    input: &Path,
    output: &Path,
    gop: u32,
    quant: u8,
    params_out: Option<PathBuf>,
) -> Result<(), CliError> {
    if gop == 0 {
        return Err(usage("--gop must be at least 1"));
    }
    if quant > 7 {
        return Err(usage("--quant must be between 0 and 7"));
    }
    let video = read_y4m_file(input)?;
    if video.frames.is_empty() {
        return Err(usage(format!("{}: video has no frames", input.display())));
    }
    let stream = codec::encode(&video, gop, quant);
    write_vtes_file(&stream, output)?;
    if let Some(path) = params_out {
        write_params_file(&stream, &path)?;
    }
    println!(
        "{}",
        serde_json::json!({
            "frames": stream.frames.len(),
            "coded_bytes": stream.coded_len(),
            "bitrate_kbps": stream.bitrate_kbps(video.frames.len()),
        })
    );
    Ok(())
}

fn cmd_decode(input: &Path, output: &Path, expected_frames: Option<usize>) -> Result<(), CliError> {
    let stream = read_vtes_file(input)?;
    let expected = expected_frames.unwrap_or_else(|| {
        stream
            .frames
            .last()
            .map(|f| f.frame_number as usize + 1)
            .unwrap_or(0)
    });
    let (video, report) =
        codec::decode(&stream, expected).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    write_y4m_file(&video, output)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(runtime)?
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_analyze(
    config_path: Option<PathBuf>,
    out: Option<PathBuf>,
    run_dirs: Vec<PathBuf>,
    trace: Option<PathBuf>,
    rx_vtes: Option<PathBuf>,
    rx_y4m: Option<PathBuf>,
    ref_y4m: Option<PathBuf>,
    session_meta: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = load_config(config_path.as_deref())?;

    let explicit = RunInputs {
        label: "run".to_owned(),
        trace,
        rx_encoded: rx_vtes,
        rx_raw: rx_y4m,
        ref_raw: ref_y4m,
        session_meta,
    };
    let mut inputs = Vec::new();
    if !run_dirs.is_empty() && !explicit.is_empty() {
        return Err(usage(
            "pass run directories or explicit artifact files, not both",
        ));
    }
    if run_dirs.is_empty() && explicit.is_empty() {
        return Err(usage(
            "no analysis inputs: pass run directories or artifact files (--trace, --rx-vtes, ...)",
        ));
    }
    if run_dirs.is_empty() {
        for path in [
            &explicit.trace,
            &explicit.rx_encoded,
            &explicit.rx_raw,
            &explicit.ref_raw,
            &explicit.session_meta,
        ]
        .into_iter()
        .flatten()
        {
            if !path.is_file() {
                return Err(usage(format!("{} does not exist", path.display())));
            }
        }
        inputs.push(explicit);
    } else {
        for dir in &run_dirs {
            let run = RunInputs::from_dir(dir);
            if run.is_empty() {
                return Err(usage(format!(
                    "{} holds none of the expected artifacts (trace.pcap, rx.vtes, rx.y4m, \
                     ref.y4m, session_meta.json)",
                    dir.display()
                )));
            }
            inputs.push(run);
        }
        // Labels name report subdirectories; disambiguate duplicates.
        let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
        for input in &mut inputs {
            let n = seen.entry(input.label.clone()).or_insert(0);
            *n += 1;
            if *n > 1 {
                input.label = format!("{}-{n}", input.label);
            }
        }
    }

    let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
    analyze_runs(&config, inputs, &out_dir)
}

/// Shared analysis tail: load contexts, run the registry, emit reports.
fn analyze_runs(
    config: &ToolConfig,
    inputs: Vec<RunInputs>,
    out_dir: &Path,
) -> Result<(), CliError> {
    let registry = vt_core::metrics::build_registry(&config.analysis_params());
    let selected: Vec<String> = match &config.analysis.measures {
        Some(names) => names.clone(),
        None => registry
            .all_names()
            .iter()
            .map(|s| (*s).to_owned())
            .collect(),
    };

    let mut runs = Vec::new();
    for input in &inputs {
        let loaded = load_run(input, &config.session)?;
        for note in &loaded.notes {
            log::info!("{}: {note}", loaded.label);
        }
        let results = registry.run(&selected, &loaded.context);
        runs.push(RunReport {
            label: loaded.label,
            notes: loaded.notes,
            results,
        });
    }

    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo::default(),
        provenance: Provenance::from_config(config, selected),
        runs,
    };
    let written = write_reports(out_dir, &report).map_err(runtime)?;

    for run in &report.runs {
        let computed = run
            .results
            .iter()
            .filter(|o| o.as_computed().is_some())
            .count();
        let skipped = run
            .results
            .iter()
            .filter(|o| matches!(o, vt_core::metrics::MeasureOutcome::Skipped { .. }))
            .count();
        let failed = run
            .results
            .iter()
            .filter(|o| matches!(o, vt_core::metrics::MeasureOutcome::Failed { .. }))
            .count();
        println!(
            "analyzed {}: {computed} measure(s) computed, {skipped} skipped, {failed} failed",
            run.label
        );
    }
    println!("report: {}", written.json.display());
    Ok(())
}
