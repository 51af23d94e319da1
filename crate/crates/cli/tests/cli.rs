//! Black-box tests of the `vt` binary: exit codes, codec utilities,
//! standalone send/recv, offline analysis, and the full run pipeline
//! against an in-process server.

use std::fs::File;
use std::net::{Ipv4Addr, SocketAddrV4, UdpSocket};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use vt_core::codec;
use vt_core::rawvideo::{write_y4m, RawVideo};
use vt_core::rtp::{packetize, StreamParams};
use vt_core::synth::{moving_video, SynthSpec};
use vt_core::trace::{synthesize_frame, write_pcap, CapturedPacket};

fn vt() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vt"))
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("vt terminated by signal")
}

fn stdout_str(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_str(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn small_video() -> RawVideo {
    moving_video(&SynthSpec {
        width: 32,
        height: 32,
        frame_count: 20,
        seed: 9,
        ..Default::default()
    })
}

fn write_clip(video: &RawVideo, path: &Path) {
    let mut file = File::create(path).unwrap();
    write_y4m(video, &mut file).unwrap();
}

#[test]
fn encode_then_decode_is_lossless_at_quant_zero() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.y4m");
    let vtes = dir.path().join("out.vtes");
    let back = dir.path().join("back.y4m");
    write_clip(&small_video(), &src);

    let params = dir.path().join("params.json");
    let encode = vt()
        .args(["encode", src.to_str().unwrap(), vtes.to_str().unwrap()])
        .args(["--gop", "5", "--quant", "0"])
        .args(["--params-out", params.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&encode), 0, "{}", stderr_str(&encode));
    let summary: serde_json::Value = serde_json::from_str(&stdout_str(&encode)).unwrap();
    assert_eq!(summary["frames"], 20);
    assert!(summary["bitrate_kbps"].as_f64().unwrap() > 0.0);

    // The sidecar gives a receiver everything needed to rebuild frames.
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    assert_eq!(sidecar["width"], 32);
    assert_eq!(sidecar["height"], 32);
    assert_eq!(sidecar["gop_size"], 5);
    assert_eq!(sidecar["quant_shift"], 0);

    let decode = vt()
        .args(["decode", vtes.to_str().unwrap(), back.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&decode), 0, "{}", stderr_str(&decode));

    // The decode report goes to stdout as JSON.
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&decode)).unwrap();
    assert_eq!(report["start_offset"], 0);
    assert_eq!(report["duplicated"], 0);
    assert_eq!(report["present"].as_array().unwrap().len(), 20);

    assert_eq!(
        std::fs::read(&src).unwrap(),
        std::fs::read(&back).unwrap(),
        "lossless round trip must reproduce the Y4M bytes"
    );
}

#[test]
fn decode_with_leading_gop_removed_reports_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let vtes = dir.path().join("damaged.vtes");
    let out = dir.path().join("out.y4m");

    let mut stream = codec::encode(&small_video(), 5, 1);
    stream.frames.retain(|f| f.frame_number >= 5);
    std::fs::write(&vtes, codec::vtes_to_vec(&stream)).unwrap();

    let decode = vt()
        .args(["decode", vtes.to_str().unwrap(), out.to_str().unwrap()])
        .args(["--expected-frames", "20"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&decode), 0, "{}", stderr_str(&decode));
    let report: serde_json::Value = serde_json::from_str(&stdout_str(&decode)).unwrap();
    assert_eq!(
        report["start_offset"], -5,
        "a lost first GOP shifts the start by its length"
    );
}

#[test]
fn bad_magic_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.vtes");
    std::fs::write(&bogus, b"MPEG without the licence fees").unwrap();
    let out = dir.path().join("out.y4m");

    let decode = vt()
        .args(["decode", bogus.to_str().unwrap(), out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&decode), 2);
    assert!(
        stderr_str(&decode).contains("magic"),
        "{}",
        stderr_str(&decode)
    );
}

#[test]
fn missing_config_exits_two_and_names_the_path() {
    let run = vt()
        .args(["run", "--config", "/no/such/vt.toml"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&run), 2);
    assert!(
        stderr_str(&run).contains("/no/such/vt.toml"),
        "{}",
        stderr_str(&run)
    );
}

#[test]
fn encode_rejects_out_of_range_quant() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.y4m");
    write_clip(&small_video(), &src);
    let encode = vt()
        .args([
            "encode",
            src.to_str().unwrap(),
            dir.path().join("x.vtes").to_str().unwrap(),
        ])
        .args(["--quant", "9"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&encode), 2);
}

#[test]
fn impair_rejects_bad_probability() {
    let impair = vt()
        .args([
            "impair",
            "--loss",
            "1.5",
            "--listen",
            "0",
            "--forward",
            "127.0.0.1:9",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&impair), 2);
}

#[test]
fn analyze_without_inputs_exits_two() {
    let analyze = vt().args(["analyze"]).output().unwrap();
    assert_eq!(exit_code(&analyze), 2);
    assert!(
        stderr_str(&analyze).contains("no analysis inputs"),
        "{}",
        stderr_str(&analyze)
    );
}

/// Builds a pcap of RTP packets the way the capture sink would record them.
fn write_rtp_trace(path: &Path, stream: &codec::EncodedStream) {
    let packets = packetize(stream, 0x1234, 1, 400);
    let src = SocketAddrV4::new(Ipv4Addr::new(127, 0, 0, 1), 40000);
    let dst = SocketAddrV4::new(Ipv4Addr::new(127, 0, 0, 1), 5004);
    let captured: Vec<CapturedPacket> = packets
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let frame = synthesize_frame(src, dst, &p.to_bytes()).unwrap();
            CapturedPacket::at_time(i as f64 * 0.01, frame)
        })
        .collect();
    let mut file = File::create(path).unwrap();
    write_pcap(&captured, &mut file).unwrap();
}

#[test]
fn trace_only_analysis_skips_video_measures_with_reasons() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run1");
    std::fs::create_dir(&run_dir).unwrap();
    let stream = codec::encode(&small_video(), 5, 1);
    write_rtp_trace(&run_dir.join("trace.pcap"), &stream);
    let out = dir.path().join("reports");

    let analyze = vt()
        .args(["analyze", run_dir.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&analyze), 0, "{}", stderr_str(&analyze));

    let report: serde_json::Value =
        serde_json::from_reader(File::open(out.join("report.json")).unwrap()).unwrap();
    let results = report["runs"][0]["results"].as_array().unwrap();

    let status_of = |name: &str| -> (&str, &serde_json::Value) {
        let entry = results.iter().find(|r| r["name"] == name).unwrap();
        (entry["status"].as_str().unwrap(), entry)
    };

    for name in [
        "interarrival",
        "jitter",
        "clock_skew",
        "bandwidth",
        "plr",
        "pld",
    ] {
        assert_eq!(
            status_of(name).0,
            "computed",
            "{name} should compute from a trace"
        );
    }
    let (status, entry) = status_of("psnr");
    assert_eq!(status, "skipped");
    assert!(entry["reason"].as_str().unwrap().contains("rx_raw"));
    let (status, entry) = status_of("latency");
    assert_eq!(status, "skipped");
    assert!(entry["reason"].as_str().unwrap().contains("rtt_samples"));
    let (status, entry) = status_of("framing_rx");
    assert_eq!(status, "skipped");
    assert!(entry["reason"].as_str().unwrap().contains("rx_encoded"));

    // Exit code 0 with skips: skips are data, not failures.
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("measure,name,kind"));
    assert!(out.join("qos_jitter.dat").is_file());
}

#[test]
fn send_and_recv_rebuild_the_stream() {
    let dir = tempfile::tempdir().unwrap();
    let vtes = dir.path().join("clip.vtes");
    let stream = codec::encode(&small_video(), 5, 0);
    std::fs::write(&vtes, codec::vtes_to_vec(&stream)).unwrap();

    // Stream parameters for the receiver, as `vt send --params-out` writes.
    let params_path = dir.path().join("params.json");
    let params = StreamParams::from(&stream);
    std::fs::write(&params_path, serde_json::to_vec_pretty(&params).unwrap()).unwrap();

    // Reserve a port, then hand it to the receiver.
    let placeholder = UdpSocket::bind("127.0.0.1:0").unwrap();
    let port = placeholder.local_addr().unwrap().port();
    drop(placeholder);

    let trace_path = dir.path().join("trace.pcap");
    let rx_path = dir.path().join("rx.vtes");
    let recv = vt()
        .args(["recv", "--port", &port.to_string()])
        .args(["--trace", trace_path.to_str().unwrap()])
        .args(["--output", rx_path.to_str().unwrap()])
        .args(["--params", params_path.to_str().unwrap()])
        .args([
            "--idle-timeout",
            "1.0",
            "--deadline",
            "30",
            "--frames",
            "20",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // Give the receiver a moment to bind.
    std::thread::sleep(Duration::from_millis(300));

    let send = vt()
        .args(["send", vtes.to_str().unwrap()])
        .args(["--dest", &format!("127.0.0.1:{port}")])
        .args(["--pacing", "0"])
        .output()
        .unwrap();
    assert_eq!(exit_code(&send), 0, "{}", stderr_str(&send));
    let send_summary: serde_json::Value = serde_json::from_str(&stdout_str(&send)).unwrap();
    assert!(send_summary["packets_sent"].as_u64().unwrap() > 0);

    let recv_out = recv.wait_with_output().unwrap();
    assert_eq!(exit_code(&recv_out), 0, "{}", stderr_str(&recv_out));
    let recv_summary: serde_json::Value = serde_json::from_str(&stdout_str(&recv_out)).unwrap();
    assert_eq!(
        recv_summary["packets_received"].as_u64().unwrap(),
        send_summary["packets_sent"].as_u64().unwrap()
    );

    assert!(trace_path.is_file());
    assert_eq!(
        std::fs::read(&rx_path).unwrap(),
        std::fs::read(&vtes).unwrap(),
        "lossless loopback must rebuild the identical stream"
    );
}

fn golden_g1070_toml() -> &'static str {
    "[g1070]\nv1 = 1.0\nv2 = 0.02\nv3 = 4.0\nv4 = 100.0\nv5 = 1.0\nv6 = 2.0\nv7 = 0.001\n\
     v8 = 10.0\nv9 = 200.0\nv10 = 0.5\nv11 = 1.0\nv12 = 0.5\n"
}

/// Full pipeline: in-process server, `vt run`, then re-analysis of the same
/// artifacts and schema validation of both reports.
#[test]
fn run_produces_artifacts_reports_and_schema_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    std::fs::create_dir(&db).unwrap();
    write_clip(&small_video(), &db.join("clip.y4m"));

    let server = vt_net::server::serve(&db, 0).unwrap();
    let out = dir.path().join("out");
    let config_path = dir.path().join("vt.toml");
    std::fs::write(
        &config_path,
        format!(
            "seed = 1\ndatabase_dir = {db:?}\noutput_dir = {out:?}\n\n[session]\n\
             video_id = \"clip\"\ngop_size = 5\nquant_shift = 0\nfps_num = 25\nfps_den = 1\n\
             transport = \"udp_unicast\"\nrtp_port = 0\ncontrol_host = \"127.0.0.1\"\n\
             control_port = {port}\npacing = 0.0\n\n{g1070}",
            db = db.display().to_string(),
            out = out.display().to_string(),
            port = server.control_port(),
            g1070 = golden_g1070_toml(),
        ),
    )
    .unwrap();

    let run = vt()
        .args(["run", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&run), 0, "{}", stderr_str(&run));
    let stdout = stdout_str(&run);
    assert!(stdout.contains("session complete"), "{stdout}");
    assert!(stdout.contains("report:"), "{stdout}");

    for artifact in [
        "trace.pcap",
        "rx.vtes",
        "rx.y4m",
        "ref.y4m",
        "session_meta.json",
    ] {
        assert!(out.join(artifact).is_file(), "missing artifact {artifact}");
    }

    let schema: serde_json::Value = serde_json::from_reader(
        File::open(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../docs/report.schema.json"
        ))
        .unwrap(),
    )
    .unwrap();
    let report: serde_json::Value =
        serde_json::from_reader(File::open(out.join("report.json")).unwrap()).unwrap();
    vt_cli::schema::validate(&schema, &report)
        .unwrap_or_else(|errors| panic!("report.json violates its schema: {errors:#?}"));

    // Lossless run with full artifacts and configured coefficients: every
    // built-in measure computes.
    let results = report["runs"][0]["results"].as_array().unwrap();
    assert_eq!(results.len(), 18);
    for entry in results {
        assert_eq!(
            entry["status"], "computed",
            "measure {} did not compute: {entry}",
            entry["name"]
        );
    }
    let plr = results.iter().find(|r| r["name"] == "plr").unwrap();
    assert_eq!(
        plr["data"].as_f64().unwrap(),
        0.0,
        "lossless run has zero loss"
    );
    let div = results.iter().find(|r| r["name"] == "div").unwrap();
    assert_eq!(
        div["data"].as_f64().unwrap(),
        0.0,
        "lossless run has zero distortion"
    );

    // Re-analyzing the same artifacts twice (two labels) produces the
    // multi-run layout with the stacked MOS distribution.
    let run_a = dir.path().join("run_a");
    let run_b = dir.path().join("run_b");
    copy_dir(&out, &run_a);
    copy_dir(&out, &run_b);
    let multi_out = dir.path().join("multi");
    let analyze = vt()
        .args(["analyze", "--config", config_path.to_str().unwrap()])
        .args([run_a.to_str().unwrap(), run_b.to_str().unwrap()])
        .args(["--out", multi_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&analyze), 0, "{}", stderr_str(&analyze));

    let multi_report: serde_json::Value =
        serde_json::from_reader(File::open(multi_out.join("report.json")).unwrap()).unwrap();
    vt_cli::schema::validate(&schema, &multi_report)
        .unwrap_or_else(|errors| panic!("multi-run report violates schema: {errors:#?}"));
    assert_eq!(multi_report["runs"].as_array().unwrap().len(), 2);
    assert!(multi_out.join("run_a/report.csv").is_file());
    assert!(multi_out.join("run_b/report.csv").is_file());
    let stack = std::fs::read_to_string(multi_out.join("mos_stack.dat")).unwrap();
    assert!(
        stack.lines().count() >= 3,
        "header plus one row per run: {stack}"
    );
    assert!(stack.contains("\"run_a\""));

    server.stop();
}

/// The config-driven impaired run documented in the README: an `impair`
/// subprocess between server and client, wired in with `rtp_port` (the
/// proxy's forward target) and `advertised_rtp_port` (its listen port).
#[test]
fn run_through_impair_subprocess_reports_loss() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    std::fs::create_dir(&db).unwrap();
    write_clip(
        &moving_video(&SynthSpec {
            width: 64,
            height: 64,
            frame_count: 200,
            seed: 4,
            ..Default::default()
        }),
        &db.join("clip.y4m"),
    );
    let server = vt_net::server::serve(&db, 0).unwrap();

    let reserve = |addr: &str| {
        let socket = UdpSocket::bind(addr).unwrap();
        let port = socket.local_addr().unwrap().port();
        drop(socket);
        port
    };
    let proxy_port = reserve("127.0.0.1:0");
    let client_port = reserve("127.0.0.1:0");

    let mut impair = vt()
        .args(["impair", "--loss", "0.1", "--seed", "3"])
        .args(["--listen", &proxy_port.to_string()])
        .args(["--forward", &format!("127.0.0.1:{client_port}")])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    std::thread::sleep(Duration::from_millis(300));

    let out = dir.path().join("out");
    let config_path = dir.path().join("vt.toml");
    std::fs::write(
        &config_path,
        format!(
            "seed = 3\ndatabase_dir = {db:?}\noutput_dir = {out:?}\n\n[session]\n\
             video_id = \"clip\"\ngop_size = 5\nquant_shift = 0\nrtp_port = {client_port}\n\
             advertised_rtp_port = {proxy_port}\ncontrol_port = {control}\npacing = 0.0\n",
            db = db.display().to_string(),
            out = out.display().to_string(),
            control = server.control_port(),
        ),
    )
    .unwrap();

    let run = vt()
        .args(["run", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    impair.kill().ok();
    impair.wait().ok();
    server.stop();
    assert_eq!(exit_code(&run), 0, "{}", stderr_str(&run));

    let report: serde_json::Value =
        serde_json::from_reader(File::open(out.join("report.json")).unwrap()).unwrap();
    let results = report["runs"][0]["results"].as_array().unwrap();
    let plr = results.iter().find(|r| r["name"] == "plr").unwrap();
    assert_eq!(plr["status"], "computed");
    assert!(
        plr["data"].as_f64().unwrap() > 0.0,
        "10% proxy loss must show up in the measured loss rate"
    );
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), to.join(entry.file_name())).unwrap();
        }
    }
}

/// CSV/JSON cross-format agreement on real data, to the bit.
#[test]
fn csv_and_json_report_identical_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run1");
    std::fs::create_dir(&run_dir).unwrap();
    let stream = codec::encode(&small_video(), 5, 1);
    write_rtp_trace(&run_dir.join("trace.pcap"), &stream);
    std::fs::write(&run_dir.join("rx.vtes"), codec::vtes_to_vec(&stream)).unwrap();
    write_clip(&small_video(), &run_dir.join("ref.y4m"));
    let out = dir.path().join("reports");

    let analyze = vt()
        .args(["analyze", run_dir.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&analyze), 0, "{}", stderr_str(&analyze));

    let report: serde_json::Value =
        serde_json::from_reader(File::open(out.join("report.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();

    // Index every CSV row by (name, kind, x).
    let mut csv_values: std::collections::HashMap<(String, String, String), f64> =
        std::collections::HashMap::new();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.splitn(5, ',').collect();
        csv_values.insert(
            (
                fields[1].to_owned(),
                fields[2].to_owned(),
                fields[3].to_owned(),
            ),
            fields[4].parse().unwrap(),
        );
    }
    assert!(!csv_values.is_empty());

    let mut checked = 0usize;
    for entry in report["runs"][0]["results"].as_array().unwrap() {
        if entry["status"] != "computed" {
            continue;
        }
        let name = entry["name"].as_str().unwrap().to_owned();
        match entry["kind"].as_str().unwrap() {
            "value" => {
                let json_y = entry["data"].as_f64().unwrap();
                let csv_y = csv_values[&(name, "value".to_owned(), String::new())];
                assert!((json_y - csv_y).abs() <= 1e-12, "value mismatch");
                checked += 1;
            }
            "series" | "histogram" => {
                let kind = entry["kind"].as_str().unwrap().to_owned();
                for point in entry["data"].as_array().unwrap() {
                    let x = point[0].as_f64().unwrap();
                    let json_y = point[1].as_f64().unwrap();
                    let key = (name.clone(), kind.clone(), format!("{x}"));
                    let csv_y = csv_values[&key];
                    assert!(
                        (json_y - csv_y).abs() <= 1e-12,
                        "series mismatch for {key:?}: {json_y} vs {csv_y}"
                    );
                    checked += 1;
                }
            }
            other => panic!("unexpected kind {other}"),
        }
    }
    assert!(
        checked > 50,
        "expected plenty of cross-checked numbers, got {checked}"
    );
}
