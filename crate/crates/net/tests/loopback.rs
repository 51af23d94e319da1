//! End-to-end harness tests over loopback sockets: concurrent sessions,
//! transport equivalence, deterministic impairment, and RTT probing
//! through a controlled-delay fixture.

use std::fs::File;
use std::io::{Read, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::Path;
use std::sync::atomic::Ordering;
use std::thread;
use std::time::Duration;

use vt_core::rawvideo::write_y4m;
use vt_core::synth::{moving_video, SynthSpec};
use vt_core::trace::{extract_rtp_records, parse_udp_frame, read_pcap};

use vt_net::client::{run_client, RunOptions};
use vt_net::control::{handshake, measure_rtt, ControlChannel};
use vt_net::impair::ImpairProxy;
use vt_net::server::serve;
use vt_net::session::{SessionConfig, Transport};

fn write_clip(dir: &Path, name: &str, spec: &SynthSpec) {
    let video = moving_video(spec);
    let mut file = File::create(dir.join(format!("{name}.y4m"))).unwrap();
    write_y4m(&video, &mut file).unwrap();
}

fn make_database() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_clip(
        dir.path(),
        "clip_a",
        &SynthSpec {
            width: 32,
            height: 32,
            frame_count: 30,
            seed: 1,
            ..Default::default()
        },
    );
    write_clip(
        dir.path(),
        "clip_b",
        &SynthSpec {
            width: 48,
            height: 32,
            frame_count: 45,
            seed: 2,
            ..Default::default()
        },
    );
    // A heavier clip so percentage-loss assertions have enough packets to
    // stay far from their boundaries.
    write_clip(
        dir.path(),
        "clip_c",
        &SynthSpec {
            width: 64,
            height: 64,
            frame_count: 300,
            seed: 3,
            ..Default::default()
        },
    );
    dir
}

fn base_config(video: &str, control_port: u16) -> SessionConfig {
    SessionConfig {
        video_id: video.to_owned(),
        gop_size: 5,
        quant_shift: 1,
        fps_num: 25,
        fps_den: 1,
        transport: Transport::UdpUnicast,
        rtp_port: 0,
        control_host: "127.0.0.1".to_owned(),
        control_port,
        multicast_group: None,
        pacing: 0.0,
    }
}

#[test]
fn two_concurrent_clients_complete() {
    let db = make_database();
    let server = serve(db.path(), 0).unwrap();
    let port = server.control_port();

    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();

    let db_path_a = db.path().to_path_buf();
    let out_path_a = out_a.path().to_path_buf();
    let client_a = thread::spawn(move || {
        let cfg = base_config("clip_a", port);
        run_client(&cfg, &db_path_a, &out_path_a, &RunOptions::default()).unwrap()
    });

    let db_path_b = db.path().to_path_buf();
    let out_path_b = out_b.path().to_path_buf();
    let client_b = thread::spawn(move || {
        let mut cfg = base_config("clip_b", port);
        cfg.gop_size = 9;
        cfg.quant_shift = 3;
        cfg.transport = Transport::Tcp;
        run_client(&cfg, &db_path_b, &out_path_b, &RunOptions::default()).unwrap()
    });

    let artifacts_a = client_a.join().unwrap();
    let artifacts_b = client_b.join().unwrap();

    for artifacts in [&artifacts_a, &artifacts_b] {
        assert_eq!(artifacts.decode_report.start_offset, 0);
        assert_eq!(artifacts.decode_report.duplicated, 0);
        for path in [
            &artifacts.trace_path,
            &artifacts.rx_encoded_path,
            &artifacts.rx_raw_path,
            &artifacts.ref_raw_path,
        ] {
            assert!(path.exists(), "missing artifact {path:?}");
        }
    }
    assert_eq!(artifacts_a.session.frame_count, 30);
    assert_eq!(artifacts_b.session.frame_count, 45);
    server.stop();
}

#[test]
fn udp_and_tcp_transport_yield_identical_streams() {
    let db = make_database();
    let server = serve(db.path(), 0).unwrap();
    let port = server.control_port();

    let mut streams = Vec::new();
    for transport in [Transport::UdpUnicast, Transport::Tcp] {
        let out = tempfile::tempdir().unwrap();
        let mut cfg = base_config("clip_a", port);
        cfg.transport = transport;
        let artifacts = run_client(&cfg, db.path(), out.path(), &RunOptions::default()).unwrap();
        streams.push(std::fs::read(&artifacts.rx_encoded_path).unwrap());
    }
    assert_eq!(
        streams[0], streams[1],
        "transport must not change the reassembled stream"
    );
    server.stop();
}

#[test]
fn multicast_session_end_to_end() {
    let db = make_database();
    let server = serve(db.path(), 0).unwrap();
    let out = tempfile::tempdir().unwrap();

    let mut cfg = base_config("clip_a", server.control_port());
    cfg.transport = Transport::UdpMulticast;
    cfg.multicast_group = Some(Ipv4Addr::new(239, 77, 12, 9));
    let artifacts = run_client(&cfg, db.path(), out.path(), &RunOptions::default()).unwrap();
    assert_eq!(artifacts.decode_report.duplicated, 0);
    assert_eq!(artifacts.decode_report.start_offset, 0);

    // The capture records the group as the destination.
    let bytes = std::fs::read(&artifacts.trace_path).unwrap();
    let packets = read_pcap(&mut bytes.as_slice()).unwrap();
    assert!(!packets.is_empty());
    let parsed = parse_udp_frame(&packets[0].data).unwrap();
    assert_eq!(*parsed.dst.ip(), Ipv4Addr::new(239, 77, 12, 9));
    server.stop();
}

/// Runs `clip_c` through an impairment proxy and returns the received
/// stream bytes, the raw trace bytes, and the proxy's counters
/// (received, forwarded, dropped).
fn impaired_bytes(
    db: &Path,
    control_port: u16,
    seed: u64,
    loss_p: f64,
) -> (Vec<u8>, Vec<u8>, (u64, u64, u64)) {
    // Reserve a port for the receiver, then aim the proxy at it. The bind
    // is released just before run_client rebinds the same port.
    let placeholder = UdpSocket::bind("127.0.0.1:0").unwrap();
    let client_port = placeholder.local_addr().unwrap().port();
    drop(placeholder);

    let proxy = ImpairProxy::spawn(
        "127.0.0.1:0".parse().unwrap(),
        SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), client_port),
        loss_p,
        seed,
    )
    .unwrap();

    let out = tempfile::tempdir().unwrap();
    let mut cfg = base_config("clip_c", control_port);
    cfg.quant_shift = 0;
    cfg.rtp_port = client_port;
    let options = RunOptions {
        idle_timeout: Duration::from_millis(700),
        advertised_rtp_port: Some(proxy.listen_addr().port()),
        ..Default::default()
    };
    let artifacts = run_client(&cfg, db, out.path(), &options).unwrap();
    let stats = proxy.stats();
    let counters = (
        stats.received.load(Ordering::Relaxed),
        stats.forwarded.load(Ordering::Relaxed),
        stats.dropped.load(Ordering::Relaxed),
    );
    proxy.stop();
    let rx = std::fs::read(&artifacts.rx_encoded_path).unwrap();
    let trace = std::fs::read(&artifacts.trace_path).unwrap();
    (rx, trace, counters)
}

/// Payload bytes of every captured packet, in order (timestamps excluded).
fn payload_sequence(trace: &[u8]) -> Vec<Vec<u8>> {
    let packets = read_pcap(&mut &trace[..]).unwrap();
    packets
        .iter()
        .map(|p| parse_udp_frame(&p.data).unwrap().payload.to_vec())
        .collect()
}

#[test]
fn impairment_is_deterministic_per_seed() {
    let db = make_database();
    let server = serve(db.path(), 0).unwrap();
    let port = server.control_port();

    let (rx1, trace1, (_, _, dropped1)) = impaired_bytes(db.path(), port, 77, 0.08);
    let (rx2, trace2, (_, _, dropped2)) = impaired_bytes(db.path(), port, 77, 0.08);
    let (rx3, _, _) = impaired_bytes(db.path(), port, 78, 0.08);

    assert!(
        dropped1 > 0,
        "8% loss over hundreds of packets must drop something"
    );
    assert_eq!(dropped1, dropped2, "same seed, same drop count");
    assert_eq!(
        rx1, rx2,
        "same seed must reproduce the received stream bit-for-bit"
    );
    assert_eq!(payload_sequence(&trace1), payload_sequence(&trace2));
    assert_ne!(rx1, rx3, "a different seed should lose different packets");
    server.stop();
}

#[test]
fn impaired_run_counters_and_capture_agree() {
    let db = make_database();
    let server = serve(db.path(), 0).unwrap();

    let (_, trace, (received, forwarded, dropped)) =
        impaired_bytes(db.path(), server.control_port(), 4242, 0.08);

    assert_eq!(received, forwarded + dropped);
    assert!(dropped > 0);
    assert!(
        received > 200,
        "clip_c should packetize into hundreds of datagrams"
    );

    // Loose band around the nominal probability; the tight statistical
    // check lives with the high-volume predictor tests.
    let fraction = dropped as f64 / received as f64;
    assert!(
        (0.01..0.25).contains(&fraction),
        "drop fraction {fraction} implausible for p=0.08"
    );

    // Capture completeness: everything the proxy forwarded shows up in the
    // client's trace exactly once, and every record parses as RTP.
    let packets = read_pcap(&mut &trace[..]).unwrap();
    let rtp_port = parse_udp_frame(&packets[0].data).unwrap().dst.port();
    let (records, skipped) = extract_rtp_records(&packets, rtp_port);
    assert_eq!(skipped, 0);
    assert_eq!(records.len() as u64, forwarded);
    server.stop();
}

/// RTT through a TCP forwarder that delays every chunk by ~25 ms each way.
#[test]
fn rtt_through_delay_proxy_measures_the_delay() {
    let db = make_database();
    let server = serve(db.path(), 0).unwrap();
    let upstream = SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), server.control_port());

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let proxy_addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (client_side, _) = listener.accept().unwrap();
        let server_side = TcpStream::connect(upstream).unwrap();
        let delay = Duration::from_millis(25);
        let a = delayed_copy(
            client_side.try_clone().unwrap(),
            server_side.try_clone().unwrap(),
            delay,
        );
        let b = delayed_copy(server_side, client_side, delay);
        let _ = a.join();
        let _ = b.join();
    });

    let mut channel = ControlChannel::connect(proxy_addr, Duration::from_secs(5)).unwrap();
    handshake(&mut channel).unwrap();
    let rtts = measure_rtt(&mut channel, 4).unwrap();
    assert_eq!(rtts.len(), 4);
    for rtt in &rtts {
        assert!(
            (0.05..0.25).contains(rtt),
            "RTT {rtt} outside [50ms, 250ms]"
        );
    }
    server.stop();
}

fn delayed_copy(mut from: TcpStream, mut to: TcpStream, delay: Duration) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let mut buf = [0u8; 4096];
        loop {
            match from.read(&mut buf) {
                Ok(0) | Err(_) => return,
                Ok(n) => {
                    thread::sleep(delay);
                    if to.write_all(&buf[..n]).is_err() {
                        return;
                    }
                }
            }
        }
    })
}
