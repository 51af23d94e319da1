//! Concurrent test server: accepts control connections, encodes database
//! videos on demand (with a cross-session cache), streams them per the
//! client's session configuration, and answers pings throughout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use vt_core::codec::{encode, EncodedStream};
use vt_core::rawvideo::read_y4m;
use vt_core::rtp::{packetize, StreamParams, DEFAULT_MAX_PAYLOAD};

use crate::control::{
    ClientMessage, ControlChannel, ControlError, ServerMessage, PROTOCOL_VERSION,
};
use crate::session::{SessionConfig, Transport};
use crate::transport::send_stream;

/// Fixed stream identity: everything about a session is determined by its
/// configuration, so the RTP identity is constant and runs are replayable.
pub const SERVER_SSRC: u32 = 0x5654_4553;
pub const INITIAL_SEQ: u16 = 1;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind control port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: io::Error,
    },
    #[error("server i/o: {0}")]
    Io(#[from] io::Error),
}

type EncodeCache = Arc<Mutex<HashMap<(String, u32, u8, u32, u32), Arc<EncodedStream>>>>;

/// A running server; `stop` (or drop) ends the accept loop. Sessions already
/// streaming run to completion on their own threads.
pub struct ServerHandle {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn control_port(&self) -> u16 {
        self.local_addr.port()
    }

    pub fn stop(mut self) {
        self.shutdown_and_join();
    }

    fn shutdown_and_join(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_and_join();
    }
}

/// Binds the control port and serves until stopped. `control_port` 0 picks
/// an ephemeral port, reported by the returned handle.
pub fn serve(database_dir: &Path, control_port: u16) -> Result<ServerHandle, ServeError> {
    let listener = TcpListener::bind((Ipv4Addr::UNSPECIFIED, control_port)).map_err(|source| {
        ServeError::Bind {
            port: control_port,
            source,
        }
    })?;
    let local_addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let accept_shutdown = Arc::clone(&shutdown);
    let database_dir = database_dir.to_path_buf();
    let cache: EncodeCache = Arc::new(Mutex::new(HashMap::new()));

    let accept_thread = thread::Builder::new()
        .name("vt-serve".to_owned())
        .spawn(move || {
            while !accept_shutdown.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let database_dir = database_dir.clone();
                        let cache = Arc::clone(&cache);
                        let _ = thread::Builder::new()
                            .name(format!("vt-session-{peer}"))
                            .spawn(move || {
                                if let Err(e) = handle_connection(stream, &database_dir, cache) {
                                    log::warn!("session with {peer} ended with error: {e}");
                                }
                            });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(25));
                    }
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        thread::sleep(Duration::from_millis(100));
                    }
                }
            }
        })
        .expect("spawn accept thread");

    Ok(ServerHandle {
        local_addr,
        shutdown,
        accept_thread: Some(accept_thread),
    })
}

struct SessionState {
    config: SessionConfig,
    stream: Arc<EncodedStream>,
}

fn handle_connection(
    stream: TcpStream,
    database_dir: &Path,
    cache: EncodeCache,
) -> Result<(), ControlError> {
    let peer = stream.peer_addr()?;
    let mut channel = ControlChannel::from_stream(stream)?;
    // Sessions can sit idle while the client receives; allow long gaps.
    channel.set_read_timeout(Some(Duration::from_secs(600)))?;

    let mut session: Option<SessionState> = None;
    loop {
        let message = match channel.recv::<ClientMessage>() {
            Ok(message) => message,
            Err(ControlError::Closed) => return Ok(()),
            Err(ControlError::Malformed { line, .. }) => {
                // A bad line is the client's problem; say so and keep serving.
                channel.send(&ServerMessage::Error {
                    message: format!("malformed control line: {}", line.trim_end()),
                })?;
                continue;
            }
            Err(e) => return Err(e),
        };

        match message {
            ClientMessage::Hello { version: _ } => {
                channel.send(&ServerMessage::Welcome {
                    version: PROTOCOL_VERSION,
                })?;
            }
            ClientMessage::Ping { t0 } => {
                channel.send(&ServerMessage::Pong { t0 })?;
            }
            ClientMessage::Setup { config } => match prepare_session(&config, database_dir, &cache)
            {
                Ok(state) => {
                    let reply = ServerMessage::Ok {
                        rtp_port: state.config.rtp_port,
                        frame_count: state.stream.frames.len() as u32,
                        params: StreamParams::from(state.stream.as_ref()),
                        total_encoded_bytes: state.stream.coded_len() as u64,
                    };
                    session = Some(state);
                    channel.send(&reply)?;
                }
                Err(message) => {
                    channel.send(&ServerMessage::Error { message })?;
                }
            },
            ClientMessage::Play => match &session {
                Some(state) => {
                    spawn_sender(state, peer);
                }
                None => {
                    channel.send(&ServerMessage::Error {
                        message: "play before setup".to_owned(),
                    })?;
                }
            },
            ClientMessage::Teardown => {
                channel.send(&ServerMessage::Bye)?;
                return Ok(());
            }
        }
    }
}

fn prepare_session(
    config: &SessionConfig,
    database_dir: &Path,
    cache: &EncodeCache,
) -> Result<SessionState, String> {
    config.validate().map_err(|e| e.to_string())?;
    if config.rtp_port == 0 {
        return Err("rtp_port must be resolved to a concrete port before setup".to_owned());
    }

    let file_name = config.video_file_name();
    let key = (
        file_name.clone(),
        u32::from(config.gop_size),
        config.quant_shift,
        config.fps_num,
        config.fps_den,
    );
    if let Some(stream) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok(SessionState {
            config: config.clone(),
            stream: Arc::clone(stream),
        });
    }

    let path: PathBuf = database_dir.join(&file_name);
    let file = File::open(&path).map_err(|_| format!("unknown video {:?}", config.video_id))?;
    let mut video =
        read_y4m(BufReader::new(file)).map_err(|e| format!("unreadable video {file_name}: {e}"))?;
    if video.frames.is_empty() {
        return Err(format!("video {file_name} has no frames"));
    }
    // The client's requested rate governs timestamps and pacing.
    video.fps_num = config.fps_num;
    video.fps_den = config.fps_den;

    let stream = Arc::new(encode(
        &video,
        u32::from(config.gop_size),
        config.quant_shift,
    ));
    cache
        .lock()
        .expect("cache poisoned")
        .insert(key, Arc::clone(&stream));
    Ok(SessionState {
        config: config.clone(),
        stream,
    })
}

fn spawn_sender(state: &SessionState, peer: SocketAddr) {
    let stream = Arc::clone(&state.stream);
    let config = state.config.clone();
    let dest = match (config.transport, config.multicast_group) {
        (Transport::UdpMulticast, Some(group)) => {
            SocketAddr::new(IpAddr::V4(group), config.rtp_port)
        }
        _ => SocketAddr::new(peer.ip(), config.rtp_port),
    };
    let _ = thread::Builder::new()
        .name("vt-send".to_owned())
        .spawn(move || {
            let packets = packetize(&stream, SERVER_SSRC, INITIAL_SEQ, DEFAULT_MAX_PAYLOAD);
            let result = send_stream(
                &packets,
                config.transport,
                dest,
                (config.fps_num, config.fps_den),
                config.pacing,
            );
            if let Err(e) = result {
                log::warn!("stream to {dest} failed: {e}");
            }
        });
}
