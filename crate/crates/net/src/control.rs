//! Control protocol: newline-delimited JSON objects over TCP.
//!
//! One request or reply per line. The client drives: `hello` → `welcome`,
//! `setup` → `ok` (or `error`), `ping` → `pong`, `play` (no reply, the
//! stream itself is the response), `teardown` → `bye`. Chosen over heavier
//! RPC stacks because it is trivially implementable in any language and
//! debuggable with a terminal.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use vt_core::rtp::StreamParams;

use crate::session::SessionConfig;

/// Protocol version spoken by this implementation.
pub const PROTOCOL_VERSION: u32 = 1;

/// Default timeout for one control-level request/reply exchange.
pub const DEFAULT_REPLY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("control connection closed by peer")]
    Closed,
    #[error("malformed control line {line:?}: {source}")]
    Malformed {
        line: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("control error reply: {0}")]
    ErrorReply(String),
    #[error("unexpected control message: expected {expected}, got {got}")]
    Unexpected { expected: &'static str, got: String },
    #[error("control protocol version mismatch: ours {ours}, peer {theirs}")]
    VersionMismatch { ours: u32, theirs: u32 },
    #[error("control i/o: {0}")]
    Io(#[from] io::Error),
}

/// Messages sent by the client. Unknown `type` tags are rejected; unknown
/// extra fields inside a known message are ignored (forward compatibility).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello { version: u32 },
    Setup { config: SessionConfig },
    Play,
    Ping { t0: f64 },
    Teardown,
}

/// Messages sent by the server. Same leniency as [`ClientMessage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        version: u32,
    },
    /// Successful setup: where the stream will arrive and what it contains.
    Ok {
        rtp_port: u16,
        frame_count: u32,
        params: StreamParams,
        total_encoded_bytes: u64,
    },
    Pong {
        t0: f64,
    },
    Bye,
    Error {
        message: String,
    },
}

/// Writes one message as a JSON line.
pub fn send_message<W: Write, T: Serialize>(writer: &mut W, message: &T) -> io::Result<()> {
    let mut line = serde_json::to_string(message).expect("control messages serialize");
    line.push('\n');
    writer.write_all(line.as_bytes())?;
    writer.flush()
}

/// Reads one JSON line and decodes it. EOF yields [`ControlError::Closed`].
pub fn read_message<R: BufRead, T: DeserializeOwned>(reader: &mut R) -> Result<T, ControlError> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Err(ControlError::Closed);
    }
    serde_json::from_str(line.trim_end()).map_err(|source| ControlError::Malformed { line, source })
}

/// One side of a control connection: buffered reads, direct writes.
pub struct ControlChannel {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl ControlChannel {
    /// Connects to a control endpoint with a connect timeout, and a default
    /// read timeout so a dead peer cannot hang the session.
    pub fn connect(addr: SocketAddr, timeout: Duration) -> Result<Self, ControlError> {
        let stream = TcpStream::connect_timeout(&addr, timeout)?;
        Self::from_stream(stream)
    }

    /// Wraps an accepted or connected stream.
    pub fn from_stream(stream: TcpStream) -> Result<Self, ControlError> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(DEFAULT_REPLY_TIMEOUT))?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(timeout)
    }

    pub fn peer_addr(&self) -> io::Result<SocketAddr> {
        self.writer.peer_addr()
    }

    pub fn send<T: Serialize>(&mut self, message: &T) -> Result<(), ControlError> {
        Ok(send_message(&mut self.writer, message)?)
    }

    pub fn recv<T: DeserializeOwned>(&mut self) -> Result<T, ControlError> {
        read_message(&mut self.reader)
    }

    /// Client-side request/reply; `error` replies become [`ControlError::ErrorReply`].
    pub fn request(&mut self, message: &ClientMessage) -> Result<ServerMessage, ControlError> {
        self.send(message)?;
        match self.recv::<ServerMessage>()? {
            ServerMessage::Error { message } => Err(ControlError::ErrorReply(message)),
            reply => Ok(reply),
        }
    }
}

/// Client-side handshake: `hello` → `welcome`, enforcing version equality.
pub fn handshake(channel: &mut ControlChannel) -> Result<(), ControlError> {
    match channel.request(&ClientMessage::Hello {
        version: PROTOCOL_VERSION,
    })? {
        ServerMessage::Welcome { version } if version == PROTOCOL_VERSION => Ok(()),
        ServerMessage::Welcome { version } => Err(ControlError::VersionMismatch {
            ours: PROTOCOL_VERSION,
            theirs: version,
        }),
        other => Err(ControlError::Unexpected {
            expected: "welcome",
            got: format!("{other:?}"),
        }),
    }
}

/// Samples `n` round-trip times over the control connection, one blocking
/// ping/pong exchange at a time, measured on the local monotonic clock.
/// `n = 0` yields an empty list without touching the wire.
pub fn measure_rtt(channel: &mut ControlChannel, n: usize) -> Result<Vec<f64>, ControlError> {
    let epoch = Instant::now();
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let t0 = epoch.elapsed().as_secs_f64();
        match channel.request(&ClientMessage::Ping { t0 })? {
            ServerMessage::Pong { t0: echoed } if echoed == t0 => {
                samples.push(epoch.elapsed().as_secs_f64() - t0);
            }
            ServerMessage::Pong { t0: echoed } => {
                return Err(ControlError::Unexpected {
                    expected: "pong echoing our timestamp",
                    got: format!("pong with t0 {echoed}"),
                });
            }
            other => {
                return Err(ControlError::Unexpected {
                    expected: "pong",
                    got: format!("{other:?}"),
                })
            }
        }
    }
    Ok(samples)
}
