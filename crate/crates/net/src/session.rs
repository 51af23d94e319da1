//! Session description: everything a client selects for one streaming test,
//! plus the record of what actually happened (written alongside the
//! artifacts so analysis can run offline later).

use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vt_core::metrics::SessionMeta;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("video_id must be a bare name, got {0:?}")]
    BadVideoId(String),
    #[error("gop_size must be at least 1")]
    BadGopSize,
    #[error("quant_shift must be 0..=7, got {0}")]
    BadQuantShift(u8),
    #[error("frame rate must be positive, got {num}/{den}")]
    BadFrameRate { num: u32, den: u32 },
    #[error("{0} port must be nonzero")]
    ZeroPort(&'static str),
    #[error("multicast group must be present exactly when transport is udp_multicast")]
    MulticastGroupMismatch,
    #[error("multicast group {0} is not in 224.0.0.0/4")]
    NotMulticast(Ipv4Addr),
    #[error("pacing must be finite and >= 0, got {0}")]
    BadPacing(f64),
}

/// How the RTP stream travels from server to client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    UdpUnicast,
    UdpMulticast,
    Tcp,
}

impl std::fmt::Display for Transport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Transport::UdpUnicast => "udp_unicast",
            Transport::UdpMulticast => "udp_multicast",
            Transport::Tcp => "tcp",
        })
    }
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "udp_unicast" | "udp" => Ok(Transport::UdpUnicast),
            "udp_multicast" | "multicast" => Ok(Transport::UdpMulticast),
            "tcp" => Ok(Transport::Tcp),
            other => Err(format!(
                "unknown transport {other:?} (expected udp_unicast, udp_multicast, or tcp)"
            )),
        }
    }
}

/// Everything a client selects for one test session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Name of a video in the server's database (bare name, optionally with
    /// the .y4m suffix; no path separators).
    pub video_id: String,
    pub gop_size: u16,
    pub quant_shift: u8,
    /// Requested nominal frame rate; overrides the database file's rate for
    /// timestamps and pacing.
    pub fps_num: u32,
    pub fps_den: u32,
    pub transport: Transport,
    /// Port the client receives RTP on (0 = pick ephemeral at run time).
    pub rtp_port: u16,
    pub control_host: String,
    pub control_port: u16,
    /// Group address, present exactly when transport is udp_multicast.
    #[serde(default)]
    pub multicast_group: Option<Ipv4Addr>,
    /// Send-rate factor: 1.0 = real time, 0 = as fast as possible.
    pub pacing: f64,
}

impl SessionConfig {
    /// Checks the invariants that must hold before a session starts.
    /// `rtp_port` 0 is allowed (ephemeral); control port must be nonzero.
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.video_id.is_empty()
            || self.video_id.contains(['/', '\\'])
            || self.video_id.contains("..")
        {
            return Err(SessionError::BadVideoId(self.video_id.clone()));
        }
        if self.gop_size == 0 {
            return Err(SessionError::BadGopSize);
        }
        if self.quant_shift > 7 {
            return Err(SessionError::BadQuantShift(self.quant_shift));
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(SessionError::BadFrameRate {
                num: self.fps_num,
                den: self.fps_den,
            });
        }
        if self.control_port == 0 {
            return Err(SessionError::ZeroPort("control"));
        }
        match (self.transport, self.multicast_group) {
            (Transport::UdpMulticast, Some(group)) => {
                if !group.is_multicast() {
                    return Err(SessionError::NotMulticast(group));
                }
            }
            (Transport::UdpMulticast, None) | (_, Some(_)) => {
                return Err(SessionError::MulticastGroupMismatch);
            }
            _ => {}
        }
        if !self.pacing.is_finite() || self.pacing < 0.0 {
            return Err(SessionError::BadPacing(self.pacing));
        }
        Ok(())
    }

    /// Database file name for the configured video.
    pub fn video_file_name(&self) -> String {
        if self.video_id.ends_with(".y4m") {
            self.video_id.clone()
        } else {
            format!("{}.y4m", self.video_id)
        }
    }
}

/// What actually happened in a completed session: the configuration plus
/// timing and stream facts, persisted as session_meta.json next to the
/// artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub config: SessionConfig,
    /// Wall-clock session start, seconds since the Unix epoch.
    pub started_unix: f64,
    /// Receive phase duration in seconds.
    pub duration_seconds: f64,
    pub frame_count: u32,
    pub width: u16,
    pub height: u16,
    /// Size of the server's full encoding (frame records), in bytes.
    pub total_encoded_bytes: u64,
    /// Mean coded bitrate of the reference encoding in kbit/s.
    pub bitrate_kbps: f64,
    pub packets_received: u64,
    pub rtt_samples: Vec<f64>,
}

impl SessionRecord {
    /// The session facts the analysis meters consume.
    pub fn to_session_meta(&self) -> SessionMeta {
        SessionMeta {
            fps_num: self.config.fps_num,
            fps_den: self.config.fps_den,
            gop_size: u32::from(self.config.gop_size),
            bitrate_kbps: self.bitrate_kbps,
            codec: "gop-rle".to_owned(),
        }
    }
}
