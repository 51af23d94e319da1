//! TOML configuration for the `vt` tool.
//!
//! One file drives every subcommand: the streaming session parameters, the
//! analysis selection, and the configurable quality mappings (MOS table and
//! G.1070 coefficient set). Unknown keys are rejected, and parse errors
//! carry the offending line and column.

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vt_core::metrics::AnalysisParams;
use vt_core::vq::{G1070Coefficients, MosTable};
use vt_net::session::{SessionConfig, Transport};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file {path} is invalid:\n{message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Top-level configuration. Every field has a default so a minimal file —
/// or none at all, for pure analysis — still works; subcommands that need a
/// specific field (`run` needs `database_dir` and a video id) check for it
/// explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolConfig {
    /// Single seed all randomness flows from (impairment drop decisions).
    pub seed: u64,
    /// Directory holding the server's Y4M sources; also where the client
    /// reads the pristine reference copy from.
    pub database_dir: Option<PathBuf>,
    /// Where artifacts and reports land.
    pub output_dir: PathBuf,
    pub session: SessionSection,
    pub analysis: AnalysisSection,
    pub mos_table: MosTable,
    /// G.1070 coefficient set; the measure fails gracefully when absent.
    pub g1070: Option<G1070Coefficients>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            database_dir: None,
            output_dir: PathBuf::from("vt-out"),
            session: SessionSection::default(),
            analysis: AnalysisSection::default(),
            mos_table: MosTable::default(),
            g1070: None,
        }
    }
}

/// `[session]`: what to stream and how.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionSection {
    /// Video identifier in the server database (".y4m" appended on lookup).
    pub video_id: String,
    pub gop_size: u16,
    pub quant_shift: u8,
    pub fps_num: u32,
    pub fps_den: u32,
    /// `udp_unicast`, `udp_multicast`, or `tcp`.
    pub transport: Transport,
    /// Client RTP port; 0 lets the OS pick one.
    pub rtp_port: u16,
    /// Port told to the server in place of the bound one. Point this at an
    /// impairment proxy listening on that port and set `rtp_port` to the
    /// proxy's forward target to put the proxy in the media path.
    pub advertised_rtp_port: Option<u16>,
    pub control_host: String,
    pub control_port: u16,
    pub multicast_group: Option<Ipv4Addr>,
    /// Send-rate scale: 1.0 = real time, 0 = as fast as possible.
    pub pacing: f64,
}

impl Default for SessionSection {
    fn default() -> Self {
        Self {
            video_id: String::new(),
            gop_size: 15,
            quant_shift: 2,
            fps_num: 25,
            fps_den: 1,
            transport: Transport::UdpUnicast,
            rtp_port: 0,
            advertised_rtp_port: None,
            control_host: "127.0.0.1".to_owned(),
            control_port: 5000,
            multicast_group: None,
            pacing: 1.0,
        }
    }
}

impl SessionSection {
    /// Builds the wire-level session config; requires a video id.
    pub fn to_session_config(&self) -> Result<SessionConfig, ConfigError> {
        if self.video_id.is_empty() {
            return Err(ConfigError::Invalid(
                "session.video_id is not set; name a video from the database".to_owned(),
            ));
        }
        Ok(SessionConfig {
            video_id: self.video_id.clone(),
            gop_size: self.gop_size,
            quant_shift: self.quant_shift,
            fps_num: self.fps_num,
            fps_den: self.fps_den,
            transport: self.transport,
            rtp_port: self.rtp_port,
            control_host: self.control_host.clone(),
            control_port: self.control_port,
            multicast_group: self.multicast_group,
            pacing: self.pacing,
        })
    }
}

/// `[analysis]`: which measures run and with what interval resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Measure names to compute; absent = every built-in.
    pub measures: Option<Vec<String>>,
    /// K: number of intervals for loss distribution and interval DIV.
    pub pld_intervals: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            measures: None,
            pld_intervals: 10,
        }
    }
}

impl ToolConfig {
    /// Reads and validates a config file. Missing file and malformed
    /// content are distinct errors; parse messages include line/column.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let config: ToolConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.mos_table
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("mos_table: {e}")))?;
        if self.analysis.pld_intervals == 0 {
            return Err(ConfigError::Invalid(
                "analysis.pld_intervals must be at least 1".to_owned(),
            ));
        }
        if let Some(measures) = &self.analysis.measures {
            if measures.is_empty() {
                return Err(ConfigError::Invalid(
                    "analysis.measures is empty; omit the key to run everything".to_owned(),
                ));
            }
        }
        Ok(())
    }

    pub fn database_dir(&self) -> Result<&Path, ConfigError> {
        self.database_dir
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("database_dir is not set".to_owned()))
    }

    /// Parameters handed to the metric registry.
    pub fn analysis_params(&self) -> AnalysisParams {
        AnalysisParams {
            pld_intervals: self.analysis.pld_intervals,
            mos_table: self.mos_table,
            g1070: self.g1070,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vt.toml");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn full_config_parses() {
        let (_dir, path) = write_config(
            r#"
seed = 42
database_dir = "videos"
output_dir = "results"

[session]
video_id = "foreman"
gop_size = 15
quant_shift = 2
fps_num = 25
fps_den = 1
transport = "udp_multicast"
rtp_port = 5004
advertised_rtp_port = 6004
control_host = "192.168.1.10"
control_port = 5000
multicast_group = "239.1.2.3"
pacing = 1.0

[analysis]
measures = ["latency", "jitter", "psnr"]
pld_intervals = 20

[mos_table]
excellent = 37.0
good = 31.0
fair = 25.0
poor = 20.0

[g1070]
v1 = 1.0
v2 = 0.02
v3 = 4.0
v4 = 100.0
v5 = 1.0
v6 = 2.0
v7 = 0.001
v8 = 10.0
v9 = 200.0
v10 = 0.5
v11 = 1.0
v12 = 0.5
"#,
        );
        let config = ToolConfig::load(&path).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.session.transport, Transport::UdpMulticast);
        assert_eq!(
            config.session.multicast_group,
            Some(Ipv4Addr::new(239, 1, 2, 3))
        );
        assert_eq!(config.session.advertised_rtp_port, Some(6004));
        assert_eq!(config.analysis.pld_intervals, 20);
        assert_eq!(config.analysis.measures.as_deref().unwrap().len(), 3);
        assert!(config.g1070.is_some());
        let session = config.session.to_session_config().unwrap();
        assert_eq!(session.video_id, "foreman");
    }

    #[test]
    fn empty_config_gets_defaults() {
        let (_dir, path) = write_config("");
        let config = ToolConfig::load(&path).unwrap();
        assert_eq!(config.seed, 0);
        assert_eq!(config.output_dir, PathBuf::from("vt-out"));
        assert_eq!(config.session.gop_size, 15);
        assert_eq!(config.session.fps_num, 25);
        assert_eq!(config.analysis.pld_intervals, 10);
        assert_eq!(config.mos_table, MosTable::default());
        assert!(config.g1070.is_none());
        assert!(
            config.session.to_session_config().is_err(),
            "video_id must be explicit"
        );
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let (_dir, path) = write_config("[session]\nvideo_id = \"x\"\ngoop_size = 15\n");
        let err = ToolConfig::load(&path).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("goop_size"),
            "should name the bad key: {message}"
        );
        assert!(
            message.contains("line 3"),
            "should carry the location: {message}"
        );
    }

    #[test]
    fn unknown_keys_in_nested_mappings_are_rejected() {
        let (_dir, path) = write_config("[mos_table]\nexcellent = 37.0\nsplendid = 99.0\n");
        let err = ToolConfig::load(&path).unwrap_err();
        assert!(err.to_string().contains("splendid"));
    }

    #[test]
    fn missing_file_is_a_distinct_error() {
        let err = ToolConfig::load(Path::new("/nonexistent/vt.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Read { .. }));
        assert!(err.to_string().contains("/nonexistent/vt.toml"));
    }

    #[test]
    fn bad_transport_name_is_rejected() {
        let (_dir, path) = write_config("[session]\ntransport = \"carrier_pigeon\"\n");
        assert!(ToolConfig::load(&path).is_err());
    }

    #[test]
    fn degenerate_mos_table_is_rejected() {
        let (_dir, path) =
            write_config("[mos_table]\nexcellent = 10.0\ngood = 31.0\nfair = 25.0\npoor = 20.0\n");
        let err = ToolConfig::load(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
    }

    #[test]
    fn partial_mos_table_is_rejected_at_parse() {
        let (_dir, path) = write_config("[mos_table]\nexcellent = 37.0\n");
        let err = ToolConfig::load(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");
        assert!(err.to_string().contains("missing field"), "{err}");
    }

    #[test]
    fn zero_pld_intervals_rejected() {
        let (_dir, path) = write_config("[analysis]\npld_intervals = 0\n");
        assert!(ToolConfig::load(&path).is_err());
    }
}
