//! Meter registry: three meters (QoS, bitstream, video quality) owning
//! pluggable measures behind one interface, so adding a metric means
//! registering one function.
//!
//! A measure declares which context fields it needs. At run time each
//! selected measure either computes a result, yields a skip record when a
//! required field is absent or the name is unknown, or yields a failure
//! record when its computation errors — one outcome per selected name, in
//! selection order, and never a crash.

pub mod builtin;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeReport, EncodedStream};
use crate::rawvideo::RawVideo;
use crate::trace::PacketRecord;

pub use builtin::{build_registry, AnalysisParams};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("measure {name:?} is already registered in the {meter} meter")]
    DuplicateName { meter: MeterKind, name: String },
}

/// The three meters of the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeterKind {
    Qos,
    Bs,
    Vq,
}

impl fmt::Display for MeterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeterKind::Qos => "qos",
            MeterKind::Bs => "bs",
            MeterKind::Vq => "vq",
        })
    }
}

/// Context fields a measure can require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextField {
    PacketRecords,
    RttSamples,
    RxEncoded,
    RefEncoded,
    RxRaw,
    RefRaw,
    DecodeReport,
    SessionMeta,
}

impl ContextField {
    pub fn name(self) -> &'static str {
        match self {
            ContextField::PacketRecords => "packet_records",
            ContextField::RttSamples => "rtt_samples",
            ContextField::RxEncoded => "rx_encoded",
            ContextField::RefEncoded => "ref_encoded",
            ContextField::RxRaw => "rx_raw",
            ContextField::RefRaw => "ref_raw",
            ContextField::DecodeReport => "decode_report",
            ContextField::SessionMeta => "session_meta",
        }
    }
}

/// Session facts the measures may consume alongside the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub fps_num: u32,
    pub fps_den: u32,
    pub gop_size: u32,
    /// Mean coded bitrate of the session in kbit/s.
    pub bitrate_kbps: f64,
    pub codec: String,
}

impl SessionMeta {
    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }
}

/// Everything an analysis may consume. Any field may be absent; each
/// measure declares what it requires and is skipped when that is missing.
#[derive(Debug, Clone, Default)]
pub struct AnalysisContext {
    pub packet_records: Option<Vec<PacketRecord>>,
    pub rtt_samples: Option<Vec<f64>>,
    pub rx_encoded: Option<EncodedStream>,
    pub ref_encoded: Option<EncodedStream>,
    pub rx_raw: Option<RawVideo>,
    pub ref_raw: Option<RawVideo>,
    pub decode_report: Option<DecodeReport>,
    pub session_meta: Option<SessionMeta>,
}

impl AnalysisContext {
    pub fn has(&self, field: ContextField) -> bool {
        match field {
            ContextField::PacketRecords => self.packet_records.is_some(),
            ContextField::RttSamples => self.rtt_samples.is_some(),
            ContextField::RxEncoded => self.rx_encoded.is_some(),
            ContextField::RefEncoded => self.ref_encoded.is_some(),
            ContextField::RxRaw => self.rx_raw.is_some(),
            ContextField::RefRaw => self.ref_raw.is_some(),
            ContextField::DecodeReport => self.decode_report.is_some(),
            ContextField::SessionMeta => self.session_meta.is_some(),
        }
    }
}

/// Shape-tagged metric payload: kind and data always match by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum MetricData {
    Value(f64),
    /// (x, y) points with strictly increasing x.
    Series(Vec<(f64, f64)>),
    /// (bin, count) pairs.
    Histogram(Vec<(f64, u64)>),
}

impl MetricData {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MetricData::Value(_) => "value",
            MetricData::Series(_) => "series",
            MetricData::Histogram(_) => "histogram",
        }
    }
}

/// One computed metric: name, owning meter, units, payload, and free-form
/// annotations (fallbacks, skipped intervals, provenance notes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult {
    pub meter: MeterKind,
    pub name: String,
    pub units: String,
    #[serde(flatten)]
    pub data: MetricData,
    pub annotations: Vec<String>,
}

impl MeasureResult {
    pub fn value(meter: MeterKind, name: &str, units: &str, value: f64) -> Self {
        Self {
            meter,
            name: name.to_owned(),
            units: units.to_owned(),
            data: MetricData::Value(value),
            annotations: Vec::new(),
        }
    }

    /// Builds a series result; panics if x is not strictly increasing
    /// (internal contract — built-in measures use index axes).
    pub fn series(meter: MeterKind, name: &str, units: &str, points: Vec<(f64, f64)>) -> Self {
        assert!(
            points.windows(2).all(|w| w[0].0 < w[1].0),
            "series x values must be strictly increasing"
        );
        Self {
            meter,
            name: name.to_owned(),
            units: units.to_owned(),
            data: MetricData::Series(points),
            annotations: Vec::new(),
        }
    }

    pub fn histogram(meter: MeterKind, name: &str, units: &str, bins: Vec<(f64, u64)>) -> Self {
        Self {
            meter,
            name: name.to_owned(),
            units: units.to_owned(),
            data: MetricData::Histogram(bins),
            annotations: Vec::new(),
        }
    }

    pub fn with_annotations(mut self, annotations: Vec<String>) -> Self {
        self.annotations = annotations;
        self
    }

    /// Series helper: y values over a 0-based index axis.
    pub fn indexed_series(meter: MeterKind, name: &str, units: &str, values: &[f64]) -> Self {
        let points = values
            .iter()
            .enumerate()
            .map(|(i, &y)| (i as f64, y))
            .collect();
        Self::series(meter, name, units, points)
    }
}

/// What happened to one selected measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MeasureOutcome {
    Computed(MeasureResult),
    Skipped {
        name: String,
        reason: String,
    },
    Failed {
        meter: MeterKind,
        name: String,
        error: String,
    },
}

impl MeasureOutcome {
    pub fn name(&self) -> &str {
        match self {
            MeasureOutcome::Computed(result) => &result.name,
            MeasureOutcome::Skipped { name, .. } | MeasureOutcome::Failed { name, .. } => name,
        }
    }

    pub fn as_computed(&self) -> Option<&MeasureResult> {
        match self {
            MeasureOutcome::Computed(result) => Some(result),
            _ => None,
        }
    }
}

/// Failure raised inside a measure; captured per-measure, never propagated.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct MeasureFailure(pub String);

impl MeasureFailure {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }
}

impl From<String> for MeasureFailure {
    fn from(message: String) -> Self {
        Self(message)
    }
}

impl From<&str> for MeasureFailure {
    fn from(message: &str) -> Self {
        Self(message.to_owned())
    }
}

type ComputeFn =
    Box<dyn Fn(&AnalysisContext) -> Result<MeasureResult, MeasureFailure> + Send + Sync>;

struct Measure {
    meter: MeterKind,
    name: String,
    requirements: Vec<ContextField>,
    compute: ComputeFn,
}

/// The registry: measures are registered once at startup, looked up by name
/// at analysis time. Names are unique per meter; lookups scan the meters in
/// qos, bs, vq order.
#[derive(Default)]
pub struct MeterRegistry {
    measures: Vec<Measure>,
    names: HashSet<(MeterKind, String)>,
}

impl MeterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a measure. Duplicate names within a meter are rejected.
    pub fn register<F>(
        &mut self,
        meter: MeterKind,
        name: &str,
        requirements: Vec<ContextField>,
        compute: F,
    ) -> Result<(), RegistryError>
    where
        F: Fn(&AnalysisContext) -> Result<MeasureResult, MeasureFailure> + Send + Sync + 'static,
    {
        let key = (meter, name.to_owned());
        if !self.names.insert(key) {
            return Err(RegistryError::DuplicateName {
                meter,
                name: name.to_owned(),
            });
        }
        self.measures.push(Measure {
            meter,
            name: name.to_owned(),
            requirements,
            compute: Box::new(compute),
        });
        Ok(())
    }

    /// Registered measure names of one meter, in registration order.
    pub fn names(&self, meter: MeterKind) -> Vec<&str> {
        self.measures
            .iter()
            .filter(|m| m.meter == meter)
            .map(|m| m.name.as_str())
            .collect()
    }

    /// All registered names in (qos, bs, vq) meter order.
    pub fn all_names(&self) -> Vec<&str> {
        [MeterKind::Qos, MeterKind::Bs, MeterKind::Vq]
            .iter()
            .flat_map(|&meter| self.names(meter))
            .collect()
    }

    fn find(&self, name: &str) -> Option<&Measure> {
        for meter in [MeterKind::Qos, MeterKind::Bs, MeterKind::Vq] {
            if let Some(measure) = self
                .measures
                .iter()
                .find(|m| m.meter == meter && m.name == name)
            {
                return Some(measure);
            }
        }
        None
    }

    /// Runs the selected measures against the context: one outcome per
    /// selected name, in selection order. Unknown names and missing
    /// requirements yield skip records; measure errors yield failure
    /// records. Nothing panics the run.
    pub fn run(&self, selected: &[String], ctx: &AnalysisContext) -> Vec<MeasureOutcome> {
        selected
            .iter()
            .map(|name| {
                let Some(measure) = self.find(name) else {
                    return MeasureOutcome::Skipped {
                        name: name.clone(),
                        reason: "unknown measure".to_owned(),
                    };
                };
                let missing: Vec<&str> = measure
                    .requirements
                    .iter()
                    .filter(|&&f| !ctx.has(f))
                    .map(|f| f.name())
                    .collect();
                if !missing.is_empty() {
                    return MeasureOutcome::Skipped {
                        name: name.clone(),
                        reason: format!("missing {}", missing.join(", ")),
                    };
                }
                match (measure.compute)(ctx) {
                    Ok(result) => MeasureOutcome::Computed(result),
                    Err(failure) => MeasureOutcome::Failed {
                        meter: measure.meter,
                        name: name.clone(),
                        error: failure.to_string(),
                    },
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_result(name: &str) -> MeasureResult {
        MeasureResult::value(MeterKind::Qos, name, "units", 1.0)
    }

    #[test]
    fn duplicate_names_rejected_per_meter() {
        let mut registry = MeterRegistry::new();
        registry
            .register(MeterKind::Qos, "psnr", vec![], |_| Ok(dummy_result("psnr")))
            .unwrap();
        let err = registry.register(MeterKind::Qos, "psnr", vec![], |_| Ok(dummy_result("psnr")));
        assert!(matches!(err, Err(RegistryError::DuplicateName { .. })));
        // Same name in a different meter is allowed.
        registry
            .register(MeterKind::Vq, "psnr", vec![], |_| Ok(dummy_result("psnr")))
            .unwrap();
    }

    #[test]
    fn run_preserves_selection_order_with_skips() {
        let mut registry = MeterRegistry::new();
        registry
            .register(MeterKind::Qos, "a", vec![ContextField::RttSamples], |_| {
                Ok(dummy_result("a"))
            })
            .unwrap();
        registry
            .register(MeterKind::Bs, "b", vec![], |_| Ok(dummy_result("b")))
            .unwrap();

        let ctx = AnalysisContext::default();
        let outcomes = registry.run(&["b".to_owned(), "nope".to_owned(), "a".to_owned()], &ctx);
        assert_eq!(outcomes.len(), 3);
        assert!(matches!(&outcomes[0], MeasureOutcome::Computed(r) if r.name == "b"));
        assert!(
            matches!(&outcomes[1], MeasureOutcome::Skipped { reason, .. } if reason == "unknown measure")
        );
        assert!(
            matches!(&outcomes[2], MeasureOutcome::Skipped { reason, .. } if reason.contains("rtt_samples"))
        );
    }

    #[test]
    fn failures_are_captured_not_propagated() {
        let mut registry = MeterRegistry::new();
        registry
            .register(MeterKind::Vq, "boom", vec![], |_| {
                Err(MeasureFailure::new("it broke"))
            })
            .unwrap();
        registry
            .register(MeterKind::Vq, "fine", vec![], |_| Ok(dummy_result("fine")))
            .unwrap();
        let outcomes = registry.run(
            &["boom".to_owned(), "fine".to_owned()],
            &AnalysisContext::default(),
        );
        assert!(
            matches!(&outcomes[0], MeasureOutcome::Failed { error, .. } if error == "it broke")
        );
        assert!(matches!(&outcomes[1], MeasureOutcome::Computed(_)));
    }

    #[test]
    fn custom_measure_appears_in_results() {
        let mut registry = MeterRegistry::new();
        registry
            .register(MeterKind::Qos, "answer", vec![], |_| {
                Ok(MeasureResult::value(
                    MeterKind::Qos,
                    "answer",
                    "count",
                    42.0,
                ))
            })
            .unwrap();
        let outcomes = registry.run(&["answer".to_owned()], &AnalysisContext::default());
        let result = outcomes[0].as_computed().unwrap();
        assert_eq!(result.data, MetricData::Value(42.0));
    }

    #[test]
    fn series_constructor_rejects_non_increasing_x() {
        let result = std::panic::catch_unwind(|| {
            MeasureResult::series(MeterKind::Qos, "bad", "s", vec![(0.0, 1.0), (0.0, 2.0)])
        });
        assert!(result.is_err());
    }

    #[test]
    fn outcomes_serialize_with_status_tags() {
        let outcome = MeasureOutcome::Skipped {
            name: "ssim".into(),
            reason: "missing rx_raw".into(),
        };
        let json = serde_json::to_string(&outcome).unwrap();
        assert!(json.contains("\"status\":\"skipped\""));
        let back: MeasureOutcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, outcome);

        let computed = MeasureOutcome::Computed(MeasureResult::indexed_series(
            MeterKind::Vq,
            "psnr",
            "dB",
            &[30.0, 40.0],
        ));
        let json = serde_json::to_string(&computed).unwrap();
        assert!(json.contains("\"kind\":\"series\""));
        let back: MeasureOutcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, computed);
    }
}
