//! Report emission: one versioned JSON document, a flattened CSV per run,
//! one gnuplot-ready data file per series or histogram, and — when several
//! runs are analyzed together — a stacked-bar MOS distribution file.
//!
//! The JSON and CSV encode the same numbers: both sides format `f64` with
//! Rust's shortest-round-trip notation, so a consistency check can demand
//! bitwise-equal values after parsing.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use vt_core::metrics::{MeasureOutcome, MetricData};
use vt_core::vq::{G1070Coefficients, MosTable};

use crate::config::ToolConfig;

/// Version of the report.json layout (see docs/report.schema.json).
pub const SCHEMA_VERSION: u64 = 1;

/// The whole analysis output.
#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u64,
    pub tool: ToolInfo,
    pub provenance: Provenance,
    pub runs: Vec<RunReport>,
}

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: "vt",
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Where every configurable mapping in this report came from, so a reader
/// can interpret the numbers without the config file at hand.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub seed: u64,
    /// The measures that were requested (also the order of `results`).
    pub measures: Vec<String>,
    pub pld_intervals: usize,
    pub mos_table: MosTable,
    pub mos_mapping: String,
    pub div_definition: String,
    pub g1070: Option<G1070Coefficients>,
    pub g1070_source: String,
}

impl Provenance {
    pub fn from_config(config: &ToolConfig, measures: Vec<String>) -> Self {
        let t = &config.mos_table;
        Self {
            seed: config.seed,
            measures,
            pld_intervals: config.analysis.pld_intervals,
            mos_table: *t,
            mos_mapping: format!(
                "PSNR dB to MOS: > {} -> 5, >= {} -> 4, >= {} -> 3, >= {} -> 2, else 1",
                t.excellent, t.good, t.fair, t.poor
            ),
            div_definition: "DIV = fraction of frames whose received MOS is below the \
                             reference encoding's MOS for the same frame"
                .to_owned(),
            g1070: config.g1070,
            g1070_source: if config.g1070.is_some() {
                "coefficients supplied by configuration".to_owned()
            } else {
                "not configured; the g1070 measure reports failure".to_owned()
            },
        }
    }
}

/// One analyzed run: its label, context-assembly notes, and per-measure
/// outcomes in selection order.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub label: String,
    pub notes: Vec<String>,
    pub results: Vec<MeasureOutcome>,
}

/// Everything `write_reports` put on disk.
#[derive(Debug, Default)]
pub struct WrittenReports {
    pub json: PathBuf,
    pub csv: Vec<PathBuf>,
    pub data_files: Vec<PathBuf>,
    pub mos_stack: Option<PathBuf>,
}

/// Formats an f64 exactly as the CSV and gnuplot files carry it: Rust's
/// shortest representation that round-trips, matching serde_json's output.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes the full report set under `out_dir`.
///
/// A single run keeps a flat layout (report.json, report.csv, *.dat);
/// several runs get one subdirectory per run for the CSV and data files,
/// one shared report.json, and a stacked-bar MOS distribution.
pub fn write_reports(out_dir: &Path, report: &Report) -> io::Result<WrittenReports> {
    fs::create_dir_all(out_dir)?;
    let mut written = WrittenReports::default();

    let json_path = out_dir.join("report.json");
    let mut json_file = BufWriter::new(File::create(&json_path)?);
    serde_json::to_writer_pretty(&mut json_file, report)?;
    json_file.write_all(b"\n")?;
    json_file.flush()?;
    written.json = json_path;

    let single = report.runs.len() == 1;
    for run in &report.runs {
        let run_dir = if single {
            out_dir.to_owned()
        } else {
            out_dir.join(&run.label)
        };
        fs::create_dir_all(&run_dir)?;

        let csv_path = run_dir.join("report.csv");
        write_csv(&csv_path, &run.results)?;
        written.csv.push(csv_path);

        for outcome in &run.results {
            let Some(result) = outcome.as_computed() else {
                continue;
            };
            let rows: Vec<(String, String)> = match &result.data {
                MetricData::Value(_) => continue,
                MetricData::Series(points) => points
                    .iter()
                    .map(|&(x, y)| (fmt_f64(x), fmt_f64(y)))
                    .collect(),
                MetricData::Histogram(bins) => bins
                    .iter()
                    .map(|&(x, n)| (fmt_f64(x), n.to_string()))
                    .collect(),
            };
            let dat_path = run_dir.join(format!("{}_{}.dat", result.meter, result.name));
            let mut dat = BufWriter::new(File::create(&dat_path)?);
            writeln!(dat, "# {} {}", result.name, result.units)?;
            for (x, y) in rows {
                writeln!(dat, "{x} {y}")?;
            }
            dat.flush()?;
            written.data_files.push(dat_path);
        }
    }

    if report.runs.len() > 1 {
        written.mos_stack = write_mos_stack(out_dir, &report.runs)?;
    }

    Ok(written)
}

/// Flattened CSV: `measure,name,kind,x,y`. Scalars leave x empty; series
/// and histograms emit one row per point. Only computed results appear —
/// skips and failures are JSON-only records.
fn write_csv(path: &Path, results: &[MeasureOutcome]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "measure,name,kind,x,y")?;
    for outcome in results {
        let Some(result) = outcome.as_computed() else {
            continue;
        };
        let meter = result.meter.to_string();
        match &result.data {
            MetricData::Value(v) => {
                writeln!(out, "{meter},{},value,,{}", result.name, fmt_f64(*v))?;
            }
            MetricData::Series(points) => {
                for &(x, y) in points {
                    writeln!(
                        out,
                        "{meter},{},series,{},{}",
                        result.name,
                        fmt_f64(x),
                        fmt_f64(y)
                    )?;
                }
            }
            MetricData::Histogram(bins) => {
                for &(x, n) in bins {
                    writeln!(out, "{meter},{},histogram,{},{n}", result.name, fmt_f64(x))?;
                }
            }
        }
    }
    out.flush()
}

/// Per-run MOS level percentages for a stacked-bar plot: one row per run
/// with a computed MOS series, columns = % of frames at MOS 1..=5.
fn write_mos_stack(out_dir: &Path, runs: &[RunReport]) -> io::Result<Option<PathBuf>> {
    let mut rows = Vec::new();
    for run in runs {
        let Some(series) = run.results.iter().find_map(|outcome| {
            outcome
                .as_computed()
                .filter(|r| r.name == "mos")
                .and_then(|r| match &r.data {
                    MetricData::Series(points) => Some(points),
                    _ => None,
                })
        }) else {
            continue;
        };
        if series.is_empty() {
            continue;
        }
        let mut counts = [0usize; 5];
        for &(_, mos) in series {
            let level = (mos.round() as usize).clamp(1, 5);
            counts[level - 1] += 1;
        }
        let total = series.len() as f64;
        let pct: Vec<String> = counts
            .iter()
            .map(|&c| fmt_f64(c as f64 / total * 100.0))
            .collect();
        rows.push(format!("\"{}\" {}", run.label, pct.join(" ")));
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let path = out_dir.join("mos_stack.dat");
    let mut out = BufWriter::new(File::create(&path)?);
    writeln!(out, "# run mos1_pct mos2_pct mos3_pct mos4_pct mos5_pct")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(Some(path))
}
