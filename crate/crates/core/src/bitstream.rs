//! Bitstream measures: framing structure of received and reference streams,
//! GOP-size estimation with atypical-value rejection, and I-frame loss
//! detection from oversized GOP distances.
//!
//! A lost I-frame fuses two GOPs: the frame-number distance between the
//! surrounding received I-frames roughly doubles. The estimator first takes
//! mean and population standard deviation of all observed distances, keeps
//! only values inside [μ−σ, μ+σ], and averages those; distances above μ+σ
//! are counted as I-frame losses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{EncodedStream, FrameType};

#[derive(Debug, Error)]
pub enum BsError {
    #[error("GOP observation needs at least 2 received I-frames, got {0}")]
    TooFewIFrames(usize),
    #[error("GOP list is empty")]
    EmptyGops,
}

/// One framing entry: a received frame's number, type and serialized size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramingEntry {
    pub frame_number: u32,
    pub frame_type: FrameType,
    pub size: usize,
}

/// Frame-by-frame structure of a (possibly gappy) stream, in stream order.
pub fn framing_structure(stream: &EncodedStream) -> Vec<FramingEntry> {
    stream
        .frames
        .iter()
        .map(|frame| FramingEntry {
            frame_number: frame.frame_number,
            frame_type: frame.frame_type,
            size: frame.size(),
        })
        .collect()
}

/// Observed GOP lengths: frame-number distances between consecutive
/// received I-frames. Needs at least two I-frames.
pub fn observed_gops(structure: &[FramingEntry]) -> Result<Vec<u64>, BsError> {
    let i_frames: Vec<u32> = structure
        .iter()
        .filter(|entry| entry.frame_type == FrameType::I)
        .map(|entry| entry.frame_number)
        .collect();
    if i_frames.len() < 2 {
        return Err(BsError::TooFewIFrames(i_frames.len()));
    }
    Ok(i_frames
        .windows(2)
        .map(|w| u64::from(w[1]) - u64::from(w[0]))
        .collect())
}

/// GOP-size estimate after discarding atypical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GopEstimate {
    pub mean: f64,
    /// Population standard deviation of the observed distances.
    pub std_dev: f64,
    /// Mean of the values inside [mean − std_dev, mean + std_dev].
    pub estimate: f64,
    /// True when every value was atypical and the full mean was used.
    pub fallback: bool,
}

fn mean_and_std(gops: &[u64]) -> (f64, f64) {
    let n = gops.len() as f64;
    let mean = gops.iter().map(|&g| g as f64).sum::<f64>() / n;
    let variance = gops.iter().map(|&g| (g as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, variance.sqrt())
}

/// Estimates the GOP size from observed distances: values outside one
/// population standard deviation of the mean are discarded (the band is
/// closed) and the rest averaged.
pub fn gop_size_estimate(gops: &[u64]) -> Result<GopEstimate, BsError> {
    if gops.is_empty() {
        return Err(BsError::EmptyGops);
    }
    let (mean, std_dev) = mean_and_std(gops);
    let retained: Vec<f64> = gops
        .iter()
        .map(|&g| g as f64)
        .filter(|&g| g >= mean - std_dev && g <= mean + std_dev)
        .collect();
    // With a closed band at least one value is always within one population
    // σ of the mean; the fallback only guards degenerate float rounding.
    if retained.is_empty() {
        return Ok(GopEstimate {
            mean,
            std_dev,
            estimate: mean,
            fallback: true,
        });
    }
    let estimate = retained.iter().sum::<f64>() / retained.len() as f64;
    Ok(GopEstimate {
        mean,
        std_dev,
        estimate,
        fallback: false,
    })
}

/// I-frame loss estimate from oversized GOP distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IFrameLoss {
    /// Number of observed distances strictly above mean + std-dev; each
    /// counts as one lost I-frame even when the distance spans several.
    pub count: usize,
    /// count / (count + received I-frames).
    pub rate: f64,
    /// Stricter count crediting multiple losses to one oversized GOP:
    /// Σ max(round(distance / estimate) − 1, 0) over the oversized ones.
    pub stricter_count: usize,
}

/// Counts an I-frame loss for every GOP distance strictly greater than
/// μ + σ. The rate denominator is losses plus received I-frames (one more
/// than the number of distances).
pub fn iframe_loss(gops: &[u64]) -> Result<IFrameLoss, BsError> {
    let estimate = gop_size_estimate(gops)?;
    let threshold = estimate.mean + estimate.std_dev;
    let oversized: Vec<f64> = gops
        .iter()
        .map(|&g| g as f64)
        .filter(|&g| g > threshold)
        .collect();
    let count = oversized.len();
    let received_i_frames = gops.len() + 1;
    let stricter_count = oversized
        .iter()
        .map(|&g| ((g / estimate.estimate).round() as i64 - 1).max(0) as usize)
        .sum();
    Ok(IFrameLoss {
        count,
        rate: count as f64 / (count + received_i_frames) as f64,
        stricter_count,
    })
}
