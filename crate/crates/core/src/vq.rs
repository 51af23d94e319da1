//! Picture-quality metrics on aligned raw videos: per-frame PSNR and SSIM
//! over the luma plane, PSNR→MOS mapping, MOS→DIV mapping, and the G.1070
//! video-quality estimate driven by bitrate, frame rate and packet loss.
//!
//! Both video metrics require the received and reference videos to be
//! aligned first (same frame count and geometry); use the decoder's
//! first-GOP dismissal to align streams that lost their head.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rawvideo::{FrameBuffer, RawVideo};

/// SSIM window: 11×11 Gaussian, σ = 1.5, the canonical parameters.
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// PSNR reported for a bit-identical luma plane (MSE = 0).
pub const PSNR_CLAMP_DB: f64 = 100.0;

#[derive(Debug, Error)]
pub enum VqError {
    #[error("frame counts differ: received {rx}, reference {reference} (align the streams first)")]
    FrameCountMismatch { rx: usize, reference: usize },
    #[error(
        "geometry differs: received {rx_width}x{rx_height}, reference {ref_width}x{ref_height}"
    )]
    GeometryMismatch {
        rx_width: u32,
        rx_height: u32,
        ref_width: u32,
        ref_height: u32,
    },
    #[error("{width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    FrameTooSmall { width: u32, height: u32 },
    #[error("MOS series lengths differ: received {rx}, reference {reference}")]
    MosLengthMismatch { rx: usize, reference: usize },
    #[error("interval count must be at least 1")]
    BadIntervalCount,
    #[error("MOS table thresholds must be finite and strictly descending: {0}")]
    BadMosTable(String),
    #[error("G.1070 input {name} = {value} is out of range")]
    G1070Input { name: &'static str, value: f64 },
    #[error("G.1070 invariant violated: {quantity} = {value}")]
    G1070Invariant { quantity: &'static str, value: f64 },
}

fn check_aligned(rx: &RawVideo, reference: &RawVideo) -> Result<(), VqError> {
    if rx.width != reference.width || rx.height != reference.height {
        return Err(VqError::GeometryMismatch {
            rx_width: rx.width,
            rx_height: rx.height,
            ref_width: reference.width,
            ref_height: reference.height,
        });
    }
    if rx.frames.len() != reference.frames.len() {
        return Err(VqError::FrameCountMismatch {
            rx: rx.frames.len(),
            reference: reference.frames.len(),
        });
    }
    Ok(())
}

fn luma_mse(a: &FrameBuffer, b: &FrameBuffer) -> f64 {
    let sum: u64 = a
        .y_plane()
        .iter()
        .zip(b.y_plane())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    sum as f64 / a.y_plane().len() as f64
}

/// Per-frame luma PSNR in dB against an 8-bit peak of 255; identical frames
/// (MSE = 0) clamp to [`PSNR_CLAMP_DB`] to keep the series plottable.
pub fn psnr_series(rx: &RawVideo, reference: &RawVideo) -> Result<Vec<f64>, VqError> {
    check_aligned(rx, reference)?;
    Ok(rx
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(a, b)| {
            let mse = luma_mse(a, b);
            if mse == 0.0 {
                PSNR_CLAMP_DB
            } else {
                10.0 * (255.0f64 * 255.0 / mse).log10()
            }
        })
        .collect())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut kernel = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, tap) in kernel.iter_mut().enumerate() {
        let d = i as f64 - center;
        *tap = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *tap;
    }
    for tap in &mut kernel {
        *tap /= sum;
    }
    kernel
}

/// Valid-region separable convolution: rows then columns, output
/// (w − 10) × (h − 10).
fn blur_valid(src: &[f64], width: usize, height: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out_w = width - SSIM_WINDOW + 1;
    let out_h = height - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; out_w * height];
    for y in 0..height {
        let src_row = &src[y * width..(y + 1) * width];
        let dst_row = &mut rows[y * out_w..(y + 1) * out_w];
        for (x, dst) in dst_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * src_row[x + i];
            }
            *dst = acc;
        }
    }
    let mut out = vec![0.0; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * rows[(y + i) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

fn ssim_frame(a: &FrameBuffer, b: &FrameBuffer, kernel: &[f64; SSIM_WINDOW]) -> f64 {
    let width = a.width() as usize;
    let height = a.height() as usize;
    let x: Vec<f64> = a.y_plane().iter().map(|&v| f64::from(v)).collect();
    let y: Vec<f64> = b.y_plane().iter().map(|&v| f64::from(v)).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();

    let mu_x = blur_valid(&x, width, height, kernel);
    let mu_y = blur_valid(&y, width, height, kernel);
    let s_xx = blur_valid(&xx, width, height, kernel);
    let s_yy = blur_valid(&yy, width, height, kernel);
    let s_xy = blur_valid(&xy, width, height, kernel);

    let mut total = 0.0;
    for i in 0..mu_x.len() {
        let var_x = s_xx[i] - mu_x[i] * mu_x[i];
        let var_y = s_yy[i] - mu_y[i] * mu_y[i];
        let cov = s_xy[i] - mu_x[i] * mu_y[i];
        let numerator = (2.0 * mu_x[i] * mu_y[i] + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let denominator =
            (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + SSIM_C1) * (var_x + var_y + SSIM_C2);
        total += numerator / denominator;
    }
    total / mu_x.len() as f64
}

/// Per-frame mean SSIM over the luma plane: 11×11 normalized Gaussian
/// window (σ = 1.5), stride 1, valid region only.
pub fn ssim_series(rx: &RawVideo, reference: &RawVideo) -> Result<Vec<f64>, VqError> {
    check_aligned(rx, reference)?;
    if (rx.width as usize) < SSIM_WINDOW || (rx.height as usize) < SSIM_WINDOW {
        return Err(VqError::FrameTooSmall {
            width: rx.width,
            height: rx.height,
        });
    }
    let kernel = gaussian_kernel();
    Ok(rx
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(a, b)| ssim_frame(a, b, &kernel))
        .collect())
}

/// PSNR→MOS lookup table. Thresholds are configurable; the comparison
/// structure is fixed: > excellent → 5, ≥ good → 4, ≥ fair → 3, ≥ poor → 2,
/// else 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosTable {
    pub excellent: f64,
    pub good: f64,
    pub fair: f64,
    pub poor: f64,
}

impl Default for MosTable {
    fn default() -> Self {
        Self {
            excellent: 37.0,
            good: 31.0,
            fair: 25.0,
            poor: 20.0,
        }
    }
}

impl MosTable {
    pub fn validate(&self) -> Result<(), VqError> {
        let t = [self.excellent, self.good, self.fair, self.poor];
        if t.iter().any(|v| !v.is_finite()) || !(t[0] > t[1] && t[1] > t[2] && t[2] > t[3]) {
            return Err(VqError::BadMosTable(format!(
                "excellent {} / good {} / fair {} / poor {}",
                t[0], t[1], t[2], t[3]
            )));
        }
        Ok(())
    }

    pub fn mos_from_psnr(&self, psnr: f64) -> u8 {
        if psnr > self.excellent {
            5
        } else if psnr >= self.good {
            4
        } else if psnr >= self.fair {
            3
        } else if psnr >= self.poor {
            2
        } else {
            1
        }
    }

    pub fn mos_series(&self, psnr: &[f64]) -> Vec<u8> {
        psnr.iter().map(|&p| self.mos_from_psnr(p)).collect()
    }
}

/// Fraction of frames whose received MOS fell below the reference MOS.
pub fn div_from_mos(rx_mos: &[u8], ref_mos: &[u8]) -> Result<f64, VqError> {
    if rx_mos.len() != ref_mos.len() {
        return Err(VqError::MosLengthMismatch {
            rx: rx_mos.len(),
            reference: ref_mos.len(),
        });
    }
    if rx_mos.is_empty() {
        return Ok(0.0);
    }
    let degraded = rx_mos.iter().zip(ref_mos).filter(|(r, f)| r < f).count();
    Ok(degraded as f64 / rx_mos.len() as f64)
}

/// DIV per interval: the frame series is cut into `k` equal spans of the
/// presentation timeline and the degraded fraction computed per span.
/// Empty spans report 0 with an annotation.
pub fn div_intervals(
    rx_mos: &[u8],
    ref_mos: &[u8],
    k: usize,
) -> Result<(Vec<f64>, Vec<String>), VqError> {
    if k == 0 {
        return Err(VqError::BadIntervalCount);
    }
    if rx_mos.len() != ref_mos.len() {
        return Err(VqError::MosLengthMismatch {
            rx: rx_mos.len(),
            reference: ref_mos.len(),
        });
    }
    let n = rx_mos.len();
    let mut series = Vec::with_capacity(k);
    let mut annotations = Vec::new();
    for interval in 0..k {
        let lo = interval * n / k;
        let hi = (interval + 1) * n / k;
        if lo == hi {
            series.push(0.0);
            annotations.push(format!(
                "interval {interval}: no frames; degraded fraction reported as 0"
            ));
        } else {
            series.push(div_from_mos(&rx_mos[lo..hi], &ref_mos[lo..hi])?);
        }
    }
    Ok((series, annotations))
}

/// Model coefficients plus the operating point (bitrate in kbit/s, frame
/// rate in frames/s, packet loss in percent) for the G.1070 video-quality
/// estimate. Coefficient values are codec- and format-dependent and come
/// from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G1070Coefficients {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub v5: f64,
    pub v6: f64,
    pub v7: f64,
    pub v8: f64,
    pub v9: f64,
    pub v10: f64,
    pub v11: f64,
    pub v12: f64,
    /// Video bitrate, kbit/s (taken from the session when analyzed).
    #[serde(default)]
    pub br_v: f64,
    /// Video frame rate, frames/s.
    #[serde(default)]
    pub fr_v: f64,
    /// Packet loss, percent.
    #[serde(default)]
    pub ppl_v: f64,
}

/// Derived quantities of the G.1070 evaluation, kept for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G1070Outcome {
    pub o_fr: f64,
    pub i_ofr: f64,
    pub d_frv: f64,
    pub d_pplv: f64,
    pub i_coding: f64,
    pub vq: f64,
}

/// Evaluates the G.1070 video-quality chain:
///
/// ```text
/// O_fr    = v1 + v2·Br_v                     (optimal frame rate)
/// I_Ofr   = v3 − v3/(1 + (Br_v/v4)^v5)       (quality ceiling at O_fr)
/// D_FrV   = v6 + v7·Br_v                     (frame-rate robustness)
/// I_coding = I_Ofr · exp(−(ln Fr_v − ln O_fr)² / (2·D_FrV²))
/// D_PplV  = v10 + v11·e^(−Fr_v/v8) + v12·e^(−Br_v/v9)  (loss robustness)
/// Vq      = 1 + I_coding·e^(−Ppl_v/D_PplV)
/// ```
///
/// Coefficient sets whose derived quantities leave the model's validity
/// ranges (1 ≤ O_fr ≤ 30, 0 ≤ I_Ofr ≤ 4, D_FrV > 0, D_PplV > 0) are
/// rejected with the offending quantity named.
pub fn g1070_vq(c: &G1070Coefficients) -> Result<G1070Outcome, VqError> {
    if !(c.br_v.is_finite() && c.br_v > 0.0) {
        return Err(VqError::G1070Input {
            name: "Br_v",
            value: c.br_v,
        });
    }
    if !(c.fr_v.is_finite() && c.fr_v > 0.0) {
        return Err(VqError::G1070Input {
            name: "Fr_v",
            value: c.fr_v,
        });
    }
    if !(c.ppl_v.is_finite() && c.ppl_v >= 0.0) {
        return Err(VqError::G1070Input {
            name: "Ppl_v",
            value: c.ppl_v,
        });
    }

    let o_fr = c.v1 + c.v2 * c.br_v;
    if !(o_fr >= 1.0 && o_fr <= 30.0) {
        return Err(VqError::G1070Invariant {
            quantity: "O_fr",
            value: o_fr,
        });
    }
    let i_ofr = c.v3 - c.v3 / (1.0 + (c.br_v / c.v4).powf(c.v5));
    if !(i_ofr >= 0.0 && i_ofr <= 4.0) {
        return Err(VqError::G1070Invariant {
            quantity: "I_Ofr",
            value: i_ofr,
        });
    }
    let d_frv = c.v6 + c.v7 * c.br_v;
    if !(d_frv > 0.0) {
        return Err(VqError::G1070Invariant {
            quantity: "D_FrV",
            value: d_frv,
        });
    }
    let d_pplv = c.v10 + c.v11 * (-c.fr_v / c.v8).exp() + c.v12 * (-c.br_v / c.v9).exp();
    if !(d_pplv > 0.0) {
        return Err(VqError::G1070Invariant {
            quantity: "D_PplV",
            value: d_pplv,
        });
    }

    let ln_ratio = c.fr_v.ln() - o_fr.ln();
    let i_coding = i_ofr * (-(ln_ratio * ln_ratio) / (2.0 * d_frv * d_frv)).exp();
    let vq = 1.0 + i_coding * (-c.ppl_v / d_pplv).exp();
    Ok(G1070Outcome {
        o_fr,
        i_ofr,
        d_frv,
        d_pplv,
        i_coding,
        vq,
    })
}
