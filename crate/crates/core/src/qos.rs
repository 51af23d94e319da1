//! QoS measures over per-packet records: latency, inter-arrival time,
//! interarrival jitter, clock skew, instantaneous bandwidth, packet loss
//! rate and packet loss distribution.
//!
//! All operations are pure functions of [`PacketRecord`] lists (sorted by
//! arrival) plus round-trip samples for latency. The loss rate follows the
//! classic estimator literally: the summed sequence gaps are divided by the
//! number of *received* packets, so heavy loss can push the value above the
//! naive lost/sent fraction.

use thiserror::Error;

use crate::trace::PacketRecord;

/// Jitter smoothing gain from the RTP specification (1/16).
const JITTER_GAIN: f64 = 16.0;

#[derive(Debug, Error)]
pub enum QosError {
    #[error("latency needs at least one round-trip sample")]
    NoRttSamples,
    #[error("operation needs at least {needed} packet records, got {got}")]
    TooFewRecords { needed: usize, got: usize },
    #[error("sequence numbers decrease at record {index} ({prev} then {next}); reordered input is rejected")]
    DecreasingSequence { index: usize, prev: u64, next: u64 },
    #[error("interval count must be at least 1")]
    BadIntervalCount,
}

/// One-way latency estimate: half the mean of the round-trip samples.
pub fn latency(rtt_samples: &[f64]) -> Result<f64, QosError> {
    if rtt_samples.is_empty() {
        return Err(QosError::NoRttSamples);
    }
    Ok(rtt_samples.iter().sum::<f64>() / rtt_samples.len() as f64 / 2.0)
}

/// Packet inter-arrival times: Δ(i) = R_i − R_{i−1}, one value per packet
/// after the first.
pub fn interarrival(records: &[PacketRecord]) -> Result<Vec<f64>, QosError> {
    if records.len() < 2 {
        return Err(QosError::TooFewRecords {
            needed: 2,
            got: records.len(),
        });
    }
    Ok(records
        .windows(2)
        .map(|w| w[1].arrival - w[0].arrival)
        .collect())
}

/// Interarrival jitter per the RTP estimator: with transit-difference
/// D(i−1,i) = (R_i − R_{i−1}) − (S_i − S_{i−1}),
/// J(0) = 0 and J(i) = J(i−1) + (|D(i−1,i)| − J(i−1))/16.
pub fn jitter(records: &[PacketRecord]) -> Result<Vec<f64>, QosError> {
    if records.len() < 2 {
        return Err(QosError::TooFewRecords {
            needed: 2,
            got: records.len(),
        });
    }
    let mut series = Vec::with_capacity(records.len());
    series.push(0.0);
    let mut j = 0.0;
    for w in records.windows(2) {
        let d = (w[1].arrival - w[0].arrival) - (w[1].rtp_ts - w[0].rtp_ts);
        j += (d.abs() - j) / JITTER_GAIN;
        series.push(j);
    }
    Ok(series)
}

/// Relative clock skew: T(i) = S_i − R_i, shifted so the series starts at 0.
/// Only the evolution is meaningful — the raw offset mixes arbitrary epochs.
pub fn clock_skew(records: &[PacketRecord]) -> Vec<f64> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let t0 = first.rtp_ts - first.arrival;
    records
        .iter()
        .map(|r| (r.rtp_ts - r.arrival) - t0)
        .collect()
}

/// Instantaneous bandwidth in bits/second, reported at each arrival:
/// B(i) = 8 · Σ size over packets with arrival in (R_i − 1.0, R_i].
pub fn bandwidth(records: &[PacketRecord]) -> Vec<f64> {
    let mut series = Vec::with_capacity(records.len());
    let mut window_start = 0usize;
    let mut window_bytes = 0u64;
    for record in records {
        window_bytes += record.size as u64;
        while records[window_start].arrival <= record.arrival - 1.0 {
            window_bytes -= records[window_start].size as u64;
            window_start += 1;
        }
        series.push(window_bytes as f64 * 8.0);
    }
    series
}

/// Summed sequence gaps divided by the received-packet count:
/// PLR = (1/N) · Σ_{n=2..N} (Seq_n − (Seq_{n−1} + 1)).
///
/// Sequence numbers must be unwrapped and non-decreasing; a decrease is a
/// reordering artifact this estimator does not define, so it is rejected.
pub fn plr(records: &[PacketRecord]) -> Result<f64, QosError> {
    if records.len() < 2 {
        return Err(QosError::TooFewRecords {
            needed: 2,
            got: records.len(),
        });
    }
    let mut gaps = 0i64;
    for (index, w) in records.windows(2).enumerate() {
        if w[1].seq < w[0].seq {
            return Err(QosError::DecreasingSequence {
                index: index + 1,
                prev: w[0].seq,
                next: w[1].seq,
            });
        }
        gaps += w[1].seq as i64 - (w[0].seq as i64 + 1);
    }
    Ok(gaps as f64 / records.len() as f64)
}

/// Packet loss distribution: the span [R_first, R_last] is cut into `k`
/// equal intervals and the loss-rate formula is applied to each interval's
/// own packets. Intervals holding fewer than 2 packets report 0 along with
/// an annotation, keeping the series plottable.
pub fn pld(records: &[PacketRecord], k: usize) -> Result<(Vec<f64>, Vec<String>), QosError> {
    if k == 0 {
        return Err(QosError::BadIntervalCount);
    }
    if records.len() < 2 {
        return Err(QosError::TooFewRecords {
            needed: 2,
            got: records.len(),
        });
    }
    let start = records[0].arrival;
    let span = records[records.len() - 1].arrival - start;

    let mut buckets: Vec<Vec<PacketRecord>> = vec![Vec::new(); k];
    for record in records {
        let index = if span > 0.0 {
            (((record.arrival - start) / span) * k as f64).floor() as usize
        } else {
            0
        };
        buckets[index.min(k - 1)].push(*record);
    }

    let mut series = Vec::with_capacity(k);
    let mut annotations = Vec::new();
    for (index, bucket) in buckets.iter().enumerate() {
        if bucket.len() < 2 {
            series.push(0.0);
            annotations.push(format!(
                "interval {index}: {} packet(s), fewer than 2; loss rate reported as 0",
                bucket.len()
            ));
        } else {
            series.push(plr(bucket)?);
        }
    }
    Ok((series, annotations))
}
