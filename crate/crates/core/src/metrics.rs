//! Segmental scale-invariant SDR, SIR and SAR.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores are clamped to `±CAP_DB`, so a perfect estimate reports `CAP_DB`.
pub const CAP_DB: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub sample_rate: u32,
    pub segment_ms: f64,
    /// Segments whose target energy lies more than this many dB below the
    /// mean segment energy are skipped.
    pub activity_threshold_db: f64,
}

impl MetricsConfig {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            segment_ms: 10.0,
            activity_threshold_db: 30.0,
        }
    }

    fn segment_len(&self) -> Result<usize> {
        let n = (self.sample_rate as f64 * self.segment_ms / 1000.0).round() as usize;
        if n == 0 {
            return Err(Error::ConfigError(format!("segment of {} ms is empty", self.segment_ms)));
        }
        Ok(n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentScores {
    pub start: usize,
    pub si_sdr: f64,
    pub si_sir: f64,
    pub si_sar: f64,
}

/// Means over the active segments of one signal, plus the per-segment values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub si_sdr: f64,
    pub si_sir: f64,
    pub si_sar: f64,
    pub segment_count: usize,
    pub segments: Vec<SegmentScores>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ratio_db(num: f64, den: f64) -> f64 {
    let v = if den <= 0.0 {
        CAP_DB
    } else if num <= 0.0 {
        -CAP_DB
    } else {
        10.0 * (num / den).log10()
    };
    v.clamp(-CAP_DB, CAP_DB)
}

/// Scores of one segment. `interference` may be all zeros, in which case the
/// whole residual counts as artifacts.
pub fn segment_scores(estimate: &[f64], target: &[f64], interference: &[f64]) -> Result<(f64, f64, f64)> {
    let ss = dot(target, target);
    if !(ss > 0.0) {
        return Err(Error::InvalidInput("segment without target energy".into()));
    }
    let alpha = dot(estimate, target) / ss;
    let e_target: f64 = alpha * alpha * ss;
    let residual: f64 = estimate.iter().zip(target).map(|(e, s)| (e - alpha * s).powi(2)).sum();
    let si_sdr = ratio_db(e_target, residual);

    // Least squares onto span{s, n}: the part of the residual explained by
    // the interference reference.
    let sn = dot(target, interference);
    let nn = dot(interference, interference);
    let det = ss * nn - sn * sn;
    let (a, b) = if nn > 0.0 && det > 1e-12 * ss * nn {
        let es = dot(estimate, target);
        let en = dot(estimate, interference);
        ((es * nn - en * sn) / det, (en * ss - es * sn) / det)
    } else {
        (alpha, 0.0)
    };
    let mut interf = 0.0;
    let mut artif = 0.0;
    for ((e, s), n) in estimate.iter().zip(target).zip(interference) {
        let proj = a * s + b * n;
        interf += (proj - alpha * s).powi(2);
        artif += (e - proj).powi(2);
    }
    Ok((si_sdr, ratio_db(e_target, interf), ratio_db(e_target, artif)))
}

/// Segmental SI-SDR/SIR/SAR of `estimate` against `target`, with
/// `interference` the noise-only reference at the same point.
pub fn si_sdr_segmental(
    estimate: &[f64],
    target: &[f64],
    interference: &[f64],
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    if estimate.len() != target.len() || interference.len() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: if estimate.len() != target.len() { estimate.len() } else { interference.len() },
        });
    }
    let seg = cfg.segment_len()?;
    let count = target.len() / seg;
    if count == 0 {
        return Err(Error::InvalidInput("signal shorter than one segment".into()));
    }
    let energies: Vec<f64> = target.chunks_exact(seg).map(|c| dot(c, c)).collect();
    let mean_energy = energies.iter().sum::<f64>() / count as f64;
    let threshold = mean_energy * 10f64.powf(-cfg.activity_threshold_db / 10.0);

    let mut segments = Vec::new();
    for (j, &energy) in energies.iter().enumerate() {
        if !(energy > 0.0 && energy >= threshold) {
            continue;
        }
        let r = j * seg..(j + 1) * seg;
        let (si_sdr, si_sir, si_sar) = segment_scores(&estimate[r.clone()], &target[r.clone()], &interference[r])?;
        segments.push(SegmentScores {
            start: j * seg,
            si_sdr,
            si_sir,
            si_sar,
        });
    }
    if segments.is_empty() {
        return Err(Error::InvalidInput("no segment with target activity".into()));
    }
    let n = segments.len() as f64;
    let mean = |f: fn(&SegmentScores) -> f64| segments.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        si_sdr: mean(|s| s.si_sdr),
        si_sir: mean(|s| s.si_sir),
        si_sar: mean(|s| s.si_sar),
        segment_count: segments.len(),
        segments,
    })
}

/// Mean and half-width of the normal-approximation 95 % confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                ci95: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, ci95 }
    }

    /// Summary of the paired differences `a[i] − b[i]`.
    pub fn paired_delta(a: &[f64], b: &[f64]) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::of(&d)
    }
}

/// One line of the `method,metric,mean,ci95` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub ci95: f64,
}

impl MetricRow {
    pub fn new(method: impl Into<String>, metric: impl Into<String>, summary: Summary) -> Self {
        Self {
            method: method.into(),
            metric: metric.into(),
            mean: summary.mean,
            ci95: summary.ci95,
        }
    }
}

pub const CSV_HEADER: &str = "method,metric,mean,ci95";

pub fn write_csv<W: Write>(mut w: W, rows: &[MetricRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{:.6},{:.6}", r.method, r.metric, r.mean, r.ci95)?;
    }
    Ok(())
}
