//! Array geometry, far-field steering vectors, diffuse-field coherence and
//! beam directivity.
//!
//! Angles are measured in the array plane from the positive x axis. Linear
//! arrays are laid out along x, so `π/2` is broadside.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::HermitianMatrix;
use crate::stft::{Spectrogram, Stft, StftConfig};

type C64 = Complex64;

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Broadside direction of a linear array.
pub const BROADSIDE: f64 = PI / 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    mic_positions: Vec<[f64; 3]>,
    speed_of_sound: f64,
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Result<Self> {
        if mic_positions.len() < 2 {
            return Err(Error::ConfigError("an array needs at least two microphones".into()));
        }
        if !(speed_of_sound > 0.0) {
            return Err(Error::ConfigError("speed of sound must be positive".into()));
        }
        for (i, p) in mic_positions.iter().enumerate() {
            for q in &mic_positions[i + 1..] {
                if distance(p, q) == 0.0 {
                    return Err(Error::ConfigError("microphone positions must be distinct".into()));
                }
            }
        }
        Ok(Self {
            mic_positions,
            speed_of_sound,
        })
    }

    /// Uniform linear array along the x axis, first microphone at the origin.
    pub fn linear(count: usize, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::ConfigError("spacing must be positive".into()));
        }
        Self::new(
            (0..count).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect(),
            SPEED_OF_SOUND,
        )
    }

    /// Parses `linear:<count>x<spacing_m>`, e.g. `linear:2x0.06`.
    pub fn parse(spec: &str) -> Result<Self> {
        let body = spec
            .strip_prefix("linear:")
            .ok_or_else(|| Error::ConfigError(format!("unknown geometry '{spec}'")))?;
        let (count, spacing) = body
            .split_once('x')
            .ok_or_else(|| Error::ConfigError(format!("expected linear:<count>x<spacing>, got '{spec}'")))?;
        let count: usize = count
            .parse()
            .map_err(|_| Error::ConfigError(format!("bad microphone count in '{spec}'")))?;
        let spacing: f64 = spacing
            .parse()
            .map_err(|_| Error::ConfigError(format!("bad spacing in '{spec}'")))?;
        Self::linear(count, spacing)
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.mic_positions
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    /// Arrival delay of a plane wave from `angle` at each microphone,
    /// relative to the first microphone.
    pub fn delays(&self, angle: f64) -> Vec<f64> {
        let u = [angle.cos(), angle.sin(), 0.0];
        let p0 = self.mic_positions[0];
        self.mic_positions
            .iter()
            .map(|p| {
                let proj: f64 = (0..3).map(|i| (p[i] - p0[i]) * u[i]).sum();
                -proj / self.speed_of_sound
            })
            .collect()
    }
}

fn distance(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    (0..3).map(|i| (p[i] - q[i]).powi(2)).sum::<f64>().sqrt()
}

/// Far-field, delay-only steering vector `exp(−j·2π·f·τₗ)`.
pub fn steering_vector(geometry: &ArrayGeometry, angle: f64, frequency: f64) -> Vec<C64> {
    geometry
        .delays(angle)
        .into_iter()
        .map(|tau| C64::from_polar(1.0, -2.0 * PI * frequency * tau))
        .collect()
}

/// Unnormalized sinc, `sin(x)/x`.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Spherically isotropic noise coherence blended with a fraction of spatially
/// white noise, normalized to unit diagonal.
pub fn diffuse_covariance(geometry: &ArrayGeometry, frequency: f64, white_fraction: f64) -> HermitianMatrix {
    assert!((0.0..=1.0).contains(&white_fraction), "white fraction must lie in [0, 1]");
    let pos = geometry.positions();
    let c = geometry.speed_of_sound();
    let d = pos.len();
    let mut m = HermitianMatrix::from_fn(d, |i, j| {
        let gamma = sinc(2.0 * PI * frequency * distance(&pos[i], &pos[j]) / c);
        let white = if i == j { 1.0 } else { 0.0 };
        C64::new((1.0 - white_fraction) * gamma + white_fraction * white, 0.0)
    });
    // diagonal is already (1 − w) + w
    let diag = m.get(0, 0).re;
    m.scale_in_place(1.0 / diag);
    m
}

/// STFT of a mono source, with every bin multiplied by the steering vector
/// of `angle` at that bin's frequency.
pub fn spatialize(stft: &Stft, source: &[f64], geometry: &ArrayGeometry, angle: f64) -> Result<Spectrogram> {
    if source.is_empty() {
        return Err(Error::InvalidInput("empty source signal".into()));
    }
    let mono = stft.analyze(&[source])?;
    let cfg = stft.config();
    let d = geometry.num_mics();
    let mut out = Spectrogram::zeros(mono.num_bins(), mono.num_frames(), d);
    out.set_signal_len(mono.signal_len());
    for k in 0..mono.num_bins() {
        let steer = steering_vector(geometry, angle, cfg.bin_frequency(k));
        for i in 0..mono.num_frames() {
            let s = mono.get(0, k, i);
            for (dst, a) in out.vector_mut(k, i).iter_mut().zip(&steer) {
                *dst = a * s;
            }
        }
    }
    Ok(out)
}

/// Target plus interferers around a microphone array.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub target_angle: f64,
    pub interferer_angles: Vec<f64>,
    pub snr_db: f64,
    pub stft: StftConfig,
}

impl Scenario {
    pub fn new(
        geometry: ArrayGeometry,
        target_angle: f64,
        interferer_angles: Vec<f64>,
        snr_db: f64,
        stft: StftConfig,
    ) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::ConfigError("SNR must be finite".into()));
        }
        if interferer_angles.iter().any(|a| !(0.0..2.0 * PI).contains(a)) {
            return Err(Error::ConfigError("interferer angles must lie in [0, 2π)".into()));
        }
        stft.validate()?;
        Ok(Self {
            geometry,
            target_angle,
            interferer_angles,
            snr_db,
            stft,
        })
    }

    pub fn target_steering(&self, frequency: f64) -> Vec<C64> {
        steering_vector(&self.geometry, self.target_angle, frequency)
    }
}

/// `count` sources evenly spread on a circle starting at `π/6`:
/// `θᵢ = π/6 + 2π·i/count`, wrapped into `[0, 2π)`.
pub fn interferer_ring(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (PI / 6.0 + 2.0 * PI * i as f64 / count as f64).rem_euclid(2.0 * PI))
        .collect()
}

/// Angle grid over `[0, 2π)` with 1° resolution.
pub fn degree_grid() -> Vec<f64> {
    (0..360).map(|d| (d as f64).to_radians()).collect()
}

/// Beamformer power response in dB over a (frequency, angle) grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectivityPattern {
    pub angles: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// `20·log₁₀|wᴴd|`, frequency-major.
    pub gains_db: Vec<f64>,
}

impl DirectivityPattern {
    pub fn gain(&self, freq_index: usize, angle_index: usize) -> f64 {
        self.gains_db[freq_index * self.angles.len() + angle_index]
    }

    pub fn row(&self, freq_index: usize) -> &[f64] {
        let n = self.angles.len();
        &self.gains_db[freq_index * n..(freq_index + 1) * n]
    }

    /// Per-angle response averaged in the power domain over frequencies in
    /// `[f_lo, f_hi]`, returned in dB.
    pub fn band_average(&self, f_lo: f64, f_hi: f64) -> Vec<f64> {
        let rows: Vec<usize> = (0..self.frequencies.len())
            .filter(|&f| (f_lo..=f_hi).contains(&self.frequencies[f]))
            .collect();
        (0..self.angles.len())
            .map(|a| {
                let mean = rows
                    .iter()
                    .map(|&f| 10f64.powf(self.gain(f, a) / 10.0))
                    .sum::<f64>()
                    / rows.len().max(1) as f64;
                10.0 * mean.max(1e-30).log10()
            })
            .collect()
    }

    /// CSV with columns `frequency_hz,angle_deg,gain_db`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frequency_hz,angle_deg,gain_db")?;
        for (fi, f) in self.frequencies.iter().enumerate() {
            for (ai, a) in self.angles.iter().enumerate() {
                writeln!(w, "{},{},{:.6}", f, round_deg(a.to_degrees()), self.gain(fi, ai))?;
            }
        }
        Ok(())
    }
}

fn round_deg(d: f64) -> f64 {
    (d * 1e6).round() / 1e6
}

/// Evaluates `20·log₁₀|w(f)ᴴ d(θ, f)|` on the grid; `weights` supplies the
/// beamformer weights per frequency.
pub fn directivity<F>(
    weights: F,
    geometry: &ArrayGeometry,
    angle_grid: &[f64],
    freq_grid: &[f64],
) -> Result<DirectivityPattern>
where
    F: Fn(f64) -> Result<Vec<C64>>,
{
    let mut gains_db = Vec::with_capacity(angle_grid.len() * freq_grid.len());
    for &f in freq_grid {
        let w = weights(f)?;
        if w.len() != geometry.num_mics() {
            return Err(Error::DimensionMismatch {
                expected: geometry.num_mics(),
                got: w.len(),
            });
        }
        for &theta in angle_grid {
            let d = steering_vector(geometry, theta, f);
            let resp: C64 = w.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
            gains_db.push(20.0 * resp.norm().max(1e-15).log10());
        }
    }
    Ok(DirectivityPattern {
        angles: angle_grid.to_vec(),
        frequencies: freq_grid.to_vec(),
        gains_db,
    })
}
