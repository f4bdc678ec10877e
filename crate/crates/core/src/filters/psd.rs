use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};
use crate::stft::Spectrogram;

type C64 = Complex64;

/// Non-negative value per (bin, frame), stored frame-major like
/// [`Spectrogram`].
#[derive(Clone, Debug, PartialEq)]
pub struct PowerGrid {
    num_bins: usize,
    num_frames: usize,
    data: Vec<f64>,
}

impl PowerGrid {
    pub fn zeros(num_bins: usize, num_frames: usize) -> Self {
        Self::filled(num_bins, num_frames, 0.0)
    }

    pub fn filled(num_bins: usize, num_frames: usize, value: f64) -> Self {
        Self {
            num_bins,
            num_frames,
            data: vec![value; num_bins * num_frames],
        }
    }

    /// Same per-bin value in every frame.
    pub fn from_bins(values: &[f64], num_frames: usize) -> Self {
        let mut g = Self::zeros(values.len(), num_frames);
        for frame in g.data.chunks_mut(values.len().max(1)) {
            frame.copy_from_slice(values);
        }
        g
    }

    /// `|X|²` of one channel.
    pub fn periodogram(spec: &Spectrogram, channel: usize) -> Self {
        let mut g = Self::zeros(spec.num_bins(), spec.num_frames());
        for i in 0..spec.num_frames() {
            for k in 0..spec.num_bins() {
                g.set(k, i, spec.get(channel, k, i).norm_sqr());
            }
        }
        g
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    #[inline]
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.num_bins + bin]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, value: f64) {
        self.data[frame * self.num_bins + bin] = value;
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.data[frame * self.num_bins..(frame + 1) * self.num_bins]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }

    fn check_shape(&self, bins: usize, frames: usize) -> Result<()> {
        if self.num_bins != bins {
            return Err(Error::DimensionMismatch {
                expected: bins,
                got: self.num_bins,
            });
        }
        if self.num_frames != frames {
            return Err(Error::DimensionMismatch {
                expected: frames,
                got: self.num_frames,
            });
        }
        Ok(())
    }
}

/// Temporal cepstrum smoothing parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CepstralSmoothing {
    pub sample_rate: u32,
    /// Quefrencies up to this (in seconds) describe the spectral envelope.
    pub envelope_quefrency: f64,
    pub alpha_envelope: f64,
    pub alpha_pitch: f64,
    pub alpha_fine: f64,
    /// Smoothing of the per-quefrency constants themselves.
    pub beta: f64,
    /// Pitch search range in seconds.
    pub pitch_range: (f64, f64),
    /// Minimum cepstral peak accepted as pitch.
    pub pitch_threshold: f64,
    /// Lower bound of the ML estimate relative to the noise power in the
    /// same bin.
    pub ml_floor: f64,
    /// Added to the log spectrum after smoothing.
    pub log_bias: f64,
    /// Output floor relative to the mean noise power.
    pub floor: f64,
}

impl CepstralSmoothing {
    pub fn new(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            envelope_quefrency: 0.5e-3,
            alpha_envelope: 0.5,
            alpha_pitch: 0.2,
            alpha_fine: 0.97,
            beta: 0.96,
            pitch_range: (2.5e-3, 20e-3),
            pitch_threshold: 0.2,
            ml_floor: 10f64.powf(-1.5),
            log_bias: 0.0,
            floor: 1e-6,
        }
    }
}

struct Cepstrum {
    n: usize,
    to_cep: Arc<dyn ComplexToReal<f64>>,
    from_cep: Arc<dyn RealToComplex<f64>>,
    half: Vec<C64>,
    full: Vec<f64>,
}

impl Cepstrum {
    fn new(num_bins: usize) -> Self {
        let n = 2 * (num_bins - 1);
        let mut planner = RealFftPlanner::<f64>::new();
        Self {
            n,
            to_cep: planner.plan_fft_inverse(n),
            from_cep: planner.plan_fft_forward(n),
            half: vec![C64::new(0.0, 0.0); num_bins],
            full: vec![0.0; n],
        }
    }

    fn forward(&mut self, log_spec: &[f64], out: &mut [f64]) {
        for (h, l) in self.half.iter_mut().zip(log_spec) {
            *h = C64::new(*l, 0.0);
        }
        self.to_cep
            .process(&mut self.half, &mut self.full)
            .expect("cepstrum buffer sizes");
        let n = self.n as f64;
        for (o, c) in out.iter_mut().zip(&self.full) {
            *o = c / n;
        }
    }

    fn inverse(&mut self, cep: &[f64], log_spec: &mut [f64]) {
        self.full.copy_from_slice(cep);
        self.from_cep
            .process(&mut self.full, &mut self.half)
            .expect("cepstrum buffer sizes");
        for (l, h) in log_spec.iter_mut().zip(&self.half) {
            *l = h.re;
        }
    }
}

/// Speech power by temporal cepstrum smoothing of the maximum-likelihood
/// estimate `max(|X|² − σₙ², floor)`.
///
/// `noisy` is a single-channel spectrogram (the beamformer output or a
/// reference microphone); `noise_psd` the noise power in that channel.
pub fn estimate_speech_psd(noisy: &Spectrogram, noise_psd: &PowerGrid, cfg: &CepstralSmoothing) -> Result<PowerGrid> {
    let (bins, frames) = (noisy.num_bins(), noisy.num_frames());
    noise_psd.check_shape(bins, frames)?;
    if bins < 3 {
        return Err(Error::InvalidInput("cepstral smoothing needs at least 3 bins".into()));
    }
    let mut floor = cfg.floor * noise_psd.mean();
    if !(floor > 0.0) {
        floor = (cfg.floor * 1e-6 * PowerGrid::periodogram(noisy, 0).mean()).max(f64::MIN_POSITIVE);
    }
    let mut cep = Cepstrum::new(bins);
    let n = cep.n;
    let fs = cfg.sample_rate as f64;
    let q_env = (cfg.envelope_quefrency * fs).round() as usize;
    let q_lo = ((cfg.pitch_range.0 * fs).round() as usize).max(q_env + 2);
    let q_hi = ((cfg.pitch_range.1 * fs).round() as usize).min(n / 2 - 1);
    let base_alpha: Vec<f64> = (0..=n / 2)
        .map(|q| if q <= q_env { cfg.alpha_envelope } else { cfg.alpha_fine })
        .collect();

    let mut out = PowerGrid::zeros(bins, frames);
    let mut log_spec = vec![0.0; bins];
    let mut raw = vec![0.0; n];
    let mut smooth = vec![0.0; n];
    let mut alpha_smooth = base_alpha.clone();
    let mut alpha = base_alpha.clone();
    for i in 0..frames {
        for (k, l) in log_spec.iter_mut().enumerate() {
            let n = noise_psd.get(k, i);
            let ml = noisy.get(0, k, i).norm_sqr() - n;
            *l = ml.max(cfg.ml_floor * n).max(floor).ln();
        }
        cep.forward(&log_spec, &mut raw);

        alpha.copy_from_slice(&base_alpha);
        if q_lo < q_hi {
            let (q_pitch, peak) = (q_lo..=q_hi)
                .map(|q| (q, raw[q]))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty pitch range");
            if peak > cfg.pitch_threshold {
                for q in q_pitch.saturating_sub(1)..=(q_pitch + 1).min(n / 2) {
                    alpha[q] = cfg.alpha_pitch;
                }
            }
        }
        for q in 0..n {
            let qq = q.min(n - q);
            if i == 0 {
                smooth[q] = raw[q];
            } else {
                if q <= n / 2 {
                    alpha_smooth[q] = cfg.beta * alpha_smooth[q] + (1.0 - cfg.beta) * alpha[q];
                }
                let a = alpha_smooth[qq];
                smooth[q] = a * smooth[q] + (1.0 - a) * raw[q];
            }
        }
        cep.inverse(&smooth, &mut log_spec);
        for (k, l) in log_spec.iter().enumerate() {
            out.set(k, i, (l + cfg.log_bias).exp().max(floor));
        }
    }
    Ok(out)
}

/// First-order recursive smoothing of `|S|²` for a known clean signal.
pub fn oracle_speech_psd(clean: &Spectrogram, alpha: f64) -> PowerGrid {
    let mut out = PowerGrid::periodogram(clean, 0);
    for i in 1..out.num_frames {
        for k in 0..out.num_bins {
            let v = alpha * out.get(k, i - 1) + (1.0 - alpha) * out.get(k, i);
            out.set(k, i, v);
        }
    }
    out
}

pub const ORACLE_SMOOTHING: f64 = 0.72;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::{Stft, StftConfig};

    #[test]
    fn stationary_noise_hits_floor() {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x: Vec<f64> = (0..16_000).map(|n| ((n * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let spec = stft.analyze(&[&x]).unwrap();
        let noise = PowerGrid::periodogram(&spec, 0);
        let cfg = CepstralSmoothing {
            ml_floor: 0.0,
            ..CepstralSmoothing::new(16_000)
        };
        let out = estimate_speech_psd(&spec, &noise, &cfg).unwrap();
        let floor = 1e-6 * noise.mean();
        for v in out.as_slice() {
            assert!((v - floor).abs() <= 1e-9 * floor, "{v} vs {floor}");
        }
    }

    #[test]
    fn silent_input_settles_at_relative_floor() {
        let spec = Spectrogram::zeros(257, 40, 1);
        let noise = PowerGrid::filled(257, 40, 0.3);
        let cfg = CepstralSmoothing::new(16_000);
        let out = estimate_speech_psd(&spec, &noise, &cfg).unwrap();
        let expected = cfg.ml_floor * 0.3;
        for v in out.as_slice() {
            assert!((v - expected).abs() <= 1e-9 * expected, "{v} vs {expected}");
        }
    }

    #[test]
    fn stationary_voiced_power_preserved() {
        let fs = 16_000.0;
        let stft = Stft::new(StftConfig::default()).unwrap();
        let x: Vec<f64> = (0..32_000)
            .map(|n| {
                let t = n as f64 / fs;
                (1..30).map(|h| (2.0 * std::f64::consts::PI * 125.0 * h as f64 * t).sin() / h as f64).sum()
            })
            .collect();
        let spec = stft.analyze(&[&x]).unwrap();
        let zero = PowerGrid::zeros(spec.num_bins(), spec.num_frames());
        let out = estimate_speech_psd(&spec, &zero, &CepstralSmoothing::new(16_000)).unwrap();
        let input = PowerGrid::periodogram(&spec, 0);
        for i in 10..spec.num_frames() - 2 {
            let a: f64 = out.frame(i).iter().sum();
            let b: f64 = input.frame(i).iter().sum();
            assert!((a / b - 1.0).abs() < 0.2, "frame {i}: {a} vs {b}");
        }
    }

    #[test]
    fn oracle_recursion() {
        let mut s = Spectrogram::zeros(2, 3, 1);
        s.set(0, 0, 0, C64::new(1.0, 0.0));
        s.set(0, 0, 1, C64::new(0.0, 2.0));
        let p = oracle_speech_psd(&s, ORACLE_SMOOTHING);
        assert_eq!(p.get(0, 0), 1.0);
        assert!((p.get(0, 1) - (0.72 + 0.28 * 4.0)).abs() < 1e-15);
        assert!((p.get(0, 2) - 0.72 * (0.72 + 0.28 * 4.0)).abs() < 1e-15);
        assert_eq!(p.get(1, 2), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let s = Spectrogram::zeros(257, 4, 1);
        assert!(estimate_speech_psd(&s, &PowerGrid::zeros(257, 5), &CepstralSmoothing::new(16_000)).is_err());
    }
}
