//! Square-root-Hann STFT analysis and overlap-add synthesis.

use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type C64 = Complex64;

/// Framing parameters. The FFT length equals the window length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub shift_ms: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_ms: 32.0,
            shift_ms: 16.0,
        }
    }
}

impl StftConfig {
    pub fn new(sample_rate: u32, window_ms: f64, shift_ms: f64) -> Result<Self> {
        let cfg = Self {
            sample_rate,
            window_ms,
            shift_ms,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn samples(&self, ms: f64) -> Result<usize> {
        let n = self.sample_rate as f64 * ms / 1000.0;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::ConfigError(format!(
                "{ms} ms is not an integer number of samples at {} Hz",
                self.sample_rate
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.samples(self.window_ms)?;
        let h = self.samples(self.shift_ms)?;
        if n < 2 || h > n || n % h != 0 {
            return Err(Error::ConfigError(format!(
                "shift of {h} samples must divide the window length {n}"
            )));
        }
        cola_norm(&sqrt_hann(n), h).map(|_| ())
    }

    pub fn window_len(&self) -> usize {
        (self.sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn shift(&self) -> usize {
        (self.sample_rate as f64 * self.shift_ms / 1000.0).round() as usize
    }

    pub fn num_bins(&self) -> usize {
        self.window_len() / 2 + 1
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.window_len() as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.num_bins()).map(|k| self.bin_frequency(k)).collect()
    }

    /// Number of frames needed to cover `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        let n = self.window_len();
        let h = self.shift();
        if len <= n {
            1
        } else {
            (len - n).div_ceil(h) + 1
        }
    }

    /// Index of the frame whose window is centred closest to `sample`.
    pub fn frame_of_sample(&self, sample: usize) -> usize {
        let half = self.window_len() / 2;
        (sample.saturating_sub(half) + self.shift() / 2) / self.shift()
    }
}

/// Periodic square-root Hann window.
pub fn sqrt_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).sqrt())
        .collect()
}

/// Constant value of `Σⱼ w²(t + j·hop)`, or an error if it is not constant.
fn cola_norm(window: &[f64], hop: usize) -> Result<f64> {
    let sums: Vec<f64> = (0..hop)
        .map(|t| window.iter().skip(t).step_by(hop).map(|w| w * w).sum())
        .collect();
    let first = sums[0];
    if first <= 0.0 || sums.iter().any(|s| (s - first).abs() > 1e-12 * first) {
        return Err(Error::ConfigError(
            "analysis·synthesis window does not overlap-add to a constant".into(),
        ));
    }
    Ok(first)
}

/// Multichannel STFT coefficients, stored frame-major with the channels of
/// one (bin, frame) cell contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    num_bins: usize,
    num_frames: usize,
    channels: usize,
    data: Vec<C64>,
    signal_len: Option<usize>,
}

impl Spectrogram {
    pub fn zeros(num_bins: usize, num_frames: usize, channels: usize) -> Self {
        assert!(num_bins > 0 && num_frames > 0 && channels > 0);
        Self {
            num_bins,
            num_frames,
            channels,
            data: vec![C64::new(0.0, 0.0); num_bins * num_frames * channels],
            signal_len: None,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Length of the time signal this was computed from, if known.
    pub fn signal_len(&self) -> Option<usize> {
        self.signal_len
    }

    pub fn set_signal_len(&mut self, len: Option<usize>) {
        self.signal_len = len;
    }

    #[inline]
    fn offset(&self, bin: usize, frame: usize) -> usize {
        (frame * self.num_bins + bin) * self.channels
    }

    #[inline]
    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> C64 {
        self.data[self.offset(bin, frame) + channel]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, bin: usize, frame: usize, value: C64) {
        let o = self.offset(bin, frame);
        self.data[o + channel] = value;
    }

    /// All channels of one time-frequency cell.
    #[inline]
    pub fn vector(&self, bin: usize, frame: usize) -> &[C64] {
        let o = self.offset(bin, frame);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn vector_mut(&mut self, bin: usize, frame: usize) -> &mut [C64] {
        let o = self.offset(bin, frame);
        let d = self.channels;
        &mut self.data[o..o + d]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// Single-channel spectrogram of one channel.
    pub fn channel(&self, channel: usize) -> Spectrogram {
        assert!(channel < self.channels);
        let mut out = Spectrogram::zeros(self.num_bins, self.num_frames, 1);
        out.signal_len = self.signal_len;
        for (o, chunk) in out.data.iter_mut().zip(self.data.chunks_exact(self.channels)) {
            *o = chunk[channel];
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    /// Element-wise sum; shapes must match.
    pub fn add_assign(&mut self, other: &Spectrogram) -> Result<()> {
        if (self.num_bins, self.num_frames, self.channels)
            != (other.num_bins, other.num_frames, other.channels)
        {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// Total `Σ |X|²` over all cells and channels.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Reusable analysis/synthesis engine for one configuration.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    norm: f64,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.window_len();
        let window = sqrt_hann(n);
        let norm = cola_norm(&window, cfg.shift())?;
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            cfg,
            window,
            norm,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// One-sided STFT of every channel. Frames start at sample 0; the tail is
    /// zero-padded so that every sample falls in at least one frame.
    pub fn analyze<S: AsRef<[f64]>>(&self, signal: &[S]) -> Result<Spectrogram> {
        let channels = signal.len();
        if channels == 0 {
            return Err(Error::InvalidInput("no channels".into()));
        }
        let len = signal[0].as_ref().len();
        if signal.iter().any(|c| c.as_ref().len() != len) {
            return Err(Error::InvalidInput("channels differ in length".into()));
        }
        let n = self.cfg.window_len();
        let h = self.cfg.shift();
        if len < n {
            return Err(Error::InvalidInput(format!(
                "signal of {len} samples is shorter than one window ({n})"
            )));
        }
        let frames = self.cfg.num_frames(len);
        let bins = self.cfg.num_bins();
        let mut spec = Spectrogram::zeros(bins, frames, channels);
        spec.signal_len = Some(len);

        let mut buf = self.forward.make_input_vec();
        let mut out = self.forward.make_output_vec();
        let mut scratch = self.forward.make_scratch_vec();
        for (ch, x) in signal.iter().enumerate() {
            let x = x.as_ref();
            for i in 0..frames {
                let start = i * h;
                for (t, b) in buf.iter_mut().enumerate() {
                    *b = x.get(start + t).copied().unwrap_or(0.0) * self.window[t];
                }
                self.forward
                    .process_with_scratch(&mut buf, &mut out, &mut scratch)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                for (k, v) in out.iter().enumerate() {
                    spec.set(ch, k, i, *v);
                }
            }
        }
        Ok(spec)
    }

    /// Weighted overlap-add resynthesis. The output is trimmed to the original
    /// signal length when the spectrogram records it.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<Vec<f64>>> {
        let n = self.cfg.window_len();
        let h = self.cfg.shift();
        if spec.num_bins != self.cfg.num_bins() {
            return Err(Error::ConfigError(format!(
                "spectrogram has {} bins, configuration expects {}",
                spec.num_bins,
                self.cfg.num_bins()
            )));
        }
        let full = (spec.num_frames - 1) * h + n;
        let len = spec.signal_len.unwrap_or(full);
        if len > full {
            return Err(Error::ConfigError("recorded signal length exceeds frame coverage".into()));
        }

        let mut spectrum = self.inverse.make_input_vec();
        let mut frame = self.inverse.make_output_vec();
        let mut scratch = self.inverse.make_scratch_vec();
        let scale = 1.0 / (n as f64 * self.norm);
        let mut output = Vec::with_capacity(spec.channels);
        for ch in 0..spec.channels {
            let mut y = vec![0.0; full];
            for i in 0..spec.num_frames {
                for (k, s) in spectrum.iter_mut().enumerate() {
                    *s = spec.get(ch, k, i);
                }
                // A real frame has real DC and Nyquist coefficients.
                spectrum[0].im = 0.0;
                if n % 2 == 0 {
                    let last = spectrum.len() - 1;
                    spectrum[last].im = 0.0;
                }
                self.inverse
                    .process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                let start = i * h;
                for (t, v) in frame.iter().enumerate() {
                    y[start + t] += v * self.window[t] * scale;
                }
            }
            y.truncate(len);
            output.push(y);
        }
        Ok(output)
    }
}

pub fn analyze<S: AsRef<[f64]>>(signal: &[S], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.analyze(signal)
}

pub fn synthesize(spec: &Spectrogram, cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    Stft::new(*cfg)?.synthesize(spec)
}
