//! Speech-like test signals: voiced syllables with a gliding pitch and
//! formant resonances, noisy fricatives and pauses.
//!
//! The generator stands in for a speech corpus. What matters for the
//! experiments is the time-frequency sparsity of speech (harmonic combs,
//! onsets, silence), not intelligibility.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Second-order resonator (constant peak gain band-pass).
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        Self {
            b0: 1.0 - r,
            a1: 2.0 * r * theta.cos(),
            a2: -r * r,
            z1: 0.0,
            z2: 0.0,
        }
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.a1 * self.z1 + self.a2 * self.z2;
        self.z2 = self.z1;
        self.z1 = y;
        y
    }
}

/// Raised-cosine attack/release envelope over `n` samples.
fn envelope(n: usize, ramp: usize) -> impl Fn(usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    move |t| {
        if t < ramp {
            0.5 - 0.5 * (PI * t as f64 / ramp as f64).cos()
        } else if t >= n - ramp {
            0.5 - 0.5 * (PI * (n - t) as f64 / ramp as f64).cos()
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeechSynth {
    pub sample_rate: u32,
    /// Mean fundamental frequency; individual syllables vary around it.
    pub mean_f0: f64,
}

impl SpeechSynth {
    pub fn new(sample_rate: u32, mean_f0: f64) -> Self {
        Self { sample_rate, mean_f0 }
    }

    /// Alternates between a low and a high voice depending on `seed`.
    pub fn for_seed(sample_rate: u32, seed: u64) -> Self {
        Self::new(sample_rate, if seed % 2 == 0 { 115.0 } else { 205.0 })
    }

    /// `duration_s` seconds of signal normalized to unit RMS.
    pub fn utterance(&self, duration_s: f64, seed: u64) -> Vec<f64> {
        let fs = self.sample_rate as f64;
        let total = (duration_s * fs).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(total + fs as usize);
        // lead-in silence
        out.resize((rng.gen_range(0.05..0.2) * fs) as usize, 0.0);
        while out.len() < total {
            let r: f64 = rng.gen();
            if r < 0.68 {
                self.voiced(&mut rng, &mut out);
            } else if r < 0.86 {
                self.fricative(&mut rng, &mut out);
            } else {
                let gap = (rng.gen_range(0.08..0.35) * fs) as usize;
                out.resize(out.len() + gap, 0.0);
            }
            // short gap between syllables
            let gap = (rng.gen_range(0.01..0.06) * fs) as usize;
            out.resize(out.len() + gap, 0.0);
        }
        out.truncate(total);
        let tail = ((0.02 * fs) as usize).min(total);
        let fade = envelope(2 * tail, tail);
        for (t, v) in out[total - tail..].iter_mut().enumerate() {
            *v *= fade(tail + t);
        }
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / total.max(1) as f64).sqrt();
        if rms > 0.0 {
            out.iter_mut().for_each(|v| *v /= rms);
        }
        out
    }

    fn voiced(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let fs = self.sample_rate as f64;
        let n = (rng.gen_range(0.09..0.32) * fs) as usize;
        let f_start = self.mean_f0 * rng.gen_range(0.85..1.2);
        let f_end = f_start * rng.gen_range(0.75..1.1);
        let formants = [
            (rng.gen_range(300.0..850.0), 80.0),
            (rng.gen_range(900.0..2300.0), 110.0),
            (rng.gen_range(2400.0..3200.0), 160.0),
        ];
        let mut res: Vec<Resonator> = formants.iter().map(|&(f, b)| Resonator::new(f, b, fs)).collect();
        let gains = [1.0, rng.gen_range(0.4..0.9), rng.gen_range(0.15..0.4)];
        let level = rng.gen_range(0.4..1.0);
        let env = envelope(n, (0.025 * fs) as usize);
        let mut phase = 0.0;
        let nyquist = fs / 2.0;
        for t in 0..n {
            let f0 = f_start + (f_end - f_start) * t as f64 / n as f64;
            phase += 2.0 * PI * f0 / fs;
            if phase > 2.0 * PI {
                phase -= 2.0 * PI;
            }
            let harmonics = ((nyquist * 0.9) / f0) as usize;
            let mut src = 0.0;
            for h in 1..=harmonics.min(60) {
                src += (h as f64 * phase).sin() / (h as f64).sqrt();
            }
            src += 0.02 * rng.sample::<f64, _>(StandardNormal);
            let y: f64 = res.iter_mut().zip(&gains).map(|(r, g)| g * r.process(src)).sum();
            out.push(level * env(t) * y);
        }
    }

    fn fricative(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let fs = self.sample_rate as f64;
        let n = (rng.gen_range(0.05..0.16) * fs) as usize;
        let centre = rng.gen_range(2500.0f64..6000.0).min(0.45 * fs);
        let mut res = Resonator::new(centre, rng.gen_range(800.0..2000.0), fs);
        let level = rng.gen_range(0.15..0.45);
        let env = envelope(n, (0.015 * fs) as usize);
        for t in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            out.push(level * env(t) * res.process(x) * 3.0);
        }
    }
}
