use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::em::{em_fit, mix_seed, EmOptions};
use super::mixture::ComplexGaussianMixture;
use crate::error::{Error, Result};
use crate::numerics::HermitianMatrix;
use crate::stft::{Spectrogram, StftConfig};

type C64 = Complex64;

pub const SCHEMA_VERSION: u32 = 1;

/// Segmentation used by [`em_fit_windowed`].
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedFitConfig {
    /// Segment length; `f64::INFINITY` fits one model to the whole signal.
    pub window_ms: f64,
    /// Fractional overlap of consecutive segments, in `[0, 1)`.
    pub overlap: f64,
    pub components: usize,
    pub em: EmOptions,
}

impl WindowedFitConfig {
    pub fn whole_signal(components: usize, em: EmOptions) -> Self {
        Self {
            window_ms: f64::INFINITY,
            overlap: 0.0,
            components,
            em,
        }
    }
}

/// Mixtures for every bin, valid for frames `start_frame..end_frame`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseWindow {
    pub start_frame: usize,
    pub end_frame: usize,
    pub bins: Vec<ComplexGaussianMixture>,
}

impl NoiseWindow {
    /// Twice the centre frame, so that ties stay integral.
    fn doubled_center(&self) -> usize {
        self.start_frame + self.end_frame.max(self.start_frame + 1) - 1
    }
}

/// Time-varying per-bin noise mixtures. Frame `i` uses the window whose
/// centre is nearest (the earlier one on ties).
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    sample_rate: u32,
    dim: usize,
    windows: Vec<NoiseWindow>,
}

impl NoiseModel {
    pub fn new(sample_rate: u32, windows: Vec<NoiseWindow>) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidInput("noise model without windows".into()))?;
        let num_bins = first.bins.len();
        let dim = first
            .bins
            .first()
            .map(|m| m.dim())
            .ok_or_else(|| Error::InvalidInput("noise model without bins".into()))?;
        for w in &windows {
            if w.bins.len() != num_bins {
                return Err(Error::DimensionMismatch {
                    expected: num_bins,
                    got: w.bins.len(),
                });
            }
            if let Some(m) = w.bins.iter().find(|m| m.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.dim(),
                });
            }
        }
        Ok(Self {
            sample_rate,
            dim,
            windows,
        })
    }

    /// One time-invariant mixture per bin.
    pub fn stationary(sample_rate: u32, bins: Vec<ComplexGaussianMixture>) -> Result<Self> {
        Self::new(
            sample_rate,
            vec![NoiseWindow {
                start_frame: 0,
                end_frame: 0,
                bins,
            }],
        )
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_bins(&self) -> usize {
        self.windows[0].bins.len()
    }

    pub fn windows(&self) -> &[NoiseWindow] {
        &self.windows
    }

    pub fn window_index(&self, frame: usize) -> usize {
        if self.windows.len() == 1 {
            return 0;
        }
        let f2 = 2 * frame;
        self.windows
            .iter()
            .enumerate()
            .min_by_key(|(_, w)| w.doubled_center().abs_diff(f2))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn mixture(&self, bin: usize, frame: usize) -> &ComplexGaussianMixture {
        &self.windows[self.window_index(frame)].bins[bin]
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            schema_version: SCHEMA_VERSION,
            sample_rate: self.sample_rate,
            dim: self.dim,
            windows: self
                .windows
                .iter()
                .map(|w| WindowDoc {
                    start_frame: w.start_frame,
                    end_frame: w.end_frame,
                    bins: w.bins.iter().map(BinDoc::from_mixture).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported schema version {}",
                doc.schema_version
            )));
        }
        let windows = doc
            .windows
            .into_iter()
            .map(|w| {
                Ok(NoiseWindow {
                    start_frame: w.start_frame,
                    end_frame: w.end_frame,
                    bins: w.bins.into_iter().map(|b| b.into_mixture(doc.dim)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        let model = Self::new(doc.sample_rate, windows)?;
        if model.dim != doc.dim {
            return Err(Error::DimensionMismatch {
                expected: doc.dim,
                got: model.dim,
            });
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema_version: u32,
    sample_rate: u32,
    dim: usize,
    windows: Vec<WindowDoc>,
}

#[derive(Serialize, Deserialize)]
struct WindowDoc {
    start_frame: usize,
    end_frame: usize,
    bins: Vec<BinDoc>,
}

#[derive(Serialize, Deserialize)]
struct BinDoc {
    weights: Vec<f64>,
    /// Row-major `[re, im]` entries, one list per component.
    covariances: Vec<Vec<[f64; 2]>>,
}

impl BinDoc {
    fn from_mixture(m: &ComplexGaussianMixture) -> Self {
        Self {
            weights: m.weights().to_vec(),
            covariances: m
                .covariances()
                .iter()
                .map(|c| c.as_slice().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    fn into_mixture(self, dim: usize) -> Result<ComplexGaussianMixture> {
        let covariances = self
            .covariances
            .into_iter()
            .map(|entries| {
                if entries.len() != dim * dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim * dim,
                        got: entries.len(),
                    });
                }
                HermitianMatrix::from_row_major(dim, entries.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            })
            .collect::<Result<_>>()?;
        ComplexGaussianMixture::new(self.weights, covariances)
    }
}

/// Frame ranges of the analysis segments for a signal of `num_frames` frames.
pub fn window_ranges(num_frames: usize, frames_per_window: usize, overlap: f64) -> Vec<(usize, usize)> {
    if frames_per_window >= num_frames {
        return vec![(0, num_frames)];
    }
    let hop = ((frames_per_window as f64 * (1.0 - overlap)).round() as usize).max(1);
    let mut ranges = Vec::new();
    let mut start = 0;
    while start + frames_per_window < num_frames {
        ranges.push((start, start + frames_per_window));
        start += hop;
    }
    ranges.push((num_frames - frames_per_window, num_frames));
    ranges
}

/// Fits an independent mixture to every (segment, bin) of a noise-only
/// spectrogram.
pub fn em_fit_windowed(noise: &Spectrogram, stft: &StftConfig, cfg: &WindowedFitConfig) -> Result<NoiseModel> {
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::ConfigError(format!("overlap {} outside [0, 1)", cfg.overlap)));
    }
    if !(cfg.window_ms > 0.0) {
        return Err(Error::ConfigError(format!("window length {} ms", cfg.window_ms)));
    }
    let num_frames = noise.num_frames();
    let dim = noise.channels();
    let frames_per_window = if cfg.window_ms.is_finite() {
        (cfg.window_ms / stft.shift_ms).round() as usize
    } else {
        num_frames
    };
    let needed = cfg.components * dim;
    if frames_per_window.min(num_frames) < needed {
        return Err(Error::InvalidInput(format!(
            "segments of {} frames cannot support {} components of dimension {dim}",
            frames_per_window.min(num_frames),
            cfg.components
        )));
    }
    let ranges = window_ranges(num_frames, frames_per_window, cfg.overlap);
    let num_bins = noise.num_bins();
    let jobs: Vec<(usize, usize)> = (0..ranges.len())
        .flat_map(|w| (0..num_bins).map(move |k| (w, k)))
        .collect();
    let fits: Vec<ComplexGaussianMixture> = jobs
        .par_iter()
        .map(|&(w, k)| {
            let (start, end) = ranges[w];
            let frames: Vec<&[C64]> = (start..end).map(|i| noise.vector(k, i)).collect();
            let opts = EmOptions {
                seed: mix_seed(cfg.em.seed, (w * num_bins + k) as u64),
                ..cfg.em.clone()
            };
            em_fit(&frames, cfg.components, &opts).map(|f| f.mixture)
        })
        .collect::<Result<_>>()?;
    let mut fits = fits.into_iter();
    let windows = ranges
        .iter()
        .map(|&(start_frame, end_frame)| NoiseWindow {
            start_frame,
            end_frame,
            bins: fits.by_ref().take(num_bins).collect(),
        })
        .collect();
    NoiseModel::new(stft.sample_rate, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisemodel::mixture::{sample, ComplexGaussianMixture};

    fn stationary_noise(frames: usize, bins: usize, seed: u64) -> Spectrogram {
        let cov = HermitianMatrix::from_fn(2, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.3, 0.2 * (j as f64 - i as f64)) });
        let x = sample(&ComplexGaussianMixture::single(cov), frames * bins, seed).unwrap();
        let mut s = Spectrogram::zeros(bins, frames, 2);
        for (n, v) in x.into_iter().enumerate() {
            s.vector_mut(n % bins, n / bins).copy_from_slice(&v);
        }
        s
    }

    #[test]
    fn ranges_cover_signal() {
        assert_eq!(window_ranges(10, 16, 0.5), vec![(0, 10)]);
        assert_eq!(window_ranges(40, 16, 0.5), vec![(0, 16), (8, 24), (16, 32), (24, 40)]);
        assert_eq!(window_ranges(41, 16, 0.5), vec![(0, 16), (8, 24), (16, 32), (24, 40), (25, 41)]);
    }

    #[test]
    fn nearest_window_lookup() {
        let bins = vec![ComplexGaussianMixture::single(HermitianMatrix::identity(1))];
        let windows = window_ranges(40, 16, 0.5)
            .into_iter()
            .map(|(s, e)| NoiseWindow {
                start_frame: s,
                end_frame: e,
                bins: bins.clone(),
            })
            .collect();
        let m = NoiseModel::new(16_000, windows).unwrap();
        // centres at 7.5, 15.5, 23.5, 31.5
        assert_eq!(m.window_index(0), 0);
        assert_eq!(m.window_index(11), 0);
        assert_eq!(m.window_index(12), 1);
        assert_eq!(m.window_index(39), 3);
    }

    #[test]
    fn stationary_windows_agree() {
        let stft = StftConfig::default();
        let noise = stationary_noise(2000, 2, 4);
        let cfg = WindowedFitConfig {
            window_ms: 16_000.0,
            overlap: 0.0,
            components: 1,
            em: EmOptions::default(),
        };
        let model = em_fit_windowed(&noise, &stft, &cfg).unwrap();
        assert_eq!(model.windows().len(), 2);
        for k in 0..2 {
            let a = &model.windows()[0].bins[k].covariances()[0];
            let b = &model.windows()[1].bins[k].covariances()[0];
            assert!(a.frobenius_distance(b) / a.frobenius_norm() < 0.1);
        }
    }

    #[test]
    fn short_window_rejected() {
        let noise = stationary_noise(100, 1, 1);
        let cfg = WindowedFitConfig {
            window_ms: 48.0,
            overlap: 0.5,
            components: 3,
            em: EmOptions::default(),
        };
        assert!(matches!(
            em_fit_windowed(&noise, &StftConfig::default(), &cfg),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let noise = stationary_noise(64, 3, 2);
        let cfg = WindowedFitConfig {
            window_ms: 256.0,
            overlap: 0.5,
            components: 2,
            em: EmOptions {
                restarts: 1,
                ..EmOptions::default()
            },
        };
        let model = em_fit_windowed(&noise, &StftConfig::default(), &cfg).unwrap();
        let back = NoiseModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.windows().len(), model.windows().len());
        for (a, b) in back.windows().iter().zip(model.windows()) {
            for (x, y) in a.bins.iter().zip(&b.bins) {
                for (p, q) in x.covariances().iter().zip(y.covariances()) {
                    assert!(p.frobenius_distance(q) <= 1e-12 * q.frobenius_norm());
                }
            }
        }
        assert!(NoiseModel::from_json("{\"schema_version\":9}").is_err());
    }
}
