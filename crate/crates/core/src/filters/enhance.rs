use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimators::{FilterContext, SpeechPrior};
use super::psd::PowerGrid;
use super::steering::SteeringField;
use crate::error::{Error, Result};
use crate::noisemodel::NoiseModel;
use crate::stft::{Spectrogram, Stft};

type C64 = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Mvdr,
    Mwf,
    MvdrMmse,
    NlMmse,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mvdr, Method::Mwf, Method::MvdrMmse, Method::NlMmse];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mvdr => "mvdr",
            Method::Mwf => "mwf",
            Method::MvdrMmse => "mvdr-mmse",
            Method::NlMmse => "nl-mmse",
        }
    }

    pub fn needs_speech_psd(self) -> bool {
        self != Method::Mvdr
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::ConfigError(format!("unknown method '{s}' (expected mvdr, mwf, mvdr-mmse or nl-mmse)")))
    }
}

/// Inputs shared by every estimator: where the target is and what the noise
/// looks like.
#[derive(Clone, Copy, Debug)]
pub struct EnhanceSetup<'a> {
    pub steering: &'a SteeringField,
    pub noise: &'a NoiseModel,
    pub nu: f64,
}

impl EnhanceSetup<'_> {
    fn check(&self, noisy: &Spectrogram) -> Result<()> {
        if noisy.channels() != self.noise.dim() || self.steering.dim() != self.noise.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.noise.dim(),
                got: noisy.channels(),
            });
        }
        for n in [self.noise.num_bins(), self.steering.num_bins()] {
            if n != noisy.num_bins() {
                return Err(Error::DimensionMismatch {
                    expected: noisy.num_bins(),
                    got: n,
                });
            }
        }
        SpeechPrior::new(self.nu, 0.0).map(|_| ())
    }

    /// Applies `f` to every (bin, frame) with the matching filter context and
    /// collects the single-channel results.
    fn map_cells<F>(&self, noisy: &Spectrogram, f: F) -> Result<Vec<Vec<(C64, f64)>>>
    where
        F: Fn(&FilterContext, usize, usize) -> Result<C64> + Sync,
    {
        self.check(noisy)?;
        (0..noisy.num_bins())
            .into_par_iter()
            .map(|k| {
                let mut key = None;
                let mut ctx: Option<FilterContext> = None;
                (0..noisy.num_frames())
                    .map(|i| {
                        let slot = (self.noise.window_index(i), self.steering.frame_slot(i));
                        if key != Some(slot) {
                            ctx = Some(FilterContext::new(self.steering.get(k, i), self.noise.mixture(k, i))?);
                            key = Some(slot);
                        }
                        let c = ctx.as_ref().expect("context prepared");
                        Ok((f(c, k, i)?, 1.0 / c.aggregate_gain()))
                    })
                    .collect()
            })
            .collect()
    }
}

fn to_spectrogram(noisy: &Spectrogram, cells: &[Vec<(C64, f64)>]) -> (Spectrogram, PowerGrid) {
    let mut out = Spectrogram::zeros(noisy.num_bins(), noisy.num_frames(), 1);
    out.set_signal_len(noisy.signal_len());
    let mut psd = PowerGrid::zeros(noisy.num_bins(), noisy.num_frames());
    for (k, col) in cells.iter().enumerate() {
        for (i, (v, p)) in col.iter().enumerate() {
            out.set(0, k, i, *v);
            psd.set(k, i, *p);
        }
    }
    (out, psd)
}

/// MVDR output together with its residual noise power `1/(dᴴΣₙ⁻¹d)`.
pub fn beamform(noisy: &Spectrogram, setup: &EnhanceSetup) -> Result<(Spectrogram, PowerGrid)> {
    let cells = setup.map_cells(noisy, |ctx, k, i| Ok(ctx.mvdr(noisy.vector(k, i))))?;
    Ok(to_spectrogram(noisy, &cells))
}

/// Single-channel STFT estimate of the target with the chosen estimator.
/// Every method except MVDR needs the speech power per (bin, frame).
pub fn enhance_spectrogram(
    noisy: &Spectrogram,
    setup: &EnhanceSetup,
    speech_psd: Option<&PowerGrid>,
    method: Method,
) -> Result<Spectrogram> {
    let psd = match (method.needs_speech_psd(), speech_psd) {
        (false, _) => None,
        (true, Some(p)) => {
            if p.num_bins() != noisy.num_bins() || p.num_frames() != noisy.num_frames() {
                return Err(Error::DimensionMismatch {
                    expected: noisy.num_bins() * noisy.num_frames(),
                    got: p.num_bins() * p.num_frames(),
                });
            }
            Some(p)
        }
        (true, None) => return Err(Error::InvalidInput(format!("{method} needs a speech power estimate"))),
    };
    let nu = setup.nu;
    let cells = setup.map_cells(noisy, |ctx, k, i| {
        let y = noisy.vector(k, i);
        let s2 = psd.map_or(0.0, |p| p.get(k, i));
        match method {
            Method::Mvdr => Ok(ctx.mvdr(y)),
            Method::Mwf => Ok(ctx.mwf(y, s2)),
            Method::MvdrMmse => ctx.mvdr_postfilter(y, &SpeechPrior::new(nu, s2)?),
            Method::NlMmse => ctx.nonlinear_mmse(y, &SpeechPrior::new(nu, s2)?),
        }
    })?;
    Ok(to_spectrogram(noisy, &cells).0)
}

/// [`enhance_spectrogram`] followed by overlap-add synthesis.
pub fn enhance(
    stft: &Stft,
    noisy: &Spectrogram,
    setup: &EnhanceSetup,
    speech_psd: Option<&PowerGrid>,
    method: Method,
) -> Result<Vec<f64>> {
    let spec = enhance_spectrogram(noisy, setup, speech_psd, method)?;
    Ok(stft.synthesize(&spec)?.swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisemodel::{build_scaled_mixture, sample, ComplexGaussianMixture, ScaledMixtureSpec};
    use crate::spatial::{diffuse_covariance, spatialize, ArrayGeometry, BROADSIDE};
    use crate::stft::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> (Stft, ArrayGeometry, Vec<f64>, NoiseModel) {
        let cfg = StftConfig::default();
        let stft = Stft::new(cfg).unwrap();
        let geom = ArrayGeometry::linear(3, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let speech: Vec<f64> = (0..8000).map(|n| (n as f64 * 0.05).sin() * rng.gen_range(0.5..1.0)).collect();
        let bins = cfg
            .frequencies()
            .iter()
            .map(|&f| {
                build_scaled_mixture(&ScaledMixtureSpec {
                    components: 3,
                    scale: 2.0,
                    base_covariance: diffuse_covariance(&geom, f, 0.05),
                })
                .unwrap()
            })
            .collect();
        (stft, geom, speech, NoiseModel::stationary(16_000, bins).unwrap())
    }

    #[test]
    fn noiseless_mvdr_reconstructs_reference() {
        let (stft, geom, speech, noise) = fixture();
        let clean = spatialize(&stft, &speech, &geom, BROADSIDE).unwrap();
        let steering = SteeringField::from_geometry(&geom, BROADSIDE, stft.config());
        let setup = EnhanceSetup {
            steering: &steering,
            noise: &noise,
            nu: 0.25,
        };
        let out = enhance(&stft, &clean, &setup, None, Method::Mvdr).unwrap();
        assert_eq!(out.len(), speech.len());
        let n = stft.config().window_len();
        let err = out[n..out.len() - n]
            .iter()
            .zip(&speech[n..])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn separation_identity_end_to_end() {
        let (stft, geom, speech, _) = fixture();
        let cfg = *stft.config();
        let mut noisy = spatialize(&stft, &speech, &geom, BROADSIDE).unwrap();
        let bins: Vec<_> = cfg
            .frequencies()
            .iter()
            .map(|&f| ComplexGaussianMixture::single(diffuse_covariance(&geom, f, 0.05).scaled(0.1)))
            .collect();
        for (k, mix) in bins.iter().enumerate() {
            let draws = sample(mix, noisy.num_frames(), k as u64).unwrap();
            for (i, d) in draws.iter().enumerate() {
                for (y, n) in noisy.vector_mut(k, i).iter_mut().zip(d) {
                    *y += n;
                }
            }
        }
        let noise = NoiseModel::stationary(16_000, bins).unwrap();
        let steering = SteeringField::from_geometry(&geom, BROADSIDE, &cfg);
        let setup = EnhanceSetup {
            steering: &steering,
            noise: &noise,
            nu: 0.25,
        };
        let psd = PowerGrid::filled(noisy.num_bins(), noisy.num_frames(), 0.3);
        let a = enhance_spectrogram(&noisy, &setup, Some(&psd), Method::NlMmse).unwrap();
        let b = enhance_spectrogram(&noisy, &setup, Some(&psd), Method::MvdrMmse).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).norm() <= 1e-10 * y.norm().max(1e-12));
        }
    }

    #[test]
    fn zero_input_zero_output() {
        let (stft, _, _, noise) = fixture();
        let zero = stft.analyze(&[vec![0.0; 4000], vec![0.0; 4000], vec![0.0; 4000]]).unwrap();
        let steering = SteeringField::from_geometry(&ArrayGeometry::linear(3, 0.05).unwrap(), BROADSIDE, stft.config());
        let setup = EnhanceSetup {
            steering: &steering,
            noise: &noise,
            nu: 0.25,
        };
        let psd = PowerGrid::filled(zero.num_bins(), zero.num_frames(), 1.0);
        for m in Method::ALL {
            let out = enhance(&stft, &zero, &setup, Some(&psd), m).unwrap();
            assert!(out.iter().all(|v| *v == 0.0), "{m}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("wiener".parse::<Method>().is_err());
    }

    #[test]
    fn missing_psd_is_an_error() {
        let (stft, geom, speech, noise) = fixture();
        let clean = spatialize(&stft, &speech, &geom, BROADSIDE).unwrap();
        let steering = SteeringField::from_geometry(&geom, BROADSIDE, stft.config());
        let setup = EnhanceSetup {
            steering: &steering,
            noise: &noise,
            nu: 0.25,
        };
        assert!(enhance_spectrogram(&clean, &setup, None, Method::NlMmse).is_err());
    }
}
