use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{lower_mul, HermitianMatrix};

type C64 = Complex64;

/// Zero-mean complex Gaussian mixture for one frequency bin.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGaussianMixture {
    weights: Vec<f64>,
    covariances: Vec<HermitianMatrix>,
}

impl ComplexGaussianMixture {
    /// Weights must be positive and sum to one (within `1e-9`; they are then
    /// renormalized exactly).
    pub fn new(weights: Vec<f64>, covariances: Vec<HermitianMatrix>) -> Result<Self> {
        if weights.is_empty() || weights.len() != covariances.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} covariances",
                weights.len(),
                covariances.len()
            )));
        }
        let dim = covariances[0].dim();
        if let Some(c) = covariances.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidInput("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / total).collect(),
            covariances,
        })
    }

    pub fn single(covariance: HermitianMatrix) -> Self {
        Self {
            weights: vec![1.0],
            covariances: vec![covariance],
        }
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.covariances[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covariances(&self) -> &[HermitianMatrix] {
        &self.covariances
    }

    /// `Σₙ = Σₘ cₘ Σₘ`.
    pub fn aggregate(&self) -> HermitianMatrix {
        let mut agg = HermitianMatrix::zeros(self.dim());
        for (w, c) in self.weights.iter().zip(&self.covariances) {
            agg.add_scaled(c, *w);
        }
        agg
    }

    /// Same mixture with every covariance multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            weights: self.weights.clone(),
            covariances: self.covariances.iter().map(|c| c.scaled(s)).collect(),
        }
    }
}

/// Equal-weight mixture whose components are geometric rescalings of one
/// covariance, normalized so that the aggregate is unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledMixtureSpec {
    pub components: usize,
    pub scale: f64,
    pub base_covariance: HermitianMatrix,
}

impl ScaledMixtureSpec {
    /// `r = Σ cₘ b^(m−1)` with `cₘ = 1/M`.
    pub fn normalization(&self) -> f64 {
        geometric_mean_power(self.components, self.scale, 1)
    }
}

fn geometric_mean_power(components: usize, b: f64, power: i32) -> f64 {
    let m = components as f64;
    (0..components).map(|i| b.powi(power * i as i32)).sum::<f64>() / m
}

/// `Σₘ = b^(m−1)/r · Σₙ`, `cₘ = 1/M`.
pub fn build_scaled_mixture(spec: &ScaledMixtureSpec) -> Result<ComplexGaussianMixture> {
    if spec.components == 0 || !(spec.scale > 0.0 && spec.scale.is_finite()) {
        return Err(Error::InvalidInput("scaled mixture needs M ≥ 1 and b > 0".into()));
    }
    let r = spec.normalization();
    let m = spec.components;
    let covariances = (0..m)
        .map(|i| spec.base_covariance.scaled(spec.scale.powi(i as i32) / r))
        .collect();
    ComplexGaussianMixture::new(vec![1.0 / m as f64; m], covariances)
}

/// Kurtosis factor `q = Σ cₘ b^(2(m−1)) / r²` of an equal-weight scaled
/// mixture relative to a Gaussian.
pub fn kurtosis_factor(components: usize, b: f64) -> f64 {
    assert!(components >= 1 && b > 0.0);
    let r = geometric_mean_power(components, b, 1);
    geometric_mean_power(components, b, 2) / (r * r)
}

/// Kurtosis of a `dim`-variate circular complex Gaussian, `2D(2 + 2D)`.
pub fn gaussian_kurtosis(dim: usize) -> f64 {
    let d = dim as f64;
    2.0 * d * (2.0 + 2.0 * d)
}

/// Draws from a mixture: pick a component by weight, then colour a standard
/// circular complex Gaussian vector with a factor of its covariance.
#[derive(Clone, Debug)]
pub struct MixtureSampler {
    dim: usize,
    cumulative: Vec<f64>,
    factors: Vec<Vec<C64>>,
}

impl MixtureSampler {
    pub fn new(mix: &ComplexGaussianMixture) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative = mix
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let factors = mix
            .covariances()
            .iter()
            .map(|c| c.psd_factor())
            .collect::<Result<_>>()?;
        Ok(Self {
            dim: mix.dim(),
            cumulative,
            factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Returns the component index and the draw.
    pub fn draw_labelled<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<C64>) {
        let u: f64 = rng.gen::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let m = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.cumulative.len() - 1);
        let z: Vec<C64> = (0..self.dim).map(|_| standard_complex(rng)).collect();
        (m, lower_mul(&self.factors[m], self.dim, &z))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        self.draw_labelled(rng).1
    }
}

/// Circular complex Gaussian with unit variance, `E|z|² = 1`.
pub fn standard_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `count` i.i.d. draws, reproducible from `seed`.
pub fn sample(mix: &ComplexGaussianMixture, count: usize, seed: u64) -> Result<Vec<Vec<C64>>> {
    let sampler = MixtureSampler::new(mix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
}

/// Sample version of `E[(2(x−μ)ᴴ C⁻¹ (x−μ))²]` using the sample mean and
/// (biased) sample covariance.
pub fn sample_kurtosis<V: AsRef<[C64]>>(samples: &[V]) -> Result<f64> {
    let n = samples.len();
    let dim = samples
        .first()
        .map(|s| s.as_ref().len())
        .ok_or_else(|| Error::InvalidInput("no samples".into()))?;
    if dim == 0 || n < dim * dim {
        return Err(Error::InvalidInput(format!("need at least {} samples, got {n}", dim * dim)));
    }
    let mut mean = vec![C64::new(0.0, 0.0); dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = HermitianMatrix::zeros(dim);
    let mut raw_power = 0.0;
    let mut centred = vec![C64::new(0.0, 0.0); dim];
    for s in samples {
        for ((c, v), m) in centred.iter_mut().zip(s.as_ref()).zip(&mean) {
            *c = v - m;
            raw_power += v.norm_sqr();
        }
        cov.add_outer(&centred, 1.0 / n as f64);
    }
    // Constant data leaves only rounding noise in the covariance.
    if cov.trace() <= 1e-20 * raw_power / n as f64 {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = cov.cholesky()?;
    let mut acc = 0.0;
    for s in samples {
        for ((c, v), m) in centred.iter_mut().zip(s.as_ref()).zip(&mean) {
            *c = v - m;
        }
        let q = 2.0 * chol.inverse_quadratic(&centred);
        acc += q * q;
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_equals_base() {
        let base = HermitianMatrix::diagonal(&[1.0, 3.0]);
        for b in [0.5, 2.0, 7.0] {
            let mix = build_scaled_mixture(&ScaledMixtureSpec {
                components: 1,
                scale: b,
                base_covariance: base.clone(),
            })
            .unwrap();
            assert_eq!(mix.covariances()[0], base);
        }
    }

    #[test]
    fn two_components_b2() {
        let spec = ScaledMixtureSpec {
            components: 2,
            scale: 2.0,
            base_covariance: HermitianMatrix::identity(2),
        };
        assert!((spec.normalization() - 1.5).abs() < 1e-15);
        let mix = build_scaled_mixture(&spec).unwrap();
        assert!(mix.covariances()[0].frobenius_distance(&HermitianMatrix::identity(2).scaled(1.0 / 1.5)) < 1e-15);
        assert!(mix.covariances()[1].frobenius_distance(&HermitianMatrix::identity(2).scaled(2.0 / 1.5)) < 1e-15);
        assert!(mix.aggregate().frobenius_distance(&HermitianMatrix::identity(2)) < 1e-15);
    }

    #[test]
    fn six_components_aggregate() {
        let base = HermitianMatrix::from_fn(3, |i, j| C64::new(if i == j { 2.0 } else { 0.3 }, 0.1 * (i as f64 - j as f64)));
        let mix = build_scaled_mixture(&ScaledMixtureSpec {
            components: 6,
            scale: 2.0,
            base_covariance: base.clone(),
        })
        .unwrap();
        assert!(mix.aggregate().frobenius_distance(&base) <= 1e-14 * base.frobenius_norm());
    }

    #[test]
    fn kurtosis_factor_values() {
        assert_eq!(kurtosis_factor(1, 2.0), 1.0);
        assert!((kurtosis_factor(2, 2.0) - 2.5 / 2.25).abs() < 1e-15);
        // M = 6, b = 2: r = 63/6, Σ b^(2(m−1))/M = 1365/6
        assert!((kurtosis_factor(6, 2.0) - (1365.0 / 6.0) / (63.0f64 / 6.0).powi(2)).abs() < 1e-14);
        assert!((kurtosis_factor(5, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(gaussian_kurtosis(1), 8.0);
        assert_eq!(gaussian_kurtosis(5), 120.0);
    }

    #[test]
    fn zero_covariance_samples_are_zero() {
        let mix = ComplexGaussianMixture::single(HermitianMatrix::zeros(3));
        let s = sample(&mix, 100, 1).unwrap();
        assert!(s.iter().flatten().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn sampling_is_deterministic() {
        let mix = build_scaled_mixture(&ScaledMixtureSpec {
            components: 3,
            scale: 2.0,
            base_covariance: HermitianMatrix::identity(2),
        })
        .unwrap();
        assert_eq!(sample(&mix, 500, 42).unwrap(), sample(&mix, 500, 42).unwrap());
        assert_ne!(sample(&mix, 500, 42).unwrap(), sample(&mix, 500, 43).unwrap());
    }

    #[test]
    fn identity_sample_covariance() {
        let mix = ComplexGaussianMixture::single(HermitianMatrix::identity(3));
        let n = 1_000_000;
        let s = sample(&mix, n, 7).unwrap();
        let mut cov = HermitianMatrix::zeros(3);
        for v in &s {
            cov.add_outer(v, 1.0 / n as f64);
        }
        let rel = cov.frobenius_distance(&HermitianMatrix::identity(3)) / 3f64.sqrt();
        assert!(rel < 0.01, "{rel}");
    }

    #[test]
    fn gaussian_sample_kurtosis() {
        for (dim, expected) in [(1usize, 8.0), (5, 120.0)] {
            let mix = ComplexGaussianMixture::single(HermitianMatrix::identity(dim));
            let s = sample(&mix, 200_000, 3).unwrap();
            let k = sample_kurtosis(&s).unwrap();
            assert!((k - expected).abs() / expected < 0.05, "D={dim}: {k}");
        }
    }

    #[test]
    fn constant_samples_rejected() {
        let s = vec![vec![C64::new(0.3, -1.1), C64::new(2.0, 0.5)]; 50];
        assert_eq!(sample_kurtosis(&s).unwrap_err(), Error::NotPositiveDefinite);
        let few = vec![vec![C64::new(1.0, 0.0); 3]; 4];
        assert!(sample_kurtosis(&few).is_err());
    }

    #[test]
    fn weights_validated() {
        let c = vec![HermitianMatrix::identity(2); 2];
        assert!(ComplexGaussianMixture::new(vec![0.5, 0.4], c.clone()).is_err());
        assert!(ComplexGaussianMixture::new(vec![1.0, 0.0], c.clone()).is_err());
        assert!(ComplexGaussianMixture::new(vec![0.5], c).is_err());
    }

    #[test]
    fn scaled_mixture_kurtosis_matches_samples() {
        let mix = build_scaled_mixture(&ScaledMixtureSpec {
            components: 6,
            scale: 2.0,
            base_covariance: HermitianMatrix::identity(2),
        })
        .unwrap();
        let s = sample(&mix, 1_000_000, 17).unwrap();
        let k = sample_kurtosis(&s).unwrap();
        let expected = gaussian_kurtosis(2) * kurtosis_factor(6, 2.0);
        assert!((k - expected).abs() / expected < 0.05, "{k} vs {expected}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kurtosis_factor_at_least_one(m in 1usize..12, b in 0.05f64..8.0) {
                let q = kurtosis_factor(m, b);
                prop_assert!(q >= 1.0 - 1e-12);
                if m > 1 && (b - 1.0).abs() > 1e-3 {
                    prop_assert!(q > 1.0);
                }
            }

            #[test]
            fn aggregate_is_preserved(m in 1usize..10, b in 0.1f64..5.0, off in -0.5f64..0.5) {
                let base = HermitianMatrix::from_fn(2, |i, j| match (i, j) {
                    (0, 0) => C64::new(1.0, 0.0),
                    (1, 1) => C64::new(2.0, 0.0),
                    (0, 1) => C64::new(off, 0.3),
                    _ => C64::new(off, -0.3),
                });
                let mix = build_scaled_mixture(&ScaledMixtureSpec { components: m, scale: b, base_covariance: base.clone() }).unwrap();
                prop_assert!(mix.aggregate().frobenius_distance(&base) <= 1e-12 * base.frobenius_norm());
            }
        }
    }
}
