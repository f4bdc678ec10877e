use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noisemodel::ComplexGaussianMixture;
use crate::numerics::{log_kummer_m, Cholesky, HermitianMatrix};

type C64 = Complex64;

/// Shape parameter of the generalized-Gamma speech amplitude prior together
/// with the speech power of the current cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeechPrior {
    pub nu: f64,
    pub sigma_s2: f64,
}

impl SpeechPrior {
    pub const DEFAULT_NU: f64 = 0.25;

    pub fn new(nu: f64, sigma_s2: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::DomainError(format!("shape parameter must be positive, got {nu}")));
        }
        if !(sigma_s2 >= 0.0 && sigma_s2.is_finite()) {
            return Err(Error::DomainError(format!("speech power must be finite and ≥ 0, got {sigma_s2}")));
        }
        Ok(Self { nu, sigma_s2 })
    }
}

#[derive(Clone, Debug)]
struct Component {
    chol: Cholesky,
    /// `Σₘ⁻¹d`
    whitened_steering: Vec<C64>,
    /// `dᴴΣₘ⁻¹d`
    gain: f64,
    log_det: f64,
    log_weight: f64,
    /// Variance of this component after the aggregate MVDR beamformer.
    output_variance: f64,
}

/// Everything the estimators need for one frequency bin (and one noise-model
/// segment): steering vector, mixture and their factorizations.
#[derive(Clone, Debug)]
pub struct FilterContext {
    steering: Vec<C64>,
    /// `Σₙ⁻¹d`
    aggregate_whitened: Vec<C64>,
    aggregate_gain: f64,
    components: Vec<Component>,
}

impl FilterContext {
    pub fn new(steering: &[C64], mixture: &ComplexGaussianMixture) -> Result<Self> {
        let dim = mixture.dim();
        if steering.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: steering.len(),
            });
        }
        if steering.iter().all(|v| v.norm_sqr() == 0.0) {
            return Err(Error::InvalidInput("zero steering vector".into()));
        }
        let aggregate = mixture.aggregate();
        let (u, a_n) = whiten_steering(&factor(&aggregate)?, steering)?;
        let components = mixture
            .weights()
            .iter()
            .zip(mixture.covariances())
            .map(|(&w, cov)| {
                let chol = factor(cov)?;
                let (whitened_steering, gain) = whiten_steering(&chol, steering)?;
                let output_variance = cov.quadratic_form(&u) / (a_n * a_n);
                if !(output_variance > 0.0 && output_variance.is_finite()) {
                    return Err(Error::NotPositiveDefinite);
                }
                Ok(Component {
                    log_det: chol.log_det(),
                    chol,
                    whitened_steering,
                    gain,
                    log_weight: w.ln(),
                    output_variance,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            steering: steering.to_vec(),
            aggregate_whitened: u,
            aggregate_gain: a_n,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.steering.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn steering(&self) -> &[C64] {
        &self.steering
    }

    /// `dᴴΣₙ⁻¹d`; its inverse is the noise power at the MVDR output.
    pub fn aggregate_gain(&self) -> f64 {
        self.aggregate_gain
    }

    /// MVDR weights `w` with `T(y) = wᴴy`.
    pub fn mvdr_weights(&self) -> Vec<C64> {
        self.aggregate_whitened.iter().map(|u| u / self.aggregate_gain).collect()
    }

    pub fn component_weights(&self, m: usize) -> Vec<C64> {
        let c = &self.components[m];
        c.whitened_steering.iter().map(|u| u / c.gain).collect()
    }

    /// Variance `σₘ²` of component `m` after the aggregate beamformer.
    pub fn output_variance(&self, m: usize) -> f64 {
        self.components[m].output_variance
    }

    pub fn mvdr(&self, y: &[C64]) -> C64 {
        inner(&self.aggregate_whitened, y) / self.aggregate_gain
    }

    pub fn mvdr_component(&self, m: usize, y: &[C64]) -> C64 {
        let c = &self.components[m];
        inner(&c.whitened_steering, y) / c.gain
    }

    pub fn mwf(&self, y: &[C64], sigma_s2: f64) -> C64 {
        if sigma_s2 == 0.0 {
            return C64::new(0.0, 0.0);
        }
        self.mvdr(y) * (sigma_s2 / (sigma_s2 + 1.0 / self.aggregate_gain))
    }

    /// Joint spatial-spectral MMSE estimate under the mixture noise model.
    pub fn nonlinear_mmse(&self, y: &[C64], prior: &SpeechPrior) -> Result<C64> {
        let SpeechPrior { nu, sigma_s2 } = *prior;
        if sigma_s2 == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        let ln_s2 = sigma_s2.ln();
        let mut num = LogSum::default();
        let mut den = LogSum::default();
        for c in &self.components {
            let a = c.gain;
            let t = inner(&c.whitened_steering, y) / a;
            let shrink = nu / a + sigma_s2;
            let p = sigma_s2 * a * t.norm_sqr() / shrink;
            let log_q = -nu * (nu + a * sigma_s2).ln();
            let base = c.log_weight + log_q - c.log_det - c.chol.inverse_quadratic(y);
            den.add(base + log_kummer_m(nu, 1.0, p)?, C64::new(1.0, 0.0));
            let mag = t.norm();
            if mag > 0.0 {
                num.add(
                    base + ln_s2 + mag.ln() - shrink.ln() + log_kummer_m(nu + 1.0, 2.0, p)?,
                    t / mag,
                );
            }
        }
        num.ratio(&den, nu)
    }

    /// Aggregate MVDR followed by the MMSE postfilter for the mixture of
    /// beamformer-output variances.
    pub fn mvdr_postfilter(&self, y: &[C64], prior: &SpeechPrior) -> Result<C64> {
        let SpeechPrior { nu, sigma_s2 } = *prior;
        if sigma_s2 == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        let z = self.mvdr(y);
        let z2 = z.norm_sqr();
        let ln_s2 = sigma_s2.ln();
        let mut num = LogSum::default();
        let mut den = LogSum::default();
        for c in &self.components {
            let v = c.output_variance;
            let shrink = nu * v + sigma_s2;
            let p = sigma_s2 / v * z2 / shrink;
            let log_q = -nu * (1.0 / v + nu / sigma_s2).ln();
            let base = c.log_weight + log_q - v.ln() - z2 / v;
            den.add(base + log_kummer_m(nu, 1.0, p)?, C64::new(1.0, 0.0));
            num.add(base + ln_s2 - shrink.ln() + log_kummer_m(nu + 1.0, 2.0, p)?, C64::new(1.0, 0.0));
        }
        let gain = num.ratio(&den, nu)?;
        Ok(z * gain.re)
    }
}

/// Exact factorization when possible, loaded otherwise.
fn factor(cov: &HermitianMatrix) -> Result<Cholesky> {
    cov.cholesky().or_else(|_| cov.factorize())
}

fn whiten_steering(chol: &Cholesky, d: &[C64]) -> Result<(Vec<C64>, f64)> {
    let u = chol.solve(d);
    let a = inner(d, &u).re;
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((u, a))
}

/// `aᴴb`
fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Running `Σ e^{lₘ}·φₘ` with unit-modulus `φₘ`, kept relative to the
/// largest exponent seen.
#[derive(Default)]
struct LogSum {
    peak: Option<f64>,
    acc: C64,
}

impl LogSum {
    fn add(&mut self, log_mag: f64, phase: C64) {
        if log_mag == f64::NEG_INFINITY {
            return;
        }
        match self.peak {
            Some(p) if log_mag <= p => self.acc += phase * (log_mag - p).exp(),
            Some(p) => {
                self.acc = self.acc * (p - log_mag).exp() + phase;
                self.peak = Some(log_mag);
            }
            None => {
                self.acc = phase;
                self.peak = Some(log_mag);
            }
        }
    }

    fn ratio(&self, den: &LogSum, scale: f64) -> Result<C64> {
        let (Some(pn), Some(pd)) = (self.peak, den.peak) else {
            return match den.peak {
                Some(_) => Ok(C64::new(0.0, 0.0)),
                None => Err(Error::NumericalOverflow("estimator denominator")),
            };
        };
        if !(pn.is_finite() && pd.is_finite()) || den.acc.re <= 0.0 {
            return Err(Error::NumericalOverflow("estimator log-sum"));
        }
        let out = self.acc / den.acc.re * ((pn - pd).exp() * scale);
        if !(out.re.is_finite() && out.im.is_finite()) {
            return Err(Error::NumericalOverflow("estimator ratio"));
        }
        Ok(out)
    }
}

/// Free-function forms of the estimators.
pub fn mvdr(ctx: &FilterContext, y: &[C64]) -> C64 {
    ctx.mvdr(y)
}

pub fn mvdr_component(ctx: &FilterContext, m: usize, y: &[C64]) -> C64 {
    ctx.mvdr_component(m, y)
}

pub fn nonlinear_mmse(ctx: &FilterContext, y: &[C64], prior: &SpeechPrior) -> Result<C64> {
    ctx.nonlinear_mmse(y, prior)
}

pub fn mvdr_postfilter(ctx: &FilterContext, y: &[C64], prior: &SpeechPrior) -> Result<C64> {
    ctx.mvdr_postfilter(y, prior)
}

pub fn mwf(ctx: &FilterContext, y: &[C64], sigma_s2: f64) -> C64 {
    ctx.mwf(y, sigma_s2)
}

/// Log-likelihood (up to a constant) of `s` under `y = d·s + n`,
/// `n ~ CN(0, Σ)`.
pub fn gaussian_log_likelihood(cov: &HermitianMatrix, d: &[C64], y: &[C64], s: C64) -> Result<f64> {
    let r: Vec<C64> = y.iter().zip(d).map(|(y, d)| y - d * s).collect();
    Ok(-cov.cholesky()?.inverse_quadratic(&r))
}
