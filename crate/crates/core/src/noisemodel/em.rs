use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::mixture::ComplexGaussianMixture;
use crate::error::{Error, Result};
use crate::numerics::HermitianMatrix;

type C64 = Complex64;

/// Settings for [`em_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once the relative objective change drops below this.
    pub tolerance: f64,
    /// Diagonal loading relative to `trace/D` of the data covariance.
    pub loading: f64,
    /// Lower bound on every mixture weight.
    pub weight_floor: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iterations: 300,
            tolerance: 1e-7,
            loading: 1e-8,
            weight_floor: 1e-4,
            seed: 0,
        }
    }
}

/// Result of [`em_fit`].
#[derive(Clone, Debug)]
pub struct EmFit {
    pub mixture: ComplexGaussianMixture,
    /// Data log-likelihood of the returned mixture.
    pub log_likelihood: f64,
    /// Penalized objective after every E-step of the winning restart.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const LN_PI: f64 = 1.144_729_885_849_400_2;
/// Prior weight on `ln|Σₘ|`; keeps an empty component finite.
const SCALE_PSEUDO_COUNT: f64 = 1e-6;

/// Fits a zero-mean complex Gaussian mixture by EM.
///
/// The M-step is the maximizer of the log-likelihood plus a weak prior, which
/// adds `λI` to every scatter matrix and a pseudo-count to every weight, so the
/// tracked objective never decreases. The best of `opts.restarts` random
/// initializations is kept.
pub fn em_fit<V: AsRef<[C64]>>(frames: &[V], components: usize, opts: &EmOptions) -> Result<EmFit> {
    let problem = Problem::new(frames, components, opts)?;
    let mut best: Option<EmFit> = None;
    for restart in 0..opts.restarts.max(1) {
        let seed = mix_seed(opts.seed, restart as u64);
        let fit = problem.run(seed)?;
        if best.as_ref().map_or(true, |b| fit.history.last() > b.history.last()) {
            best = Some(fit);
        }
        if components == 1 {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

/// SplitMix64 finalizer; decorrelates derived seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Problem<'a, V> {
    frames: &'a [V],
    dim: usize,
    components: usize,
    lambda: f64,
    pseudo_count: f64,
    opts: &'a EmOptions,
}

struct Params {
    weights: Vec<f64>,
    covariances: Vec<HermitianMatrix>,
}

impl<'a, V: AsRef<[C64]>> Problem<'a, V> {
    fn new(frames: &'a [V], components: usize, opts: &'a EmOptions) -> Result<Self> {
        if components == 0 {
            return Err(Error::ConfigError("mixture needs at least one component".into()));
        }
        let dim = frames
            .first()
            .map(|f| f.as_ref().len())
            .ok_or_else(|| Error::InvalidInput("no frames".into()))?;
        if let Some(f) = frames.iter().find(|f| f.as_ref().len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.as_ref().len(),
            });
        }
        if frames.len() < components * dim {
            return Err(Error::InvalidInput(format!(
                "{} frames cannot support {components} components of dimension {dim}",
                frames.len()
            )));
        }
        if !(opts.weight_floor >= 0.0 && opts.weight_floor * (components as f64) < 1.0) {
            return Err(Error::ConfigError(format!("weight floor {} too large", opts.weight_floor)));
        }
        let n = frames.len() as f64;
        let power: f64 = frames.iter().flat_map(|f| f.as_ref()).map(|v| v.norm_sqr()).sum::<f64>() / n;
        if !power.is_finite() {
            return Err(Error::InvalidInput("non-finite frames".into()));
        }
        let lambda = (opts.loading * power / dim as f64).max(f64::MIN_POSITIVE * 1e8);
        let pseudo_count = opts.weight_floor * n / (1.0 - opts.weight_floor * components as f64);
        Ok(Self {
            frames,
            dim,
            components,
            lambda,
            pseudo_count,
            opts,
        })
    }

    fn run(&self, seed: u64) -> Result<EmFit> {
        let t = self.frames.len();
        let m = self.components;
        let mut resp = vec![0.0; t * m];
        if m == 1 {
            resp.fill(1.0);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
            for row in resp.chunks_mut(m) {
                let mut s = 0.0;
                for r in row.iter_mut() {
                    *r = gamma.sample(&mut rng) + 1e-12;
                    s += *r;
                }
                row.iter_mut().for_each(|r| *r /= s);
            }
        }
        let mut params = self.m_step(&resp);
        let mut history = Vec::new();
        let mut converged = false;
        let mut log_likelihood;
        loop {
            let (objective, ll) = self.e_step(&params, &mut resp)?;
            log_likelihood = ll;
            if let Some(&prev) = history.last() {
                let prev: f64 = prev;
                if objective < prev - 1e-8 * prev.abs().max(1.0) {
                    debug_assert!(false, "EM objective decreased: {prev} -> {objective}");
                }
                history.push(objective);
                if (objective - prev).abs() <= self.opts.tolerance * objective.abs().max(1e-300) {
                    converged = true;
                    break;
                }
            } else {
                history.push(objective);
            }
            if history.len() > self.opts.max_iterations {
                break;
            }
            params = self.m_step(&resp);
        }
        let iterations = history.len() - 1;
        Ok(EmFit {
            mixture: ComplexGaussianMixture::new(params.weights, params.covariances)?,
            log_likelihood,
            history,
            iterations,
            converged,
        })
    }

    fn m_step(&self, resp: &[f64]) -> Params {
        let m = self.components;
        let d = self.dim;
        let mut counts = vec![0.0; m];
        let mut scatter = vec![HermitianMatrix::zeros(d); m];
        for (x, row) in self.frames.iter().zip(resp.chunks(m)) {
            let x = x.as_ref();
            for ((r, n), s) in row.iter().zip(counts.iter_mut()).zip(scatter.iter_mut()) {
                if *r > 0.0 {
                    *n += r;
                    s.add_outer(x, *r);
                }
            }
        }
        let total = self.frames.len() as f64 + m as f64 * self.pseudo_count;
        let weights = counts.iter().map(|n| (n + self.pseudo_count) / total).collect();
        let covariances = scatter
            .into_iter()
            .zip(&counts)
            .map(|(mut s, &n)| {
                s.add_diagonal(self.lambda);
                s.scale_in_place(1.0 / (n + SCALE_PSEUDO_COUNT));
                s
            })
            .collect();
        Params { weights, covariances }
    }

    /// Fills responsibilities; returns the penalized objective and the plain
    /// log-likelihood.
    fn e_step(&self, params: &Params, resp: &mut [f64]) -> Result<(f64, f64)> {
        let m = self.components;
        let d = self.dim as f64;
        let mut chols = Vec::with_capacity(m);
        let mut offsets = Vec::with_capacity(m);
        let mut prior = 0.0;
        for (k, (w, cov)) in params.weights.iter().zip(&params.covariances).enumerate() {
            if !cov.is_finite() {
                return Err(Error::DegenerateComponent(k));
            }
            let chol = cov.cholesky().map_err(|_| Error::DegenerateComponent(k))?;
            offsets.push(w.ln() - chol.log_det() - d * LN_PI);
            prior += self.pseudo_count * w.ln()
                - SCALE_PSEUDO_COUNT * chol.log_det()
                - self.lambda * trace_of_inverse(&chol, self.dim);
            chols.push(chol);
        }
        let mut ll = 0.0;
        for (x, row) in self.frames.iter().zip(resp.chunks_mut(m)) {
            let x = x.as_ref();
            let mut peak = f64::NEG_INFINITY;
            for ((r, chol), off) in row.iter_mut().zip(&chols).zip(&offsets) {
                *r = off - chol.inverse_quadratic(x);
                peak = peak.max(*r);
            }
            let mut s = 0.0;
            for r in row.iter_mut() {
                *r = (*r - peak).exp();
                s += *r;
            }
            row.iter_mut().for_each(|r| *r /= s);
            ll += peak + s.ln();
        }
        if !ll.is_finite() {
            return Err(Error::NumericalOverflow("EM log-likelihood"));
        }
        Ok((ll + prior, ll))
    }
}

fn trace_of_inverse(chol: &crate::numerics::Cholesky, dim: usize) -> f64 {
    let mut e = vec![C64::new(0.0, 0.0); dim];
    let mut tr = 0.0;
    for i in 0..dim {
        e[i] = C64::new(1.0, 0.0);
        tr += chol.inverse_quadratic(&e);
        e[i] = C64::new(0.0, 0.0);
    }
    tr
}
