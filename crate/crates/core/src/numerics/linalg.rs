//! Small dense Hermitian linear algebra.
//!
//! Matrices here are tiny (one row per microphone), so everything is stored
//! row-major in a flat `Vec` and factorized with a plain complex Cholesky.

use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

/// Relative diagonal loading applied before every solve.
pub const BASE_LOADING: f64 = 1e-10;
/// Largest relative loading tried before giving up.
pub const MAX_LOADING: f64 = 1e-6;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 500;
const MAX_SQUARINGS: usize = 64;
const STACK_DIM: usize = 8;

/// Complex Hermitian matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.add_diagonal(1.0);
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * m.dim + i] = C64::new(v, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    ///
    /// The entries must be conjugate-symmetric up to a relative tolerance of
    /// `1e-9`; the stored matrix is the exact Hermitian part.
    pub fn from_row_major(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let scale = entries.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..dim {
            for j in i..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i].conj();
                if !a.re.is_finite() || !a.im.is_finite() || (a - b).norm() > 1e-9 * scale.max(1e-300) {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i},{j}) and ({j},{i}) are not conjugate"
                    )));
                }
            }
        }
        let mut m = Self { dim, data: entries };
        m.symmetrize();
        Ok(m)
    }

    /// Rank-one matrix `v vᴴ`.
    pub fn outer(v: &[C64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, 1.0);
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m.symmetrize();
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, other: &HermitianMatrix, s: f64) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    /// `self += w · v vᴴ`
    pub fn add_outer(&mut self, v: &[C64], w: f64) {
        assert_eq!(self.dim, v.len());
        let d = self.dim;
        for i in 0..d {
            let vi = v[i] * w;
            for j in 0..d {
                self.data[i * d + j] += vi * v[j].conj();
            }
        }
    }

    pub fn add_diagonal(&mut self, s: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += s;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(self.dim, x.len());
        self.data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Real quadratic form `xᴴ A x`.
    pub fn quadratic_form(&self, x: &[C64]) -> f64 {
        let ax = self.mul_vec(x);
        x.iter().zip(&ax).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn matmul(&self, other: &HermitianMatrix) -> Vec<C64> {
        let d = self.dim;
        let mut out = vec![C64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                for j in 0..d {
                    out[i * d + j] += a * other.data[k * d + j];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &HermitianMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            self.data[i * d + i].im = 0.0;
            for j in (i + 1)..d {
                let avg = (self.data[i * d + j] + self.data[j * d + i].conj()) * 0.5;
                self.data[i * d + j] = avg;
                self.data[j * d + i] = avg.conj();
            }
        }
    }

    /// Plain Cholesky factorization without any loading.
    pub fn cholesky(&self) -> Result<Cholesky> {
        cholesky_loaded(self, 0.0)
    }

    /// Cholesky factorization with relative diagonal loading, escalated by
    /// factors of ten from [`BASE_LOADING`] up to [`MAX_LOADING`].
    pub fn factorize(&self) -> Result<Cholesky> {
        let unit = self.trace() / self.dim as f64;
        if !(unit.is_finite() && unit > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let mut eps = BASE_LOADING;
        while eps <= MAX_LOADING * (1.0 + 1e-9) {
            if let Ok(c) = cholesky_loaded(self, eps * unit) {
                return Ok(c);
            }
            eps *= 10.0;
        }
        Err(Error::NotPositiveDefinite)
    }

    /// Lower factor `L` with `L Lᴴ = A` for positive semidefinite `A`.
    ///
    /// Pivots within `1e-12 · max diag` of zero yield zero columns, so rank
    /// deficient (or all-zero) matrices are accepted.
    pub fn psd_factor(&self) -> Result<Vec<C64>> {
        let d = self.dim;
        let max_diag = (0..d).map(|i| self.data[i * d + i].re).fold(0.0, f64::max);
        let tol = 1e-12 * max_diag;
        let mut l = vec![C64::new(0.0, 0.0); d * d];
        for j in 0..d {
            let mut pivot = self.data[j * d + j].re;
            for k in 0..j {
                pivot -= l[j * d + k].norm_sqr();
            }
            if pivot < -tol.max(1e-300) || !pivot.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            if pivot <= tol {
                continue;
            }
            let ljj = pivot.sqrt();
            l[j * d + j] = C64::new(ljj, 0.0);
            for i in (j + 1)..d {
                let mut s = self.data[i * d + j];
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k].conj();
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(l)
    }
}

fn cholesky_loaded(a: &HermitianMatrix, loading: f64) -> Result<Cholesky> {
    let d = a.dim;
    let mut l = vec![C64::new(0.0, 0.0); d * d];
    for j in 0..d {
        let mut pivot = a.data[j * d + j].re + loading;
        for k in 0..j {
            pivot -= l[j * d + k].norm_sqr();
        }
        if !(pivot > 0.0 && pivot.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = C64::new(ljj, 0.0);
        for i in (j + 1)..d {
            let mut s = a.data[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k].conj();
            }
            l[i * d + j] = s / ljj;
        }
    }
    Ok(Cholesky { dim: d, l, loading })
}

/// Cholesky factor `L` (lower triangular, real positive diagonal) of a
/// positive definite Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    l: Vec<C64>,
    loading: f64,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Absolute diagonal loading that was added before factorizing.
    pub fn loading(&self) -> f64 {
        self.loading
    }

    /// `L⁻¹ b` by forward substitution.
    pub fn whiten(&self, b: &[C64]) -> Vec<C64> {
        let d = self.dim;
        assert_eq!(b.len(), d);
        let mut y = b.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * d + k] * y[k];
            }
            y[i] = s / self.l[i * d + i].re;
        }
        y
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let d = self.dim;
        let mut x = self.whiten(b);
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= self.l[k * d + i].conj() * x[k];
            }
            x[i] = s / self.l[i * d + i].re;
        }
        x
    }

    /// Forward substitution into a caller-provided buffer.
    fn whiten_into(&self, b: &[C64], y: &mut [C64]) {
        let d = self.dim;
        for i in 0..d {
            let mut s = b[i];
            let row = &self.l[i * d..i * d + i];
            for (lk, yk) in row.iter().zip(&y[..i]) {
                s -= lk * yk;
            }
            y[i] = s / self.l[i * d + i].re;
        }
    }

    /// `xᴴ A⁻¹ x`.
    pub fn inverse_quadratic(&self, x: &[C64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        if self.dim <= STACK_DIM {
            let mut buf = [C64::new(0.0, 0.0); STACK_DIM];
            self.whiten_into(x, &mut buf);
            buf[..self.dim].iter().map(|z| z.norm_sqr()).sum()
        } else {
            self.whiten(x).iter().map(|z| z.norm_sqr()).sum()
        }
    }

    /// `xᴴ A⁻¹ y`.
    pub fn inverse_bilinear(&self, x: &[C64], y: &[C64]) -> C64 {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        if self.dim <= STACK_DIM {
            let mut wx = [C64::new(0.0, 0.0); STACK_DIM];
            let mut wy = [C64::new(0.0, 0.0); STACK_DIM];
            self.whiten_into(x, &mut wx);
            self.whiten_into(y, &mut wy);
            wx[..self.dim].iter().zip(&wy[..self.dim]).map(|(a, b)| a.conj() * b).sum()
        } else {
            let wx = self.whiten(x);
            let wy = self.whiten(y);
            wx.iter().zip(&wy).map(|(a, b)| a.conj() * b).sum()
        }
    }

    /// `ln |A|`.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.l[i * self.dim + i].re.ln()).sum::<f64>()
    }

    /// `L u`.
    pub fn color(&self, u: &[C64]) -> Vec<C64> {
        lower_mul(&self.l, self.dim, u)
    }
}

/// Multiplies a row-major lower-triangular matrix by a vector.
pub(crate) fn lower_mul(l: &[C64], d: usize, u: &[C64]) -> Vec<C64> {
    (0..d)
        .map(|i| (0..=i).map(|k| l[i * d + k] * u[k]).sum())
        .collect()
}

/// Solves `A x = b` for Hermitian positive definite `A` via a loaded Cholesky
/// factorization.
pub fn hermitian_solve(a: &HermitianMatrix, b: &[C64]) -> Result<Vec<C64>> {
    if a.dim() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    let chol = a.factorize()?;
    let mut x = chol.solve(b);
    if chol.loading() > 0.0 {
        // Iterative refinement against the unloaded matrix.
        for _ in 0..3 {
            let ax = a.mul_vec(&x);
            let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = chol.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
    }
    Ok(x)
}

/// Unit-norm eigenvector of the largest eigenvalue, phase-normalized so its
/// first non-negligible entry is real and positive.
pub fn principal_eigenvector(a: &HermitianMatrix) -> Result<Vec<C64>> {
    principal_eigenpair(a).map(|(_, v)| v)
}

/// Largest eigenvalue and its eigenvector (see [`principal_eigenvector`]).
///
/// The matrix is shifted to be positive semidefinite and repeatedly squared
/// to get a well-converged starting vector, which is then polished by power
/// iteration until the Rayleigh quotient settles.
pub fn principal_eigenpair(a: &HermitianMatrix) -> Result<(f64, Vec<C64>)> {
    let d = a.dim();
    let scale = a.frobenius_norm();
    if !scale.is_finite() {
        return Err(Error::InvalidInput("non-finite matrix".into()));
    }
    let mut e0 = vec![C64::new(0.0, 0.0); d];
    e0[0] = C64::new(1.0, 0.0);
    if scale == 0.0 {
        return Ok((0.0, e0));
    }
    if d == 1 {
        return Ok((a.get(0, 0).re, e0));
    }

    let mut shifted = a.clone();
    shifted.add_diagonal(scale);

    let mut p = shifted.scaled(1.0 / shifted.frobenius_norm());
    for _ in 0..MAX_SQUARINGS {
        let tr = p.trace();
        let fro = p.frobenius_norm();
        if tr * tr <= fro * fro * (1.0 + 1e-14) {
            break;
        }
        let sq = p.matmul(&p);
        p = HermitianMatrix { dim: d, data: sq };
        p.symmetrize();
        let n = p.frobenius_norm();
        if !(n > 0.0 && n.is_finite()) {
            break;
        }
        p.scale_in_place(1.0 / n);
    }

    // Column of the squared matrix with the largest norm.
    let col = (0..d)
        .max_by(|&x, &y| {
            let nx: f64 = (0..d).map(|i| p.get(i, x).norm_sqr()).sum();
            let ny: f64 = (0..d).map(|i| p.get(i, y).norm_sqr()).sum();
            nx.partial_cmp(&ny).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let mut v: Vec<C64> = (0..d).map(|i| p.get(i, col)).collect();
    if normalize(&mut v) == 0.0 {
        v = e0;
    }

    let mut mu = a.quadratic_form(&v);
    for _ in 0..POWER_MAX_ITER {
        let mut w = shifted.mul_vec(&v);
        if normalize(&mut w) == 0.0 {
            break;
        }
        let next = a.quadratic_form(&w);
        v = w;
        let done = (next - mu).abs() <= POWER_TOL * scale;
        mu = next;
        if done {
            fix_phase(&mut v);
            return Ok((mu, v));
        }
    }
    Err(Error::NoConvergence(POWER_MAX_ITER))
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|z| *z /= n);
        n
    } else {
        0.0
    }
}

fn fix_phase(v: &mut [C64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-12 * max).copied() {
        let rot = pivot.conj() / pivot.norm();
        v.iter_mut().for_each(|z| *z *= rot);
        // exact zero imaginary part on the pivot
        if let Some(z) = v.iter_mut().find(|z| z.norm() > 1e-12 * max) {
            *z = C64::new(z.norm(), 0.0);
        }
    }
}
