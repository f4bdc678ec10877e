use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{principal_eigenvector, HermitianMatrix};
use crate::spatial::{steering_vector, ArrayGeometry};
use crate::stft::{Spectrogram, StftConfig};

type C64 = Complex64;

/// Steering vectors per bin, either fixed over time or one per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringField {
    num_bins: usize,
    /// 1 for a time-invariant field.
    num_frames: usize,
    dim: usize,
    data: Vec<C64>,
}

impl SteeringField {
    pub fn fixed(per_bin: Vec<Vec<C64>>) -> Result<Self> {
        let dim = per_bin.first().map(|v| v.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidInput("empty steering field".into()));
        }
        if let Some(v) = per_bin.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        Ok(Self {
            num_bins: per_bin.len(),
            num_frames: 1,
            dim,
            data: per_bin.into_iter().flatten().collect(),
        })
    }

    /// Far-field steering towards `angle` at every bin frequency.
    pub fn from_geometry(geometry: &ArrayGeometry, angle: f64, stft: &StftConfig) -> Self {
        let per_bin = stft
            .frequencies()
            .into_iter()
            .map(|f| steering_vector(geometry, angle, f))
            .collect();
        Self::fixed(per_bin).expect("geometry has microphones")
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_time_varying(&self) -> bool {
        self.num_frames > 1
    }

    /// Index of the vector used in `frame` (always 0 for a fixed field).
    pub fn frame_slot(&self, frame: usize) -> usize {
        frame.min(self.num_frames - 1)
    }

    pub fn get(&self, bin: usize, frame: usize) -> &[C64] {
        let idx = (self.frame_slot(frame) * self.num_bins + bin) * self.dim;
        &self.data[idx..idx + self.dim]
    }
}

pub const STEERING_SMOOTHING: f64 = 0.9;

/// Per-frame steering vectors from a clean multichannel spectrogram: principal
/// eigenvector of the recursively smoothed speech covariance, normalized so
/// that the first microphone's entry is 1.
pub fn estimate_steering(clean: &Spectrogram, smoothing: f64) -> Result<SteeringField> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(Error::ConfigError(format!("smoothing constant {smoothing} outside [0, 1)")));
    }
    let (bins, frames, dim) = (clean.num_bins(), clean.num_frames(), clean.channels());
    let mut data = vec![C64::new(0.0, 0.0); bins * frames * dim];
    for k in 0..bins {
        let mut phi = HermitianMatrix::zeros(dim);
        let mut prev = vec![C64::new(1.0, 0.0); dim];
        for i in 0..frames {
            phi.scale_in_place(smoothing);
            phi.add_outer(clean.vector(k, i), 1.0 - smoothing);
            if let Some(d) = normalized_principal(&phi) {
                prev = d;
            }
            let idx = (i * bins + k) * dim;
            data[idx..idx + dim].copy_from_slice(&prev);
        }
    }
    Ok(SteeringField {
        num_bins: bins,
        num_frames: frames,
        dim,
        data,
    })
}

fn normalized_principal(phi: &HermitianMatrix) -> Option<Vec<C64>> {
    let tr = phi.trace();
    if !(tr > f64::MIN_POSITIVE * 1e10 && tr.is_finite()) {
        return None;
    }
    let v = principal_eigenvector(phi).ok()?;
    let r = v[0];
    if r.norm() <= 1e-8 {
        return None;
    }
    Some(v.iter().map(|x| x / r).collect())
}
