//! Complex Gaussian mixture noise: construction, sampling, kurtosis and EM.

mod em;
mod mixture;
mod model;

pub use em::{em_fit, mix_seed, EmFit, EmOptions};
pub use mixture::{
    build_scaled_mixture, gaussian_kurtosis, kurtosis_factor, sample, sample_kurtosis, standard_complex,
    ComplexGaussianMixture, MixtureSampler, ScaledMixtureSpec,
};
pub use model::{em_fit_windowed, window_ranges, NoiseModel, NoiseWindow, WindowedFitConfig, SCHEMA_VERSION};
