//! Beamformers, postfilters and the joint spatial-spectral MMSE estimator,
//! plus the speech power and steering estimates they consume.

mod enhance;
mod estimators;
mod psd;
mod steering;

pub use enhance::{beamform, enhance, enhance_spectrogram, EnhanceSetup, Method};
pub use estimators::{
    gaussian_log_likelihood, mvdr, mvdr_component, mvdr_postfilter, mwf, nonlinear_mmse, FilterContext, SpeechPrior,
};
pub use psd::{estimate_speech_psd, oracle_speech_psd, CepstralSmoothing, PowerGrid, ORACLE_SMOOTHING};
pub use steering::{estimate_steering, SteeringField, STEERING_SMOOTHING};
