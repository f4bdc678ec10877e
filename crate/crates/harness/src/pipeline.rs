//! Shared simulation and evaluation steps.

use anyhow::{ensure, Result};
use gmmse::filters::{
    beamform, enhance, estimate_speech_psd, oracle_speech_psd, CepstralSmoothing, EnhanceSetup, Method, SteeringField,
    ORACLE_SMOOTHING,
};
use gmmse::metrics::{si_sdr_segmental, MetricsConfig, MetricsReport};
use gmmse::noisemodel::NoiseModel;
use gmmse::stft::{Spectrogram, Stft};
use serde::{Deserialize, Serialize};

/// Everything needed to enhance one noisy recording and score the result.
pub struct Trial {
    /// Target signal at the reference microphone.
    pub clean: Vec<f64>,
    /// Noise at the reference microphone.
    pub noise_ref: Vec<f64>,
    pub noisy: Spectrogram,
    pub steering: SteeringField,
    pub model: NoiseModel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeechPsdMode {
    /// Cepstral smoothing of the beamformer output.
    #[default]
    Cepstral,
    /// Recursive smoothing of the clean reference.
    Oracle,
}

/// Gain that brings `noise` to `snr_db` below `speech` (mean power).
pub fn snr_gain(speech: &[f64], noise: &[f64], snr_db: f64) -> f64 {
    let p = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let (ps, pn) = (p(speech), p(noise));
    if pn == 0.0 {
        return 0.0;
    }
    (ps / pn * 10f64.powf(-snr_db / 10.0)).sqrt()
}

/// Runs every method on one trial and scores the outputs against the clean
/// reference.
pub fn evaluate(
    stft: &Stft,
    trial: &Trial,
    methods: &[Method],
    nu: f64,
    psd_mode: SpeechPsdMode,
) -> Result<Vec<(Method, MetricsReport)>> {
    ensure!(
        trial.clean.len() == trial.noise_ref.len(),
        "clean and noise references differ in length"
    );
    let setup = EnhanceSetup {
        steering: &trial.steering,
        noise: &trial.model,
        nu,
    };
    let psd = if methods.iter().any(|m| m.needs_speech_psd()) {
        Some(match psd_mode {
            SpeechPsdMode::Cepstral => {
                let (z, noise_psd) = beamform(&trial.noisy, &setup)?;
                estimate_speech_psd(&z, &noise_psd, &CepstralSmoothing::new(stft.config().sample_rate))?
            }
            SpeechPsdMode::Oracle => oracle_speech_psd(&stft.analyze(&[&trial.clean])?, ORACLE_SMOOTHING),
        })
    } else {
        None
    };
    let metrics_cfg = MetricsConfig::new(stft.config().sample_rate);
    methods
        .iter()
        .map(|&m| {
            let out = enhance(stft, &trial.noisy, &setup, psd.as_ref(), m)?;
            let report = si_sdr_segmental(&out, &trial.clean, &trial.noise_ref, &metrics_cfg)?;
            Ok((m, report))
        })
        .collect()
}
