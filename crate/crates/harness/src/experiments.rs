//! The three experiment families plus the recorded-data pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use gmmse::filters::{estimate_steering, FilterContext, Method, SteeringField, STEERING_SMOOTHING};
use gmmse::noisemodel::{
    build_scaled_mixture, em_fit_windowed, kurtosis_factor, mix_seed, ComplexGaussianMixture, EmOptions,
    MixtureSampler, NoiseModel, ScaledMixtureSpec, WindowedFitConfig,
};
use gmmse::spatial::{diffuse_covariance, directivity, interferer_ring, spatialize, ArrayGeometry, DirectivityPattern, BROADSIDE};
use gmmse::stft::{Spectrogram, Stft, StftConfig};
use gmmse::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::read_wav_at;
use crate::pipeline::{evaluate, snr_gain, SpeechPsdMode, Trial};
use crate::speech::SpeechSynth;

/// SI-SDR, SI-SIR and SI-SAR of one method on one utterance under one
/// condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub condition: String,
    pub components: usize,
    /// Kurtosis factor of the noise, where defined.
    pub q: Option<f64>,
    pub utterance: usize,
    pub method: Method,
    pub si_sdr: f64,
    pub si_sir: f64,
    pub si_sar: f64,
}

/// Outcome of one experiment run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub records: Vec<Record>,
    /// Directivity of the fitted component beamformers, when computed.
    pub directivity: Option<ComponentDirectivity>,
}

impl ExperimentResult {
    /// Mean over utterances of `metric` for `method` under `condition`.
    pub fn mean(&self, condition: &str, method: Method, metric: Metric) -> Option<f64> {
        let v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.condition == condition && r.method == method)
            .map(|r| metric.of(r))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `mean(a) − mean(b)` per condition, in condition order of first
    /// appearance.
    pub fn gaps(&self, a: Method, b: Method, metric: Metric) -> Vec<(String, f64)> {
        self.conditions()
            .into_iter()
            .filter_map(|c| Some((c.clone(), self.mean(&c, a, metric)? - self.mean(&c, b, metric)?)))
            .collect()
    }

    pub fn conditions(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.condition) {
                seen.push(r.condition.clone());
            }
        }
        seen
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SiSdr,
    SiSir,
    SiSar,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::SiSdr, Metric::SiSir, Metric::SiSar];

    pub fn name(self) -> &'static str {
        match self {
            Metric::SiSdr => "si_sdr",
            Metric::SiSir => "si_sir",
            Metric::SiSar => "si_sar",
        }
    }

    pub fn of(self, r: &Record) -> f64 {
        match self {
            Metric::SiSdr => r.si_sdr,
            Metric::SiSir => r.si_sir,
            Metric::SiSar => r.si_sar,
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Clean utterances: the listed WAV files, or synthetic ones if none are
/// given.
fn load_utterances(files: &[PathBuf], count: usize, duration_s: f64, seed: u64, fs: u32) -> Result<Vec<Vec<f64>>> {
    if files.is_empty() {
        return Ok((0..count as u64)
            .map(|u| {
                let s = mix_seed(seed, 1000 + u);
                SpeechSynth::for_seed(fs, u).utterance(duration_s, s)
            })
            .collect());
    }
    files
        .iter()
        .map(|p| {
            let a = read_wav_at(p, fs)?;
            let mut x = a.channels.into_iter().next().context("empty WAV")?;
            let max = (duration_s * fs as f64) as usize;
            if max > 0 && x.len() > max {
                x.truncate(max);
            }
            Ok(x)
        })
        .collect()
}

fn push_records(
    out: &mut Vec<Record>,
    condition: &str,
    components: usize,
    q: Option<f64>,
    utterance: usize,
    scores: Vec<(Method, gmmse::metrics::MetricsReport)>,
) {
    for (method, r) in scores {
        out.push(Record {
            condition: condition.to_string(),
            components,
            q,
            utterance,
            method,
            si_sdr: r.si_sdr,
            si_sir: r.si_sir,
            si_sar: r.si_sar,
        });
    }
}

// ---------------------------------------------------------------------------
// Heavy-tailed noise

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeavyTailedConfig {
    pub utterances: usize,
    pub duration_s: f64,
    pub mics: usize,
    pub spacing_m: f64,
    pub white_fraction: f64,
    pub scale: f64,
    pub components: Vec<usize>,
    pub nu: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub psd: SpeechPsdMode,
    pub methods: Vec<Method>,
    pub speech_files: Vec<PathBuf>,
}

impl Default for HeavyTailedConfig {
    fn default() -> Self {
        Self {
            utterances: 4,
            duration_s: 6.0,
            mics: 5,
            spacing_m: 0.05,
            white_fraction: 0.05,
            scale: 2.0,
            components: vec![1, 2, 3, 4, 6, 8, 10, 12],
            nu: 0.25,
            snr_db: 0.0,
            seed: 1,
            psd: SpeechPsdMode::Cepstral,
            methods: default_methods(),
            speech_files: Vec::new(),
        }
    }
}

/// Diffuse-field noise drawn from scaled Gaussian mixtures of increasing
/// kurtosis, filtered with the true mixture parameters.
pub fn run_heavy_tailed(cfg: &HeavyTailedConfig) -> Result<ExperimentResult> {
    let stft_cfg = StftConfig::default();
    let stft = Stft::new(stft_cfg)?;
    let geom = ArrayGeometry::linear(cfg.mics, cfg.spacing_m)?;
    let freqs = stft_cfg.frequencies();
    let base: Vec<_> = freqs
        .iter()
        .map(|&f| diffuse_covariance(&geom, f, cfg.white_fraction))
        .collect();
    let steering = SteeringField::from_geometry(&geom, BROADSIDE, &stft_cfg);
    let speech = load_utterances(&cfg.speech_files, cfg.utterances, cfg.duration_s, cfg.seed, stft_cfg.sample_rate)?;

    let mut records = Vec::new();
    for &m in &cfg.components {
        let q = kurtosis_factor(m, cfg.scale);
        let condition = format!("M={m}");
        let mixtures: Vec<ComplexGaussianMixture> = base
            .iter()
            .map(|b| {
                build_scaled_mixture(&ScaledMixtureSpec {
                    components: m,
                    scale: cfg.scale,
                    base_covariance: b.clone(),
                })
            })
            .collect::<gmmse::Result<_>>()?;
        for (u, s) in speech.iter().enumerate() {
            let clean_spec = spatialize(&stft, s, &geom, BROADSIDE)?;
            let seed = mix_seed(cfg.seed, (m as u64) << 32 | u as u64);
            let mut noise = sample_noise_field(&mixtures, clean_spec.num_frames(), seed)?;
            noise.set_signal_len(clean_spec.signal_len());
            let noise_ref = stft.synthesize(&noise.channel(0))?.swap_remove(0);
            let g = snr_gain(s, &noise_ref, cfg.snr_db);
            noise.scale(g);
            let mut noisy = clean_spec;
            noisy.add_assign(&noise)?;
            let model = NoiseModel::stationary(stft_cfg.sample_rate, mixtures.iter().map(|x| x.scaled(g * g)).collect())?;
            let trial = Trial {
                clean: s.clone(),
                noise_ref: noise_ref.iter().map(|v| v * g).collect(),
                noisy,
                steering: steering.clone(),
                model,
            };
            let scores = evaluate(&stft, &trial, &cfg.methods, cfg.nu, cfg.psd)?;
            push_records(&mut records, &condition, m, Some(q), u, scores);
        }
    }
    Ok(ExperimentResult {
        records,
        directivity: None,
    })
}

/// Independent draws for every (bin, frame) from the per-bin mixtures.
pub fn sample_noise_field(mixtures: &[ComplexGaussianMixture], frames: usize, seed: u64) -> Result<Spectrogram> {
    let dim = mixtures.first().context("no bins")?.dim();
    let mut out = Spectrogram::zeros(mixtures.len(), frames, dim);
    for (k, mix) in mixtures.iter().enumerate() {
        let sampler = MixtureSampler::new(mix)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k as u64));
        for i in 0..frames {
            let v = sampler.draw(&mut rng);
            out.vector_mut(k, i).copy_from_slice(&v);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Point interferers

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfererSource {
    Speech,
    GaussianBursts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterfererConfig {
    pub source: InterfererSource,
    pub utterances: usize,
    pub duration_s: f64,
    pub mics: usize,
    pub spacing_m: f64,
    pub interferers: usize,
    pub components: usize,
    /// EM segment length; `None` fits the whole signal at once.
    pub window_ms: Option<f64>,
    pub overlap: f64,
    pub burst_ms: f64,
    pub nu: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub em_restarts: usize,
    pub psd: SpeechPsdMode,
    pub methods: Vec<Method>,
    /// Compute per-component directivity of the first utterance's model.
    pub directivity: bool,
    pub speech_files: Vec<PathBuf>,
    pub interferer_files: Vec<PathBuf>,
}

impl InterfererConfig {
    pub fn speech() -> Self {
        Self::default()
    }

    pub fn bursts() -> Self {
        Self {
            source: InterfererSource::GaussianBursts,
            window_ms: None,
            directivity: true,
            ..Self::default()
        }
    }
}

impl Default for InterfererConfig {
    fn default() -> Self {
        Self {
            source: InterfererSource::Speech,
            utterances: 2,
            duration_s: 6.0,
            mics: 2,
            spacing_m: 0.06,
            interferers: 5,
            components: 5,
            window_ms: Some(250.0),
            overlap: 0.5,
            burst_ms: 336.0,
            nu: 0.25,
            snr_db: 0.0,
            seed: 1,
            em_restarts: 5,
            psd: SpeechPsdMode::Cepstral,
            methods: vec![Method::Mvdr, Method::MvdrMmse, Method::NlMmse],
            directivity: false,
            speech_files: Vec::new(),
            interferer_files: Vec::new(),
        }
    }
}

/// Mono interferer signals, each non-zero only where it is active.
fn interferer_signals(cfg: &InterfererConfig, len: usize, utterance: usize, fs: u32) -> Result<Vec<Vec<f64>>> {
    let base = mix_seed(cfg.seed, 0xB0 + utterance as u64);
    match cfg.source {
        InterfererSource::GaussianBursts => {
            let burst = (cfg.burst_ms * fs as f64 / 1000.0).round() as usize;
            ensure!(burst > 0, "burst length must be positive");
            let mut out = vec![vec![0.0; len]; cfg.interferers];
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            for (j, chunk_start) in (0..len).step_by(burst).enumerate() {
                let src = &mut out[j % cfg.interferers];
                for v in &mut src[chunk_start..(chunk_start + burst).min(len)] {
                    *v = StandardNormal.sample(&mut rng);
                }
            }
            Ok(out)
        }
        InterfererSource::Speech => {
            if !cfg.interferer_files.is_empty() {
                ensure!(
                    cfg.interferer_files.len() >= cfg.interferers,
                    "{} interferer files for {} interferers",
                    cfg.interferer_files.len(),
                    cfg.interferers
                );
                return cfg.interferer_files[..cfg.interferers]
                    .iter()
                    .map(|p| {
                        let mut x = read_wav_at(p, fs)?.channels.swap_remove(0);
                        x.resize(len, 0.0);
                        Ok(x)
                    })
                    .collect();
            }
            Ok((0..cfg.interferers)
                .map(|i| {
                    let synth = SpeechSynth::for_seed(fs, i as u64 + 1 + utterance as u64);
                    synth.utterance(len as f64 / fs as f64, mix_seed(base, i as u64))
                })
                .collect())
        }
    }
}

/// Target in broadside direction, five point interferers on a ring, EM-fitted
/// mixture noise model.
pub fn run_interferers(cfg: &InterfererConfig) -> Result<ExperimentResult> {
    let stft_cfg = StftConfig::default();
    let stft = Stft::new(stft_cfg)?;
    let fs = stft_cfg.sample_rate;
    let geom = ArrayGeometry::linear(cfg.mics, cfg.spacing_m)?;
    let angles = interferer_ring(cfg.interferers);
    let steering = SteeringField::from_geometry(&geom, BROADSIDE, &stft_cfg);
    let speech = load_utterances(&cfg.speech_files, cfg.utterances, cfg.duration_s, cfg.seed, fs)?;
    let fit_cfg = WindowedFitConfig {
        window_ms: cfg.window_ms.unwrap_or(f64::INFINITY),
        overlap: if cfg.window_ms.is_some() { cfg.overlap } else { 0.0 },
        components: cfg.components,
        em: EmOptions {
            restarts: cfg.em_restarts,
            seed: cfg.seed,
            ..EmOptions::default()
        },
    };
    let condition = match cfg.source {
        InterfererSource::Speech => "interfering-speech",
        InterfererSource::GaussianBursts => "gaussian-bursts",
    };

    let mut records = Vec::new();
    let mut pattern = None;
    for (u, s) in speech.iter().enumerate() {
        let sources = interferer_signals(cfg, s.len(), u, fs)?;
        let mut noise: Option<Spectrogram> = None;
        for (src, &angle) in sources.iter().zip(&angles) {
            let part = spatialize(&stft, src, &geom, angle)?;
            match noise.as_mut() {
                Some(n) => n.add_assign(&part)?,
                None => noise = Some(part),
            }
        }
        let mut noise = noise.context("at least one interferer is required")?;
        // the reference microphone sits at the array origin, so its noise is
        // the plain sum of the sources
        let raw_ref: Vec<f64> = (0..s.len()).map(|t| sources.iter().map(|x| x[t]).sum()).collect();
        let g = snr_gain(s, &raw_ref, cfg.snr_db);
        noise.scale(g);
        let model = em_fit_windowed(&noise, &stft_cfg, &WindowedFitConfig {
            em: EmOptions {
                seed: mix_seed(cfg.seed, u as u64),
                ..fit_cfg.em.clone()
            },
            ..fit_cfg.clone()
        })?;
        if cfg.directivity && pattern.is_none() {
            pattern = Some(component_directivity(&model, &geom, &stft_cfg, &angles)?);
        }
        let mut noisy = spatialize(&stft, s, &geom, BROADSIDE)?;
        noisy.add_assign(&noise)?;
        let trial = Trial {
            clean: s.clone(),
            noise_ref: raw_ref.iter().map(|v| v * g).collect(),
            noisy,
            steering: steering.clone(),
            model,
        };
        let scores = evaluate(&stft, &trial, &cfg.methods, cfg.nu, cfg.psd)?;
        push_records(&mut records, condition, cfg.components, None, u, scores);
    }
    Ok(ExperimentResult {
        records,
        directivity: pattern,
    })
}

// ---------------------------------------------------------------------------
// Component directivity

/// Directivity of the per-component MVDR beamformers of a fitted model, with
/// components aligned across bins by null direction. Curves are the median
/// gain in dB over the bins of a frequency band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDirectivity {
    pub band_hz: (f64, f64),
    /// Angle grid in degrees.
    pub angles_deg: Vec<f64>,
    /// Aggregate-covariance MVDR, dB per angle.
    pub aggregate_db: Vec<f64>,
    /// One dB curve per aligned component.
    pub components_db: Vec<Vec<f64>>,
    pub interferer_angles_deg: Vec<f64>,
    /// Full (frequency × angle) pattern of the aggregate beamformer.
    pub aggregate_pattern: DirectivityPattern,
    /// Full patterns of the aligned components.
    pub component_patterns: Vec<DirectivityPattern>,
}

pub const DIRECTIVITY_BAND_HZ: (f64, f64) = (500.0, 2800.0);

/// Per-angle median over the frequencies in `band` of the gain in dB.
pub fn band_median_db(p: &DirectivityPattern, band: (f64, f64)) -> Vec<f64> {
    let rows: Vec<usize> = (0..p.frequencies.len())
        .filter(|&f| (band.0..=band.1).contains(&p.frequencies[f]))
        .collect();
    (0..p.angles.len())
        .map(|a| median(&mut rows.iter().map(|&f| p.gain(f, a)).collect::<Vec<_>>()))
        .collect()
}

/// Angle in `[0°, 180°]` at which `w` has its deepest response on a linear
/// array (the response is symmetric about the array axis).
fn null_angle(w: &[Complex64], geom: &ArrayGeometry, f: f64) -> Result<f64> {
    let grid: Vec<f64> = (0..=180).map(|d| (d as f64).to_radians()).collect();
    let p = directivity(|_| Ok(w.to_vec()), geom, &grid, &[f])?;
    let (idx, _) = p
        .row(0)
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .context("empty grid")?;
    Ok(idx as f64)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Consistent labelling of components across bins: slot centres are the
/// median null angles, each bin's components are greedily matched to the
/// nearest centres, and the two steps alternate until the labelling settles.
/// Returns, per bin, the component index for every slot.
fn align_by_null(nulls: &[Vec<f64>], m: usize) -> Vec<Vec<usize>> {
    let mut slots: Vec<Vec<usize>> = nulls.iter().map(|_| (0..m).collect()).collect();
    for _ in 0..20 {
        let centres: Vec<f64> = (0..m)
            .map(|s| median(&mut nulls.iter().zip(&slots).map(|(n, o)| n[o[s]]).collect::<Vec<_>>()))
            .collect();
        let next: Vec<Vec<usize>> = nulls
            .iter()
            .map(|n| {
                let mut pairs: Vec<(f64, usize, usize)> = (0..m)
                    .flat_map(|s| (0..m).map(move |c| (s, c)))
                    .map(|(s, c)| ((n[c] - centres[s]).abs(), s, c))
                    .collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut order = vec![usize::MAX; m];
                let mut used = vec![false; m];
                for (_, s, c) in pairs {
                    if order[s] == usize::MAX && !used[c] {
                        order[s] = c;
                        used[c] = true;
                    }
                }
                order
            })
            .collect();
        if next == slots {
            break;
        }
        slots = next;
    }
    slots
}

pub fn component_directivity(
    model: &NoiseModel,
    geom: &ArrayGeometry,
    stft: &StftConfig,
    interferers: &[f64],
) -> Result<ComponentDirectivity> {
    let window = &model.windows()[0];
    let m = window.bins[0].num_components();
    let freqs = stft.frequencies();
    let angles: Vec<f64> = (0..360).map(|d| (d as f64).to_radians()).collect();
    let steering = SteeringField::from_geometry(geom, BROADSIDE, stft);

    let mut agg_w = Vec::with_capacity(freqs.len());
    let mut per_bin: Vec<Vec<(f64, Vec<Complex64>)>> = Vec::with_capacity(freqs.len());
    for (k, &f) in freqs.iter().enumerate() {
        let ctx = FilterContext::new(steering.get(k, 0), &window.bins[k])?;
        agg_w.push(ctx.mvdr_weights());
        let mut ws: Vec<(f64, Vec<Complex64>)> = (0..m)
            .map(|c| {
                let w = ctx.component_weights(c);
                Ok((if f > 0.0 { null_angle(&w, geom, f)? } else { 0.0 }, w))
            })
            .collect::<Result<_>>()?;
        ws.sort_by(|a, b| a.0.total_cmp(&b.0));
        per_bin.push(ws);
    }
    let slots = align_by_null(&per_bin.iter().map(|b| b.iter().map(|x| x.0).collect()).collect::<Vec<_>>(), m);
    let mut comp_w: Vec<Vec<Vec<Complex64>>> = vec![Vec::with_capacity(freqs.len()); m];
    for (bin, order) in per_bin.into_iter().zip(&slots) {
        let mut bin: Vec<Option<Vec<Complex64>>> = bin.into_iter().map(|(_, w)| Some(w)).collect();
        for (slot, &c) in comp_w.iter_mut().zip(order) {
            slot.push(bin[c].take().expect("permutation"));
        }
    }
    let pattern_of = |weights: &[Vec<Complex64>]| {
        directivity(
            |f| {
                let k = (f / stft.bin_frequency(1)).round() as usize;
                Ok(weights[k].clone())
            },
            geom,
            &angles,
            &freqs,
        )
    };
    let aggregate_pattern = pattern_of(&agg_w)?;
    let component_patterns = comp_w.iter().map(|w| pattern_of(w)).collect::<gmmse::Result<Vec<_>>>()?;
    let band = DIRECTIVITY_BAND_HZ;
    Ok(ComponentDirectivity {
        band_hz: band,
        angles_deg: angles.iter().map(|a| a.to_degrees()).collect(),
        aggregate_db: band_median_db(&aggregate_pattern, band),
        components_db: component_patterns.iter().map(|p| band_median_db(p, band)).collect(),
        interferer_angles_deg: interferers.iter().map(|a| a.to_degrees()).collect(),
        aggregate_pattern,
        component_patterns,
    })
}

impl ComponentDirectivity {
    /// Lowest gain within `±tolerance_deg` of `angle_deg` on a curve.
    pub fn min_near(curve: &[f64], angles_deg: &[f64], angle_deg: f64, tolerance_deg: f64) -> f64 {
        curve
            .iter()
            .zip(angles_deg)
            .filter(|(_, a)| {
                let d = (*a - angle_deg).rem_euclid(360.0);
                d.min(360.0 - d) <= tolerance_deg + 1e-9
            })
            .map(|(g, _)| *g)
            .fold(f64::INFINITY, f64::min)
    }

    /// For each component, the interferers it suppresses below
    /// `threshold_db` within `±tolerance_deg`.
    pub fn nulled_interferers(&self, threshold_db: f64, tolerance_deg: f64) -> Vec<Vec<usize>> {
        self.components_db
            .iter()
            .map(|curve| {
                self.interferer_angles_deg
                    .iter()
                    .enumerate()
                    .filter(|(_, &a)| Self::min_near(curve, &self.angles_deg, a, tolerance_deg) <= threshold_db)
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }

    /// Interferers the aggregate beamformer suppresses below `threshold_db`
    /// exactly at their angle.
    pub fn aggregate_nulled(&self, threshold_db: f64) -> Vec<usize> {
        self.interferer_angles_deg
            .iter()
            .enumerate()
            .filter(|(_, &a)| Self::min_near(&self.aggregate_db, &self.angles_deg, a, 0.5) <= threshold_db)
            .map(|(i, _)| i)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Recorded clean/noise pair

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalPairConfig {
    /// Multichannel clean speech as captured by the array.
    pub clean: Option<PathBuf>,
    /// Multichannel noise recorded with the same array.
    pub noise: Option<PathBuf>,
    pub components: Vec<usize>,
    pub window_ms: f64,
    pub overlap: f64,
    pub nu: f64,
    pub snr_db: Option<f64>,
    pub steering_smoothing: f64,
    pub seed: u64,
    pub em_restarts: usize,
    pub psd: SpeechPsdMode,
    pub methods: Vec<Method>,
    /// Length of the synthetic stand-in used when no files are given.
    pub duration_s: f64,
}

impl Default for ExternalPairConfig {
    fn default() -> Self {
        Self {
            clean: None,
            noise: None,
            components: vec![1, 2, 3, 4, 5],
            window_ms: 750.0,
            overlap: 0.5,
            nu: 0.25,
            snr_db: None,
            steering_smoothing: STEERING_SMOOTHING,
            seed: 1,
            em_restarts: 5,
            psd: SpeechPsdMode::Cepstral,
            methods: vec![Method::Mvdr, Method::MvdrMmse, Method::NlMmse],
            duration_s: 4.0,
        }
    }
}

/// Synthetic stand-in for a recorded pair: broadside speech on two
/// microphones and the burst noise field.
fn synthetic_pair(cfg: &ExternalPairConfig, fs: u32) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let geom = ArrayGeometry::linear(2, 0.06)?;
    let stft = Stft::new(StftConfig::default())?;
    let s = SpeechSynth::for_seed(fs, 0).utterance(cfg.duration_s, mix_seed(cfg.seed, 77));
    let clean = stft.synthesize(&spatialize(&stft, &s, &geom, BROADSIDE)?)?;
    let bursts = InterfererConfig {
        seed: cfg.seed,
        ..InterfererConfig::bursts()
    };
    let sources = interferer_signals(&bursts, s.len(), 0, fs)?;
    let mut noise_spec: Option<Spectrogram> = None;
    for (src, angle) in sources.iter().zip(interferer_ring(bursts.interferers)) {
        let part = spatialize(&stft, src, &geom, angle)?;
        match noise_spec.as_mut() {
            Some(n) => n.add_assign(&part)?,
            None => noise_spec = Some(part),
        }
    }
    let noise = stft.synthesize(&noise_spec.context("no interferers")?)?;
    Ok((clean, noise))
}

/// EM on the recorded noise in long segments, steering from the clean
/// recording, for every mixture size in the grid.
pub fn run_external_pair(cfg: &ExternalPairConfig) -> Result<ExperimentResult> {
    let stft_cfg = StftConfig::default();
    let stft = Stft::new(stft_cfg)?;
    let fs = stft_cfg.sample_rate;
    let (clean, mut noise) = match (&cfg.clean, &cfg.noise) {
        (Some(c), Some(n)) => (read_wav_at(c, fs)?.channels, read_wav_at(n, fs)?.channels),
        (None, None) => synthetic_pair(cfg, fs)?,
        _ => bail!("both a clean and a noise recording are required"),
    };
    ensure!(clean.len() == noise.len(), "clean and noise recordings differ in channel count");
    ensure!(clean.len() >= 2, "at least two channels are required");
    let len = clean[0].len().min(noise[0].len());
    let mut clean: Vec<Vec<f64>> = clean.into_iter().map(|mut c| {
        c.truncate(len);
        c
    }).collect();
    noise.iter_mut().for_each(|c| c.truncate(len));
    if let Some(snr) = cfg.snr_db {
        let g = snr_gain(&clean[0], &noise[0], snr);
        noise.iter_mut().flatten().for_each(|v| *v *= g);
    }
    let clean_spec = stft.analyze(&clean)?;
    let noise_spec = stft.analyze(&noise)?;
    let steering = estimate_steering(&clean_spec, cfg.steering_smoothing)?;
    let mut noisy = clean_spec;
    noisy.add_assign(&noise_spec)?;

    let mut records = Vec::new();
    for &m in &cfg.components {
        let model = em_fit_windowed(&noise_spec, &stft_cfg, &WindowedFitConfig {
            window_ms: cfg.window_ms,
            overlap: cfg.overlap,
            components: m,
            em: EmOptions {
                restarts: cfg.em_restarts,
                seed: cfg.seed,
                ..EmOptions::default()
            },
        })?;
        let trial = Trial {
            clean: std::mem::take(&mut clean[0]),
            noise_ref: noise[0].clone(),
            noisy: noisy.clone(),
            steering: steering.clone(),
            model,
        };
        let scores = evaluate(&stft, &trial, &cfg.methods, cfg.nu, cfg.psd)?;
        clean[0] = trial.clean;
        push_records(&mut records, &format!("M={m}"), m, None, 0, scores);
    }
    Ok(ExperimentResult {
        records,
        directivity: None,
    })
}

/// Per-condition means for every method and metric, in deterministic order.
pub fn summarize(result: &ExperimentResult) -> Vec<(String, String, String, gmmse::metrics::Summary)> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in &result.records {
        for metric in Metric::ALL {
            groups
                .entry((r.condition.clone(), r.method.to_string(), metric.name().to_string()))
                .or_default()
                .push(metric.of(r));
        }
    }
    // paired gap between the joint estimator and the separated chain
    for condition in result.conditions() {
        for metric in Metric::ALL {
            let pick = |m: Method| -> Vec<(usize, f64)> {
                result
                    .records
                    .iter()
                    .filter(|r| r.condition == condition && r.method == m)
                    .map(|r| (r.utterance, metric.of(r)))
                    .collect()
            };
            let (a, b) = (pick(Method::NlMmse), pick(Method::MvdrMmse));
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let d: Vec<f64> = a
                .iter()
                .filter_map(|(u, x)| b.iter().find(|(v, _)| v == u).map(|(_, y)| x - y))
                .collect();
            groups.insert((condition.clone(), "delta".into(), metric.name().into()), d);
        }
    }
    groups
        .into_iter()
        .map(|((c, m, k), v)| (c, m, k, gmmse::metrics::Summary::of(&v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_recovers_permuted_labels() {
        // three sources near 20°, 90° and 150°, listed in a different order per bin
        let truth = [20.0, 90.0, 150.0];
        let perms = [[0, 1, 2], [2, 0, 1], [1, 2, 0], [0, 2, 1], [2, 1, 0]];
        let nulls: Vec<Vec<f64>> = perms
            .iter()
            .enumerate()
            .map(|(k, p)| p.iter().map(|&s| truth[s] + k as f64 - 2.0).collect())
            .collect();
        let slots = align_by_null(&nulls, 3);
        let first: Vec<f64> = slots[0].iter().map(|&c| nulls[0][c]).collect();
        for (n, o) in nulls.iter().zip(&slots) {
            for (s, &c) in o.iter().enumerate() {
                assert!((n[c] - first[s]).abs() <= 4.0, "{n:?} {o:?}");
            }
        }
    }

    #[test]
    fn min_near_wraps_around() {
        let angles: Vec<f64> = (0..360).map(f64::from).collect();
        let mut curve = vec![0.0; 360];
        curve[358] = -40.0;
        assert_eq!(ComponentDirectivity::min_near(&curve, &angles, 1.0, 3.0), -40.0);
        assert_eq!(ComponentDirectivity::min_near(&curve, &angles, 1.0, 2.0), 0.0);
        assert_eq!(median(&mut [3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn summary_pairs_delta_by_utterance() {
        let rec = |u, method, v| Record {
            condition: "M=2".into(),
            components: 2,
            q: None,
            utterance: u,
            method,
            si_sdr: v,
            si_sir: v,
            si_sar: v,
        };
        let result = ExperimentResult {
            records: vec![
                rec(0, Method::MvdrMmse, 1.0),
                rec(1, Method::MvdrMmse, 5.0),
                rec(1, Method::NlMmse, 8.0),
                rec(0, Method::NlMmse, 2.0),
            ],
            directivity: None,
        };
        let rows = summarize(&result);
        let delta = rows.iter().find(|r| r.1 == "delta" && r.2 == "si_sdr").unwrap();
        assert_eq!(delta.3.mean, 2.0);
        assert_eq!(result.gaps(Method::NlMmse, Method::MvdrMmse, Metric::SiSdr), vec![("M=2".to_string(), 2.0)]);
    }

    #[test]
    fn noise_field_is_seeded_per_bin() {
        let mix = ComplexGaussianMixture::single(gmmse::numerics::HermitianMatrix::identity(2));
        let a = sample_noise_field(&[mix.clone(), mix.clone()], 5, 7).unwrap();
        assert_eq!(a, sample_noise_field(&[mix.clone(), mix.clone()], 5, 7).unwrap());
        assert_ne!(a.vector(0, 0), a.vector(1, 0));
        assert_ne!(a, sample_noise_field(&[mix.clone(), mix], 5, 8).unwrap());
    }
}
