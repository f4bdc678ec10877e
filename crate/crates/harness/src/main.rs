use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gmmse::filters::{
    beamform, enhance_spectrogram, estimate_speech_psd, oracle_speech_psd, CepstralSmoothing, EnhanceSetup, FilterContext,
    Method, SteeringField, ORACLE_SMOOTHING,
};
use gmmse::metrics::{si_sdr_segmental, MetricsConfig};
use gmmse::noisemodel::{em_fit_windowed, EmOptions, NoiseModel, WindowedFitConfig};
use gmmse::spatial::{degree_grid, directivity, ArrayGeometry};
use gmmse::stft::{Spectrogram, Stft, StftConfig};
use gmmse_harness::audio::{read_wav, read_wav_at, write_wav, Audio};
use gmmse_harness::config::{ExperimentConfig, ExperimentKind};
use gmmse_harness::report;

#[derive(Parser)]
#[command(name = "gmmse", version, about = "Nonlinear spatial filtering under Gaussian-mixture noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV results plus a manifest.
    Simulate(SimulateArgs),
    /// Enhance a multichannel recording with a fitted noise model.
    Enhance(EnhanceArgs),
    /// Fit a Gaussian-mixture noise model to a multichannel noise recording.
    FitNoise(FitNoiseArgs),
    /// Segmental SI-SDR / SI-SIR / SI-SAR of an enhanced signal.
    Metrics(MetricsArgs),
    /// Directivity pattern of the MVDR beamformer of a noise model.
    Directivity(DirectivityArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// JSON experiment config.
    #[arg(long, conflicts_with = "experiment")]
    config: Option<PathBuf>,
    /// Run an experiment with default parameters instead of a config file.
    #[arg(long, value_parser = ["heavy-tailed", "interferer-speech", "gaussian-bursts", "external-pair"])]
    experiment: Option<String>,
    /// Override one parameter, e.g. `--set utterances=2`; the value is JSON.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PsdArg {
    Cepstral,
    Oracle,
}

#[derive(clap::Args)]
struct EnhanceArgs {
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    noise_model: PathBuf,
    /// `ones` (aligned channels) or `angle:<degrees>` (requires --geometry).
    #[arg(long, default_value = "ones")]
    steering: String,
    /// Array geometry, e.g. `linear:2x0.06`.
    #[arg(long)]
    geometry: Option<String>,
    /// Speech shape parameter.
    #[arg(long, default_value_t = 0.25)]
    nu: f64,
    #[arg(long, value_enum, default_value = "cepstral")]
    speech_psd: PsdArg,
    /// Clean reference for `--speech-psd oracle`.
    #[arg(long)]
    clean: Option<PathBuf>,
    /// Accepted for uniformity; enhancement is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the output magnitude spectrogram in dB as CSV.
    #[arg(long)]
    spectrogram_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FitNoiseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    components: usize,
    /// Segment length; omit to fit the whole recording at once.
    #[arg(long)]
    window_ms: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    overlap: f64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct MetricsArgs {
    /// Enhanced signal (first channel is used).
    #[arg(long)]
    estimate: PathBuf,
    /// Clean target at the reference microphone.
    #[arg(long)]
    clean: PathBuf,
    /// Noise at the reference microphone.
    #[arg(long)]
    noise: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    threshold_db: f64,
    /// `.json` for the full report with segments, anything else for CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DirectivityArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    geometry: String,
    /// Look direction in degrees.
    #[arg(long, default_value_t = 90.0)]
    angle: f64,
    /// Use mixture component `m` (1-based) instead of the aggregate covariance.
    #[arg(long)]
    component: Option<usize>,
    /// Model window to use.
    #[arg(long, default_value_t = 0)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gmmse::Error| e.to_string())
}

fn stft_for(sample_rate: u32) -> Result<Stft> {
    let d = StftConfig::default();
    Ok(Stft::new(StftConfig::new(sample_rate, d.window_ms, d.shift_ms)?)?)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut doc: serde_json::Map<String, serde_json::Value> = match (&args.config, &args.experiment) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(name)) => {
            let mut m = serde_json::Map::new();
            m.insert("experiment".into(), ExperimentKind::parse(name)?.name().into());
            m
        }
        (None, None) => bail!("either --config or --experiment is required"),
    };
    for o in &args.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("expected KEY=VALUE, got '{o}'"))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
        doc.insert(k.to_string(), value);
    }
    let mut cfg = ExperimentConfig::from_json(&serde_json::Value::Object(doc).to_string())?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let result = cfg.run()?;
    let files = report::write_all(&args.out_dir, &cfg, &result)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn steering_field(spec: &str, geometry: Option<&str>, dim: usize, stft: &StftConfig) -> Result<SteeringField> {
    if spec == "ones" {
        return Ok(SteeringField::fixed(vec![vec![gmmse::Complex64::new(1.0, 0.0); dim]; stft.num_bins()])?);
    }
    let deg: f64 = spec
        .strip_prefix("angle:")
        .with_context(|| format!("unknown steering '{spec}' (expected 'ones' or 'angle:<deg>')"))?
        .parse()
        .context("bad steering angle")?;
    let geom = ArrayGeometry::parse(geometry.context("--steering angle:<deg> requires --geometry")?)?;
    ensure!(geom.num_mics() == dim, "geometry has {} microphones, recording has {dim}", geom.num_mics());
    Ok(SteeringField::from_geometry(&geom, deg.to_radians(), stft))
}

fn write_spectrogram_csv(path: &Path, spec: &Spectrogram, stft: &StftConfig) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "frame,frequency_hz,magnitude_db")?;
    for i in 0..spec.num_frames() {
        for k in 0..spec.num_bins() {
            let db = 20.0 * spec.get(0, k, i).norm().max(1e-12).log10();
            writeln!(w, "{i},{},{db:.4}", stft.bin_frequency(k))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn enhance_cmd(args: EnhanceArgs) -> Result<()> {
    let model = NoiseModel::load(&args.noise_model)?;
    let audio = read_wav_at(&args.noisy, model.sample_rate())?;
    ensure!(
        audio.num_channels() == model.dim(),
        "recording has {} channels, noise model expects {}",
        audio.num_channels(),
        model.dim()
    );
    let stft = stft_for(model.sample_rate())?;
    let cfg = *stft.config();
    ensure!(
        model.num_bins() == cfg.num_bins(),
        "noise model has {} bins, STFT has {}",
        model.num_bins(),
        cfg.num_bins()
    );
    let noisy = stft.analyze(&audio.channels)?;
    let steering = steering_field(&args.steering, args.geometry.as_deref(), model.dim(), &cfg)?;
    let setup = EnhanceSetup {
        steering: &steering,
        noise: &model,
        nu: args.nu,
    };
    let psd = if args.method.needs_speech_psd() {
        Some(match args.speech_psd {
            PsdArg::Cepstral => {
                let (z, noise_psd) = beamform(&noisy, &setup)?;
                estimate_speech_psd(&z, &noise_psd, &CepstralSmoothing::new(cfg.sample_rate))?
            }
            PsdArg::Oracle => {
                let clean = read_wav_at(args.clean.as_deref().context("--speech-psd oracle requires --clean")?, cfg.sample_rate)?;
                let mut reference = clean.channels.into_iter().next().context("empty clean recording")?;
                reference.resize(audio.len(), 0.0);
                oracle_speech_psd(&stft.analyze(&[reference])?, ORACLE_SMOOTHING)
            }
        })
    } else {
        None
    };
    let out_spec = enhance_spectrogram(&noisy, &setup, psd.as_ref(), args.method)?;
    let mut out = stft.synthesize(&out_spec)?.swap_remove(0);
    out.truncate(audio.len());
    write_wav(&args.out, &Audio::mono(cfg.sample_rate, out))?;
    if let Some(path) = &args.spectrogram_out {
        write_spectrogram_csv(path, &out_spec, &cfg)?;
    }
    Ok(())
}

fn fit_noise(args: FitNoiseArgs) -> Result<()> {
    let audio = read_wav(&args.input)?;
    let stft = stft_for(audio.sample_rate)?;
    let spec = stft.analyze(&audio.channels)?;
    let em = EmOptions {
        restarts: args.restarts,
        seed: args.seed,
        ..EmOptions::default()
    };
    let cfg = match args.window_ms {
        Some(ms) => WindowedFitConfig {
            window_ms: ms,
            overlap: args.overlap,
            components: args.components,
            em,
        },
        None => WindowedFitConfig::whole_signal(args.components, em),
    };
    let model = em_fit_windowed(&spec, stft.config(), &cfg)?;
    model.save(&args.out)?;
    Ok(())
}

fn metrics_cmd(args: MetricsArgs) -> Result<()> {
    let first = |p: &Path| -> Result<Audio> {
        let a = read_wav(p)?;
        ensure!(!a.is_empty(), "{} is empty", p.display());
        Ok(a)
    };
    let (est, clean, noise) = (first(&args.estimate)?, first(&args.clean)?, first(&args.noise)?);
    ensure!(
        est.sample_rate == clean.sample_rate && clean.sample_rate == noise.sample_rate,
        "sample rates differ"
    );
    let n = est.len().min(clean.len()).min(noise.len());
    let cfg = MetricsConfig {
        activity_threshold_db: args.threshold_db,
        ..MetricsConfig::new(est.sample_rate)
    };
    let r = si_sdr_segmental(&est.channels[0][..n], &clean.channels[0][..n], &noise.channels[0][..n], &cfg)?;
    let csv = format!(
        "{}\nestimate,si_sdr,{:.6},\nestimate,si_sir,{:.6},\nestimate,si_sar,{:.6},\n",
        gmmse::metrics::CSV_HEADER,
        r.si_sdr,
        r.si_sir,
        r.si_sar
    );
    match &args.out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => std::fs::write(p, r.to_json()? + "\n")?,
        Some(p) => std::fs::write(p, &csv)?,
        None => {}
    }
    print!("{csv}");
    Ok(())
}

fn directivity_cmd(args: DirectivityArgs) -> Result<()> {
    let model = NoiseModel::load(&args.model)?;
    let geom = ArrayGeometry::parse(&args.geometry)?;
    ensure!(
        geom.num_mics() == model.dim(),
        "geometry has {} microphones, model expects {}",
        geom.num_mics(),
        model.dim()
    );
    let window = model
        .windows()
        .get(args.window)
        .with_context(|| format!("model has {} windows", model.windows().len()))?;
    let stft = stft_for(model.sample_rate())?;
    let cfg = *stft.config();
    ensure!(model.num_bins() == cfg.num_bins(), "model bins do not match the STFT");
    let angle = args.angle.to_radians();
    let steering = SteeringField::from_geometry(&geom, angle, &cfg);
    let freqs = cfg.frequencies();
    let weights: Vec<Vec<gmmse::Complex64>> = (0..cfg.num_bins())
        .map(|k| -> Result<_> {
            let ctx = FilterContext::new(steering.get(k, 0), &window.bins[k])?;
            Ok(match args.component {
                None => ctx.mvdr_weights(),
                Some(m) => {
                    ensure!(
                        (1..=ctx.num_components()).contains(&m),
                        "component {m} out of range 1..={}",
                        ctx.num_components()
                    );
                    ctx.component_weights(m - 1)
                }
            })
        })
        .collect::<Result<_>>()?;
    let shift = cfg.bin_frequency(1);
    let pattern = directivity(|f| Ok(weights[(f / shift).round() as usize].clone()), &geom, &degree_grid(), &freqs)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    pattern.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Enhance(a) => enhance_cmd(a),
        Command::FitNoise(a) => fit_noise(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Directivity(a) => directivity_cmd(a),
    }
}
