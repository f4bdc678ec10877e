//! Experiment configuration documents.
//!
//! A config is a JSON object with an `experiment` tag and any subset of the
//! parameters of that experiment; missing parameters take the experiment's
//! defaults:
//!
//! ```json
//! { "experiment": "gaussian_bursts", "utterances": 2, "seed": 7 }
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::experiments::{
    run_external_pair, run_heavy_tailed, run_interferers, ExperimentResult, ExternalPairConfig, HeavyTailedConfig,
    InterfererConfig, InterfererSource,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HeavyTailed,
    InterfererSpeech,
    GaussianBursts,
    ExternalPair,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::HeavyTailed,
        ExperimentKind::InterfererSpeech,
        ExperimentKind::GaussianBursts,
        ExperimentKind::ExternalPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::HeavyTailed => "heavy_tailed",
            ExperimentKind::InterfererSpeech => "interferer_speech",
            ExperimentKind::GaussianBursts => "gaussian_bursts",
            ExperimentKind::ExternalPair => "external_pair",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let norm = name.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .with_context(|| format!("unknown experiment '{name}'"))
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentConfig {
    HeavyTailed(HeavyTailedConfig),
    InterfererSpeech(InterfererConfig),
    GaussianBursts(InterfererConfig),
    ExternalPair(ExternalPairConfig),
}

/// Overlays the fields of `overrides` on the serialized `base`.
fn overlay<T: Serialize + DeserializeOwned>(base: T, overrides: Map<String, Value>) -> Result<T> {
    let mut v = serde_json::to_value(base)?;
    let obj = v.as_object_mut().expect("configs serialize to objects");
    for (k, val) in overrides {
        ensure!(obj.contains_key(&k), "unknown parameter '{k}'");
        obj.insert(k, val);
    }
    Ok(serde_json::from_value(v)?)
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::HeavyTailed => Self::HeavyTailed(HeavyTailedConfig::default()),
            ExperimentKind::InterfererSpeech => Self::InterfererSpeech(InterfererConfig::speech()),
            ExperimentKind::GaussianBursts => Self::GaussianBursts(InterfererConfig::bursts()),
            ExperimentKind::ExternalPair => Self::ExternalPair(ExternalPairConfig::default()),
        }
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::HeavyTailed(_) => ExperimentKind::HeavyTailed,
            Self::InterfererSpeech(_) => ExperimentKind::InterfererSpeech,
            Self::GaussianBursts(_) => ExperimentKind::GaussianBursts,
            Self::ExternalPair(_) => ExperimentKind::ExternalPair,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(mut obj) = value else {
            bail!("config must be a JSON object");
        };
        let kind = match obj.remove("experiment") {
            Some(Value::String(s)) => ExperimentKind::parse(&s)?,
            Some(_) => bail!("'experiment' must be a string"),
            None => bail!("config lacks an 'experiment' field"),
        };
        let cfg = match Self::defaults(kind) {
            Self::HeavyTailed(c) => Self::HeavyTailed(overlay(c, obj)?),
            Self::InterfererSpeech(c) => Self::InterfererSpeech(overlay(c, obj)?),
            Self::GaussianBursts(c) => Self::GaussianBursts(overlay(c, obj)?),
            Self::ExternalPair(c) => Self::ExternalPair(overlay(c, obj)?),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        match self {
            Self::HeavyTailed(c) => c.seed,
            Self::InterfererSpeech(c) | Self::GaussianBursts(c) => c.seed,
            Self::ExternalPair(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::HeavyTailed(c) => c.seed = seed,
            Self::InterfererSpeech(c) | Self::GaussianBursts(c) => c.seed = seed,
            Self::ExternalPair(c) => c.seed = seed,
        }
    }

    fn files(&self) -> Vec<&PathBuf> {
        match self {
            Self::HeavyTailed(c) => c.speech_files.iter().collect(),
            Self::InterfererSpeech(c) | Self::GaussianBursts(c) => {
                c.speech_files.iter().chain(&c.interferer_files).collect()
            }
            Self::ExternalPair(c) => c.clean.iter().chain(&c.noise).collect(),
        }
    }

    /// Checks that referenced files exist and that the experiment tag and
    /// interferer source agree.
    pub fn validate(&self) -> Result<()> {
        for f in self.files() {
            ensure!(f.is_file(), "file not found: {}", f.display());
        }
        match self {
            Self::InterfererSpeech(c) => ensure!(c.source == InterfererSource::Speech, "interferer_speech requires source 'speech'"),
            Self::GaussianBursts(c) => ensure!(
                c.source == InterfererSource::GaussianBursts,
                "gaussian_bursts requires source 'gaussian-bursts'"
            ),
            _ => {}
        }
        Ok(())
    }

    /// Canonical JSON (sorted keys, every parameter spelled out).
    pub fn canonical_json(&self) -> String {
        // serde_json's default map is ordered, so re-parsing sorts the keys
        let v: Value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn run(&self) -> Result<ExperimentResult> {
        match self {
            Self::HeavyTailed(c) => run_heavy_tailed(c),
            Self::InterfererSpeech(c) | Self::GaussianBursts(c) => run_interferers(c),
            Self::ExternalPair(c) => run_external_pair(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_takes_kind_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "gaussian_bursts", "utterances": 3}"#).unwrap();
        let ExperimentConfig::GaussianBursts(c) = &cfg else {
            panic!("wrong kind");
        };
        assert_eq!(c.utterances, 3);
        assert_eq!(c.window_ms, None);
        assert_eq!(c.source, InterfererSource::GaussianBursts);
        assert_eq!(cfg.kind(), ExperimentKind::GaussianBursts);
    }

    #[test]
    fn rejects_unknown_fields_and_kinds() {
        assert!(ExperimentConfig::from_json(r#"{"experiment": "heavy_tailed", "utterence": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"utterances": 3}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "external_pair", "clean": "/no/such.wav"}"#).is_err());
    }

    #[test]
    fn hash_tracks_content_not_spelling() {
        let a = ExperimentConfig::from_json(r#"{"experiment": "heavy_tailed"}"#).unwrap();
        let b = ExperimentConfig::from_json(r#"{"experiment": "heavy-tailed", "seed": 1}"#).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.set_seed(2);
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn canonical_json_round_trips() {
        for kind in ExperimentKind::ALL {
            let cfg = ExperimentConfig::defaults(kind);
            assert_eq!(ExperimentConfig::from_json(&cfg.canonical_json()).unwrap(), cfg);
        }
    }
}
