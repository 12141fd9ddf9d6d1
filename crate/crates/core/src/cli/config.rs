use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::presets::{preset, PRESET_NAMES};
use crate::error::{Error, Result};
use crate::synthdata::SynthConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricOptions {
    pub map_threshold: f64,
    pub percent: bool,
}

/// JSON run configuration. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub train: Option<TrainConfig>,
    pub synth: Option<SynthConfig>,
    pub paths: Paths,
    pub metrics: MetricOptions,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::at(path))?)
    }

    /// The training configuration: a named preset, an explicit `train`
    /// section, or the defaults. Naming both is an error.
    pub fn train_config(&self) -> Result<TrainConfig> {
        match (&self.preset, &self.train) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either `preset` or `train`, not both".into(),
            )),
            (Some(name), None) => resolve_preset(name),
            (None, Some(t)) => Ok(t.clone()),
            (None, None) => Ok(TrainConfig::default()),
        }
    }
}

pub fn resolve_preset(name: &str) -> Result<TrainConfig> {
    preset(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset `{name}` (expected one of {})",
            PRESET_NAMES.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossVariant;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"presett": "model2"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"epochz": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"synth": {"n_items": 3, "foo": 1}}"#).is_err());
    }

    #[test]
    fn partial_sections_use_defaults() {
        let rc = RunConfig::from_json(
            r#"{"train": {"epochs": 3, "loss": {"variant": "fixed_margin", "margin": 0.3},
                          "optimizer": {"kind": "sgd", "lr": 0.01, "momentum": 0.9}},
                "metrics": {"percent": true}}"#,
        )
        .unwrap();
        let t = rc.train_config().unwrap();
        assert_eq!(t.epochs, 3);
        assert_eq!(t.loss.variant, LossVariant::FixedMargin);
        assert_eq!(t.loss.margin, 0.3);
        assert_eq!(t.batch_size, 64);
        assert!(rc.metrics.percent);
    }

    #[test]
    fn preset_resolution() {
        let rc = RunConfig::from_json(r#"{"preset": "model5"}"#).unwrap();
        assert_eq!(rc.train_config().unwrap().loss.tau, 0.4);
        let both = RunConfig::from_json(r#"{"preset": "model5", "train": {}}"#).unwrap();
        assert!(both.train_config().is_err());
        let bad = RunConfig::from_json(r#"{"preset": "model9"}"#).unwrap();
        assert!(bad.train_config().is_err());
    }

    #[test]
    fn train_config_round_trips() {
        let t = resolve_preset("model1").unwrap();
        let text = serde_json::to_string(&t).unwrap();
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
    }
}
