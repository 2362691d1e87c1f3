//! Run configuration: one TOML file holding every module's settings, with
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use actorloc::attention::{AttentionConfig, NormalizationSpec, TrainConfig};
use actorloc::linking::LinkingConfig;
use actorloc::synth::SuiteConfig;
use actorloc::tracking::TrackerConfig;
use actorloc::viterbi::ViterbiConfig;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::Invalid;

pub const SNAPSHOT_FILE: &str = "config.resolved.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Deformation,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub recall_iou: Vec<f64>,
    pub budgets: Vec<usize>,
    pub map_iou: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            recall_iou: vec![0.2, 0.5],
            budgets: vec![1, 2, 5, 10, 20],
            map_iou: vec![0.2, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    pub kind: SuiteKind,
    /// Number of videos of the deformation benchmark.
    pub videos: usize,
    pub classification: SuiteConfig,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            kind: SuiteKind::Classification,
            videos: 50,
            classification: SuiteConfig::default(),
        }
    }
}

/// Inputs named on the command line, recorded so the snapshot describes the
/// whole run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proposals: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rankings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitChoice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for per-video work; 0 lets the runtime decide.
    pub jobs: usize,
    /// Pixels per feature cell of the built-in encoder, used for videos
    /// without precomputed features.
    pub encoder_cell: usize,
    pub inputs: Inputs,
    pub tracker: TrackerConfig,
    pub linking: LinkingConfig,
    pub viterbi: ViterbiConfig,
    pub attention: AttentionConfig,
    pub train: TrainConfig,
    pub normalization: NormalizationSpec,
    pub eval: EvalConfig,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 1,
            encoder_cell: 8,
            inputs: Inputs::default(),
            tracker: TrackerConfig::default(),
            linking: LinkingConfig::default(),
            viterbi: ViterbiConfig::default(),
            attention: AttentionConfig::default(),
            train: TrainConfig::default(),
            normalization: NormalizationSpec::default(),
            eval: EvalConfig::default(),
            synth: SynthSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            self.tracker.validate(),
            self.linking.validate(),
            self.viterbi.validate(),
            self.train.validate(),
            self.normalization.validate(),
        ];
        for c in checks {
            c.map_err(|e| Invalid(e.to_string()))?;
        }
        if self.encoder_cell == 0 {
            return Err(Invalid("encoder_cell must be >= 1".into()).into());
        }
        let thetas = self.eval.recall_iou.iter().chain(&self.eval.map_iou);
        if let Some(t) = thetas.into_iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Invalid(format!("IoU threshold {t} must lie in (0, 1]")).into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.inputs
            .out
            .as_deref()
            .ok_or_else(|| Invalid("an output directory is required (--out)".into()).into())
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.inputs
            .manifest
            .as_deref()
            .ok_or_else(|| Invalid("a manifest is required (--manifest)".into()).into())
    }

    /// Writes the fully resolved configuration next to the run's outputs.
    pub fn write_snapshot(&self, command: &str) -> Result<()> {
        let dir = self.output_dir()?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let body = toml::to_string(self).context("serializing the resolved configuration")?;
        let text = format!("# actorloc {command}\n{body}");
        let path = dir.join(SNAPSHOT_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = RunConfig {
            seed: 42,
            ..Default::default()
        };
        cfg.inputs.manifest = Some("data/manifest.json".into());
        cfg.eval.budgets = vec![3];
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[linking]\nmax_proposal = 3").is_err());
        let partial: RunConfig = toml::from_str("[linking]\nmax_proposals = 3").unwrap();
        assert_eq!(partial.linking.max_proposals, 3);
        assert_eq!(partial.linking.filter_threshold, 0.7);
    }
}
