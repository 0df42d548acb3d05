//! Run configuration files.
//!
//! A run config names the corpus, the model to train and the evaluation
//! settings. Relative paths resolve against the directory holding the
//! config file. `configs/example-run.toml` documents every field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gameblend::corpus::{synthetic_corpus, Corpus, CorpusManifest};
use gameblend::evalsuite::{ForestParams, TpklOptions};
use gameblend::genmodels::{Family, ModelConfig};
use gameblend::mechanics::JumpParams;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory for checkpoints, samples and reports.
    pub output: PathBuf,
    /// Per-game jump parameters, needed for playability.
    #[serde(default)]
    pub jump_params: Option<PathBuf>,
    pub corpus: CorpusSource,
    pub model: ModelSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(skip)]
    base: PathBuf,
}

/// Exactly one of `manifest` and `synthetic`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    /// Corpus manifest listing the vocabulary and the level files per game.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSource>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub games: usize,
    pub per_game: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Small networks and a few hundred epochs.
    #[default]
    Desk,
    /// Training lengths and schedules of the full-size models.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub z: usize,
    #[serde(default)]
    pub preset: Preset,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub kl_anneal_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub encoder_hidden: Option<Vec<usize>>,
    pub decoder_hidden: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub samples_per_weight: usize,
    pub directional_samples: usize,
    pub binary: bool,
    pub fractional: bool,
    pub trees: usize,
    pub tpkl_windows: Vec<usize>,
    pub tpkl_eps: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let tpkl = TpklOptions::default();
        Self {
            samples_per_weight: 1000,
            directional_samples: 1000,
            binary: true,
            fractional: true,
            trees: ForestParams::default().trees,
            tpkl_windows: tpkl.windows,
            tpkl_eps: tpkl.eps,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.base = base.to_path_buf();
        Ok(cfg)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_toml_str(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.corpus;
        match (&c.manifest, &c.synthetic) {
            (Some(m), None) => self.require(m)?,
            (None, Some(s)) if s.games >= 2 && s.per_game > 0 => {}
            (None, Some(_)) => {
                return Err(CliError::Usage(
                    "synthetic corpus needs games >= 2 and per_game > 0".into(),
                ))
            }
            _ => {
                return Err(CliError::Usage(
                    "[corpus] needs exactly one of `manifest` and `synthetic`".into(),
                ))
            }
        }
        if let Some(j) = &self.jump_params {
            self.require(j)?;
        }
        if ![8, 16, 32, 64].contains(&self.model.z) {
            return Err(CliError::Usage(format!(
                "model.z must be one of 8, 16, 32, 64 (got {})",
                self.model.z
            )));
        }
        Ok(())
    }

    fn require(&self, p: &Path) -> Result<(), CliError> {
        let full = self.resolve(p);
        if full.exists() {
            Ok(())
        } else {
            Err(CliError::Data(format!("{} does not exist", full.display())))
        }
    }

    pub fn load_corpus(&self) -> Result<Corpus, CliError> {
        match (&self.corpus.manifest, &self.corpus.synthetic) {
            (Some(m), _) => CorpusManifest::load_corpus(self.resolve(m))
                .map_err(|e| CliError::Data(e.to_string())),
            (None, Some(s)) => Ok(synthetic_corpus(s.games, s.per_game, s.seed)),
            (None, None) => Err(CliError::Usage("no corpus configured".into())),
        }
    }

    pub fn load_jump_params(&self) -> Result<Option<JumpParams>, CliError> {
        self.jump_params
            .as_ref()
            .map(|p| JumpParams::load(self.resolve(p)).map_err(|e| CliError::Data(e.to_string())))
            .transpose()
    }

    /// Model configuration for `k` games and the given seed.
    pub fn model_config(&self, k: usize, seed: u64) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let mut c = match m.preset {
            Preset::Desk => ModelConfig::desk(m.family, k, m.z, seed),
            Preset::Full => ModelConfig::full_size(m.family, k, m.z, seed),
        };
        if let Some(v) = m.epochs {
            c.epochs = v;
        }
        if let Some(v) = m.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = m.kl_anneal_epochs {
            c.kl_anneal_epochs = v;
        }
        if let Some(v) = m.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = &m.encoder_hidden {
            c.encoder_hidden = v.clone();
        }
        if let Some(v) = &m.decoder_hidden {
            c.decoder_hidden = v.clone();
        }
        c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(c)
    }

    pub fn forest_params(&self, seed: u64) -> ForestParams {
        ForestParams {
            trees: self.eval.trees,
            seed,
            ..ForestParams::default()
        }
    }

    pub fn tpkl(&self) -> TpklOptions {
        TpklOptions {
            windows: self.eval.tpkl_windows.clone(),
            eps: self.eval.tpkl_eps,
        }
    }
}
