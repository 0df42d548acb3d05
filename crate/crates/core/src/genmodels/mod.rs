//! The four generative model families and their checkpoints.
//!
//! | family | encoder input | decoder input | latent prior |
//! |--------|---------------|---------------|--------------|
//! | GMVAE  | x             | z             | per-game Gaussian from the prior net |
//! | CVAE   | x ‖ game      | z ‖ game      | N(0, I), KL weight annealed |
//! | CGMVAE | x ‖ dir       | z ‖ dir       | per-game Gaussian from the prior net |
//! | CCVAE  | x ‖ game ‖ dir| z ‖ game ‖ dir| N(0, I), KL weight annealed |
//!
//! `x` is the one-hot segment encoding, `game` a length-k label and `dir` the
//! 4-bit (up, down, left, right) label. In the GM families the prior net maps
//! a game one-hot to that game's component `(μᵢ, σ²ᵢ)`; directional bits never
//! reach the prior net.

mod checkpoint;
mod loss;
mod nets;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::numerics::{LrSchedule, NumericsError};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use loss::{cvae_loss, gmvae_loss, kl_weight, model_loss, Example, LossOutput, ModelGrads};
pub use nets::{ComponentSet, ModelCheckpoint, Networks, PriorNet};
pub use train::{
    train, train_conditional_directional, train_cvae, train_gmvae, train_with_progress,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gmvae,
    Cvae,
    Cgmvae,
    Ccvae,
}

impl Family {
    /// Families whose latent prior is the learned per-game mixture.
    pub fn is_gaussian_mixture(self) -> bool {
        matches!(self, Family::Gmvae | Family::Cgmvae)
    }

    pub fn is_directional(self) -> bool {
        matches!(self, Family::Cgmvae | Family::Ccvae)
    }

    /// Length of the label concatenated to encoder and decoder inputs.
    pub fn condition_len(self, k: usize) -> usize {
        match self {
            Family::Gmvae => 0,
            Family::Cvae => k,
            Family::Cgmvae => 4,
            Family::Ccvae => k + 4,
        }
    }

    /// Builds the encoder/decoder condition from a game-part label (one-hot
    /// game or blend weights) and optional directional bits.
    pub fn condition(self, game_part: &[f64], dir: Option<&[f64; 4]>) -> Vec<f64> {
        let mut c = Vec::with_capacity(game_part.len() + 4);
        if matches!(self, Family::Cvae | Family::Ccvae) {
            c.extend_from_slice(game_part);
        }
        if self.is_directional() {
            c.extend_from_slice(dir.expect("directional family needs a directional label"));
        }
        c
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gmvae => "gmvae",
            Family::Cvae => "cvae",
            Family::Cgmvae => "cgmvae",
            Family::Ccvae => "ccvae",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gmvae" => Ok(Family::Gmvae),
            "cvae" => Ok(Family::Cvae),
            "cgmvae" => Ok(Family::Cgmvae),
            "ccvae" => Ok(Family::Ccvae),
            other => Err(ModelError::InvalidConfig(format!(
                "unknown family {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Number of basis games.
    pub k: usize,
    /// Latent dimensionality.
    pub z: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    /// Epochs over which the KL weight rises linearly from 0 to 1 (CVAE
    /// families only; GM families always use weight 1).
    pub kl_anneal_epochs: usize,
    pub seed: u64,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub batch_size: usize,
}

impl ModelConfig {
    /// Training setup reported for the full-size models: 1000 epochs with
    /// plateau decay for the GM families, 10000 epochs with step decay and
    /// a 2500-epoch KL anneal for the CVAE families.
    pub fn full_size(family: Family, k: usize, z: usize, seed: u64) -> Self {
        let (epochs, schedule, anneal) = if family.is_gaussian_mixture() {
            (
                1000,
                LrSchedule::Plateau {
                    factor: 0.1,
                    patience: 50,
                },
                0,
            )
        } else {
            (
                10_000,
                LrSchedule::Step {
                    factor: 0.1,
                    every: 2500,
                },
                2500,
            )
        };
        Self {
            family,
            k,
            z,
            epochs,
            learning_rate: 0.001,
            schedule,
            kl_anneal_epochs: anneal,
            seed,
            encoder_hidden: vec![512, 256, 128],
            decoder_hidden: vec![128, 256],
            batch_size: 32,
        }
    }

    /// Small networks and short schedules for desk-scale experiments.
    pub fn desk(family: Family, k: usize, z: usize, seed: u64) -> Self {
        let mut c = Self::full_size(family, k, z, seed);
        c.encoder_hidden = vec![64, 32, 32];
        c.decoder_hidden = vec![32, 64];
        c.epochs = 300;
        if family.is_gaussian_mixture() {
            c.schedule = LrSchedule::Plateau {
                factor: 0.1,
                patience: 50,
            };
        } else {
            c.schedule = LrSchedule::Step {
                factor: 0.1,
                every: 250,
            };
            c.kl_anneal_epochs = 75;
        }
        c.learning_rate = 0.002;
        c.batch_size = 16;
        c
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.z == 0 {
            return bad("latent dimension z must be positive");
        }
        if self.k < 2 {
            return bad("at least two games are required (k >= 2)");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.encoder_hidden.is_empty() || self.decoder_hidden.is_empty() {
            return bad("encoder and decoder need at least one hidden layer");
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    /// Short content hash of the configuration, embedded for provenance.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("checkpoint family {got} does not match the required {expected}")]
    FamilyMismatch { expected: String, got: Family },
    #[error("segment {0} has no directional label")]
    MissingDirectionalLabel(usize),
    #[error("directional family needs a directional label")]
    MissingDirection,
    #[error("checkpoint version {found} is not supported (this build reads {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_layout() {
        let game = [0.0, 1.0, 0.0];
        let dir = [1.0, 0.0, 0.0, 1.0];
        assert!(Family::Gmvae.condition(&game, None).is_empty());
        assert_eq!(Family::Cvae.condition(&game, None), game.to_vec());
        assert_eq!(Family::Cgmvae.condition(&game, Some(&dir)), dir.to_vec());
        assert_eq!(
            Family::Ccvae.condition(&game, Some(&dir)),
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(Family::Ccvae.condition_len(4), 8);
    }

    #[test]
    fn config_validation() {
        let mut c = ModelConfig::desk(Family::Gmvae, 4, 8, 1);
        assert!(c.validate().is_ok());
        c.k = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::desk(Family::Gmvae, 4, 0, 1);
        assert!(c.validate().is_err());
        c.z = 8;
        c.epochs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ModelConfig::desk(Family::Cvae, 4, 8, 1);
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.seed = 2;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn full_size_schedules() {
        let g = ModelConfig::full_size(Family::Gmvae, 4, 32, 0);
        assert_eq!(g.epochs, 1000);
        assert_eq!(
            g.schedule,
            LrSchedule::Plateau {
                factor: 0.1,
                patience: 50
            }
        );
        let c = ModelConfig::full_size(Family::Cvae, 4, 32, 0);
        assert_eq!(c.epochs, 10_000);
        assert_eq!(c.kl_anneal_epochs, 2500);
        assert_eq!(
            c.schedule,
            LrSchedule::Step {
                factor: 0.1,
                every: 2500
            }
        );
    }
}
