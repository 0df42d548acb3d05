//! Blend weights, blended latent Gaussians and blended sampling.
//!
//! GM families blend the learned per-game components:
//! `mean = Σ wᵢ μᵢ` and `var = Σ wᵢ² σ²ᵢ`, with the weights used as given.
//! Conditional families instead feed the weights to the decoder in place of
//! the one-hot game label and draw the latent from `N(0, I)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DirectionalLabel, Segment, TileGrid};
use crate::genmodels::{ComponentSet, Family, ModelCheckpoint, ModelError};
use crate::numerics::{standard_normal, DiagGaussian};

#[derive(Debug, Error)]
pub enum BlendError {
    #[error("blend weights are all zero")]
    AllZeroWeights,
    #[error("expected {expected} weights, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("weight {index} is {value}; weights must be finite and non-negative")]
    InvalidWeight { index: usize, value: f64 },
    #[error("binary weights must be 0 or 1 (weight {index} is {value})")]
    NotBinary { index: usize, value: f64 },
    #[error("cannot parse weights from {0:?}")]
    Parse(String),
    #[error("{op} needs a {expected} checkpoint, got {got}")]
    FamilyMismatch {
        op: &'static str,
        expected: &'static str,
        got: Family,
    },
    #[error("{0} checkpoints need a directional label")]
    MissingDirection(Family),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    /// Multi-hot 0/1 weights; classifier scores use factor `100 / #ones`.
    Binary,
    /// Arbitrary non-negative weights; classifier scores use factor 100.
    Fractional,
}

/// Non-empty, non-negative weight vector over the basis games.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct BlendWeights {
    w: Vec<f64>,
    kind: WeightKind,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    w: Vec<f64>,
    kind: WeightKind,
}

impl TryFrom<RawWeights> for BlendWeights {
    type Error = BlendError;

    fn try_from(r: RawWeights) -> Result<Self, Self::Error> {
        BlendWeights::new(r.w, r.kind)
    }
}

impl From<BlendWeights> for RawWeights {
    fn from(b: BlendWeights) -> Self {
        RawWeights {
            w: b.w,
            kind: b.kind,
        }
    }
}

impl BlendWeights {
    pub fn new(w: Vec<f64>, kind: WeightKind) -> Result<Self, BlendError> {
        for (index, &value) in w.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(BlendError::InvalidWeight { index, value });
            }
            if kind == WeightKind::Binary && value != 0.0 && value != 1.0 {
                return Err(BlendError::NotBinary { index, value });
            }
        }
        if w.iter().all(|&x| x == 0.0) {
            return Err(BlendError::AllZeroWeights);
        }
        Ok(Self { w, kind })
    }

    /// Binary when every entry is 0 or 1, fractional otherwise.
    pub fn infer(w: Vec<f64>) -> Result<Self, BlendError> {
        let kind = if w.iter().all(|&x| x == 0.0 || x == 1.0) {
            WeightKind::Binary
        } else {
            WeightKind::Fractional
        };
        Self::new(w, kind)
    }

    pub fn one_hot(game: usize, k: usize) -> Self {
        let mut w = vec![0.0; k];
        w[game] = 1.0;
        Self {
            w,
            kind: WeightKind::Binary,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Number of non-zero entries.
    pub fn ones(&self) -> usize {
        self.w.iter().filter(|&&x| x != 0.0).count()
    }

    /// `w / Σw`.
    pub fn normalized(&self) -> Vec<f64> {
        let s = self.sum();
        self.w.iter().map(|x| x / s).collect()
    }

    pub fn check_len(&self, k: usize) -> Result<(), BlendError> {
        if self.w.len() == k {
            Ok(())
        } else {
            Err(BlendError::BadLength {
                expected: k,
                got: self.w.len(),
            })
        }
    }

    /// Compact label: `1010` for binary weights, `0.5,0.3,0.2,0` otherwise.
    pub fn label(&self) -> String {
        match self.kind {
            WeightKind::Binary => self
                .w
                .iter()
                .map(|&x| if x == 1.0 { '1' } else { '0' })
                .collect(),
            WeightKind::Fractional => self
                .w
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
        }
    }
}

impl fmt::Display for BlendWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for BlendWeights {
    type Err = BlendError;

    /// Accepts comma separated numbers (`0.5,0.3,0.2,0`) or a bit string
    /// (`1010`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || BlendError::Parse(s.to_string());
        let w: Vec<f64> = if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_, _>>()?
        } else if !s.is_empty() && s.chars().all(|c| c == '0' || c == '1') {
            s.chars()
                .map(|c| if c == '1' { 1.0 } else { 0.0 })
                .collect()
        } else {
            return Err(bad());
        };
        Self::infer(w)
    }
}

/// All `2ᵏ − 1` non-zero binary weights, ordered as bit strings with game 1
/// as the most significant digit (`0001`, `0010`, ..., `1111`).
pub fn binary_weights(k: usize) -> Vec<BlendWeights> {
    (1u32..(1 << k))
        .map(|n| {
            let w = (0..k).map(|j| ((n >> (k - 1 - j)) & 1) as f64).collect();
            BlendWeights {
                w,
                kind: WeightKind::Binary,
            }
        })
        .collect()
}

/// The four fractional weights evaluated for four-game blends.
pub fn default_fractional_weights() -> Vec<BlendWeights> {
    [
        [0.5, 0.3, 0.2, 0.0],
        [0.1, 0.1, 0.1, 0.7],
        [0.1, 0.6, 0.2, 0.1],
        [0.0, 0.2, 0.3, 0.5],
    ]
    .into_iter()
    .map(|w| BlendWeights {
        w: w.to_vec(),
        kind: WeightKind::Fractional,
    })
    .collect()
}

/// Blended latent distribution; variances are positive whenever a weight is.
pub type BlendedGaussian = DiagGaussian;

/// `⟨M, W⟩` and `⟨V, W²⟩`, weights taken literally.
pub fn blend_components(
    set: &ComponentSet,
    w: &BlendWeights,
) -> Result<BlendedGaussian, BlendError> {
    blend_components_with(set, w, false)
}

/// [`blend_components`], optionally dividing the weights by their sum first.
pub fn blend_components_with(
    set: &ComponentSet,
    w: &BlendWeights,
    normalize: bool,
) -> Result<BlendedGaussian, BlendError> {
    w.check_len(set.k())?;
    let weights = if normalize {
        w.normalized()
    } else {
        w.w.clone()
    };
    let z = set.z();
    let mut mean = vec![0.0; z];
    let mut var = vec![0.0; z];
    for (i, &wi) in weights.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for d in 0..z {
            mean[d] += wi * set.means[i][d];
            var[d] += wi * wi * set.vars[i][d];
        }
    }
    Ok(DiagGaussian { mean, var })
}

fn dir_for(family: Family, dir: Option<&DirectionalLabel>) -> Result<Option<[f64; 4]>, BlendError> {
    match (family.is_directional(), dir) {
        (true, Some(d)) => Ok(Some(d.0)),
        (true, None) => Err(BlendError::MissingDirection(family)),
        (false, _) => Ok(None),
    }
}

/// Draws `n` segments from the blended component distribution of a GMVAE or
/// CGMVAE checkpoint.
pub fn sample_blend_gm(
    ckpt: &ModelCheckpoint,
    w: &BlendWeights,
    n: usize,
    dir: Option<&DirectionalLabel>,
    seed: u64,
) -> Result<Vec<Segment>, BlendError> {
    let family = ckpt.family();
    if !family.is_gaussian_mixture() {
        return Err(BlendError::FamilyMismatch {
            op: "sample_blend_gm",
            expected: "gmvae or cgmvae",
            got: family,
        });
    }
    let set = ckpt
        .components
        .as_ref()
        .ok_or_else(|| ModelError::CorruptCheckpoint("GM checkpoint without components".into()))?;
    let blended = blend_components(set, w)?;
    let dir = dir_for(family, dir)?;
    let cond = family.condition(w.weights(), dir.as_ref());
    decode_many(ckpt, w, n, seed, dir, |rng| blended.sample(rng), &cond)
}

/// Draws `n` segments from a CVAE or CCVAE checkpoint with `w` as the game
/// label and latents from `N(0, I)`.
pub fn sample_blend_conditional(
    ckpt: &ModelCheckpoint,
    w: &BlendWeights,
    n: usize,
    dir: Option<&DirectionalLabel>,
    seed: u64,
) -> Result<Vec<Segment>, BlendError> {
    let family = ckpt.family();
    if family.is_gaussian_mixture() {
        return Err(BlendError::FamilyMismatch {
            op: "sample_blend_conditional",
            expected: "cvae or ccvae",
            got: family,
        });
    }
    w.check_len(ckpt.config.k)?;
    let dir = dir_for(family, dir)?;
    let cond = family.condition(w.weights(), dir.as_ref());
    let z = ckpt.config.z;
    decode_many(ckpt, w, n, seed, dir, |rng| standard_normal(z, rng), &cond)
}

/// Dispatches to the sampler matching the checkpoint family.
pub fn sample_blend(
    ckpt: &ModelCheckpoint,
    w: &BlendWeights,
    n: usize,
    dir: Option<&DirectionalLabel>,
    seed: u64,
) -> Result<Vec<Segment>, BlendError> {
    if ckpt.family().is_gaussian_mixture() {
        sample_blend_gm(ckpt, w, n, dir, seed)
    } else {
        sample_blend_conditional(ckpt, w, n, dir, seed)
    }
}

/// Each draw `i` uses its own stream derived from `(seed, i)`, so results do
/// not depend on thread scheduling and a prefix of a larger draw matches a
/// smaller one.
fn decode_many(
    ckpt: &ModelCheckpoint,
    w: &BlendWeights,
    n: usize,
    seed: u64,
    dir: Option<[f64; 4]>,
    latent: impl Fn(&mut crate::Rng) -> Vec<f64> + Sync,
    cond: &[f64],
) -> Result<Vec<Segment>, BlendError> {
    let k = ckpt.config.k;
    // blended segments are tagged with their heaviest game
    let game = argmax(w.weights());
    let grids: Vec<TileGrid> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::seeded_rng(crate::derive_seed(seed, i as u64));
            ckpt.decode(&latent(&mut rng), cond)
        })
        .collect::<Result<_, _>>()?;
    Ok(grids
        .into_iter()
        .map(|g| {
            let mut s = Segment::new(g, game, k);
            s.game_label = w.weights().to_vec();
            s.dir_label = dir.map(DirectionalLabel);
            s
        })
        .collect())
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Sidecar line written next to each generated segment file.
pub fn metadata_line(w: &BlendWeights, family: Family, seed: u64, config_hash: &str) -> String {
    format!(
        "weights={} kind={} family={family} seed={seed} config_hash={config_hash}",
        w.weights()
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(","),
        match w.kind() {
            WeightKind::Binary => "binary",
            WeightKind::Fractional => "fractional",
        },
    )
}
