//! Blend evaluation: classifier percentages and score, playability,
//! tile-pattern KL divergence and directional label matching.

mod experiment;
mod forest;
mod metrics;

use rayon::prelude::*;
use thiserror::Error;

use crate::blender::BlendError;
use crate::corpus::{encode_onehot, DirectionalLabel, Segment, TileGrid, TileVocab};
use crate::mechanics::MechanicsError;

pub use experiment::{
    run_experiment, DirectionalStats, ExperimentInputs, ExperimentSpec, ForestNote, Report,
    WeightRow, TABLE_NAMES,
};
pub use forest::{predict_percentages, train_forest, DecisionTree, ForestClassifier, ForestParams};
pub use metrics::{
    blend_score, directional_match, pattern_counts, tpkl_window, tpkldiv, BlendScore, MatchVerdict,
    TpklOptions,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training data has fewer than two classes")]
    SingleClass,
    #[error("expected length {expected}, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("label {label} is outside 0..{classes}")]
    BadLabel { label: usize, classes: usize },
    #[error("segment set is empty")]
    EmptySet,
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("segment {0} has no directional label")]
    MissingDirectionalLabel(usize),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Classifier features: the flattened per-cell one-hot encoding.
pub fn segment_features(grids: &[&TileGrid], vocab: &TileVocab) -> Vec<Vec<f64>> {
    grids.par_iter().map(|g| encode_onehot(g, vocab)).collect()
}

/// Game classifier trained on segments labelled by game.
pub fn train_game_classifier(
    segments: &[Segment],
    vocab: &TileVocab,
    params: ForestParams,
) -> Result<ForestClassifier, EvalError> {
    let grids: Vec<&TileGrid> = segments.iter().map(|s| &s.grid).collect();
    let y: Vec<usize> = segments.iter().map(|s| s.game).collect();
    train_forest(
        &segment_features(&grids, vocab),
        &y,
        vocab.game_count(),
        params,
    )
}

/// Forest over directional labels, one class per observed 4-bit label.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DirectionalClassifier {
    pub forest: ForestClassifier,
    /// Bit mask of each class, ascending.
    pub masks: Vec<u8>,
}

impl DirectionalClassifier {
    pub fn train(
        segments: &[Segment],
        vocab: &TileVocab,
        params: ForestParams,
    ) -> Result<Self, EvalError> {
        let mut labels = Vec::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            let mask = s
                .dir_label
                .and_then(|d| d.mask())
                .ok_or(EvalError::MissingDirectionalLabel(i))?;
            labels.push(mask);
        }
        let mut masks = labels.clone();
        masks.sort_unstable();
        masks.dedup();
        let y: Vec<usize> = labels
            .iter()
            .map(|m| masks.binary_search(m).unwrap())
            .collect();
        let grids: Vec<&TileGrid> = segments.iter().map(|s| &s.grid).collect();
        let forest = train_forest(&segment_features(&grids, vocab), &y, masks.len(), params)?;
        Ok(Self { forest, masks })
    }

    pub fn predict(&self, grid: &TileGrid, vocab: &TileVocab) -> DirectionalLabel {
        let class = self.forest.predict(&encode_onehot(grid, vocab));
        DirectionalLabel::from_mask(self.masks[class])
    }
}
