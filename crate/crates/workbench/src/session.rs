use std::collections::BTreeMap;

use gameblend::agent::{play, to_affordances, Playability};
use gameblend::blender::BlendWeights;
use gameblend::corpus::{encode_onehot, TileGrid};
use gameblend::evalsuite::ForestClassifier;
use gameblend::genmodels::ModelCheckpoint;
use gameblend::mechanics::{arc_set, blend_jump, JumpModel, MechanicsError};

/// A checkpoint with the helpers the service needs around it.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub ckpt: ModelCheckpoint,
    /// Game classifier over the checkpoint's vocabulary.
    pub classifier: Option<ForestClassifier>,
    /// Jump model of every game, in vocabulary order.
    pub jumps: Option<Vec<JumpModel>>,
}

impl LoadedModel {
    /// Classifier percentages for one grid.
    pub fn percentages(&self, grid: &TileGrid) -> Option<Vec<f64>> {
        let f = self.classifier.as_ref()?;
        let x = encode_onehot(grid, &self.ckpt.vocab);
        Some(f.predict_proba(&x).iter().map(|p| p * 100.0).collect())
    }

    /// Playability under the jump blended with `w`, when jumps are loaded.
    pub fn playability(
        &self,
        grid: &TileGrid,
        w: &BlendWeights,
    ) -> Option<Result<Playability, MechanicsError>> {
        let jumps = self.jumps.as_ref()?;
        Some(
            blend_jump(jumps, w)
                .and_then(|j| arc_set(&j))
                .map(|arcs| play(&to_affordances(grid, &self.ckpt.vocab), &arcs)),
        )
    }
}

/// Everything the HTTP service serves, fixed after start-up.
#[derive(Clone, Debug, Default)]
pub struct ApiSession {
    models: BTreeMap<String, LoadedModel>,
}

impl ApiSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a model; ids must be unique.
    pub fn insert(&mut self, id: impl Into<String>, model: LoadedModel) -> Result<(), String> {
        let id = id.into();
        if self.models.contains_key(&id) {
            return Err(format!("duplicate model id {id:?}"));
        }
        self.models.insert(id, model);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&LoadedModel> {
        self.models.get(id)
    }

    /// The model used when a request names none: the first id in order.
    pub fn default_model(&self) -> Option<(&str, &LoadedModel)> {
        self.models.iter().next().map(|(k, v)| (k.as_str(), v))
    }

    pub fn models(&self) -> impl Iterator<Item = (&str, &LoadedModel)> {
        self.models.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}
