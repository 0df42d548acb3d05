use serde::{Deserialize, Serialize};

use super::{Family, ModelConfig, ModelError};
use crate::corpus::{
    decode_argmax, encode_onehot, TileGrid, TileVocab, SEGMENT_COLS, SEGMENT_ROWS,
};
use crate::numerics::{Activation, DenseNet, DiagGaussian, VARIANCE_FLOOR};

/// Prior-assigning network: two independent single layers from a game
/// one-hot to component means and (softplus) variances.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorNet {
    pub mean: DenseNet,
    pub var: DenseNet,
}

impl PriorNet {
    pub fn component(&self, game_label: &[f64]) -> Result<DiagGaussian, ModelError> {
        let mean = self.mean.predict(game_label)?;
        let var = self
            .var
            .predict(game_label)?
            .into_iter()
            .map(|v| v + VARIANCE_FLOOR)
            .collect();
        Ok(DiagGaussian::new(mean, var)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    /// Shared encoder trunk, `x ‖ condition` to the last hidden layer.
    pub encoder: DenseNet,
    pub enc_mean: DenseNet,
    pub enc_var: DenseNet,
    /// `z ‖ condition` to per-cell logits.
    pub decoder: DenseNet,
    pub prior: Option<PriorNet>,
}

impl Networks {
    pub fn new(config: &ModelConfig, vocab_len: usize, rng: &mut crate::Rng) -> Self {
        let cond = config.family.condition_len(config.k);
        let x_len = SEGMENT_ROWS * SEGMENT_COLS * vocab_len;
        let enc_widths: Vec<(usize, Activation)> = config
            .encoder_hidden
            .iter()
            .map(|&w| (w, Activation::Relu))
            .collect();
        let encoder = DenseNet::new(x_len + cond, &enc_widths, rng);
        let h = *config.encoder_hidden.last().unwrap();
        let enc_mean = DenseNet::new(h, &[(config.z, Activation::Identity)], rng);
        let enc_var = DenseNet::new(h, &[(config.z, Activation::Softplus)], rng);
        let mut dec_widths: Vec<(usize, Activation)> = config
            .decoder_hidden
            .iter()
            .map(|&w| (w, Activation::Relu))
            .collect();
        dec_widths.push((x_len, Activation::Identity));
        let decoder = DenseNet::new(config.z + cond, &dec_widths, rng);
        let prior = config.family.is_gaussian_mixture().then(|| PriorNet {
            mean: DenseNet::new(config.k, &[(config.z, Activation::Identity)], rng),
            var: DenseNet::new(config.k, &[(config.z, Activation::Softplus)], rng),
        });
        Self {
            encoder,
            enc_mean,
            enc_var,
            decoder,
            prior,
        }
    }

    /// Every network in serialization order.
    pub fn nets(&self) -> Vec<&DenseNet> {
        let mut v = vec![&self.encoder, &self.enc_mean, &self.enc_var, &self.decoder];
        if let Some(p) = &self.prior {
            v.push(&p.mean);
            v.push(&p.var);
        }
        v
    }

    pub fn nets_mut(&mut self) -> Vec<&mut DenseNet> {
        let mut v = vec![
            &mut self.encoder,
            &mut self.enc_mean,
            &mut self.enc_var,
            &mut self.decoder,
        ];
        if let Some(p) = &mut self.prior {
            v.push(&mut p.mean);
            v.push(&mut p.var);
        }
        v
    }

    pub const NET_NAMES: [&'static str; 6] = [
        "encoder",
        "enc_mean",
        "enc_var",
        "decoder",
        "prior_mean",
        "prior_var",
    ];

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    /// All parameters concatenated in [`Networks::nets`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.nets()
            .iter()
            .flat_map(|n| n.params().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for net in self.nets_mut() {
            let n = net.param_count();
            net.params_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len());
    }

    /// Approximate posterior `q(z | x, condition)`.
    pub fn posterior(&self, x: &[f64], condition: &[f64]) -> Result<DiagGaussian, ModelError> {
        let mut input = Vec::with_capacity(x.len() + condition.len());
        input.extend_from_slice(x);
        input.extend_from_slice(condition);
        let h = self.encoder.predict(&input)?;
        let mean = self.enc_mean.predict(&h)?;
        let var = self
            .enc_var
            .predict(&h)?
            .into_iter()
            .map(|v| v + VARIANCE_FLOOR)
            .collect();
        Ok(DiagGaussian::new(mean, var)?)
    }

    /// Decoder logits for a latent vector and condition.
    pub fn decode_logits(&self, z: &[f64], condition: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut input = Vec::with_capacity(z.len() + condition.len());
        input.extend_from_slice(z);
        input.extend_from_slice(condition);
        Ok(self.decoder.predict(&input)?)
    }
}

/// Learned per-game latent components `M = [μ₁..μ_k]`, `V = [σ²₁..σ²_k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
}

impl ComponentSet {
    /// Evaluates the prior net on each of the `k` game one-hots.
    pub fn from_prior(prior: &PriorNet, k: usize) -> Result<Self, ModelError> {
        let mut means = Vec::with_capacity(k);
        let mut vars = Vec::with_capacity(k);
        for i in 0..k {
            let mut label = vec![0.0; k];
            label[i] = 1.0;
            let c = prior.component(&label)?;
            means.push(c.mean);
            vars.push(c.var);
        }
        Ok(Self { means, vars })
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn z(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn component(&self, i: usize) -> DiagGaussian {
        DiagGaussian {
            mean: self.means[i].clone(),
            var: self.vars[i].clone(),
        }
    }
}

/// A trained model: configuration, networks, vocabulary and, for the GM
/// families, the cached component set.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub config: ModelConfig,
    pub vocab: TileVocab,
    pub nets: Networks,
    pub components: Option<ComponentSet>,
    pub epoch_losses: Vec<f64>,
}

impl ModelCheckpoint {
    /// Fresh, untrained checkpoint with initialized networks.
    pub fn initialize(config: ModelConfig, vocab: TileVocab) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.game_count() != config.k {
            return Err(ModelError::InvalidConfig(format!(
                "config k = {} but vocabulary has {} games",
                config.k,
                vocab.game_count()
            )));
        }
        let mut rng = crate::seeded_rng(config.seed);
        let nets = Networks::new(&config, vocab.len(), &mut rng);
        let mut ckpt = Self {
            config,
            vocab,
            nets,
            components: None,
            epoch_losses: Vec::new(),
        };
        ckpt.refresh_components()?;
        Ok(ckpt)
    }

    pub fn family(&self) -> Family {
        self.config.family
    }

    /// Recomputes the cached component set from the prior net.
    pub fn refresh_components(&mut self) -> Result<(), ModelError> {
        self.components = match &self.nets.prior {
            Some(p) => Some(ComponentSet::from_prior(p, self.config.k)?),
            None => None,
        };
        Ok(())
    }

    pub fn decoder_input_len(&self) -> usize {
        self.nets.decoder.input_dim()
    }

    /// Decodes a latent vector to a segment by per-cell argmax.
    pub fn decode(&self, z: &[f64], condition: &[f64]) -> Result<TileGrid, ModelError> {
        let logits = self.nets.decode_logits(z, condition)?;
        Ok(decode_argmax(
            &logits,
            SEGMENT_ROWS,
            SEGMENT_COLS,
            self.vocab.len(),
        ))
    }

    /// Posterior of a segment under this model.
    pub fn encode(
        &self,
        grid: &TileGrid,
        game_label: &[f64],
        dir: Option<&[f64; 4]>,
    ) -> Result<DiagGaussian, ModelError> {
        let x = encode_onehot(grid, &self.vocab);
        let cond = self.family().condition(game_label, dir);
        self.nets.posterior(&x, &cond)
    }

    pub fn config_hash(&self) -> String {
        self.config.config_hash()
    }
}
