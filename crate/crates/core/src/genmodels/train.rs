use rand::seq::SliceRandom;

use super::loss::{kl_weight, model_loss, Example};
use super::{Family, ModelCheckpoint, ModelConfig, ModelError};
use crate::corpus::Corpus;
use crate::numerics::{standard_normal, AdamState, LrScheduler};

/// Trains any family on a labelled corpus.
///
/// One Adam step per mini-batch; mini-batches are reshuffled every epoch
/// from the run seed, so a run is a pure function of (seed, corpus, config).
pub fn train(corpus: &Corpus, config: &ModelConfig) -> Result<ModelCheckpoint, ModelError> {
    train_with_progress(corpus, config, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch as `(epoch, loss)`.
pub fn train_with_progress(
    corpus: &Corpus,
    config: &ModelConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<ModelCheckpoint, ModelError> {
    let family = config.family;
    if family.is_directional() {
        if let Some(i) = corpus.segments.iter().position(|s| s.dir_label.is_none()) {
            return Err(ModelError::MissingDirectionalLabel(i));
        }
    }
    let mut ckpt = ModelCheckpoint::initialize(config.clone(), corpus.vocab.clone())?;
    let examples: Vec<Example> = corpus
        .segments
        .iter()
        .map(|s| Example::from_segment(s, &corpus.vocab))
        .collect();
    // separate stream from the one that initialized the weights
    let mut rng = crate::seeded_rng(crate::derive_seed(config.seed, 1));
    let mut optimizers: Vec<AdamState> = ckpt
        .nets
        .nets()
        .iter()
        .map(|n| AdamState::new(n.param_count(), config.learning_rate))
        .collect();
    let mut scheduler = LrScheduler::new(config.schedule);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let beta = kl_weight(family, config.kl_anneal_epochs, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<Example> = idx.iter().map(|&i| examples[i].clone()).collect();
            let noise: Vec<Vec<f64>> = idx
                .iter()
                .map(|_| standard_normal(config.z, &mut rng))
                .collect();
            let out = model_loss(&ckpt.nets, family, &batch, &noise, beta)?;
            if !out.loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            epoch_loss += out.loss * idx.len() as f64;
            for ((net, opt), g) in ckpt
                .nets
                .nets_mut()
                .into_iter()
                .zip(&mut optimizers)
                .zip(&out.grads.per_net)
            {
                opt.step(net.params_mut(), g);
            }
        }
        epoch_loss /= examples.len().max(1) as f64;
        if !epoch_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch });
        }
        let factor = scheduler.observe(epoch_loss);
        for opt in &mut optimizers {
            opt.lr *= factor;
        }
        losses.push(epoch_loss);
        progress(epoch, epoch_loss);
    }
    ckpt.epoch_losses = losses;
    ckpt.refresh_components()?;
    Ok(ckpt)
}

fn expect_family(config: &ModelConfig, allowed: &[Family], name: &str) -> Result<(), ModelError> {
    if allowed.contains(&config.family) {
        Ok(())
    } else {
        Err(ModelError::FamilyMismatch {
            expected: name.to_string(),
            got: config.family,
        })
    }
}

pub fn train_gmvae(corpus: &Corpus, config: &ModelConfig) -> Result<ModelCheckpoint, ModelError> {
    expect_family(config, &[Family::Gmvae], "gmvae")?;
    train(corpus, config)
}

pub fn train_cvae(corpus: &Corpus, config: &ModelConfig) -> Result<ModelCheckpoint, ModelError> {
    expect_family(config, &[Family::Cvae], "cvae")?;
    train(corpus, config)
}

/// Trains a CGMVAE or CCVAE; every segment must carry a directional label.
pub fn train_conditional_directional(
    corpus: &Corpus,
    config: &ModelConfig,
) -> Result<ModelCheckpoint, ModelError> {
    expect_family(config, &[Family::Cgmvae, Family::Ccvae], "cgmvae or ccvae")?;
    train(corpus, config)
}
