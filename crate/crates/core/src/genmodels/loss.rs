use rayon::prelude::*;

use super::{Family, ModelCheckpoint, ModelError, Networks};
use crate::corpus::{encode_onehot, Segment, TileVocab};
use crate::numerics::{kl_diag, kl_diag_grads, DenseNet, DiagGaussian, VARIANCE_FLOOR};

/// One encoded training segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub targets: Vec<u16>,
    pub game_label: Vec<f64>,
    pub dir: Option<[f64; 4]>,
}

impl Example {
    pub fn from_segment(segment: &Segment, vocab: &TileVocab) -> Self {
        Self {
            input: encode_onehot(&segment.grid, vocab),
            targets: segment.grid.cells().iter().map(|t| t.0).collect(),
            game_label: segment.game_label.clone(),
            dir: segment.dir_label.map(|d| d.0),
        }
    }
}

/// Parameter gradients, one vector per network in [`Networks::nets`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub per_net: Vec<Vec<f64>>,
}

impl ModelGrads {
    pub fn zeros(nets: &Networks) -> Self {
        Self {
            per_net: nets
                .nets()
                .iter()
                .map(|n| vec![0.0; n.param_count()])
                .collect(),
        }
    }

    fn add(&mut self, other: &ModelGrads) {
        for (a, b) in self.per_net.iter_mut().zip(&other.per_net) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self.per_net.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.per_net.iter().flatten().copied().collect()
    }
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    /// Batch mean of `reconstruction + kl_weight · kl`.
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub grads: ModelGrads,
}

/// KL weight for an epoch: constant 1 for the GM families, a linear ramp
/// from 0 (epoch 0) to 1 (epoch ≥ `anneal_epochs`) otherwise.
pub fn kl_weight(family: Family, anneal_epochs: usize, epoch: usize) -> f64 {
    if family.is_gaussian_mixture() || anneal_epochs == 0 {
        1.0
    } else {
        (epoch as f64 / anneal_epochs as f64).min(1.0)
    }
}

const CHUNKS: usize = 4;

/// Batch-mean loss and gradients for any family.
///
/// `noise[i]` is the standard-normal draw used to reparameterize sample
/// `i`, so the loss is a deterministic function of the parameters.
/// Reconstruction is the per-cell categorical cross-entropy summed over
/// the 240 cells. Samples are split into at most four fixed chunks whose
/// partial sums are reduced in order, so results do not depend on the
/// number of worker threads.
pub fn model_loss(
    nets: &Networks,
    family: Family,
    batch: &[Example],
    noise: &[Vec<f64>],
    kl_weight: f64,
) -> Result<LossOutput, ModelError> {
    assert_eq!(batch.len(), noise.len());
    if family.is_gaussian_mixture() != nets.prior.is_some() {
        return Err(ModelError::InvalidConfig(format!(
            "{family} networks {} a prior net",
            if nets.prior.is_some() {
                "must not have"
            } else {
                "need"
            }
        )));
    }
    if batch.is_empty() {
        return Ok(LossOutput {
            loss: 0.0,
            reconstruction: 0.0,
            kl: 0.0,
            grads: ModelGrads::zeros(nets),
        });
    }
    let n_chunks = CHUNKS.min(batch.len());
    let chunk_len = batch.len().div_ceil(n_chunks);
    let partials: Vec<Result<(ModelGrads, f64, f64), ModelError>> = batch
        .par_chunks(chunk_len)
        .zip(noise.par_chunks(chunk_len))
        .map(|(exs, eps)| {
            let mut grads = ModelGrads::zeros(nets);
            let mut recon = 0.0;
            let mut kl = 0.0;
            for (ex, e) in exs.iter().zip(eps) {
                let (r, k) = sample_loss(nets, family, ex, e, kl_weight, &mut grads)?;
                recon += r;
                kl += k;
            }
            Ok((grads, recon, kl))
        })
        .collect();
    let mut grads = ModelGrads::zeros(nets);
    let mut recon = 0.0;
    let mut kl = 0.0;
    for p in partials {
        let (g, r, k) = p?;
        grads.add(&g);
        recon += r;
        kl += k;
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok(LossOutput {
        loss: (recon + kl_weight * kl) / n,
        reconstruction: recon / n,
        kl: kl / n,
        grads,
    })
}

fn sample_loss(
    nets: &Networks,
    family: Family,
    ex: &Example,
    eps: &[f64],
    beta: f64,
    grads: &mut ModelGrads,
) -> Result<(f64, f64), ModelError> {
    let dir = match (family.is_directional(), &ex.dir) {
        (true, None) => return Err(ModelError::MissingDirection),
        (_, d) => d.as_ref(),
    };
    let cond = family.condition(&ex.game_label, dir);
    let z_dim = nets.enc_mean.output_dim();

    // encoder
    let mut enc_in = Vec::with_capacity(ex.input.len() + cond.len());
    enc_in.extend_from_slice(&ex.input);
    enc_in.extend_from_slice(&cond);
    let (h, t_enc) = nets.encoder.forward(&enc_in)?;
    let (mu, t_mu) = nets.enc_mean.forward(&h)?;
    let (var_raw, t_var) = nets.enc_var.forward(&h)?;
    let var: Vec<f64> = var_raw.iter().map(|v| v + VARIANCE_FLOOR).collect();
    let q = DiagGaussian::new(mu, var)?;
    let z = q.reparameterize(eps);

    // decoder
    let mut dec_in = z;
    dec_in.extend_from_slice(&cond);
    let (logits, t_dec) = nets.decoder.forward(&dec_in)?;
    let v = logits.len() / ex.targets.len();
    let mut dlogits = vec![0.0; logits.len()];
    let mut recon = 0.0;
    for (cell, &target) in ex.targets.iter().enumerate() {
        let block = &logits[cell * v..(cell + 1) * v];
        let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = block.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        recon += lse - block[target as usize];
        let d = &mut dlogits[cell * v..(cell + 1) * v];
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = (block[j] - lse).exp();
        }
        d[target as usize] -= 1.0;
    }

    // prior
    let prior = match &nets.prior {
        Some(p) => {
            let (pm, t_pm) = p.mean.forward(&ex.game_label)?;
            let (pv_raw, t_pv) = p.var.forward(&ex.game_label)?;
            let pv = pv_raw.iter().map(|v| v + VARIANCE_FLOOR).collect();
            Some((DiagGaussian::new(pm, pv)?, t_pm, t_pv))
        }
        None => None,
    };
    let standard = DiagGaussian::standard(z_dim);
    let p_dist = prior.as_ref().map_or(&standard, |(d, _, _)| d);
    let kl = kl_diag(&q, p_dist);
    let klg = kl_diag_grads(&q, p_dist);

    // backward
    let [g_enc, g_mu, g_var, g_dec, rest @ ..] = grads.per_net.as_mut_slice() else {
        unreachable!("networks always hold encoder, heads and decoder")
    };
    let d_dec_in = nets
        .decoder
        .accumulate(&t_dec, &dlogits, g_dec, true)
        .expect("input gradient");
    let dz = &d_dec_in[..z_dim];
    let mut d_mu = vec![0.0; z_dim];
    let mut d_var = vec![0.0; z_dim];
    for i in 0..z_dim {
        d_mu[i] = dz[i] + beta * klg.q_mean[i];
        d_var[i] = dz[i] * eps[i] / (2.0 * q.var[i].sqrt()) + beta * klg.q_var[i];
    }
    let dh_mu = nets.enc_mean.accumulate(&t_mu, &d_mu, g_mu, true).unwrap();
    let dh_var = nets
        .enc_var
        .accumulate(&t_var, &d_var, g_var, true)
        .unwrap();
    let dh: Vec<f64> = dh_mu.iter().zip(&dh_var).map(|(a, b)| a + b).collect();
    nets.encoder.accumulate(&t_enc, &dh, g_enc, false);

    if let (Some(p), Some((_, t_pm, t_pv))) = (&nets.prior, &prior) {
        let [g_pm, g_pv] = rest else {
            unreachable!("prior gradients follow the decoder")
        };
        let dpm: Vec<f64> = klg.p_mean.iter().map(|g| beta * g).collect();
        let dpv: Vec<f64> = klg.p_var.iter().map(|g| beta * g).collect();
        accumulate_params(&p.mean, t_pm, &dpm, g_pm);
        accumulate_params(&p.var, t_pv, &dpv, g_pv);
    }
    Ok((recon, kl))
}

fn accumulate_params(net: &DenseNet, tape: &crate::numerics::Tape, g: &[f64], acc: &mut [f64]) {
    net.accumulate(tape, g, acc, false);
}

fn require_family(ckpt: &ModelCheckpoint, ok: bool, expected: &str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::FamilyMismatch {
            expected: expected.to_string(),
            got: ckpt.family(),
        })
    }
}

/// GM-prior loss: reconstruction + KL(q(z|x) ‖ component(label)).
pub fn gmvae_loss(
    ckpt: &ModelCheckpoint,
    batch: &[Example],
    noise: &[Vec<f64>],
) -> Result<LossOutput, ModelError> {
    require_family(ckpt, ckpt.family().is_gaussian_mixture(), "gmvae or cgmvae")?;
    model_loss(&ckpt.nets, ckpt.family(), batch, noise, 1.0)
}

/// Conditional loss: reconstruction + β·KL(q(z|x,label) ‖ N(0, I)).
pub fn cvae_loss(
    ckpt: &ModelCheckpoint,
    batch: &[Example],
    noise: &[Vec<f64>],
    beta: f64,
) -> Result<LossOutput, ModelError> {
    require_family(ckpt, !ckpt.family().is_gaussian_mixture(), "cvae or ccvae")?;
    model_loss(&ckpt.nets, ckpt.family(), batch, noise, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DirectionalLabel, TileGrid, TileVocab};
    use crate::genmodels::{ModelConfig, Networks};
    use crate::numerics::gradcheck::max_rel_error;
    use crate::numerics::{softplus, standard_normal};
    use crate::seeded_rng;

    fn vocab() -> TileVocab {
        TileVocab::from_toml_str(
            r#"
[[game]]
name = "a"
background = "-"
tiles = [{ char = "-", affordance = "passable" }, { char = "X", affordance = "solid" }]
[[game]]
name = "b"
background = "."
tiles = [{ char = ".", affordance = "passable" }, { char = "o", affordance = "solid" }]
"#,
        )
        .unwrap()
    }

    fn toy_config(family: Family) -> ModelConfig {
        let mut c = ModelConfig::desk(family, 2, 3, 5);
        c.encoder_hidden = vec![5, 4];
        c.decoder_hidden = vec![4];
        c
    }

    fn toy_batch(v: &TileVocab, rng: &mut crate::Rng) -> Vec<Example> {
        use rand::Rng as _;
        (0..2)
            .map(|g| {
                let tiles: Vec<_> = v.game_tiles(g).collect();
                let cells = (0..240)
                    .map(|_| tiles[rng.random_range(0..tiles.len())])
                    .collect();
                let seg = Segment::new(TileGrid::new(15, 16, cells), g, 2)
                    .with_dir(DirectionalLabel::from_mask(if g == 0 { 9 } else { 6 }));
                Example::from_segment(&seg, v)
            })
            .collect()
    }

    fn check_family(family: Family, beta: f64) {
        let v = vocab();
        let cfg = toy_config(family);
        let mut rng = seeded_rng(42);
        let nets = Networks::new(&cfg, v.len(), &mut rng);
        let batch = toy_batch(&v, &mut rng);
        let noise: Vec<Vec<f64>> = (0..batch.len())
            .map(|_| standard_normal(3, &mut rng))
            .collect();
        let out = model_loss(&nets, family, &batch, &noise, beta).unwrap();
        assert!(out.loss > 0.0);
        let mut probe = nets.clone();
        let err = max_rel_error(&nets.flat_params(), &out.grads.flat(), 1e-4, |p| {
            probe.set_flat_params(p);
            model_loss(&probe, family, &batch, &noise, beta)
                .unwrap()
                .loss
        });
        assert!(err < 1e-4, "{family}: max rel err {err}");
    }

    #[test]
    fn gmvae_gradients_match_finite_differences() {
        check_family(Family::Gmvae, 1.0);
    }

    #[test]
    fn cvae_gradients_match_finite_differences() {
        check_family(Family::Cvae, 0.6);
    }

    #[test]
    fn cgmvae_gradients_match_finite_differences() {
        check_family(Family::Cgmvae, 1.0);
    }

    #[test]
    fn ccvae_gradients_match_finite_differences() {
        check_family(Family::Ccvae, 1.0);
    }

    #[test]
    fn zero_beta_is_pure_reconstruction() {
        let v = vocab();
        let cfg = toy_config(Family::Cvae);
        let mut rng = seeded_rng(3);
        let nets = Networks::new(&cfg, v.len(), &mut rng);
        let batch = toy_batch(&v, &mut rng);
        let noise: Vec<Vec<f64>> = (0..2).map(|_| standard_normal(3, &mut rng)).collect();
        let out = model_loss(&nets, Family::Cvae, &batch, &noise, 0.0).unwrap();
        assert!(out.kl > 0.0);
        assert_eq!(out.loss, out.reconstruction);
    }

    #[test]
    fn anneal_ramp() {
        assert_eq!(kl_weight(Family::Cvae, 2500, 0), 0.0);
        assert_eq!(kl_weight(Family::Cvae, 2500, 1250), 0.5);
        assert_eq!(kl_weight(Family::Cvae, 2500, 2500), 1.0);
        assert_eq!(kl_weight(Family::Cvae, 2500, 9000), 1.0);
        assert_eq!(kl_weight(Family::Gmvae, 2500, 0), 1.0);
    }

    /// Decoder emits the input's one-hot with overwhelming logits and the
    /// posterior equals the game's component: both loss terms vanish.
    #[test]
    fn perfect_reconstruction_on_component_has_zero_loss() {
        let v = vocab();
        let cfg = toy_config(Family::Gmvae);
        let mut ckpt = ModelCheckpoint::initialize(cfg, v.clone()).unwrap();
        let bg = v.background(0);
        let seg = Segment::new(TileGrid::filled(15, 16, bg), 0, 2);
        let nets = &mut ckpt.nets;
        let (mu, sig2) = (vec![0.4, -1.0, 2.0], vec![0.5, 1.5, 0.8]);
        let inv_softplus = |y: f64| (y - VARIANCE_FLOOR).exp_m1().ln();
        for net in [&mut nets.enc_mean, &mut nets.enc_var] {
            net.params_mut().fill(0.0);
        }
        nets.enc_mean.layer_mut(0).1.copy_from_slice(&mu);
        for (b, s) in nets.enc_var.layer_mut(0).1.iter_mut().zip(&sig2) {
            *b = inv_softplus(*s);
        }
        let prior = nets.prior.as_mut().unwrap();
        prior.mean.params_mut().fill(0.0);
        prior.var.params_mut().fill(0.0);
        prior.mean.layer_mut(0).1.copy_from_slice(&mu);
        for (b, s) in prior.var.layer_mut(0).1.iter_mut().zip(&sig2) {
            *b = inv_softplus(*s);
        }
        nets.decoder.params_mut().fill(0.0);
        let last = nets.decoder.layers().len() - 1;
        let bias = nets.decoder.layer_mut(last).1;
        for cell in 0..240 {
            bias[cell * v.len() + bg.index()] = 1000.0;
        }
        let ex = Example::from_segment(&seg, &v);
        let out = gmvae_loss(&ckpt, &[ex], &[vec![0.3, -0.2, 1.1]]).unwrap();
        assert_eq!(out.reconstruction, 0.0);
        assert!(out.kl.abs() < 1e-12, "kl {}", out.kl);
        assert!(out.loss.abs() < 1e-12);
        assert!((softplus(inv_softplus(0.5)) + VARIANCE_FLOOR - 0.5).abs() < 1e-12);
    }

    #[test]
    fn losses_reject_wrong_family() {
        let v = vocab();
        let ckpt = ModelCheckpoint::initialize(toy_config(Family::Cvae), v).unwrap();
        assert!(matches!(
            gmvae_loss(&ckpt, &[], &[]),
            Err(ModelError::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn directional_family_requires_labels() {
        let v = vocab();
        let cfg = toy_config(Family::Cgmvae);
        let mut rng = seeded_rng(1);
        let nets = Networks::new(&cfg, v.len(), &mut rng);
        let mut batch = toy_batch(&v, &mut rng);
        batch[0].dir = None;
        let noise = vec![vec![0.0; 3]; 2];
        assert!(matches!(
            model_loss(&nets, Family::Cgmvae, &batch, &noise, 1.0),
            Err(ModelError::MissingDirection)
        ));
    }
}
