use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Gaussian with diagonal covariance; `var` holds per-dimension σ².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, NumericsError> {
        if mean.len() != var.len() {
            return Err(NumericsError::DimMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if let Some(i) = var.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(NumericsError::NonPositiveVariance {
                index: i,
                value: var[i],
            });
        }
        Ok(Self { mean, var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + sqrt(var) ⊙ eps` for caller-supplied standard normal noise.
    pub fn reparameterize(&self, noise: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.var)
            .zip(noise)
            .map(|((m, v), e)| m + v.sqrt() * e)
            .collect()
    }

    pub fn sample(&self, rng: &mut crate::Rng) -> Vec<f64> {
        let noise = standard_normal(self.dim(), rng);
        self.reparameterize(&noise)
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        const LN_2PI: f64 = 1.837_877_066_409_345_5;
        self.mean
            .iter()
            .zip(&self.var)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * (LN_2PI + v.ln() + (xi - m).powi(2) / v))
            .sum()
    }
}

pub fn standard_normal(n: usize, rng: &mut crate::Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Closed-form KL(q ‖ p) summed over dimensions.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> f64 {
    assert_eq!(q.dim(), p.dim());
    (0..q.dim())
        .map(|i| {
            let d = q.mean[i] - p.mean[i];
            0.5 * (p.var[i].ln() - q.var[i].ln() + (q.var[i] + d * d) / p.var[i] - 1.0)
        })
        .sum()
}

/// Partial derivatives of [`kl_diag`] with respect to both arguments.
#[derive(Clone, Debug, PartialEq)]
pub struct KlGrads {
    pub q_mean: Vec<f64>,
    pub q_var: Vec<f64>,
    pub p_mean: Vec<f64>,
    pub p_var: Vec<f64>,
}

pub fn kl_diag_grads(q: &DiagGaussian, p: &DiagGaussian) -> KlGrads {
    let n = q.dim();
    let mut g = KlGrads {
        q_mean: vec![0.0; n],
        q_var: vec![0.0; n],
        p_mean: vec![0.0; n],
        p_var: vec![0.0; n],
    };
    for i in 0..n {
        let d = q.mean[i] - p.mean[i];
        let vp = p.var[i];
        g.q_mean[i] = d / vp;
        g.p_mean[i] = -d / vp;
        g.q_var[i] = 0.5 * (1.0 / vp - 1.0 / q.var[i]);
        g.p_var[i] = 0.5 * (1.0 / vp - (q.var[i] + d * d) / (vp * vp));
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn rejects_non_positive_variance() {
        assert!(matches!(
            DiagGaussian::new(vec![0.0, 0.0], vec![1.0, 0.0]),
            Err(NumericsError::NonPositiveVariance { index: 1, .. })
        ));
    }

    #[test]
    fn tiny_variance_returns_mean() {
        let d = DiagGaussian::new(vec![1.5, -2.0], vec![1e-300, 1e-300]).unwrap();
        let x = d.sample(&mut seeded_rng(3));
        assert!((x[0] - 1.5).abs() < 1e-140 && (x[1] + 2.0).abs() < 1e-140);
    }

    #[test]
    fn sampling_is_seeded() {
        let d = DiagGaussian::standard(5);
        assert_eq!(d.sample(&mut seeded_rng(9)), d.sample(&mut seeded_rng(9)));
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = seeded_rng(11);
        let xs = standard_normal(100_000, &mut rng);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn kl_closed_forms() {
        let p = DiagGaussian::standard(1);
        assert_eq!(kl_diag(&p, &p), 0.0);
        let q = DiagGaussian::new(vec![1.0], vec![1.0]).unwrap();
        assert!((kl_diag(&q, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_grads_match_finite_differences() {
        let q = DiagGaussian::new(vec![0.3, -1.0], vec![0.7, 1.9]).unwrap();
        let p = DiagGaussian::new(vec![-0.2, 0.4], vec![1.3, 0.5]).unwrap();
        let g = kl_diag_grads(&q, &p);
        let h = 1e-6;
        let fd = |f: &dyn Fn(&mut DiagGaussian, &mut DiagGaussian, f64)| {
            let (mut q1, mut p1) = (q.clone(), p.clone());
            f(&mut q1, &mut p1, h);
            let (mut q2, mut p2) = (q.clone(), p.clone());
            f(&mut q2, &mut p2, -h);
            (kl_diag(&q1, &p1) - kl_diag(&q2, &p2)) / (2.0 * h)
        };
        for i in 0..2 {
            assert!((fd(&|q, _, d| q.mean[i] += d) - g.q_mean[i]).abs() < 1e-7);
            assert!((fd(&|q, _, d| q.var[i] += d) - g.q_var[i]).abs() < 1e-7);
            assert!((fd(&|_, p, d| p.mean[i] += d) - g.p_mean[i]).abs() < 1e-7);
            assert!((fd(&|_, p, d| p.var[i] += d) - g.p_var[i]).abs() < 1e-7);
        }
    }
}
