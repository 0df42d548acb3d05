use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::blender::{BlendWeights, WeightKind};
use crate::corpus::{DirectionalLabel, TileGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlendScore {
    pub s: f64,
    pub w: BlendWeights,
    pub p: Vec<f64>,
    pub f: f64,
}

/// `S = Σ (wᵢ·f − pᵢ)²` with `f = 100 / #ones` for binary weights and
/// `f = 100` for fractional ones. Lower is better; 0 is a perfect match.
pub fn blend_score(w: &BlendWeights, p: &[f64]) -> Result<BlendScore, EvalError> {
    if w.len() != p.len() {
        return Err(EvalError::BadLength {
            expected: w.len(),
            got: p.len(),
        });
    }
    let f = match w.kind() {
        WeightKind::Binary => 100.0 / w.ones() as f64,
        WeightKind::Fractional => 100.0,
    };
    let s = w
        .weights()
        .iter()
        .zip(p)
        .map(|(wi, pi)| (wi * f - pi).powi(2))
        .sum();
    Ok(BlendScore {
        s,
        w: w.clone(),
        p: p.to_vec(),
        f,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpklOptions {
    /// Square window sizes; the result is the mean over them.
    pub windows: Vec<usize>,
    /// Weight of the uniform distribution mixed into the reference.
    pub eps: f64,
}

impl Default for TpklOptions {
    fn default() -> Self {
        Self {
            windows: vec![2, 3, 4],
            eps: 1e-5,
        }
    }
}

/// Counts of every `size × size` tile pattern over a set of grids.
pub fn pattern_counts(set: &[TileGrid], size: usize) -> BTreeMap<Vec<u16>, usize> {
    let mut counts = BTreeMap::new();
    for g in set {
        if g.rows() < size || g.cols() < size {
            continue;
        }
        for r in 0..=g.rows() - size {
            for c in 0..=g.cols() - size {
                let key: Vec<u16> = (0..size)
                    .flat_map(|dr| (0..size).map(move |dc| (dr, dc)))
                    .map(|(dr, dc)| g.get(r + dr, c + dc).0)
                    .collect();
                *counts.entry(key).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// `KL(P ‖ q')` for one window size, where `P` are the generated patterns
/// and `q' = (1 − eps)·Q + eps·U` mixes the reference distribution with the
/// uniform distribution over the union of both supports.
pub fn tpkl_window(gen: &[TileGrid], reference: &[TileGrid], size: usize, eps: f64) -> f64 {
    let p = pattern_counts(gen, size);
    let q = pattern_counts(reference, size);
    let np: usize = p.values().sum();
    let nq: usize = q.values().sum();
    if np == 0 {
        return 0.0;
    }
    let union = p.len() + q.keys().filter(|k| !p.contains_key(*k)).count();
    let uniform = 1.0 / union as f64;
    let mut kl = 0.0;
    for (pattern, &c) in &p {
        let pp = c as f64 / np as f64;
        let qq = if nq == 0 {
            0.0
        } else {
            q.get(pattern).copied().unwrap_or(0) as f64 / nq as f64
        };
        let qs = (1.0 - eps) * qq + eps * uniform;
        kl += pp * (pp / qs).ln();
    }
    kl
}

/// Tile-pattern KL divergence of a generated set from a reference set,
/// averaged over the window sizes.
pub fn tpkldiv(
    gen: &[TileGrid],
    reference: &[TileGrid],
    opts: &TpklOptions,
) -> Result<f64, EvalError> {
    if gen.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptySet);
    }
    if opts.windows.is_empty() {
        return Err(EvalError::BadParams("no window sizes".into()));
    }
    let total: f64 = opts
        .windows
        .iter()
        .map(|&w| tpkl_window(gen, reference, w, opts.eps))
        .sum();
    Ok(total / opts.windows.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchVerdict {
    Exact,
    /// Every open side asked for is open, plus at least one more.
    AdmissibleOnly,
    Inadmissible,
}

impl MatchVerdict {
    pub fn is_admissible(self) -> bool {
        self != MatchVerdict::Inadmissible
    }
}

/// Compares a conditioning label with the label predicted for the output.
///
/// # Panics
/// When either label is not binary.
pub fn directional_match(cond: &DirectionalLabel, pred: &DirectionalLabel) -> MatchVerdict {
    let c = cond.mask().expect("conditioning label must be binary");
    let p = pred.mask().expect("predicted label must be binary");
    if c == p {
        MatchVerdict::Exact
    } else if c & p == c {
        MatchVerdict::AdmissibleOnly
    } else {
        MatchVerdict::Inadmissible
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TileId;
    use proptest::prelude::*;

    #[test]
    fn score_factor() {
        let s = blend_score(&"1010".parse().unwrap(), &[50.0, 0.0, 50.0, 0.0]).unwrap();
        assert_eq!(s.f, 50.0);
        assert_eq!(s.s, 0.0);
        assert!(blend_score(&"1010".parse().unwrap(), &[1.0]).is_err());
    }

    #[test]
    fn identical_sets_have_tiny_divergence() {
        let mut g = TileGrid::filled(15, 16, TileId(0));
        for c in 0..16 {
            g.set(14, c, TileId(1));
            g.set(c % 15, c, TileId(2));
        }
        let set = vec![g.clone(), g.flip_horizontal()];
        let v = tpkldiv(&set, &set, &TpklOptions::default()).unwrap();
        assert!((0.0..1e-6).contains(&v), "{v}");
        assert!(matches!(
            tpkldiv(&[], &set, &TpklOptions::default()),
            Err(EvalError::EmptySet)
        ));
    }

    #[test]
    fn verdicts() {
        let l = |s: &str| DirectionalLabel::parse_bits(s).unwrap();
        assert_eq!(
            directional_match(&l("1100"), &l("1100")),
            MatchVerdict::Exact
        );
        assert_eq!(
            directional_match(&l("1000"), &l("1100")),
            MatchVerdict::AdmissibleOnly
        );
        assert_eq!(
            directional_match(&l("1100"), &l("1000")),
            MatchVerdict::Inadmissible
        );
    }

    proptest! {
        #[test]
        fn score_is_permutation_invariant(
            w in prop::collection::vec(0.0f64..1.0, 4),
            p in prop::collection::vec(0.0f64..100.0, 4),
            rot in 0usize..4,
        ) {
            prop_assume!(w.iter().any(|&x| x > 0.0));
            let a = blend_score(&BlendWeights::infer(w.clone()).unwrap(), &p).unwrap().s;
            let mut w2 = w.clone();
            let mut p2 = p.clone();
            w2.rotate_left(rot);
            p2.rotate_left(rot);
            let b = blend_score(&BlendWeights::infer(w2).unwrap(), &p2).unwrap().s;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn tpkl_non_negative(seed in any::<u64>()) {
            use rand::Rng as _;
            let mut rng = crate::seeded_rng(seed);
            let mut grid = || {
                let cells = (0..9).map(|_| TileId(rng.random_range(0..3))).collect();
                TileGrid::new(3, 3, cells)
            };
            let a = vec![grid(), grid()];
            let b = vec![grid()];
            let v = tpkldiv(&a, &b, &TpklOptions { windows: vec![2], eps: 1e-5 }).unwrap();
            prop_assert!(v >= -1e-12);
        }
    }
}
