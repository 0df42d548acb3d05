//! Random forest of CART trees with Gini splits.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// `None` grows trees until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    /// Held-out share for the reported accuracy.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
            bootstrap: true,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        dist: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { dist } => return dist,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if (x[*feature] as f32) <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestClassifier {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub params: ForestParams,
    /// Accuracy on the held-out split; `None` when no rows were held out.
    pub test_accuracy: Option<f64>,
}

/// Column-major feature matrix.
struct Columns {
    cols: Vec<Vec<f32>>,
}

impl Columns {
    fn new(rows: &[Vec<f64>], idx: &[usize]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let cols = (0..d)
            .map(|f| idx.iter().map(|&i| rows[i][f] as f32).collect())
            .collect();
        Self { cols }
    }
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a Columns,
    y: &'a [usize],
    n_classes: usize,
    params: ForestParams,
    mtry: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f32,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &r in rows {
            c[self.y[r]] += 1.0;
        }
        c
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut crate::Rng) -> usize {
        let counts = self.counts(&rows);
        let n = rows.len() as f64;
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        let split = if pure || depth_done || rows.len() < 2 * self.params.min_leaf {
            None
        } else {
            self.best_split(&rows, &counts, rng)
        };
        let id = self.nodes.len();
        let Some(best) = split else {
            self.nodes.push(Node::Leaf {
                dist: counts.iter().map(|c| c / n).collect(),
            });
            return id;
        };
        self.nodes.push(Node::Leaf { dist: Vec::new() });
        let col = &self.x.cols[best.feature];
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| col[i] <= best.threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Tries features in random order until `mtry` non-constant ones have
    /// been scored, keeping the split with the largest impurity decrease.
    fn best_split(
        &self,
        rows: &[usize],
        counts: &[f64],
        rng: &mut crate::Rng,
    ) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let parent = gini(counts, n);
        let mut order: Vec<usize> = (0..self.x.cols.len()).collect();
        order.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        let min_leaf = self.params.min_leaf as f64;
        for f in order {
            if tried >= self.mtry {
                break;
            }
            let col = &self.x.cols[f];
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for &r in rows {
                lo = lo.min(col[r]);
                hi = hi.max(col[r]);
            }
            if lo == hi {
                continue;
            }
            tried += 1;
            let two_valued = rows.iter().all(|&r| col[r] == lo || col[r] == hi);
            let mut consider = |left: &[f64], nl: f64, threshold: f32| {
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    return;
                }
                let right: Vec<f64> = counts.iter().zip(left).map(|(c, l)| c - l).collect();
                let child = (nl * gini(left, nl) + nr * gini(&right, nr)) / n;
                let score = parent - child;
                if score > 1e-12 && best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold,
                    });
                }
            };
            if two_valued {
                let mut left = vec![0.0; self.n_classes];
                let mut nl = 0.0;
                for &r in rows {
                    if col[r] == lo {
                        left[self.y[r]] += 1.0;
                        nl += 1.0;
                    }
                }
                consider(&left, nl, lo + (hi - lo) / 2.0);
            } else {
                let mut sorted: Vec<(f32, usize)> =
                    rows.iter().map(|&r| (col[r], self.y[r])).collect();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut left = vec![0.0; self.n_classes];
                for i in 0..sorted.len() - 1 {
                    left[sorted[i].1] += 1.0;
                    if sorted[i].0 < sorted[i + 1].0 {
                        let t = sorted[i].0 + (sorted[i + 1].0 - sorted[i].0) / 2.0;
                        consider(&left, (i + 1) as f64, t);
                    }
                }
            }
        }
        best
    }
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl ForestClassifier {
    /// Fits on the given rows only, without a held-out split.
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        params: ForestParams,
    ) -> Result<Self, EvalError> {
        let idx: Vec<usize> = (0..x.len()).collect();
        Self::fit_rows(x, y, &idx, n_classes, params)
    }

    fn fit_rows(
        x: &[Vec<f64>],
        y: &[usize],
        idx: &[usize],
        n_classes: usize,
        params: ForestParams,
    ) -> Result<Self, EvalError> {
        let mut present = vec![false; n_classes];
        for &i in idx {
            if y[i] >= n_classes {
                return Err(EvalError::BadLabel {
                    label: y[i],
                    classes: n_classes,
                });
            }
            present[y[i]] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(EvalError::SingleClass);
        }
        if params.trees == 0 {
            return Err(EvalError::BadParams("trees must be at least 1".into()));
        }
        let cols = Columns::new(x, idx);
        let yy: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
        let d = cols.cols.len();
        let mtry = params
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1));
        let n = yy.len();
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = crate::seeded_rng(crate::derive_seed(params.seed, t as u64));
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x: &cols,
                    y: &yy,
                    n_classes,
                    params,
                    mtry,
                    nodes: Vec::new(),
                };
                b.build(rows, 0, &mut rng);
                DecisionTree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            trees,
            n_classes,
            params,
            test_accuracy: None,
        })
    }

    /// Mean of the trees' leaf class distributions.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, b) in p.iter_mut().zip(t.leaf(x)) {
                *a += b;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }

    /// Most probable class; ties go to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_lowest(&self.predict_proba(x))
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> f64 {
        if x.is_empty() {
            return 0.0;
        }
        let hits: usize = x
            .par_iter()
            .zip(y)
            .map(|(xi, &yi)| usize::from(self.predict(xi) == yi))
            .sum();
        hits as f64 / x.len() as f64
    }
}

/// Trains on a seeded shuffle of `1 − test_fraction` of the rows and reports
/// accuracy on the rest.
pub fn train_forest(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: ForestParams,
) -> Result<ForestClassifier, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::BadLength {
            expected: x.len(),
            got: y.len(),
        });
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut crate::seeded_rng(crate::derive_seed(
        params.seed,
        u64::MAX,
    )));
    let n_test = (x.len() as f64 * params.test_fraction).round() as usize;
    let (test, train) = idx.split_at(n_test.min(x.len()));
    let mut clf = ForestClassifier::fit_rows(x, y, train, n_classes, params)?;
    if !test.is_empty() {
        let tx: Vec<Vec<f64>> = test.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        clf.test_accuracy = Some(clf.accuracy(&tx, &ty));
    }
    Ok(clf)
}

/// Share of predictions per class, in percent (sums to 100).
pub fn predict_percentages(clf: &ForestClassifier, x: &[Vec<f64>]) -> Vec<f64> {
    let mut counts = vec![0usize; clf.n_classes];
    let preds: Vec<usize> = x.par_iter().map(|xi| clf.predict(xi)).collect();
    for p in preds {
        counts[p] += 1;
    }
    let n = x.len().max(1) as f64;
    counts.iter().map(|&c| 100.0 * c as f64 / n).collect()
}
