use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    blend_score, directional_match, predict_percentages, segment_features, tpkldiv,
    DirectionalClassifier, EvalError, ForestClassifier, MatchVerdict, TpklOptions,
};
use crate::agent::playability;
use crate::blender::{binary_weights, default_fractional_weights, sample_blend, BlendWeights};
use crate::corpus::{DirectionalLabel, Segment, TileGrid};
use crate::genmodels::{Family, ModelCheckpoint};
use crate::mechanics::{arc_set, blend_jump, JumpModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub weights: Vec<BlendWeights>,
    pub samples_per_weight: usize,
    /// Latents per weight for the directional evaluation; each is decoded
    /// under all 15 non-zero directional labels.
    pub directional_samples: usize,
    pub seed: u64,
    pub tpkl: TpklOptions,
}

impl ExperimentSpec {
    /// Every binary weight and, for four games, the four fractional weights,
    /// with 1000 samples each.
    pub fn full(k: usize, seed: u64) -> Self {
        let mut weights = binary_weights(k);
        if k == 4 {
            weights.extend(default_fractional_weights());
        }
        Self {
            weights,
            samples_per_weight: 1000,
            directional_samples: 1000,
            seed,
            tpkl: TpklOptions::default(),
        }
    }
}

pub struct ExperimentInputs<'a> {
    pub ckpt: &'a ModelCheckpoint,
    pub game_classifier: &'a ForestClassifier,
    /// Original segments of each game, in game order.
    pub references: &'a [Vec<TileGrid>],
    /// Per-game jump models; playability is skipped without them.
    pub jump_models: Option<&'a [JumpModel]>,
    /// Needed for the directional evaluation of directional families.
    pub dir_classifier: Option<&'a DirectionalClassifier>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalStats {
    pub exact: f64,
    /// Includes exact matches.
    pub admissible: f64,
    pub inadmissible: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub weights: BlendWeights,
    /// Share of samples the classifier assigns to each game, in percent.
    pub percentages: Vec<f64>,
    pub score: f64,
    pub playable_pct: Option<f64>,
    /// Divergence from each game's original segments.
    pub tpkldiv: Vec<f64>,
    pub directional: Option<DirectionalStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestNote {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features: String,
    pub tie_break: String,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub family: Family,
    pub z: usize,
    pub config_hash: String,
    pub seed: u64,
    pub samples_per_weight: usize,
    pub game_names: Vec<String>,
    pub classifier: ForestNote,
    pub tpkl: TpklOptions,
    pub rows: Vec<WeightRow>,
}

pub const TABLE_NAMES: [&str; 4] = ["classification", "playability", "tpkldiv", "directional"];

/// Samples every weight of the spec and evaluates the samples.
///
/// Weight `i` draws from its own stream derived from `(seed, i)`; rows come
/// back in spec order regardless of scheduling.
pub fn run_experiment(
    spec: &ExperimentSpec,
    inputs: &ExperimentInputs,
) -> Result<Report, EvalError> {
    let ckpt = inputs.ckpt;
    let k = ckpt.config.k;
    if inputs.references.len() != k {
        return Err(EvalError::BadLength {
            expected: k,
            got: inputs.references.len(),
        });
    }
    if let Some(m) = inputs.jump_models {
        if m.len() != k {
            return Err(EvalError::BadLength {
                expected: k,
                got: m.len(),
            });
        }
    }
    let rows = spec
        .weights
        .par_iter()
        .enumerate()
        .map(|(i, w)| evaluate_weight(spec, inputs, w, crate::derive_seed(spec.seed, i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let p = inputs.game_classifier.params;
    Ok(Report {
        family: ckpt.family(),
        z: ckpt.config.z,
        config_hash: ckpt.config_hash(),
        seed: spec.seed,
        samples_per_weight: spec.samples_per_weight,
        game_names: ckpt.vocab.game_names().map(str::to_string).collect(),
        classifier: ForestNote {
            trees: p.trees,
            max_depth: p.max_depth,
            min_leaf: p.min_leaf,
            features: "flattened per-cell one-hot".into(),
            tie_break: "lowest class index".into(),
            test_accuracy: inputs.game_classifier.test_accuracy,
        },
        tpkl: spec.tpkl.clone(),
        rows,
    })
}

/// Directional families need a label per draw; draws cycle through all 15.
fn sample(
    ckpt: &ModelCheckpoint,
    w: &BlendWeights,
    n: usize,
    seed: u64,
) -> Result<Vec<Segment>, EvalError> {
    if !ckpt.family().is_directional() {
        return Ok(sample_blend(ckpt, w, n, None, seed)?);
    }
    let labels = DirectionalLabel::all_nonzero();
    let mut out = Vec::with_capacity(n);
    for (j, label) in labels.iter().enumerate() {
        let count = n / 15 + usize::from(j < n % 15);
        out.extend(sample_blend(
            ckpt,
            w,
            count,
            Some(label),
            crate::derive_seed(seed, j as u64),
        )?);
    }
    Ok(out)
}

fn evaluate_weight(
    spec: &ExperimentSpec,
    inputs: &ExperimentInputs,
    w: &BlendWeights,
    seed: u64,
) -> Result<WeightRow, EvalError> {
    let ckpt = inputs.ckpt;
    let vocab = &ckpt.vocab;
    let samples = sample(ckpt, w, spec.samples_per_weight, seed)?;
    let grids: Vec<TileGrid> = samples.into_iter().map(|s| s.grid).collect();
    let refs: Vec<&TileGrid> = grids.iter().collect();
    let features = segment_features(&refs, vocab);
    let percentages = predict_percentages(inputs.game_classifier, &features);
    let score = blend_score(w, &percentages)?.s;

    let playable_pct = match inputs.jump_models {
        Some(models) if !grids.is_empty() => {
            let arcs = arc_set(&blend_jump(models, w)?)?;
            let ok = grids
                .par_iter()
                .filter(|g| playability(g, vocab, &arcs))
                .count();
            Some(100.0 * ok as f64 / grids.len() as f64)
        }
        _ => None,
    };

    let tpkldiv = if grids.is_empty() {
        vec![]
    } else {
        inputs
            .references
            .iter()
            .map(|r| tpkldiv(&grids, r, &spec.tpkl))
            .collect::<Result<Vec<_>, _>>()?
    };

    let directional = match inputs.dir_classifier {
        Some(dc) if ckpt.family().is_directional() && spec.directional_samples > 0 => Some(
            directional_stats(ckpt, dc, w, spec.directional_samples, seed)?,
        ),
        _ => None,
    };

    Ok(WeightRow {
        weights: w.clone(),
        percentages,
        score,
        playable_pct,
        tpkldiv,
        directional,
    })
}

/// Decodes the same `n` latents under each of the 15 labels and compares
/// the predicted label with the conditioning one.
fn directional_stats(
    ckpt: &ModelCheckpoint,
    dc: &DirectionalClassifier,
    w: &BlendWeights,
    n: usize,
    seed: u64,
) -> Result<DirectionalStats, EvalError> {
    let (mut exact, mut admissible, mut total) = (0usize, 0usize, 0usize);
    let latent_seed = crate::derive_seed(seed, 1 << 32);
    for label in DirectionalLabel::all_nonzero() {
        let segs = sample_blend(ckpt, w, n, Some(&label), latent_seed)?;
        let verdicts: Vec<MatchVerdict> = segs
            .par_iter()
            .map(|s| directional_match(&label, &dc.predict(&s.grid, &ckpt.vocab)))
            .collect();
        exact += verdicts
            .iter()
            .filter(|v| **v == MatchVerdict::Exact)
            .count();
        admissible += verdicts.iter().filter(|v| v.is_admissible()).count();
        total += verdicts.len();
    }
    let pct = |x: usize| 100.0 * x as f64 / total as f64;
    Ok(DirectionalStats {
        exact: pct(exact),
        admissible: pct(admissible),
        inadmissible: pct(total - admissible),
    })
}

fn fmt_num(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    format!("{r}")
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Report(e.to_string()))
    }

    /// Header and rows of one table; `None` when the report has no data for
    /// it.
    pub fn table(&self, name: &str) -> Option<(Vec<String>, Vec<Vec<String>>)> {
        let games = &self.game_names;
        let mut header = vec!["weights".to_string()];
        let rows: Vec<Vec<String>> = match name {
            "classification" => {
                header.extend(games.iter().cloned());
                header.push("score".into());
                self.rows
                    .iter()
                    .map(|r| {
                        let mut v = vec![r.weights.label()];
                        v.extend(r.percentages.iter().map(|&p| fmt_num(p)));
                        v.push(fmt_num(r.score));
                        v
                    })
                    .collect()
            }
            "playability" => {
                if self.rows.iter().all(|r| r.playable_pct.is_none()) {
                    return None;
                }
                header.push("playable_pct".into());
                self.rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.weights.label(),
                            r.playable_pct.map_or("-".into(), fmt_num),
                        ]
                    })
                    .collect()
            }
            "tpkldiv" => {
                header.extend(games.iter().cloned());
                self.rows
                    .iter()
                    .map(|r| {
                        let mut v = vec![r.weights.label()];
                        v.extend(r.tpkldiv.iter().map(|&p| fmt_num(p)));
                        v
                    })
                    .collect()
            }
            "directional" => {
                if self.rows.iter().all(|r| r.directional.is_none()) {
                    return None;
                }
                header.extend(["exact", "admissible", "inadmissible"].map(String::from));
                self.rows
                    .iter()
                    .map(|r| match &r.directional {
                        Some(d) => vec![
                            r.weights.label(),
                            fmt_num(d.exact),
                            fmt_num(d.admissible),
                            fmt_num(d.inadmissible),
                        ],
                        None => vec![r.weights.label(), "-".into(), "-".into(), "-".into()],
                    })
                    .collect()
            }
            _ => return None,
        };
        Some((header, rows))
    }

    /// Comma separated table, one line per weight.
    pub fn table_csv(&self, name: &str) -> Option<String> {
        let (header, rows) = self.table(name)?;
        let mut s = header.join(",");
        s.push('\n');
        for r in rows {
            // fractional labels contain commas
            let cells: Vec<String> = r
                .iter()
                .map(|c| {
                    if c.contains(',') {
                        format!("\"{c}\"")
                    } else {
                        c.clone()
                    }
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        Some(s)
    }

    /// Aligned plain-text table with a provenance line.
    pub fn table_text(&self, name: &str) -> Option<String> {
        let (header, rows) = self.table(name)?;
        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# {name}: {}-{} config_hash={} seed={} samples={}",
            self.family, self.z, self.config_hash, self.seed, self.samples_per_weight
        );
        let line = |s: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(s, "{}", parts.join("  "));
        };
        line(&mut s, &header);
        for r in &rows {
            line(&mut s, r);
        }
        Some(s)
    }

    /// Writes `report.json` plus `<table>.csv` and `<table>.txt` for every
    /// table with data.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<String>, EvalError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = vec!["report.json".to_string()];
        std::fs::write(dir.join("report.json"), self.to_json())?;
        for name in TABLE_NAMES {
            if let (Some(csv), Some(txt)) = (self.table_csv(name), self.table_text(name)) {
                std::fs::write(dir.join(format!("{name}.csv")), csv)?;
                std::fs::write(dir.join(format!("{name}.txt")), txt)?;
                written.push(format!("{name}.csv"));
                written.push(format!("{name}.txt"));
            }
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        let w: BlendWeights = "0.5,0.3,0.2,0".parse().unwrap();
        Report {
            family: Family::Gmvae,
            z: 8,
            config_hash: "00ff".into(),
            seed: 3,
            samples_per_weight: 10,
            game_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            classifier: ForestNote {
                trees: 100,
                max_depth: None,
                min_leaf: 1,
                features: "flattened per-cell one-hot".into(),
                tie_break: "lowest class index".into(),
                test_accuracy: Some(0.981_234_567),
            },
            tpkl: TpklOptions::default(),
            rows: vec![WeightRow {
                weights: w,
                percentages: vec![74.4, 18.6, 7.0, 0.0],
                score: 894.320_000_000_1,
                playable_pct: Some(1.0 / 3.0),
                tpkldiv: vec![0.1, 2.0, 3.0, 4.0],
                directional: None,
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn tables() {
        let r = report();
        let csv = r.table_csv("classification").unwrap();
        assert_eq!(
            csv,
            "weights,a,b,c,d,score\n\"0.5,0.3,0.2,0\",74.4,18.6,7,0,894.32\n"
        );
        assert!(r.table_csv("directional").is_none());
        assert!(r.table_text("playability").unwrap().contains("0.33"));
        let dir = tempfile::tempdir().unwrap();
        let files = r.write_to(dir.path()).unwrap();
        assert_eq!(files.len(), 7);
    }
}
