//! Jump physics: per-game parameter vectors, linear blending, discrete
//! jump arcs and impulse/gravity fitting.
//!
//! Units are tiles and frames. A jump starts with upward velocity
//! `initial_velocity`; the first `max_hold_frames` frames keep that velocity
//! (the button is held), after which `rise_gravity` slows the ascent and
//! `fall_gravity` accelerates the descent.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blender::BlendWeights;

/// Frames after which [`derive_arc`] gives up.
pub const MAX_ARC_FRAMES: usize = 1000;

#[derive(Debug, Error)]
pub enum MechanicsError {
    #[error("blend weights are all zero")]
    AllZeroWeights,
    #[error("expected {expected} jump models, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("invalid jump model: {0}")]
    InvalidModel(String),
    #[error("jump did not land within {MAX_ARC_FRAMES} frames")]
    NonTerminating,
    #[error("arc is degenerate: {0}")]
    DegenerateArc(String),
    #[error("jump parameter file: {0}")]
    Params(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpModel {
    /// Upward speed at takeoff, tiles per frame.
    pub initial_velocity: f64,
    /// Deceleration while rising, tiles per frame².
    pub rise_gravity: f64,
    /// Acceleration while falling, tiles per frame².
    pub fall_gravity: f64,
    /// Frames at the start of the jump during which gravity is not applied.
    pub max_hold_frames: f64,
    /// Tiles per frame.
    pub horizontal_speed: f64,
}

impl JumpModel {
    pub fn validate(&self) -> Result<(), MechanicsError> {
        let bad = |m: &str| Err(MechanicsError::InvalidModel(m.to_string()));
        let fields = [
            self.initial_velocity,
            self.rise_gravity,
            self.fall_gravity,
            self.max_hold_frames,
            self.horizontal_speed,
        ];
        if fields.iter().any(|x| !x.is_finite()) {
            return bad("parameters must be finite");
        }
        if self.initial_velocity <= 0.0 {
            return bad("initial_velocity must be positive");
        }
        if self.rise_gravity <= 0.0 || self.fall_gravity <= 0.0 {
            return bad("gravities must be positive");
        }
        if self.max_hold_frames < 0.0 {
            return bad("max_hold_frames must be non-negative");
        }
        if self.horizontal_speed < 0.0 {
            return bad("horizontal_speed must be non-negative");
        }
        Ok(())
    }

    fn to_array(self) -> [f64; 5] {
        [
            self.initial_velocity,
            self.rise_gravity,
            self.fall_gravity,
            self.max_hold_frames,
            self.horizontal_speed,
        ]
    }

    fn from_array(a: [f64; 5]) -> Self {
        Self {
            initial_velocity: a[0],
            rise_gravity: a[1],
            fall_gravity: a[2],
            max_hold_frames: a[3],
            horizontal_speed: a[4],
        }
    }
}

/// Per-frame `(dx, dy)` tile offsets from the takeoff cell, `dy` upward,
/// ending on the frame the jump is back at takeoff height.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JumpArc {
    pub offsets: Vec<(i32, i32)>,
}

impl JumpArc {
    pub fn apex(&self) -> i32 {
        self.offsets.iter().map(|o| o.1).max().unwrap_or(0)
    }

    pub fn reach(&self) -> i32 {
        self.offsets.last().map_or(0, |o| o.0)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulseGravity {
    pub impulse: f64,
    pub gravity: f64,
}

/// Componentwise `Σ ŵᵢ·paramᵢ` with `ŵ = w / Σw`.
///
/// Unlike latent blending the weights are normalized, so a multi-hot blend
/// is an average of the games' physics rather than a sum.
pub fn blend_jump(models: &[JumpModel], w: &BlendWeights) -> Result<JumpModel, MechanicsError> {
    if models.len() != w.len() {
        return Err(MechanicsError::BadLength {
            expected: w.len(),
            got: models.len(),
        });
    }
    if w.sum() == 0.0 {
        return Err(MechanicsError::AllZeroWeights);
    }
    let wn = w.normalized();
    // one-hot weights return the model untouched, not a rounded copy
    if let Some(i) = wn.iter().position(|&x| x == 1.0) {
        return Ok(models[i]);
    }
    let mut acc = [0.0; 5];
    for (m, &wi) in models.iter().zip(&wn) {
        for (a, p) in acc.iter_mut().zip(m.to_array()) {
            *a += wi * p;
        }
    }
    Ok(JumpModel::from_array(acc))
}

/// Simulates one jump frame by frame.
///
/// Frame `t` (from 1) first moves by the current velocity, then applies
/// gravity unless `t ≤ max_hold_frames`. The arc ends on the first frame at
/// or below takeoff height, recorded as `dy = 0`.
pub fn derive_arc(model: &JumpModel) -> Result<JumpArc, MechanicsError> {
    model.validate()?;
    let mut y: f64 = 0.0;
    let mut vy = model.initial_velocity;
    let mut offsets = Vec::new();
    for t in 1..=MAX_ARC_FRAMES {
        y += vy;
        let dx = (t as f64 * model.horizontal_speed).round() as i32;
        if y <= 0.0 {
            offsets.push((dx, 0));
            return Ok(JumpArc { offsets });
        }
        offsets.push((dx, y.round() as i32));
        if t as f64 > model.max_hold_frames {
            vy -= if vy > 0.0 {
                model.rise_gravity
            } else {
                model.fall_gravity
            };
        }
    }
    Err(MechanicsError::NonTerminating)
}

/// Arcs the agent may use for a model: every whole number of held frames
/// from 0 up to the model's limit (plus the limit itself when fractional),
/// each with full horizontal speed and as a straight-up jump.
pub fn arc_set(model: &JumpModel) -> Result<Vec<JumpArc>, MechanicsError> {
    model.validate()?;
    let mut holds: Vec<f64> = (0..=model.max_hold_frames.floor() as usize)
        .map(|h| h as f64)
        .collect();
    if model.max_hold_frames.fract() != 0.0 {
        holds.push(model.max_hold_frames);
    }
    let mut arcs = Vec::new();
    for hold in holds {
        for hspeed in [model.horizontal_speed, 0.0] {
            let arc = derive_arc(&JumpModel {
                max_hold_frames: hold,
                horizontal_speed: hspeed,
                ..*model
            })?;
            if !arcs.contains(&arc) {
                arcs.push(arc);
            }
        }
    }
    Ok(arcs)
}

/// Least-squares fit of `dy(t) = impulse·t − ½·gravity·t²` over frames
/// `t = 1..=n`.
pub fn fit_impulse_gravity(arc: &JumpArc) -> Result<ImpulseGravity, MechanicsError> {
    if arc.len() < 3 {
        return Err(MechanicsError::DegenerateArc(format!(
            "{} frames, need at least 3",
            arc.len()
        )));
    }
    let first = arc.offsets[0].1;
    if arc.offsets.iter().all(|o| o.1 == first) {
        return Err(MechanicsError::DegenerateArc(
            "every frame has the same height".into(),
        ));
    }
    // columns a = t, b = -t²/2
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, &(_, dy)) in arc.offsets.iter().enumerate() {
        let t = (i + 1) as f64;
        let a = t;
        let b = -0.5 * t * t;
        let y = dy as f64;
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        say += a * y;
        sby += b * y;
    }
    let det = saa * sbb - sab * sab;
    let impulse = (say * sbb - sby * sab) / det;
    let gravity = (saa * sby - sab * say) / det;
    Ok(ImpulseGravity { impulse, gravity })
}

/// One game's entry in a jump parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedJumpModel {
    pub name: String,
    #[serde(flatten)]
    pub model: JumpModel,
}

/// Jump parameter file: one `[[game]]` table per game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    #[serde(rename = "game")]
    pub games: Vec<NamedJumpModel>,
}

impl JumpParams {
    pub fn from_toml_str(text: &str) -> Result<Self, MechanicsError> {
        let p: Self = toml::from_str(text).map_err(|e| MechanicsError::Params(e.to_string()))?;
        for g in &p.games {
            g.model
                .validate()
                .map_err(|e| MechanicsError::Params(format!("{}: {e}", g.name)))?;
        }
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MechanicsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("jump params serialize")
    }

    /// Models in the order of `names`, typically the vocabulary's games.
    pub fn models_for<'a>(
        &self,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Result<Vec<JumpModel>, MechanicsError> {
        names
            .into_iter()
            .map(|n| {
                self.games
                    .iter()
                    .find(|g| g.name == n)
                    .map(|g| g.model)
                    .ok_or_else(|| MechanicsError::Params(format!("no jump model for game {n:?}")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blender::WeightKind;
    use proptest::prelude::*;

    fn model(v: f64, g: f64, hold: f64, h: f64) -> JumpModel {
        JumpModel {
            initial_velocity: v,
            rise_gravity: g,
            fall_gravity: g,
            max_hold_frames: hold,
            horizontal_speed: h,
        }
    }

    #[test]
    fn unit_jump_by_hand() {
        // t=1: y=1, vy→0; t=2: y=1, vy→-1; t=3: y=0, landed
        let arc = derive_arc(&model(1.0, 1.0, 0.0, 1.0)).unwrap();
        assert_eq!(arc.offsets, vec![(1, 1), (2, 1), (3, 0)]);
        assert_eq!(arc.apex(), 1);
    }

    #[test]
    fn held_frames_delay_gravity() {
        let arc = derive_arc(&model(1.0, 1.0, 2.0, 0.0)).unwrap();
        // y: 1, 2, 3 (vy 1,1,1 then 0), 3, 2
        assert_eq!(
            arc.offsets,
            vec![(0, 1), (0, 2), (0, 3), (0, 3), (0, 2), (0, 0)]
        );
    }

    #[test]
    fn horizontal_speed_is_linear() {
        let a = derive_arc(&model(0.7, 0.1, 1.0, 0.5)).unwrap();
        let b = derive_arc(&model(0.7, 0.1, 1.0, 1.0)).unwrap();
        assert_eq!(a.len(), b.len());
        for (i, (p, q)) in a.offsets.iter().zip(&b.offsets).enumerate() {
            let t = (i + 1) as f64;
            assert_eq!(p.0, (t * 0.5).round() as i32);
            assert_eq!(q.0, (t * 1.0).round() as i32);
            assert_eq!(p.1, q.1);
        }
    }

    #[test]
    fn tiny_gravity_does_not_terminate() {
        assert!(matches!(
            derive_arc(&model(1.0, 1e-6, 0.0, 1.0)),
            Err(MechanicsError::NonTerminating)
        ));
    }

    #[test]
    fn blend_examples() {
        let a = model(2.0, 0.2, 1.0, 0.5);
        let b = JumpModel {
            initial_velocity: 4.0,
            ..model(0.4, 0.3, 3.0, 1.0)
        };
        let w = BlendWeights::new(vec![1.0, 1.0], WeightKind::Binary).unwrap();
        let m = blend_jump(&[a, b], &w).unwrap();
        assert_eq!(m.initial_velocity, 3.0);
        assert_eq!(m.max_hold_frames, 2.0);
        assert_eq!(
            blend_jump(&[a, b], &BlendWeights::one_hot(1, 2)).unwrap(),
            b
        );
        assert!(matches!(
            blend_jump(&[a], &w),
            Err(MechanicsError::BadLength { .. })
        ));
    }

    #[test]
    fn exact_parabola_is_recovered() {
        // dy = 5t - t²: impulse 5, gravity 2
        let offsets = (1..=5).map(|t| (t, 5 * t - t * t)).collect();
        let fit = fit_impulse_gravity(&JumpArc { offsets }).unwrap();
        assert!((fit.impulse - 5.0).abs() < 1e-6);
        assert!((fit.gravity - 2.0).abs() < 1e-6);
    }

    #[test]
    fn flat_arc_is_degenerate() {
        let flat = JumpArc {
            offsets: vec![(1, 0), (2, 0), (3, 0)],
        };
        assert!(matches!(
            fit_impulse_gravity(&flat),
            Err(MechanicsError::DegenerateArc(_))
        ));
        let short = JumpArc {
            offsets: vec![(1, 1), (2, 0)],
        };
        assert!(fit_impulse_gravity(&short).is_err());
    }

    #[test]
    fn params_file_round_trip() {
        let text = r#"
[[game]]
name = "a"
initial_velocity = 1.0
rise_gravity = 0.25
fall_gravity = 0.5
max_hold_frames = 2.0
horizontal_speed = 0.6
"#;
        let p = JumpParams::from_toml_str(text).unwrap();
        assert_eq!(JumpParams::from_toml_str(&p.to_toml_string()).unwrap(), p);
        assert!(p.models_for(["b"]).is_err());
        assert!(JumpParams::from_toml_str(&text.replace("0.25", "-1")).is_err());
    }

    #[test]
    fn arc_set_holds() {
        let m = model(0.8, 0.2, 1.5, 0.5);
        let arcs = arc_set(&m).unwrap();
        // holds 0, 1, 1.5, each forward and straight up
        assert!(arcs.len() <= 6 && arcs.len() >= 4);
        assert!(arcs.iter().any(|a| a.reach() == 0));
    }

    fn arb_model() -> impl Strategy<Value = JumpModel> {
        (
            0.1f64..3.0,
            0.05f64..1.0,
            0.05f64..1.0,
            0.0f64..6.0,
            0.0f64..2.0,
        )
            .prop_map(|(v, r, f, h, s)| JumpModel {
                initial_velocity: v,
                rise_gravity: r,
                fall_gravity: f,
                max_hold_frames: h,
                horizontal_speed: s,
            })
    }

    proptest! {
        #[test]
        fn arcs_are_unimodal(m in arb_model()) {
            let arc = derive_arc(&m).unwrap();
            prop_assert!(arc.offsets[0].1 >= 0);
            prop_assert_eq!(arc.offsets.last().unwrap().1, 0);
            let ys: Vec<i32> = arc.offsets.iter().map(|o| o.1).collect();
            let peak = ys.iter().position(|&y| y == arc.apex()).unwrap();
            prop_assert!(ys[..=peak].windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(ys[peak..].windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn apex_grows_with_velocity(m in arb_model(), extra in 0.0f64..2.0) {
            let higher = JumpModel { initial_velocity: m.initial_velocity + extra, ..m };
            prop_assert!(derive_arc(&higher).unwrap().apex() >= derive_arc(&m).unwrap().apex());
        }

        #[test]
        fn blend_is_convex(ms in prop::collection::vec(arb_model(), 3), w in prop::collection::vec(0.0f64..1.0, 3)) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let b = blend_jump(&ms, &BlendWeights::infer(w).unwrap()).unwrap();
            for (i, p) in b.to_array().iter().enumerate() {
                let lo = ms.iter().map(|m| m.to_array()[i]).fold(f64::INFINITY, f64::min);
                let hi = ms.iter().map(|m| m.to_array()[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*p >= lo - 1e-12 && *p <= hi + 1e-12);
            }
        }

        #[test]
        fn identical_models_are_a_fixed_point(m in arb_model(), w in prop::collection::vec(0.01f64..1.0, 4)) {
            let b = blend_jump(&[m; 4], &BlendWeights::infer(w).unwrap()).unwrap();
            for (x, y) in b.to_array().iter().zip(m.to_array()) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
