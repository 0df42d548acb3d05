//! Game blending over learned latent distributions.
//!
//! The crate learns one latent Gaussian per game from tile-based level
//! segments, mixes those Gaussians with a weight vector to define a new
//! "blended" game, blends the games' jump physics with the same weights,
//! and measures how faithful and playable the blends are.
//!
//! Module map:
//!
//! * [`corpus`]: level text parsing, padding, segmentation, labels, encoding.
//! * [`numerics`]: dense layers, reverse-mode gradients, Adam, Gaussians.
//! * [`genmodels`]: the GMVAE / CVAE / CGMVAE / CCVAE families and checkpoints.
//! * [`blender`]: blend weights, blended latent Gaussians, sampling.
//! * [`mechanics`]: jump models, jump arcs, impulse/gravity fitting.
//! * [`agent`]: affordance-level A* playability.
//! * [`layout`]: dungeon and platformer layouts and whole-level assembly.
//! * [`evalsuite`]: random forest classifier, blend score, TPKLDiv,
//!   directional matching and the experiment runner.

pub mod agent;
pub mod blender;
pub mod corpus;
pub mod evalsuite;
pub mod genmodels;
pub mod layout;
pub mod mechanics;
pub mod numerics;

pub use blender::{BlendWeights, WeightKind};
pub use corpus::{
    Affordance, Corpus, DirectionalLabel, Segment, TileGrid, TileId, TileVocab, SEGMENT_COLS,
    SEGMENT_ROWS,
};
pub use genmodels::{Family, ModelCheckpoint, ModelConfig};
pub use mechanics::{JumpArc, JumpModel};

/// Seeded RNG used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a task index.
pub fn derive_seed(seed: u64, task: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ task.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
