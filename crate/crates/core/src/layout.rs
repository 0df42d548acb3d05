//! Whole-level layouts and assembly.
//!
//! A layout places locations on an integer grid (`gx` rightward, `gy`
//! upward) and records which sides of each location are open, using the
//! directional bit order (up, down, left, right). Assembly decodes one
//! segment per location, conditioned on its open sides, and stitches them
//! into one tile grid.

use std::collections::{HashMap, VecDeque};

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::blender::{sample_blend, BlendError, BlendWeights};
use crate::corpus::{Affordance, DirectionalLabel, Segment, TileGrid, SEGMENT_COLS, SEGMENT_ROWS};
use crate::genmodels::ModelCheckpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Dungeon,
    Platformer,
}

impl std::str::FromStr for LayoutKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dungeon" => Ok(Self::Dungeon),
            "platformer" => Ok(Self::Platformer),
            other => Err(format!(
                "unknown layout kind {other:?} (dungeon or platformer)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Up,
    Down,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Up, Side::Down, Side::Left, Side::Right];

    pub fn bit(self) -> u8 {
        match self {
            Side::Up => DirectionalLabel::UP,
            Side::Down => DirectionalLabel::DOWN,
            Side::Left => DirectionalLabel::LEFT,
            Side::Right => DirectionalLabel::RIGHT,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Up => Side::Down,
            Side::Down => Side::Up,
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    pub fn offset(self) -> (i32, i32) {
        match self {
            Side::Up => (0, 1),
            Side::Down => (0, -1),
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub gx: i32,
    pub gy: i32,
    /// Open sides as directional bits.
    pub open: u8,
}

impl Location {
    pub fn is_open(&self, side: Side) -> bool {
        self.open & side.bit() != 0
    }

    pub fn label(&self) -> DirectionalLabel {
        DirectionalLabel::from_mask(self.open)
    }
}

/// Locations in creation order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub kind: LayoutKind,
    pub locations: Vec<Location>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn index_of(&self, gx: i32, gy: i32) -> Option<usize> {
        self.locations.iter().position(|l| l.gx == gx && l.gy == gy)
    }

    /// `(min_gx, min_gy, max_gx, max_gy)`.
    pub fn bounds(&self) -> (i32, i32, i32, i32) {
        let mut b = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for l in &self.locations {
            b = (b.0.min(l.gx), b.1.min(l.gy), b.2.max(l.gx), b.3.max(l.gy));
        }
        b
    }

    /// Pairs of location indices joined by facing open sides.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let index: HashMap<(i32, i32), usize> = self
            .locations
            .iter()
            .enumerate()
            .map(|(i, l)| ((l.gx, l.gy), i))
            .collect();
        let mut edges = Vec::new();
        for (i, l) in self.locations.iter().enumerate() {
            for side in [Side::Up, Side::Right] {
                let (dx, dy) = side.offset();
                if let Some(&j) = index.get(&(l.gx + dx, l.gy + dy)) {
                    if l.is_open(side) && self.locations[j].is_open(side.opposite()) {
                        edges.push((i, j));
                    }
                }
            }
        }
        edges
    }

    /// Every location reachable from the first through open, facing sides.
    pub fn is_connected(&self) -> bool {
        if self.locations.is_empty() {
            return true;
        }
        let mut adj = vec![Vec::new(); self.len()];
        for (a, b) in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.len()];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Between adjacent locations, each side is open iff the facing side is.
    pub fn sides_mirrored(&self) -> bool {
        self.locations.iter().all(|l| {
            Side::ALL.iter().all(|&side| {
                let (dx, dy) = side.offset();
                match self.index_of(l.gx + dx, l.gy + dy) {
                    Some(j) => l.is_open(side) == self.locations[j].is_open(side.opposite()),
                    None => true,
                }
            })
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DungeonOptions {
    /// Grow from a random existing location instead of the newest one.
    #[serde(default)]
    pub random_current: bool,
}

/// Random walk of `n` rooms.
///
/// Each step picks a random closed side of the current room whose neighbor
/// cell is free (redrawing up to 100 times, then taking the first free
/// side), opens it on both rooms and moves to the new room. If the current
/// room is boxed in, the walk resumes from a random room that still has a
/// free neighbor.
pub fn gen_dungeon_layout(n: usize, opts: DungeonOptions, rng: &mut crate::Rng) -> Layout {
    assert!(n >= 1, "a layout needs at least one location");
    let mut locations = vec![Location {
        gx: 0,
        gy: 0,
        open: 0,
    }];
    let mut occupied: HashMap<(i32, i32), usize> = HashMap::from([((0, 0), 0)]);
    let mut current = 0;
    let free = |occupied: &HashMap<(i32, i32), usize>, l: &Location, s: Side| {
        let (dx, dy) = s.offset();
        !l.is_open(s) && !occupied.contains_key(&(l.gx + dx, l.gy + dy))
    };
    while locations.len() < n {
        let here = locations[current];
        let mut side = None;
        for _ in 0..100 {
            let closed: Vec<Side> = Side::ALL
                .into_iter()
                .filter(|&s| !here.is_open(s))
                .collect();
            let Some(&s) = closed.choose(rng) else { break };
            if free(&occupied, &here, s) {
                side = Some(s);
                break;
            }
        }
        let side = side.or_else(|| Side::ALL.into_iter().find(|&s| free(&occupied, &here, s)));
        let Some(side) = side else {
            let candidates: Vec<usize> = (0..locations.len())
                .filter(|&i| Side::ALL.iter().any(|&s| free(&occupied, &locations[i], s)))
                .collect();
            current = *candidates
                .choose(rng)
                .expect("a finite layout always has a free side");
            continue;
        };
        let (dx, dy) = side.offset();
        let new = Location {
            gx: here.gx + dx,
            gy: here.gy + dy,
            open: side.opposite().bit(),
        };
        locations[current].open |= side.bit();
        occupied.insert((new.gx, new.gy), locations.len());
        locations.push(new);
        current = if opts.random_current {
            rng.random_range(0..locations.len())
        } else {
            locations.len() - 1
        };
    }
    Layout {
        kind: LayoutKind::Dungeon,
        locations,
    }
}

/// Chain of `n` segments, each continuing up or right from the previous
/// one. `first` forces the first step's direction.
///
/// Every segment is open toward its successor (or, for the last one, toward
/// where a successor would go) and toward its predecessor.
pub fn gen_platformer_layout(n: usize, first: Option<Side>, rng: &mut crate::Rng) -> Layout {
    assert!(n >= 1, "a layout needs at least one location");
    assert!(
        matches!(first, None | Some(Side::Up | Side::Right)),
        "platformer layouts progress up or right"
    );
    let mut locations = vec![Location {
        gx: 0,
        gy: 0,
        open: 0,
    }];
    for i in 0..n {
        let step = match (i, first) {
            (0, Some(s)) => s,
            _ => {
                if rng.random_bool(0.5) {
                    Side::Up
                } else {
                    Side::Right
                }
            }
        };
        locations[i].open |= step.bit();
        if i + 1 < n {
            let (dx, dy) = step.offset();
            let prev = locations[i];
            locations.push(Location {
                gx: prev.gx + dx,
                gy: prev.gy + dy,
                open: step.opposite().bit(),
            });
        }
    }
    Layout {
        kind: LayoutKind::Platformer,
        locations,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WholeLevel {
    pub layout: Layout,
    pub segments: Vec<Segment>,
    /// Sampling seed of each location.
    pub seeds: Vec<u64>,
    pub grid: TileGrid,
}

/// Decodes one segment per location, conditioned on the location's open
/// sides, and stitches them into the layout's bounding box. Cells of the box
/// without a location are filled with a solid tile.
pub fn assemble(
    layout: &Layout,
    ckpt: &ModelCheckpoint,
    w: &BlendWeights,
    seed: u64,
) -> Result<WholeLevel, BlendError> {
    let family = ckpt.family();
    if !family.is_directional() {
        return Err(BlendError::FamilyMismatch {
            op: "assemble",
            expected: "cgmvae or ccvae",
            got: family,
        });
    }
    let mut segments = Vec::with_capacity(layout.len());
    let mut seeds = Vec::with_capacity(layout.len());
    for (i, loc) in layout.locations.iter().enumerate() {
        let s = crate::derive_seed(seed, i as u64);
        let mut one = sample_blend(ckpt, w, 1, Some(&loc.label()), s)?;
        segments.push(one.remove(0));
        seeds.push(s);
    }
    let filler = filler_tile(ckpt, w);
    let grid = stitch(layout, &segments, filler);
    Ok(WholeLevel {
        layout: layout.clone(),
        segments,
        seeds,
        grid,
    })
}

fn filler_tile(ckpt: &ModelCheckpoint, w: &BlendWeights) -> crate::TileId {
    let vocab = &ckpt.vocab;
    let heaviest = (0..w.len())
        .max_by(|&a, &b| w.weights()[a].total_cmp(&w.weights()[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    vocab
        .game_tiles(heaviest)
        .find(|&t| vocab.affordance(t) == Affordance::Solid)
        .or_else(|| vocab.first_solid())
        .unwrap_or(vocab.background(heaviest))
}

/// Places `segments[i]` at `layout.locations[i]`; row blocks run from the
/// highest `gy` down.
pub fn stitch(layout: &Layout, segments: &[Segment], filler: crate::TileId) -> TileGrid {
    let (min_gx, min_gy, max_gx, max_gy) = layout.bounds();
    let w = (max_gx - min_gx + 1) as usize;
    let h = (max_gy - min_gy + 1) as usize;
    let mut grid = TileGrid::filled(h * SEGMENT_ROWS, w * SEGMENT_COLS, filler);
    for (loc, seg) in layout.locations.iter().zip(segments) {
        let top = (max_gy - loc.gy) as usize * SEGMENT_ROWS;
        let left = (loc.gx - min_gx) as usize * SEGMENT_COLS;
        grid.blit(top, left, &seg.grid);
    }
    grid
}

/// Layout sidecar stored next to a stitched level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutSidecar {
    pub kind: LayoutKind,
    pub seed: u64,
    pub config_hash: String,
    pub weights: Vec<f64>,
    pub location: Vec<SidecarLocation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidecarLocation {
    pub gx: i32,
    pub gy: i32,
    /// Open sides as a `UDLR` bit string.
    pub open: String,
    pub seed: u64,
}

impl WholeLevel {
    pub fn sidecar(&self, seed: u64, config_hash: &str, w: &BlendWeights) -> LayoutSidecar {
        LayoutSidecar {
            kind: self.layout.kind,
            seed,
            config_hash: config_hash.to_string(),
            weights: w.weights().to_vec(),
            location: self
                .layout
                .locations
                .iter()
                .zip(&self.seeds)
                .map(|(l, &s)| SidecarLocation {
                    gx: l.gx,
                    gy: l.gy,
                    open: l.label().to_string(),
                    seed: s,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_room() {
        let l = gen_dungeon_layout(1, DungeonOptions::default(), &mut crate::seeded_rng(0));
        assert_eq!(
            l.locations,
            vec![Location {
                gx: 0,
                gy: 0,
                open: 0
            }]
        );
        assert!(l.is_connected());
    }

    #[test]
    fn five_rooms() {
        let l = gen_dungeon_layout(5, DungeonOptions::default(), &mut crate::seeded_rng(4));
        assert_eq!(l.len(), 5);
        assert!(l.edges().len() >= 4);
        assert!(l.is_connected() && l.sides_mirrored());
        let again = gen_dungeon_layout(5, DungeonOptions::default(), &mut crate::seeded_rng(4));
        assert_eq!(l, again);
    }

    #[test]
    fn forced_rightward_pair() {
        let l = gen_platformer_layout(2, Some(Side::Right), &mut crate::seeded_rng(1));
        assert!(l.locations[0].is_open(Side::Right));
        assert!(l.locations[1].is_open(Side::Left));
        assert_eq!((l.locations[1].gx, l.locations[1].gy), (1, 0));
    }

    #[test]
    fn single_platformer_location_has_one_exit() {
        let l = gen_platformer_layout(1, None, &mut crate::seeded_rng(2));
        assert_eq!(l.locations[0].open.count_ones(), 1);
    }

    #[test]
    fn stitch_geometry() {
        let layout = Layout {
            kind: LayoutKind::Platformer,
            locations: vec![
                Location {
                    gx: 0,
                    gy: 0,
                    open: DirectionalLabel::RIGHT,
                },
                Location {
                    gx: 1,
                    gy: 0,
                    open: DirectionalLabel::LEFT | DirectionalLabel::UP,
                },
                Location {
                    gx: 1,
                    gy: 1,
                    open: DirectionalLabel::DOWN,
                },
            ],
        };
        let segs: Vec<Segment> = (0..3)
            .map(|i| Segment::new(TileGrid::filled(15, 16, crate::TileId(i + 1)), 0, 1))
            .collect();
        let g = stitch(&layout, &segs, crate::TileId(9));
        assert_eq!((g.rows(), g.cols()), (30, 32));
        assert_eq!(g.get(0, 0), crate::TileId(9));
        assert_eq!(g.get(0, 16), crate::TileId(3));
        assert_eq!(g.get(15, 0), crate::TileId(1));
        assert_eq!(g.get(29, 31), crate::TileId(2));
    }

    proptest! {
        #[test]
        fn dungeons_connected(n in 1usize..60, seed in any::<u64>(), random_current in any::<bool>()) {
            let l = gen_dungeon_layout(n, DungeonOptions { random_current }, &mut crate::seeded_rng(seed));
            prop_assert_eq!(l.len(), n);
            prop_assert!(l.is_connected());
            prop_assert!(l.sides_mirrored());
            prop_assert!(l.edges().len() >= n - 1);
        }

        #[test]
        fn platformers_are_monotone_chains(n in 1usize..40, seed in any::<u64>()) {
            let l = gen_platformer_layout(n, None, &mut crate::seeded_rng(seed));
            prop_assert_eq!(l.len(), n);
            prop_assert_eq!(l.edges().len(), n - 1);
            prop_assert!(l.is_connected() && l.sides_mirrored());
            for (i, w) in l.locations.windows(2).enumerate() {
                prop_assert_eq!(w[1].gx + w[1].gy, w[0].gx + w[0].gy + 1, "step {}", i);
            }
            // path graph: no location has more than two neighbors
            let mut degree = vec![0; n];
            for (a, b) in l.edges() {
                degree[a] += 1;
                degree[b] += 1;
            }
            prop_assert!(degree.iter().all(|&d| d <= 2));
        }
    }
}
