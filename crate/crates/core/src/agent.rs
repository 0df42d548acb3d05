//! Affordance-level playability agent.
//!
//! A segment is reduced to solids, hazards, passables and climbables and an
//! A* search looks for a left-to-right or bottom-to-top path using walking,
//! climbing, falling and the jump arcs of a (possibly blended) jump model.
//!
//! Conventions:
//!
//! * A cell is *enterable* when it is passable or climbable.
//! * A cell is *supported* when it is enterable and either climbable or
//!   directly above a solid or climbable cell. Below the bottom row there is
//!   no support.
//! * Supported cells allow walking, climbing and jumping; unsupported cells
//!   only allow falling one row, straight or diagonally.
//! * The grid edges act as solid walls, except the bottom edge, below which
//!   the agent is lost.
//! * Jumps follow an arc's offsets one tile step at a time (vertical steps
//!   first while rising, horizontal first while descending). Hitting a solid
//!   ends the jump in the last free cell; entering a hazard or leaving
//!   through the bottom voids it. The agent grabs any climbable it enters
//!   and lands on the first supported cell after the apex.
//!
//! The movement mode (grounded or airborne) is a function of the cell, so
//! search states are cells.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::{Affordance, TileGrid, TileVocab};
use crate::mechanics::JumpArc;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffordanceGrid {
    rows: usize,
    cols: usize,
    cells: Vec<Affordance>,
}

impl AffordanceGrid {
    pub fn new(rows: usize, cols: usize, cells: Vec<Affordance>) -> Self {
        assert_eq!(cells.len(), rows * cols);
        Self { rows, cols, cells }
    }

    pub fn filled(rows: usize, cols: usize, a: Affordance) -> Self {
        Self::new(rows, cols, vec![a; rows * cols])
    }

    /// Parses rows of `X` (solid), `^` (hazard), `-` (passable) and `#`
    /// (climbable).
    pub fn parse(text: &str) -> Option<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let cols = lines.first()?.chars().count();
        let mut cells = Vec::new();
        for l in &lines {
            if l.chars().count() != cols {
                return None;
            }
            for ch in l.chars() {
                cells.push(match ch {
                    'X' => Affordance::Solid,
                    '^' => Affordance::Hazard,
                    '-' => Affordance::Passable,
                    '#' => Affordance::Climbable,
                    _ => return None,
                });
            }
        }
        Some(Self::new(lines.len(), cols, cells))
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(match self.get(r, c) {
                    Affordance::Solid => 'X',
                    Affordance::Hazard => '^',
                    Affordance::Passable => '-',
                    Affordance::Climbable => '#',
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Affordance {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, a: Affordance) {
        self.cells[row * self.cols + col] = a;
    }

    fn at(&self, row: i32, col: i32) -> Option<Affordance> {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            None
        } else {
            Some(self.get(row as usize, col as usize))
        }
    }

    pub fn is_enterable(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_enterable()
    }

    pub fn is_supported(&self, row: usize, col: usize) -> bool {
        let a = self.get(row, col);
        a.is_enterable()
            && (a == Affordance::Climbable
                || (row + 1 < self.rows && self.get(row + 1, col).supports()))
    }
}

/// Per-cell affordance lookup over the union vocabulary.
pub fn to_affordances(grid: &TileGrid, vocab: &TileVocab) -> AffordanceGrid {
    AffordanceGrid::new(
        grid.rows(),
        grid.cols(),
        grid.cells().iter().map(|&t| vocab.affordance(t)).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    LeftToRight,
    BottomToTop,
}

pub type Cell = (usize, usize);

/// Start and goal cells for a direction; either may be empty.
pub fn find_start_goal(grid: &AffordanceGrid, direction: Direction) -> (Vec<Cell>, Vec<Cell>) {
    let (rows, cols) = (grid.rows, grid.cols);
    let pick = |cells: Vec<Cell>| -> Vec<Cell> {
        cells
            .into_iter()
            .filter(|&(r, c)| grid.is_supported(r, c))
            .collect()
    };
    match direction {
        Direction::LeftToRight => (
            pick((0..rows).map(|r| (r, 0)).collect()),
            pick((0..rows).map(|r| (r, cols - 1)).collect()),
        ),
        Direction::BottomToTop => (
            pick((0..cols).map(|c| (rows - 1, c)).collect()),
            pick((0..cols).map(|c| (0, c)).collect()),
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Move {
    Start,
    Walk,
    Climb,
    Fall,
    /// `arc` indexes the arc list; `mirrored` jumps leftward.
    Jump {
        arc: usize,
        mirrored: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub row: usize,
    pub col: usize,
    /// Move that reached this cell.
    pub action: Move,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub direction: Direction,
    pub playable: bool,
    pub path: Option<Vec<PathStep>>,
}

/// Every cell reachable from `from` in one move, with the move taken.
///
/// Shared by the A* search and by reachability checks, so both explore the
/// same move relation.
pub fn successors(grid: &AffordanceGrid, arcs: &[JumpArc], from: Cell) -> Vec<(Cell, Move)> {
    let (r, c) = (from.0 as i32, from.1 as i32);
    let enterable = |r: i32, c: i32| grid.at(r, c).is_some_and(Affordance::is_enterable);
    let climbable = |r: i32, c: i32| grid.at(r, c) == Some(Affordance::Climbable);
    let cell = |r: i32, c: i32| (r as usize, c as usize);
    let mut out = Vec::new();
    if !grid.is_supported(from.0, from.1) {
        for dc in [0, -1, 1] {
            if enterable(r + 1, c + dc) && (dc == 0 || enterable(r, c + dc)) {
                out.push((cell(r + 1, c + dc), Move::Fall));
            }
        }
        return out;
    }
    for dc in [-1, 1] {
        if enterable(r, c + dc) {
            out.push((cell(r, c + dc), Move::Walk));
        }
    }
    for dr in [-1, 1] {
        if enterable(r + dr, c) && (climbable(r, c) || climbable(r + dr, c)) {
            out.push((cell(r + dr, c), Move::Climb));
        }
    }
    for (i, arc) in arcs.iter().enumerate() {
        for mirrored in [false, true] {
            if let Some(end) = simulate_jump(grid, arc, from, mirrored) {
                if end != from {
                    out.push((end, Move::Jump { arc: i, mirrored }));
                }
            }
        }
    }
    out
}

/// Where a jump from `from` ends, or `None` when it kills the agent.
pub fn simulate_jump(
    grid: &AffordanceGrid,
    arc: &JumpArc,
    from: Cell,
    mirrored: bool,
) -> Option<Cell> {
    let s = if mirrored { -1 } else { 1 };
    let (r0, c0) = (from.0 as i32, from.1 as i32);
    let apex_idx = arc
        .offsets
        .iter()
        .position(|o| o.1 == arc.apex())
        .unwrap_or(0);
    let (mut r, mut c) = (r0, c0);
    for (i, &(dx, dy)) in arc.offsets.iter().enumerate() {
        let (tr, tc) = (r0 - dy, c0 + s * dx);
        let descending = i > apex_idx;
        let vertical_first = tr < r;
        while (r, c) != (tr, tc) {
            let step_v = r != tr && (vertical_first || c == tc);
            let (nr, nc) = if step_v {
                (r + (tr - r).signum(), c)
            } else {
                (r, c + (tc - c).signum())
            };
            match grid.at(nr, nc) {
                None if nr >= grid.rows as i32 => return None,
                None | Some(Affordance::Solid) => return Some((r as usize, c as usize)),
                Some(Affordance::Hazard) => return None,
                Some(a) => {
                    r = nr;
                    c = nc;
                    if a == Affordance::Climbable
                        || (descending && grid.is_supported(r as usize, c as usize))
                    {
                        return Some((r as usize, c as usize));
                    }
                }
            }
        }
    }
    Some((r as usize, c as usize))
}

/// Lower bound on the remaining cost: distance to the goal column or row.
fn heuristic(direction: Direction, grid: &AffordanceGrid, cell: Cell) -> usize {
    match direction {
        Direction::LeftToRight => grid.cols - 1 - cell.1,
        Direction::BottomToTop => cell.0,
    }
}

fn move_cost(a: Cell, b: Cell) -> usize {
    (a.0.abs_diff(b.0) + a.1.abs_diff(b.1)).max(1)
}

/// Multi-source A* from every start cell to any goal cell.
///
/// Move cost is the Manhattan length of the move (at least 1), so the
/// distance to the goal line never overestimates.
pub fn astar(grid: &AffordanceGrid, arcs: &[JumpArc], direction: Direction) -> PathResult {
    let (starts, goals) = find_start_goal(grid, direction);
    let fail = PathResult {
        direction,
        playable: false,
        path: None,
    };
    if starts.is_empty() || goals.is_empty() {
        return fail;
    }
    let is_goal = |cell: Cell| goals.contains(&cell);
    let mut best: HashMap<Cell, usize> = HashMap::new();
    let mut parent: HashMap<Cell, (Cell, Move)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for &s in &starts {
        best.insert(s, 0);
        heap.push(Reverse((heuristic(direction, grid, s), 0usize, s)));
    }
    while let Some(Reverse((_, g, cell))) = heap.pop() {
        if g > best[&cell] {
            continue;
        }
        if is_goal(cell) {
            let mut path = vec![];
            let mut cur = cell;
            while let Some(&(prev, action)) = parent.get(&cur) {
                path.push(PathStep {
                    row: cur.0,
                    col: cur.1,
                    action,
                });
                cur = prev;
            }
            path.push(PathStep {
                row: cur.0,
                col: cur.1,
                action: Move::Start,
            });
            path.reverse();
            return PathResult {
                direction,
                playable: true,
                path: Some(path),
            };
        }
        for (next, action) in successors(grid, arcs, cell) {
            let ng = g + move_cost(cell, next);
            if best.get(&next).is_none_or(|&b| ng < b) {
                best.insert(next, ng);
                parent.insert(next, (cell, action));
                heap.push(Reverse((ng + heuristic(direction, grid, next), ng, next)));
            }
        }
    }
    fail
}

/// Cells reachable from the start set by breadth-first search over
/// [`successors`]; the exhaustive counterpart of [`astar`].
pub fn reachable(grid: &AffordanceGrid, arcs: &[JumpArc], direction: Direction) -> Vec<Cell> {
    let (starts, _) = find_start_goal(grid, direction);
    let mut seen = vec![false; grid.rows * grid.cols];
    let mut queue: VecDeque<Cell> = VecDeque::new();
    for s in starts {
        if !seen[s.0 * grid.cols + s.1] {
            seen[s.0 * grid.cols + s.1] = true;
            queue.push_back(s);
        }
    }
    let mut out = Vec::new();
    while let Some(cell) = queue.pop_front() {
        out.push(cell);
        for (next, _) in successors(grid, arcs, cell) {
            let i = next.0 * grid.cols + next.1;
            if !seen[i] {
                seen[i] = true;
                queue.push_back(next);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Playability {
    pub playable: bool,
    pub left_to_right: PathResult,
    pub bottom_to_top: PathResult,
}

/// Playable when a left-to-right or a bottom-to-top path exists.
pub fn play(grid: &AffordanceGrid, arcs: &[JumpArc]) -> Playability {
    let left_to_right = astar(grid, arcs, Direction::LeftToRight);
    let bottom_to_top = astar(grid, arcs, Direction::BottomToTop);
    Playability {
        playable: left_to_right.playable || bottom_to_top.playable,
        left_to_right,
        bottom_to_top,
    }
}

pub fn playability(grid: &TileGrid, vocab: &TileVocab, arcs: &[JumpArc]) -> bool {
    let a = to_affordances(grid, vocab);
    astar(&a, arcs, Direction::LeftToRight).playable
        || astar(&a, arcs, Direction::BottomToTop).playable
}
