//! Level ingestion: text levels to labelled, balanced 15×16 segments.
//!
//! The pipeline is `parse_level` → `pad_grid` → `extract_segments` →
//! `filter_solid` → label → `upsample`, after which segments are encoded
//! per cell as one-hot blocks over the union vocabulary.

mod annotations;
mod build;
mod synthetic;
mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use annotations::{auto_label, format_annotations, parse_annotations};
pub use build::{CorpusManifest, GameSource, PadKind};
pub use synthetic::{synthetic_corpus, synthetic_game_name, synthetic_segment, synthetic_vocab};
pub use vocab::{
    Affordance, GameVocabConfig, TileConfig, TileEntry, TileId, TileVocab, VocabConfig,
};

pub const SEGMENT_ROWS: usize = 15;
pub const SEGMENT_COLS: usize = 16;
pub const SEGMENT_CELLS: usize = SEGMENT_ROWS * SEGMENT_COLS;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown tile {ch:?} at line {line}, column {col}")]
    UnknownTile { ch: char, line: usize, col: usize },
    #[error("row {line} has a different length than row 0")]
    RaggedRows { line: usize },
    #[error("level text is empty")]
    EmptyLevel,
    #[error("grid has {rows} rows, more than the target {target}")]
    GridTooTall { rows: usize, target: usize },
    #[error("cannot segment a {rows}x{cols} grid: neither 15 rows nor 16 columns")]
    BadShape { rows: usize, cols: usize },
    #[error("game {0:?} has no segments")]
    EmptyGame(String),
    #[error("unknown game {0:?}")]
    UnknownGame(String),
    #[error("segment {0} has no directional label")]
    MissingDirectionalLabel(usize),
    #[error("vocabulary error: {0}")]
    Vocab(String),
    #[error("annotation line {line}: {msg}")]
    Annotation { line: usize, msg: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major grid of tile ids.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileGrid {
    rows: usize,
    cols: usize,
    cells: Vec<TileId>,
}

impl TileGrid {
    pub fn new(rows: usize, cols: usize, cells: Vec<TileId>) -> Self {
        assert_eq!(cells.len(), rows * cols, "cell count must equal rows*cols");
        Self { rows, cols, cells }
    }

    pub fn filled(rows: usize, cols: usize, tile: TileId) -> Self {
        Self::new(rows, cols, vec![tile; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[TileId] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> TileId {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, tile: TileId) {
        self.cells[row * self.cols + col] = tile;
    }

    pub fn row(&self, row: usize) -> &[TileId] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_segment_shaped(&self) -> bool {
        self.rows == SEGMENT_ROWS && self.cols == SEGMENT_COLS
    }

    /// Copies the `rows`×`cols` window whose top-left corner is `(top, left)`.
    pub fn window(&self, top: usize, left: usize, rows: usize, cols: usize) -> TileGrid {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in top..top + rows {
            cells.extend_from_slice(&self.cells[r * self.cols + left..r * self.cols + left + cols]);
        }
        TileGrid::new(rows, cols, cells)
    }

    /// Writes `other` into this grid with its top-left corner at `(top, left)`.
    pub fn blit(&mut self, top: usize, left: usize, other: &TileGrid) {
        for r in 0..other.rows {
            let dst = (top + r) * self.cols + left;
            self.cells[dst..dst + other.cols].copy_from_slice(other.row(r));
        }
    }

    pub fn flip_horizontal(&self) -> TileGrid {
        let mut cells = Vec::with_capacity(self.cells.len());
        for r in 0..self.rows {
            cells.extend(self.row(r).iter().rev());
        }
        TileGrid::new(self.rows, self.cols, cells)
    }

    pub fn flip_vertical(&self) -> TileGrid {
        let mut cells = Vec::with_capacity(self.cells.len());
        for r in (0..self.rows).rev() {
            cells.extend_from_slice(self.row(r));
        }
        TileGrid::new(self.rows, self.cols, cells)
    }

    /// Renders the grid back to level text, one character per tile.
    pub fn render(&self, vocab: &TileVocab) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            if r > 0 {
                out.push('\n');
            }
            out.extend(self.row(r).iter().map(|&t| vocab.entry(t).ch));
        }
        out
    }

    /// Tile ids as nested rows, the wire shape used by the HTTP service.
    pub fn to_rows(&self) -> Vec<Vec<u16>> {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|t| t.0).collect())
            .collect()
    }

    pub fn from_rows(rows: &[Vec<u16>]) -> Option<TileGrid> {
        let cols = rows.first()?.len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let cells = rows.iter().flatten().map(|&t| TileId(t)).collect();
        Some(TileGrid::new(rows.len(), cols, cells))
    }
}

/// Open sides of a segment as `(up, down, left, right)`.
///
/// Training labels are binary; generation accepts any non-negative values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLabel(pub [f64; 4]);

impl DirectionalLabel {
    pub const UP: u8 = 1;
    pub const DOWN: u8 = 2;
    pub const LEFT: u8 = 4;
    pub const RIGHT: u8 = 8;

    /// Builds a binary label from a bit mask (`UP | DOWN | LEFT | RIGHT`).
    pub fn from_mask(mask: u8) -> Self {
        let mut bits = [0.0; 4];
        for (i, b) in bits.iter_mut().enumerate() {
            if mask & (1 << i) != 0 {
                *b = 1.0;
            }
        }
        Self(bits)
    }

    /// The bit mask, when every entry is exactly 0 or 1.
    pub fn mask(&self) -> Option<u8> {
        let mut mask = 0;
        for (i, &b) in self.0.iter().enumerate() {
            if b == 1.0 {
                mask |= 1 << i;
            } else if b != 0.0 {
                return None;
            }
        }
        Some(mask)
    }

    pub fn is_binary(&self) -> bool {
        self.mask().is_some()
    }

    /// Every non-zero label, in mask order 1..=15.
    pub fn all_nonzero() -> Vec<DirectionalLabel> {
        (1u8..16).map(Self::from_mask).collect()
    }

    /// Parses a four character `UDLR` bit string such as `"1010"`.
    pub fn parse_bits(s: &str) -> Option<Self> {
        let chars: Vec<char> = s.trim().chars().collect();
        if chars.len() != 4 {
            return None;
        }
        let mut bits = [0.0; 4];
        for (b, c) in bits.iter_mut().zip(chars) {
            *b = match c {
                '0' => 0.0,
                '1' => 1.0,
                _ => return None,
            };
        }
        Some(Self(bits))
    }
}

impl fmt::Display for DirectionalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mask() {
            Some(_) => {
                for &b in &self.0 {
                    write!(f, "{}", b as u8)?;
                }
                Ok(())
            }
            None => write!(f, "{:?}", self.0),
        }
    }
}

/// A 15×16 training window with its game and optional direction labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub grid: TileGrid,
    pub game: usize,
    pub game_label: Vec<f64>,
    pub dir_label: Option<DirectionalLabel>,
}

impl Segment {
    /// # Panics
    /// When the grid is not 15×16 or `game >= game_count`.
    pub fn new(grid: TileGrid, game: usize, game_count: usize) -> Self {
        assert!(grid.is_segment_shaped(), "segments are 15x16");
        assert!(game < game_count);
        let mut game_label = vec![0.0; game_count];
        game_label[game] = 1.0;
        Self {
            grid,
            game,
            game_label,
            dir_label: None,
        }
    }

    pub fn with_dir(mut self, dir: DirectionalLabel) -> Self {
        self.dir_label = Some(dir);
        self
    }
}

/// Balanced, labelled training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocab: TileVocab,
    pub segments: Vec<Segment>,
    pub counts_before: Vec<usize>,
    pub counts_after: Vec<usize>,
}

impl Corpus {
    pub fn game_count(&self) -> usize {
        self.vocab.game_count()
    }

    /// Distinct (pre-upsampling) segments of one game, in original order.
    pub fn distinct_of_game(&self, game: usize) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(move |s| s.game == game)
            .take(self.counts_before[game])
    }

    pub fn has_dir_labels(&self) -> bool {
        self.segments.iter().all(|s| s.dir_label.is_some())
    }
}

/// Parses level text for `game` into a tile grid.
pub fn parse_level(text: &str, vocab: &TileVocab, game: usize) -> Result<TileGrid, CorpusError> {
    let lines: Vec<&str> = text
        .strip_suffix('\n')
        .unwrap_or(text)
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    if lines.is_empty() || lines[0].is_empty() {
        return Err(CorpusError::EmptyLevel);
    }
    let cols = lines[0].chars().count();
    let mut cells = Vec::with_capacity(lines.len() * cols);
    for (line_no, line) in lines.iter().enumerate() {
        let start = cells.len();
        for (col, ch) in line.chars().enumerate() {
            let id = vocab.lookup(game, ch).ok_or(CorpusError::UnknownTile {
                ch,
                line: line_no,
                col,
            })?;
            cells.push(id);
        }
        if cells.len() - start != cols {
            return Err(CorpusError::RaggedRows { line: line_no });
        }
    }
    Ok(TileGrid::new(lines.len(), cols, cells))
}

/// How a short grid is grown to the segment height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadPolicy {
    /// Prepend rows filled with `fill` (the game's background tile).
    TopBackgroundRow { fill: TileId },
    /// Alternately duplicate the first and the last row.
    DuplicateOutermostRows,
}

pub fn pad_grid(
    grid: &TileGrid,
    policy: PadPolicy,
    target_rows: usize,
) -> Result<TileGrid, CorpusError> {
    if grid.rows > target_rows {
        return Err(CorpusError::GridTooTall {
            rows: grid.rows,
            target: target_rows,
        });
    }
    let missing = target_rows - grid.rows;
    if missing == 0 {
        return Ok(grid.clone());
    }
    let cols = grid.cols;
    match policy {
        PadPolicy::TopBackgroundRow { fill } => {
            let mut cells = vec![fill; missing * cols];
            cells.extend_from_slice(&grid.cells);
            Ok(TileGrid::new(target_rows, cols, cells))
        }
        PadPolicy::DuplicateOutermostRows => {
            let top_extra = missing.div_ceil(2);
            let bottom_extra = missing / 2;
            let mut cells = Vec::with_capacity(target_rows * cols);
            for _ in 0..top_extra {
                cells.extend_from_slice(grid.row(0));
            }
            cells.extend_from_slice(&grid.cells);
            for _ in 0..bottom_extra {
                cells.extend_from_slice(grid.row(grid.rows - 1));
            }
            Ok(TileGrid::new(target_rows, cols, cells))
        }
    }
}

/// Cuts non-overlapping 15×16 windows along the level's long axis.
///
/// Levels with 15 rows are scanned left to right; levels with 16 columns
/// are scanned bottom to top. A trailing remainder shorter than a window is
/// dropped.
pub fn extract_segments(grid: &TileGrid) -> Result<Vec<TileGrid>, CorpusError> {
    if grid.rows == SEGMENT_ROWS {
        Ok((0..grid.cols / SEGMENT_COLS)
            .map(|i| grid.window(0, i * SEGMENT_COLS, SEGMENT_ROWS, SEGMENT_COLS))
            .collect())
    } else if grid.cols == SEGMENT_COLS {
        let n = grid.rows / SEGMENT_ROWS;
        Ok((0..n)
            .map(|i| {
                let top = grid.rows - (i + 1) * SEGMENT_ROWS;
                grid.window(top, 0, SEGMENT_ROWS, SEGMENT_COLS)
            })
            .collect())
    } else {
        Err(CorpusError::BadShape {
            rows: grid.rows,
            cols: grid.cols,
        })
    }
}

/// Like [`extract_segments`], but also tiles arbitrary 2-D maps.
///
/// Maps matching neither axis are cut into a lattice of windows anchored at
/// the bottom-left corner, scanning along the axis with the larger extent
/// first. This orientation guess exists for mixed maps whose shaft/corridor
/// structure is not annotated.
pub fn extract_segments_auto(grid: &TileGrid) -> Vec<TileGrid> {
    if let Ok(segs) = extract_segments(grid) {
        return segs;
    }
    let nr = grid.rows / SEGMENT_ROWS;
    let nc = grid.cols / SEGMENT_COLS;
    let at = |i: usize, j: usize| {
        let top = grid.rows - (i + 1) * SEGMENT_ROWS;
        grid.window(top, j * SEGMENT_COLS, SEGMENT_ROWS, SEGMENT_COLS)
    };
    let mut out = Vec::with_capacity(nr * nc);
    if grid.cols >= grid.rows {
        for i in 0..nr {
            for j in 0..nc {
                out.push(at(i, j));
            }
        }
    } else {
        for j in 0..nc {
            for i in 0..nr {
                out.push(at(i, j));
            }
        }
    }
    out
}

pub fn is_all_solid(grid: &TileGrid, vocab: &TileVocab) -> bool {
    grid.cells
        .iter()
        .all(|&t| vocab.affordance(t) == Affordance::Solid)
}

/// Drops segments whose every cell is solid.
pub fn filter_solid(segments: Vec<Segment>, vocab: &TileVocab) -> Vec<Segment> {
    segments
        .into_iter()
        .filter(|s| !is_all_solid(&s.grid, vocab))
        .collect()
}

/// Balances games by cyclic repetition up to the largest per-game count.
///
/// `per_game[i]` holds the segments of game `i` in vocabulary order.
pub fn upsample(vocab: &TileVocab, per_game: Vec<Vec<Segment>>) -> Result<Corpus, CorpusError> {
    if per_game.len() != vocab.game_count() {
        return Err(CorpusError::Manifest(format!(
            "{} segment lists for {} games",
            per_game.len(),
            vocab.game_count()
        )));
    }
    for (g, segs) in per_game.iter().enumerate() {
        if segs.is_empty() {
            return Err(CorpusError::EmptyGame(vocab.game_name(g).to_string()));
        }
    }
    let counts_before: Vec<usize> = per_game.iter().map(Vec::len).collect();
    let max = *counts_before.iter().max().expect("at least one game");
    let mut segments = Vec::with_capacity(max * per_game.len());
    for segs in &per_game {
        segments.extend(segs.iter().cycle().take(max).cloned());
    }
    Ok(Corpus {
        vocab: vocab.clone(),
        segments,
        counts_before,
        counts_after: vec![max; per_game.len()],
    })
}

/// One-hot encodes a grid, one block of `vocab.len()` entries per cell.
pub fn encode_onehot(grid: &TileGrid, vocab: &TileVocab) -> Vec<f64> {
    let v = vocab.len();
    let mut out = vec![0.0; grid.cells.len() * v];
    for (i, t) in grid.cells.iter().enumerate() {
        out[i * v + t.index()] = 1.0;
    }
    out
}

/// Per-cell argmax over `vocab_len`-sized blocks (lowest id wins ties).
pub fn decode_argmax(values: &[f64], rows: usize, cols: usize, vocab_len: usize) -> TileGrid {
    assert_eq!(values.len(), rows * cols * vocab_len);
    let cells = values
        .chunks_exact(vocab_len)
        .map(|block| {
            let mut best = 0;
            for (j, &x) in block.iter().enumerate() {
                if x > block[best] {
                    best = j;
                }
            }
            TileId(best as u16)
        })
        .collect();
    TileGrid::new(rows, cols, cells)
}
