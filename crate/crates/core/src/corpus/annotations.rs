use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{Affordance, CorpusError, DirectionalLabel, TileGrid, TileVocab};

/// Parses `index<TAB>UDLR` lines. Blank lines and `#` comments are skipped.
pub fn parse_annotations(text: &str) -> Result<BTreeMap<usize, DirectionalLabel>, CorpusError> {
    let mut out = BTreeMap::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (idx, bits) = line
            .split_once('\t')
            .ok_or_else(|| CorpusError::Annotation {
                line: line_no,
                msg: "expected index<TAB>bits".into(),
            })?;
        let idx: usize = idx.trim().parse().map_err(|_| CorpusError::Annotation {
            line: line_no,
            msg: format!("bad index {idx:?}"),
        })?;
        let label = DirectionalLabel::parse_bits(bits).ok_or_else(|| CorpusError::Annotation {
            line: line_no,
            msg: format!("bad label {bits:?}"),
        })?;
        if out.insert(idx, label).is_some() {
            return Err(CorpusError::Annotation {
                line: line_no,
                msg: format!("index {idx} listed twice"),
            });
        }
    }
    Ok(out)
}

pub fn format_annotations<'a>(
    labels: impl IntoIterator<Item = (usize, &'a DirectionalLabel)>,
) -> String {
    let mut out = String::new();
    for (i, l) in labels {
        writeln!(out, "{i}\t{l}").unwrap();
    }
    out
}

/// Heuristic directional label for synthetic fixtures.
///
/// An edge is open when its border row/column holds a run of at least two
/// enterable tiles, or any door tile.
pub fn auto_label(grid: &TileGrid, vocab: &TileVocab) -> DirectionalLabel {
    let rows = grid.rows();
    let cols = grid.cols();
    let edge_open = |cells: &mut dyn Iterator<Item = super::TileId>| {
        let mut run = 0;
        for t in cells {
            let e = vocab.entry(t);
            if e.door {
                return true;
            }
            if matches!(e.affordance, Affordance::Passable | Affordance::Climbable) {
                run += 1;
                if run >= 2 {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    };
    let up = edge_open(&mut (0..cols).map(|c| grid.get(0, c)));
    let down = edge_open(&mut (0..cols).map(|c| grid.get(rows - 1, c)));
    let left = edge_open(&mut (0..rows).map(|r| grid.get(r, 0)));
    let right = edge_open(&mut (0..rows).map(|r| grid.get(r, cols - 1)));
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    DirectionalLabel([b(up), b(down), b(left), b(right)])
}
