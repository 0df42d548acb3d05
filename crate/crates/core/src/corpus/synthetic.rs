//! Procedural stand-in corpus.
//!
//! Every synthetic game has its own five-tile palette (background, solid,
//! ladder, hazard, door), so game identity is recoverable from any single
//! cell. Segments are walled rooms whose door gaps follow a directional
//! mask, with interior furniture drawn in one of four styles.

use rand::Rng as _;

use super::{
    Affordance, Corpus, DirectionalLabel, GameVocabConfig, Segment, TileConfig, TileGrid,
    TileVocab, VocabConfig, SEGMENT_COLS, SEGMENT_ROWS,
};

const PALETTES: [[&str; 5]; 4] = [
    ["#5c94fc", "#c84c0c", "#fcbcb0", "#f83800", "#00a800"],
    ["#a4e4fc", "#3cbcfc", "#f8f8f8", "#d82800", "#f8b800"],
    ["#000000", "#f87858", "#fca044", "#881400", "#58f898"],
    ["#0c1c34", "#a87058", "#6888fc", "#e40058", "#b8f818"],
];

pub fn synthetic_game_name(game: usize) -> String {
    format!("synth-{}", (b'a' + (game % 26) as u8) as char)
}

/// Vocabulary of `k` synthetic games with disjoint palettes.
pub fn synthetic_vocab(k: usize) -> TileVocab {
    let games = (0..k)
        .map(|g| {
            let p = PALETTES[g % PALETTES.len()];
            let tile = |ch, affordance, door, color: &str| TileConfig {
                char: ch,
                affordance,
                door,
                color: Some(color.to_string()),
            };
            GameVocabConfig {
                name: synthetic_game_name(g),
                background: '-',
                tiles: vec![
                    tile('-', Affordance::Passable, false, p[0]),
                    tile('X', Affordance::Solid, false, p[1]),
                    tile('#', Affordance::Climbable, false, p[2]),
                    tile('^', Affordance::Hazard, false, p[3]),
                    tile('D', Affordance::Passable, true, p[4]),
                ],
            }
        })
        .collect();
    TileVocab::from_config(&VocabConfig { games }).expect("synthetic vocabulary is valid")
}

/// One synthetic room for `game`, open on the sides set in `mask`.
pub fn synthetic_segment(
    vocab: &TileVocab,
    game: usize,
    mask: u8,
    rng: &mut crate::Rng,
) -> TileGrid {
    let t = |ch| vocab.lookup(game, ch).expect("synthetic palette tile");
    let (bg, solid, ladder, hazard, door) = (t('-'), t('X'), t('#'), t('^'), t('D'));
    let (rows, cols) = (SEGMENT_ROWS, SEGMENT_COLS);
    let mut g = TileGrid::filled(rows, cols, bg);
    for c in 0..cols {
        g.set(0, c, solid);
        g.set(rows - 1, c, solid);
    }
    for r in 0..rows {
        g.set(r, 0, solid);
        g.set(r, cols - 1, solid);
    }
    if mask & DirectionalLabel::UP != 0 {
        (6..10).for_each(|c| g.set(0, c, door));
    }
    if mask & DirectionalLabel::DOWN != 0 {
        (6..10).for_each(|c| g.set(rows - 1, c, door));
    }
    if mask & DirectionalLabel::LEFT != 0 {
        (10..14).for_each(|r| g.set(r, 0, door));
    }
    if mask & DirectionalLabel::RIGHT != 0 {
        (10..14).for_each(|r| g.set(r, cols - 1, door));
    }

    // furniture stays inside rows 2..=12, cols 2..=13 so borders keep the mask
    match game % 4 {
        0 => {
            for _ in 0..rng.random_range(2..=3) {
                let r = rng.random_range(4..=12);
                let c0 = rng.random_range(2..=9);
                let len = rng.random_range(3..=5);
                (c0..(c0 + len).min(14)).for_each(|c| g.set(r, c, solid));
            }
        }
        1 => {
            for _ in 0..rng.random_range(1..=2) {
                let c = rng.random_range(2..=13);
                (2..=13).for_each(|r| g.set(r, c, ladder));
            }
            let r = rng.random_range(5..=10);
            let c0 = rng.random_range(2..=8);
            (c0..c0 + 4).for_each(|c| g.set(r, c, solid));
        }
        2 => {
            let c0 = rng.random_range(2..=7);
            let len = rng.random_range(3..=6);
            (c0..(c0 + len).min(14)).for_each(|c| g.set(13, c, hazard));
            for _ in 0..2 {
                let r = rng.random_range(6..=11);
                let c = rng.random_range(2..=11);
                (c..c + 3).for_each(|c| g.set(r, c, solid));
            }
        }
        _ => {
            for _ in 0..rng.random_range(4..=6) {
                let r = rng.random_range(2..=11);
                let c = rng.random_range(2..=12);
                for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    g.set(r + dr, c + dc, solid);
                }
            }
        }
    }
    g
}

/// `per_game` rooms for each of `k` synthetic games, each labelled with the
/// non-zero directional mask it was generated from.
pub fn synthetic_corpus(k: usize, per_game: usize, seed: u64) -> Corpus {
    let vocab = synthetic_vocab(k);
    let mut rng = crate::seeded_rng(seed);
    let mut segments = Vec::with_capacity(k * per_game);
    for game in 0..k {
        for i in 0..per_game {
            // cycle through all 15 masks so every label is represented
            let mask = (i % 15) as u8 + 1;
            let grid = synthetic_segment(&vocab, game, mask, &mut rng);
            segments.push(Segment::new(grid, game, k).with_dir(DirectionalLabel::from_mask(mask)));
        }
    }
    Corpus {
        vocab,
        segments,
        counts_before: vec![per_game; k],
        counts_after: vec![per_game; k],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::auto_label;

    #[test]
    fn auto_label_recovers_mask() {
        let vocab = synthetic_vocab(4);
        let mut rng = crate::seeded_rng(3);
        for game in 0..4 {
            for mask in 0u8..16 {
                let g = synthetic_segment(&vocab, game, mask, &mut rng);
                assert_eq!(
                    auto_label(&g, &vocab).mask(),
                    Some(mask),
                    "game {game} mask {mask}"
                );
            }
        }
    }

    #[test]
    fn palettes_are_disjoint() {
        let c = synthetic_corpus(3, 5, 1);
        for s in &c.segments {
            assert!(s
                .grid
                .cells()
                .iter()
                .all(|&t| c.vocab.entry(t).game == s.game));
        }
        assert_eq!(c.segments.len(), 15);
        assert!(c.has_dir_labels());
    }
}
