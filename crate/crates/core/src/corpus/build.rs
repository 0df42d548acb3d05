use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    auto_label, extract_segments_auto, filter_solid, pad_grid, parse_annotations, parse_level,
    upsample, Corpus, CorpusError, PadPolicy, Segment, TileGrid, TileVocab, SEGMENT_COLS,
    SEGMENT_ROWS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PadKind {
    #[default]
    None,
    TopBackgroundRow,
    DuplicateOutermostRows,
}

/// Where one game's levels live and how they are cut into segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSource {
    /// Game name as listed in the vocabulary.
    pub name: String,
    /// Level files or directories (every `*.txt` inside, sorted by name).
    pub levels: Vec<PathBuf>,
    #[serde(default)]
    pub pad: PadKind,
    #[serde(default)]
    pub filter_solid: bool,
    /// Cut each level file into rooms of this shape first (dungeon maps).
    #[serde(default)]
    pub room_shape: Option<[usize; 2]>,
    /// Add horizontally and vertically flipped rooms not already present.
    #[serde(default)]
    pub flip_augment: bool,
    /// `index<TAB>UDLR` sidecar, indexed over this game's final segment list.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    /// Label directions with the heuristic labeller when no sidecar is given.
    #[serde(default)]
    pub auto_label: bool,
}

/// A corpus description: a vocabulary plus one source per game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub vocab: PathBuf,
    #[serde(rename = "game")]
    pub games: Vec<GameSource>,
}

impl CorpusManifest {
    pub fn from_toml_str(text: &str) -> Result<Self, CorpusError> {
        toml::from_str(text).map_err(|e| CorpusError::Manifest(e.to_string()))
    }

    /// Loads a manifest and the vocabulary it names, then builds the corpus.
    /// Relative paths resolve against the manifest's directory.
    pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
        let path = path.as_ref();
        let manifest = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let vocab = TileVocab::load(base.join(&manifest.vocab))?;
        manifest.build(base, &vocab)
    }

    pub fn build(&self, base: &Path, vocab: &TileVocab) -> Result<Corpus, CorpusError> {
        let mut per_game: Vec<Vec<Segment>> = vec![Vec::new(); vocab.game_count()];
        for source in &self.games {
            let game = vocab
                .game_index(&source.name)
                .ok_or_else(|| CorpusError::UnknownGame(source.name.clone()))?;
            per_game[game] = source.segments(base, vocab, game)?;
        }
        upsample(vocab, per_game)
    }
}

impl GameSource {
    fn level_files(&self, base: &Path) -> Result<Vec<PathBuf>, CorpusError> {
        let mut files = Vec::new();
        for p in &self.levels {
            let p = base.join(p);
            if p.is_dir() {
                let mut inner: Vec<PathBuf> = std::fs::read_dir(&p)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|f| f.extension().is_some_and(|x| x == "txt"))
                    .collect();
                inner.sort();
                files.extend(inner);
            } else {
                files.push(p);
            }
        }
        Ok(files)
    }

    /// Segments of this game after padding, extraction, filtering, flips
    /// and labelling (before upsampling).
    pub fn segments(
        &self,
        base: &Path,
        vocab: &TileVocab,
        game: usize,
    ) -> Result<Vec<Segment>, CorpusError> {
        let k = vocab.game_count();
        let policy = match self.pad {
            PadKind::None => None,
            PadKind::TopBackgroundRow => Some(PadPolicy::TopBackgroundRow {
                fill: vocab.background(game),
            }),
            PadKind::DuplicateOutermostRows => Some(PadPolicy::DuplicateOutermostRows),
        };
        let mut grids: Vec<TileGrid> = Vec::new();
        for file in self.level_files(base)? {
            let text = std::fs::read_to_string(&file)?;
            let level = parse_level(&text, vocab, game)?;
            let pieces = match self.room_shape {
                Some([rr, rc]) => rooms(&level, rr, rc),
                None => vec![level],
            };
            for piece in pieces {
                let piece = match policy {
                    Some(p) if piece.rows() < SEGMENT_ROWS => pad_grid(&piece, p, SEGMENT_ROWS)?,
                    _ => piece,
                };
                grids.extend(extract_segments_auto(&piece));
            }
        }
        if self.flip_augment {
            let mut seen: HashSet<TileGrid> = grids.iter().cloned().collect();
            let originals = grids.clone();
            for g in &originals {
                for flipped in [g.flip_vertical(), g.flip_horizontal()] {
                    if seen.insert(flipped.clone()) {
                        grids.push(flipped);
                    }
                }
            }
        }
        let mut segments: Vec<Segment> = grids
            .into_iter()
            .map(|g| Segment::new(g, game, k))
            .collect();
        if self.filter_solid {
            segments = filter_solid(segments, vocab);
        }
        if let Some(ann) = &self.annotations {
            let labels = parse_annotations(&std::fs::read_to_string(base.join(ann))?)?;
            for (i, s) in segments.iter_mut().enumerate() {
                let label = labels
                    .get(&i)
                    .ok_or(CorpusError::MissingDirectionalLabel(i))?;
                s.dir_label = Some(*label);
            }
        } else if self.auto_label {
            for s in &mut segments {
                s.dir_label = Some(auto_label(&s.grid, vocab));
            }
        }
        debug_assert!(segments.iter().all(|s| s.grid.cols() == SEGMENT_COLS));
        Ok(segments)
    }
}

/// Cuts a map into `rows`×`cols` rooms, skipping blocks made of one tile.
fn rooms(map: &TileGrid, rows: usize, cols: usize) -> Vec<TileGrid> {
    let mut out = Vec::new();
    for i in 0..map.rows() / rows {
        for j in 0..map.cols() / cols {
            let room = map.window(i * rows, j * cols, rows, cols);
            let first = room.cells()[0];
            if room.cells().iter().any(|&t| t != first) {
                out.push(room);
            }
        }
    }
    out
}
