use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Gameplay-functional class of a tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Affordance {
    Solid,
    Hazard,
    Passable,
    Climbable,
}

impl Affordance {
    /// Cells the agent may occupy.
    pub fn is_enterable(self) -> bool {
        matches!(self, Affordance::Passable | Affordance::Climbable)
    }

    /// Cells that hold the agent up when directly beneath it.
    pub fn supports(self) -> bool {
        matches!(self, Affordance::Solid | Affordance::Climbable)
    }
}

impl fmt::Display for Affordance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Affordance::Solid => "solid",
            Affordance::Hazard => "hazard",
            Affordance::Passable => "passable",
            Affordance::Climbable => "climbable",
        })
    }
}

impl FromStr for Affordance {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "solid" => Ok(Affordance::Solid),
            "hazard" => Ok(Affordance::Hazard),
            "passable" => Ok(Affordance::Passable),
            "climbable" => Ok(Affordance::Climbable),
            other => Err(CorpusError::Vocab(format!("unknown affordance {other:?}"))),
        }
    }
}

/// Index of a tile in the union vocabulary of all games.
///
/// A tile is identified by its `(game, char)` pair, so the same character
/// used by two games yields two distinct ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TileId(pub u16);

impl TileId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub game: usize,
    pub ch: char,
    pub affordance: Affordance,
    /// Marks doors, which count as openings for directional labelling.
    pub door: bool,
    /// Display color as `#rrggbb`.
    pub color: String,
}

#[derive(Clone, Debug, PartialEq)]
struct GameTiles {
    name: String,
    background: TileId,
}

/// On-disk vocabulary description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    #[serde(rename = "game")]
    pub games: Vec<GameVocabConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameVocabConfig {
    pub name: String,
    pub background: char,
    pub tiles: Vec<TileConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileConfig {
    pub char: char,
    pub affordance: Affordance,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub door: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
}

/// Union tile vocabulary of the basis games.
///
/// Game indices follow the order games are listed in the configuration and
/// double as class indices for game labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TileVocab {
    games: Vec<GameTiles>,
    entries: Vec<TileEntry>,
    lookup: HashMap<(usize, char), TileId>,
}

impl TileVocab {
    pub fn from_config(config: &VocabConfig) -> Result<Self, CorpusError> {
        if config.games.is_empty() {
            return Err(CorpusError::Vocab("vocabulary lists no games".into()));
        }
        let mut games = Vec::with_capacity(config.games.len());
        let mut entries = Vec::new();
        let mut lookup = HashMap::new();
        for (gi, game) in config.games.iter().enumerate() {
            if games.iter().any(|g: &GameTiles| g.name == game.name) {
                return Err(CorpusError::Vocab(format!(
                    "duplicate game {:?}",
                    game.name
                )));
            }
            for tile in &game.tiles {
                if entries.len() >= u16::MAX as usize {
                    return Err(CorpusError::Vocab("too many tiles".into()));
                }
                let id = TileId(entries.len() as u16);
                if lookup.insert((gi, tile.char), id).is_some() {
                    return Err(CorpusError::Vocab(format!(
                        "character {:?} mapped twice in game {:?}",
                        tile.char, game.name
                    )));
                }
                let color = tile
                    .color
                    .clone()
                    .unwrap_or_else(|| default_color(gi, tile.affordance));
                entries.push(TileEntry {
                    game: gi,
                    ch: tile.char,
                    affordance: tile.affordance,
                    door: tile.door,
                    color,
                });
            }
            let background = *lookup.get(&(gi, game.background)).ok_or_else(|| {
                CorpusError::Vocab(format!(
                    "background {:?} of game {:?} is not a listed tile",
                    game.background, game.name
                ))
            })?;
            games.push(GameTiles {
                name: game.name.clone(),
                background,
            });
        }
        Ok(Self {
            games,
            entries,
            lookup,
        })
    }

    pub fn to_config(&self) -> VocabConfig {
        VocabConfig {
            games: self
                .games
                .iter()
                .enumerate()
                .map(|(gi, g)| GameVocabConfig {
                    name: g.name.clone(),
                    background: self.entries[g.background.index()].ch,
                    tiles: self
                        .entries
                        .iter()
                        .filter(|e| e.game == gi)
                        .map(|e| TileConfig {
                            char: e.ch,
                            affordance: e.affordance,
                            door: e.door,
                            color: Some(e.color.clone()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CorpusError> {
        let config: VocabConfig =
            toml::from_str(text).map_err(|e| CorpusError::Vocab(e.to_string()))?;
        Self::from_config(&config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_config()).expect("vocab config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml_str(&text)
    }

    /// Number of tiles across all games.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of games `k`.
    pub fn game_count(&self) -> usize {
        self.games.len()
    }

    pub fn game_name(&self, game: usize) -> &str {
        &self.games[game].name
    }

    pub fn game_names(&self) -> impl Iterator<Item = &str> {
        self.games.iter().map(|g| g.name.as_str())
    }

    pub fn game_index(&self, name: &str) -> Option<usize> {
        self.games.iter().position(|g| g.name == name)
    }

    pub fn background(&self, game: usize) -> TileId {
        self.games[game].background
    }

    pub fn lookup(&self, game: usize, ch: char) -> Option<TileId> {
        self.lookup.get(&(game, ch)).copied()
    }

    pub fn entry(&self, id: TileId) -> &TileEntry {
        &self.entries[id.index()]
    }

    pub fn entries(&self) -> &[TileEntry] {
        &self.entries
    }

    pub fn affordance(&self, id: TileId) -> Affordance {
        self.entries[id.index()].affordance
    }

    pub fn contains(&self, id: TileId) -> bool {
        id.index() < self.entries.len()
    }

    /// Lowest-id solid tile, used as filler in stitched levels.
    pub fn first_solid(&self) -> Option<TileId> {
        self.entries
            .iter()
            .position(|e| e.affordance == Affordance::Solid)
            .map(|i| TileId(i as u16))
    }

    /// Tile ids belonging to one game.
    pub fn game_tiles(&self, game: usize) -> impl Iterator<Item = TileId> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.game == game)
            .map(|(i, _)| TileId(i as u16))
    }
}

fn default_color(game: usize, affordance: Affordance) -> String {
    // one hue per game, brightness by affordance
    const HUES: [(u8, u8, u8); 6] = [
        (200, 80, 40),
        (60, 110, 200),
        (220, 150, 30),
        (40, 50, 130),
        (50, 160, 70),
        (150, 60, 160),
    ];
    let (r, g, b) = HUES[game % HUES.len()];
    let scale = match affordance {
        Affordance::Solid => 1.0,
        Affordance::Hazard => 1.2,
        Affordance::Climbable => 0.8,
        Affordance::Passable => 0.35,
    };
    let s = |c: u8| ((c as f64 * scale).min(255.0)) as u8;
    format!("#{:02x}{:02x}{:02x}", s(r), s(g), s(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_GAMES: &str = r#"
[[game]]
name = "a"
background = "-"
tiles = [
  { char = "-", affordance = "passable" },
  { char = "X", affordance = "solid" },
  { char = "E", affordance = "hazard" },
]

[[game]]
name = "b"
background = "-"
tiles = [
  { char = "-", affordance = "passable" },
  { char = "E", affordance = "hazard" },
  { char = "D", affordance = "passable", door = true },
]
"#;

    #[test]
    fn shared_characters_get_distinct_ids() {
        let vocab = TileVocab::from_toml_str(TWO_GAMES).unwrap();
        assert_eq!(vocab.len(), 6);
        let a = vocab.lookup(0, 'E').unwrap();
        let b = vocab.lookup(1, 'E').unwrap();
        assert_ne!(a, b);
        assert_eq!(vocab.entry(b).game, 1);
        assert!(vocab.entry(vocab.lookup(1, 'D').unwrap()).door);
    }

    #[test]
    fn config_round_trip() {
        let vocab = TileVocab::from_toml_str(TWO_GAMES).unwrap();
        let again = TileVocab::from_toml_str(&vocab.to_toml_string()).unwrap();
        assert_eq!(vocab, again);
    }

    #[test]
    fn rejects_duplicate_char_and_missing_background() {
        let dup = r#"
[[game]]
name = "a"
background = "-"
tiles = [{ char = "-", affordance = "passable" }, { char = "-", affordance = "solid" }]
"#;
        assert!(matches!(
            TileVocab::from_toml_str(dup),
            Err(CorpusError::Vocab(_))
        ));
        let nobg = r#"
[[game]]
name = "a"
background = "?"
tiles = [{ char = "-", affordance = "passable" }]
"#;
        assert!(TileVocab::from_toml_str(nobg).is_err());
    }
}
