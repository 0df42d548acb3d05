use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gameblend::agent::{play, to_affordances};
use gameblend::blender::{
    binary_weights, default_fractional_weights, metadata_line, sample_blend, BlendError,
    BlendWeights,
};
use gameblend::corpus::{parse_level, Corpus, DirectionalLabel, Segment, TileGrid, TileVocab, VocabConfig};
use gameblend::evalsuite::{
    run_experiment, train_game_classifier, DirectionalClassifier, ExperimentInputs,
    ExperimentSpec, ForestClassifier,
};
use gameblend::genmodels::{load_checkpoint, save_checkpoint, train_with_progress, ModelError};
use gameblend::layout::{
    assemble, gen_dungeon_layout, gen_platformer_layout, DungeonOptions, LayoutKind,
};
use gameblend::mechanics::{arc_set, blend_jump, JumpModel, JumpParams};
use gameblend::ModelCheckpoint;

use crate::config::RunConfig;
use crate::session::{ApiSession, LoadedModel};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "gameblend", version, about = "Train, blend, sample and evaluate tile-level game models")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the corpus and cache it as an encoded dataset.
    Ingest(IngestArgs),
    /// Train the configured model and save a checkpoint.
    Train(TrainArgs),
    /// Sample blended segments from a checkpoint.
    Sample(SampleArgs),
    /// Generate and stitch a whole level.
    Layout(LayoutArgs),
    /// Check a level file for playability.
    Play(PlayArgs),
    /// Run the blend evaluation and write report tables.
    Eval(EvalArgs),
    /// Serve checkpoints over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset file; defaults to `<output>/dataset.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Checkpoint file; defaults to `<output>/model.ck`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the loss every this many epochs.
    #[arg(long, default_value_t = 25)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Comma separated weights, or a bit string such as `1010`.
    #[arg(long)]
    pub weights: String,
    #[arg(short = 'n', long, default_value_t = 10)]
    pub count: usize,
    /// Open sides as a `UDLR` bit string, for directional families.
    #[arg(long)]
    pub dir: Option<String>,
    /// Output directory; defaults to `<output>/samples` or `samples`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub kind: LayoutKind,
    #[arg(short = 'n', long)]
    pub rooms: usize,
    #[arg(long)]
    pub weights: String,
    #[arg(long)]
    pub jump_params: Option<PathBuf>,
    /// Output directory; defaults to `<output>/levels` or `levels`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    /// Level text file.
    pub level: PathBuf,
    /// Checkpoint whose vocabulary reads the level.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Vocabulary file, when no checkpoint is given.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Game whose characters the level uses; the first game by default.
    #[arg(long)]
    pub game: Option<String>,
    /// Blend of the jump models; one-hot on `--game` by default.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub jump_params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Evaluate the 15 (2^k - 1) binary weights.
    #[arg(long)]
    pub binary: bool,
    /// Evaluate the configured fractional weights.
    #[arg(long)]
    pub fractional: bool,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Report directory; defaults to `<output>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Checkpoints to serve; the file stem is the model id.
    #[arg(long, required = true)]
    pub ckpt: Vec<PathBuf>,
    #[arg(long)]
    pub jump_params: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

/// Parses the arguments and runs the command; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = cli.config.as_deref().map(RunConfig::load).transpose()?;
    let ctx = Context {
        seed: cli.seed.or(cfg.as_ref().map(|c| c.seed)),
        cfg,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Sample(a) => sample(&ctx, a),
        Command::Layout(a) => layout(&ctx, a),
        Command::Play(a) => play_level(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Serve(a) => serve(&ctx, a),
    }
}

struct Context {
    cfg: Option<RunConfig>,
    seed: Option<u64>,
}

impl Context {
    fn config(&self) -> Result<&RunConfig, CliError> {
        self.cfg
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs --config".into()))
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("no seed: pass --seed or set `seed` in --config".into()))
    }

    fn out_dir(&self, given: Option<PathBuf>, sub: &str) -> PathBuf {
        given.unwrap_or_else(|| match &self.cfg {
            Some(c) => c.output_dir().join(sub),
            None => PathBuf::from(sub),
        })
    }

    fn jump_params(&self, given: Option<&Path>) -> Result<Option<JumpParams>, CliError> {
        match given {
            Some(p) => JumpParams::load(p).map(Some).map_err(data),
            None => match &self.cfg {
                Some(c) => c.load_jump_params(),
                None => Ok(None),
            },
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        ModelError::InvalidConfig(_) | ModelError::FamilyMismatch { .. } => {
            CliError::Usage(e.to_string())
        }
        _ => CliError::Data(e.to_string()),
    }
}

fn blend_err(e: BlendError) -> CliError {
    match e {
        BlendError::Model(m) => model_err(m),
        other => CliError::Usage(other.to_string()),
    }
}

fn load_ckpt(path: &Path) -> Result<ModelCheckpoint, CliError> {
    load_checkpoint(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_weights(text: &str, k: usize) -> Result<BlendWeights, CliError> {
    let w: BlendWeights = text.parse().map_err(blend_err)?;
    w.check_len(k).map_err(blend_err)?;
    Ok(w)
}

fn parse_dir(text: Option<&str>) -> Result<Option<DirectionalLabel>, CliError> {
    text.map(|t| {
        DirectionalLabel::parse_bits(t)
            .ok_or_else(|| CliError::Usage(format!("--dir {t:?} is not a UDLR bit string")))
    })
    .transpose()
}

fn jump_models(params: &JumpParams, vocab: &TileVocab) -> Result<Vec<JumpModel>, CliError> {
    params.models_for(vocab.game_names()).map_err(data)
}

/// Encoded corpus cache written by `ingest`.
#[derive(Serialize)]
struct Dataset<'a> {
    config_hash: String,
    seed: u64,
    games: Vec<&'a str>,
    counts_before: &'a [usize],
    counts_after: &'a [usize],
    vocab: VocabConfig,
    segments: &'a [Segment],
}

fn ingest(ctx: &Context, a: IngestArgs) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let seed = ctx.seed()?;
    let corpus = cfg.load_corpus()?;
    let model = cfg.model_config(corpus.vocab.game_count(), seed)?;
    let dataset = Dataset {
        config_hash: model.config_hash(),
        seed,
        games: corpus.vocab.game_names().collect(),
        counts_before: &corpus.counts_before,
        counts_after: &corpus.counts_after,
        vocab: corpus.vocab.to_config(),
        segments: &corpus.segments,
    };
    let path = a.out.unwrap_or_else(|| cfg.output_dir().join("dataset.json"));
    let json = serde_json::to_string(&dataset).map_err(data)?;
    write(&path, json)?;
    for (g, name) in dataset.games.iter().enumerate() {
        println!("{name}: {} segments, {} after upsampling", corpus.counts_before[g], corpus.counts_after[g]);
    }
    println!("{} segments -> {}", corpus.segments.len(), path.display());
    Ok(())
}

fn train(ctx: &Context, a: TrainArgs) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let seed = ctx.seed()?;
    let corpus = cfg.load_corpus()?;
    let model = cfg.model_config(corpus.vocab.game_count(), seed)?;
    let every = a.log_every.max(1);
    let ckpt = train_with_progress(&corpus, &model, |epoch, loss| {
        if (epoch + 1) % every == 0 || epoch + 1 == model.epochs {
            eprintln!("epoch {:>5}/{}  loss {loss:.4}", epoch + 1, model.epochs);
        }
    })
    .map_err(model_err)?;
    let path = a.out.unwrap_or_else(|| cfg.output_dir().join("model.ck"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    save_checkpoint(&ckpt, &path).map_err(model_err)?;
    println!("{} (config {}, seed {seed})", path.display(), ckpt.config_hash());
    Ok(())
}

fn sample(ctx: &Context, a: SampleArgs) -> Result<(), CliError> {
    let seed = ctx.seed()?;
    let ckpt = load_ckpt(&a.ckpt)?;
    let w = parse_weights(&a.weights, ckpt.config.k)?;
    let dir = parse_dir(a.dir.as_deref())?;
    let segs = sample_blend(&ckpt, &w, a.count, dir.as_ref(), seed).map_err(blend_err)?;
    let out = ctx.out_dir(a.out, "samples");
    let mut meta = metadata_line(&w, ckpt.family(), seed, &ckpt.config_hash());
    if let Some(d) = &dir {
        meta.push_str(&format!(" dir={d}"));
    }
    for (i, seg) in segs.iter().enumerate() {
        write(&out.join(format!("seg_{i:03}.txt")), seg.grid.render(&ckpt.vocab))?;
        write(&out.join(format!("seg_{i:03}.meta")), format!("{meta} index={i}\n"))?;
    }
    println!("{} segments -> {}", segs.len(), out.display());
    Ok(())
}

fn layout(ctx: &Context, a: LayoutArgs) -> Result<(), CliError> {
    let seed = ctx.seed()?;
    let ckpt = load_ckpt(&a.ckpt)?;
    let w = parse_weights(&a.weights, ckpt.config.k)?;
    if a.rooms == 0 {
        return Err(CliError::Usage("-n must be positive".into()));
    }
    let mut rng = gameblend::seeded_rng(seed);
    let plan = match a.kind {
        LayoutKind::Dungeon => gen_dungeon_layout(a.rooms, DungeonOptions::default(), &mut rng),
        LayoutKind::Platformer => gen_platformer_layout(a.rooms, None, &mut rng),
    };
    let level = assemble(&plan, &ckpt, &w, gameblend::derive_seed(seed, 1)).map_err(blend_err)?;
    let sidecar = level.sidecar(seed, &ckpt.config_hash(), &w);
    let out = ctx.out_dir(a.out, "levels");
    write(&out.join("level.txt"), level.grid.render(&ckpt.vocab))?;
    write(
        &out.join("level.layout.toml"),
        toml::to_string(&sidecar).map_err(data)?,
    )?;
    if let Some(params) = ctx.jump_params(a.jump_params.as_deref())? {
        let jump = blend_jump(&jump_models(&params, &ckpt.vocab)?, &w).map_err(data)?;
        let arcs = arc_set(&jump).map_err(data)?;
        let playable = level
            .segments
            .iter()
            .filter(|s| play(&to_affordances(&s.grid, &ckpt.vocab), &arcs).playable)
            .count();
        println!("{playable}/{} rooms playable", level.segments.len());
    }
    println!("{} rooms -> {}", plan.len(), out.display());
    Ok(())
}

fn play_level(ctx: &Context, a: PlayArgs) -> Result<(), CliError> {
    let vocab = match (&a.ckpt, &a.vocab) {
        (Some(c), _) => load_ckpt(c)?.vocab,
        (None, Some(v)) => TileVocab::load(v).map_err(data)?,
        (None, None) => match &ctx.cfg {
            Some(c) => c.load_corpus()?.vocab,
            None => return Err(CliError::Usage("play needs --ckpt, --vocab or --config".into())),
        },
    };
    let game = match &a.game {
        Some(name) => vocab
            .game_index(name)
            .ok_or_else(|| CliError::Usage(format!("unknown game {name:?}")))?,
        None => 0,
    };
    let text = std::fs::read_to_string(&a.level).map_err(io_err(&a.level))?;
    let grid: TileGrid = parse_level(&text, &vocab, game).map_err(data)?;
    let w = match &a.weights {
        Some(t) => parse_weights(t, vocab.game_count())?,
        None => BlendWeights::one_hot(game, vocab.game_count()),
    };
    let params = ctx
        .jump_params(a.jump_params.as_deref())?
        .ok_or_else(|| CliError::Usage("play needs --jump-params or `jump_params` in --config".into()))?;
    let jump = blend_jump(&jump_models(&params, &vocab)?, &w).map_err(data)?;
    let arcs = arc_set(&jump).map_err(data)?;
    let verdict = play(&to_affordances(&grid, &vocab), &arcs);
    println!("{}", serde_json::to_string_pretty(&verdict).map_err(data)?);
    Ok(())
}

fn references(corpus: &Corpus) -> Vec<Vec<TileGrid>> {
    (0..corpus.vocab.game_count())
        .map(|g| corpus.segments.iter().filter(|s| s.game == g).map(|s| s.grid.clone()).collect())
        .collect()
}

fn game_classifier(cfg: &RunConfig, corpus: &Corpus, seed: u64) -> Result<ForestClassifier, CliError> {
    train_game_classifier(&corpus.segments, &corpus.vocab, cfg.forest_params(seed)).map_err(data)
}

fn eval(ctx: &Context, a: EvalArgs) -> Result<(), CliError> {
    let cfg = ctx.config()?;
    let seed = ctx.seed()?;
    let ckpt = load_ckpt(&a.ckpt)?;
    let corpus = cfg.load_corpus()?;
    if corpus.vocab != ckpt.vocab {
        return Err(CliError::Data("checkpoint vocabulary differs from the corpus".into()));
    }
    let k = ckpt.config.k;
    let (binary, fractional) = if a.binary || a.fractional {
        (a.binary, a.fractional)
    } else {
        (cfg.eval.binary, cfg.eval.fractional)
    };
    let mut weights = Vec::new();
    if binary {
        weights.extend(binary_weights(k));
    }
    if fractional {
        weights.extend(default_fractional_weights().into_iter().filter(|w| w.len() == k));
    }
    if weights.is_empty() {
        return Err(CliError::Usage("no weights selected".into()));
    }
    let classifier = game_classifier(cfg, &corpus, seed)?;
    let dir_classifier = if ckpt.family().is_directional() {
        Some(
            DirectionalClassifier::train(&corpus.segments, &corpus.vocab, cfg.forest_params(seed))
                .map_err(data)?,
        )
    } else {
        None
    };
    let jumps = cfg
        .load_jump_params()?
        .map(|p| jump_models(&p, &ckpt.vocab))
        .transpose()?;
    let refs = references(&corpus);
    let spec = ExperimentSpec {
        weights,
        samples_per_weight: a.samples.unwrap_or(cfg.eval.samples_per_weight),
        directional_samples: cfg.eval.directional_samples,
        seed,
        tpkl: cfg.tpkl(),
    };
    let inputs = ExperimentInputs {
        ckpt: &ckpt,
        game_classifier: &classifier,
        references: &refs,
        jump_models: jumps.as_deref(),
        dir_classifier: dir_classifier.as_ref(),
    };
    let report = run_experiment(&spec, &inputs).map_err(data)?;
    let out = a.out.unwrap_or_else(|| cfg.output_dir().join("report"));
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    report.write_to(&out).map_err(data)?;
    if let Some(t) = report.table_text("classification") {
        println!("{t}");
    }
    println!("{} weight rows -> {}", report.rows.len(), out.display());
    Ok(())
}

fn serve(ctx: &Context, a: ServeArgs) -> Result<(), CliError> {
    let params = ctx.jump_params(a.jump_params.as_deref())?;
    let corpus = ctx.cfg.as_ref().map(|c| c.load_corpus()).transpose()?;
    let mut session = ApiSession::new();
    for path in &a.ckpt {
        let ckpt = load_ckpt(path)?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Usage(format!("{}: no file name", path.display())))?
            .to_string();
        let classifier = match (&ctx.cfg, &corpus) {
            (Some(cfg), Some(c)) if c.vocab == ckpt.vocab => Some(game_classifier(cfg, c, ctx.seed.unwrap_or(0))?),
            _ => None,
        };
        let jumps = params.as_ref().map(|p| jump_models(p, &ckpt.vocab)).transpose()?;
        session
            .insert(id, LoadedModel { ckpt, classifier, jumps })
            .map_err(CliError::Usage)?;
    }
    let rt = tokio::runtime::Runtime::new().map_err(data)?;
    rt.block_on(crate::server::serve(session, &a.addr)).map_err(data)
}
