//! HTTP service over an immutable [`ApiSession`].
//!
//! Bodies are JSON. Errors come back as `{"error": "..."}` with status 400
//! for malformed requests and weights, 404 for unknown models and 422 when
//! the request does not fit the model's family or labels.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use gameblend::agent::Playability;
use gameblend::blender::{sample_blend, BlendError, BlendWeights};
use gameblend::corpus::{Affordance, DirectionalLabel, TileGrid};
use gameblend::genmodels::Family;
use gameblend::layout::{
    assemble, gen_dungeon_layout, gen_platformer_layout, DungeonOptions, LayoutKind,
    LayoutSidecar,
};

use crate::session::{ApiSession, LoadedModel};

pub const MAX_COUNT: usize = 1000;
pub const MAX_ROOMS: usize = 100;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<BlendError> for ApiError {
    fn from(e: BlendError) -> Self {
        let status = match e {
            BlendError::FamilyMismatch { .. } | BlendError::MissingDirection(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            BlendError::Model(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request(e.body_text())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(session: Arc<ApiSession>) -> Router {
    Router::new()
        .route("/models", get(models))
        .route("/vocab", get(vocab))
        .route("/sample", post(sample))
        .route("/layout", post(layout))
        .route("/playability", post(playability))
        .with_state(session)
}

/// Serves until ctrl-c.
pub async fn serve(session: ApiSession, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(session)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn lookup<'a>(session: &'a ApiSession, id: &str) -> Result<&'a LoadedModel, ApiError> {
    session
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown model {id:?}")))
}

fn lookup_or_default<'a>(
    session: &'a ApiSession,
    id: Option<&str>,
) -> Result<(String, &'a LoadedModel), ApiError> {
    match id {
        Some(id) => Ok((id.to_string(), lookup(session, id)?)),
        None => session
            .default_model()
            .map(|(id, m)| (id.to_string(), m))
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no models loaded")),
    }
}

fn weights_for(model: &LoadedModel, w: Vec<f64>) -> Result<BlendWeights, ApiError> {
    let w = BlendWeights::infer(w)?;
    w.check_len(model.ckpt.config.k)?;
    Ok(w)
}

fn grid_from_rows(model: &LoadedModel, rows: &[Vec<u16>]) -> Result<TileGrid, ApiError> {
    let grid = TileGrid::from_rows(rows)
        .ok_or_else(|| ApiError::bad_request("grid must be a non-empty rectangle of tile ids"))?;
    let vocab = &model.ckpt.vocab;
    if let Some(bad) = grid.cells().iter().find(|t| !vocab.contains(**t)) {
        return Err(ApiError::bad_request(format!("tile id {} is not in the vocabulary", bad.0)));
    }
    Ok(grid)
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub family: Family,
    pub k: usize,
    pub z: usize,
    pub config_hash: String,
    pub games: Vec<String>,
    pub classifier: bool,
    pub jump_params: bool,
}

async fn models(State(s): State<Arc<ApiSession>>) -> Json<Vec<ModelInfo>> {
    Json(
        s.models()
            .map(|(id, m)| ModelInfo {
                id: id.to_string(),
                family: m.ckpt.family(),
                k: m.ckpt.config.k,
                z: m.ckpt.config.z,
                config_hash: m.ckpt.config_hash(),
                games: m.ckpt.vocab.game_names().map(str::to_string).collect(),
                classifier: m.classifier.is_some(),
                jump_params: m.jumps.is_some(),
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
pub struct VocabQuery {
    pub model: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabTile {
    pub id: u16,
    pub game: usize,
    pub game_name: String,
    pub char: char,
    pub affordance: Affordance,
    pub color: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabResponse {
    pub model: String,
    pub games: Vec<String>,
    pub tiles: Vec<VocabTile>,
}

async fn vocab(
    State(s): State<Arc<ApiSession>>,
    query: Result<Query<VocabQuery>, QueryRejection>,
) -> ApiResult<VocabResponse> {
    let Query(q) = query?;
    let (id, m) = lookup_or_default(&s, q.model.as_deref())?;
    let v = &m.ckpt.vocab;
    Ok(Json(VocabResponse {
        model: id,
        games: v.game_names().map(str::to_string).collect(),
        tiles: v
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| VocabTile {
                id: i as u16,
                game: e.game,
                game_name: v.game_name(e.game).to_string(),
                char: e.ch,
                affordance: e.affordance,
                color: e.color.clone(),
            })
            .collect(),
    }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleRequest {
    pub model: String,
    pub weights: Vec<f64>,
    pub count: usize,
    /// Open sides as `[up, down, left, right]`; required by directional
    /// families and rejected by the others.
    #[serde(default)]
    pub dir: Option<[f64; 4]>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSegment {
    pub grid: Vec<Vec<u16>>,
    /// Classifier percentages per game, when a classifier is loaded.
    pub percentages: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub model: String,
    pub family: Family,
    pub weights: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub segments: Vec<SampledSegment>,
}

fn direction(dir: Option<[f64; 4]>) -> Result<Option<DirectionalLabel>, ApiError> {
    match dir {
        Some(d) if d.iter().any(|x| !x.is_finite() || *x < 0.0) => Err(ApiError::bad_request(
            "dir entries must be finite and non-negative",
        )),
        d => Ok(d.map(DirectionalLabel)),
    }
}

async fn sample(
    State(s): State<Arc<ApiSession>>,
    body: Result<Json<SampleRequest>, JsonRejection>,
) -> ApiResult<SampleResponse> {
    let Json(req) = body?;
    if req.count > MAX_COUNT {
        return Err(ApiError::bad_request(format!("count must be at most {MAX_COUNT}")));
    }
    let model = lookup(&s, &req.model)?;
    let w = weights_for(model, req.weights.clone())?;
    let dir = direction(req.dir)?;
    if dir.is_some() && !model.ckpt.family().is_directional() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("{} models take no directional label", model.ckpt.family()),
        ));
    }
    let s2 = s.clone();
    blocking(move || {
        let model = lookup(&s2, &req.model)?;
        let segs = sample_blend(&model.ckpt, &w, req.count, dir.as_ref(), req.seed)?;
        Ok(Json(SampleResponse {
            family: model.ckpt.family(),
            config_hash: model.ckpt.config_hash(),
            weights: w.weights().to_vec(),
            seed: req.seed,
            segments: segs
                .iter()
                .map(|seg| SampledSegment {
                    grid: seg.grid.to_rows(),
                    percentages: model.percentages(&seg.grid),
                })
                .collect(),
            model: req.model,
        }))
    })
    .await
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutRequest {
    pub model: String,
    pub kind: LayoutKind,
    pub n: usize,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomReport {
    pub gx: i32,
    pub gy: i32,
    pub open: String,
    /// `None` when the model has no jump parameters.
    pub playable: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutResponse {
    pub grid: Vec<Vec<u16>>,
    pub sidecar: LayoutSidecar,
    pub rooms: Vec<RoomReport>,
}

async fn layout(
    State(s): State<Arc<ApiSession>>,
    body: Result<Json<LayoutRequest>, JsonRejection>,
) -> ApiResult<LayoutResponse> {
    let Json(req) = body?;
    if req.n == 0 || req.n > MAX_ROOMS {
        return Err(ApiError::bad_request(format!("n must be in 1..={MAX_ROOMS}")));
    }
    let model = lookup(&s, &req.model)?;
    let w = weights_for(model, req.weights.clone())?;
    let s2 = s.clone();
    blocking(move || {
        let model = lookup(&s2, &req.model)?;
        let mut rng = gameblend::seeded_rng(req.seed);
        let plan = match req.kind {
            LayoutKind::Dungeon => gen_dungeon_layout(req.n, DungeonOptions::default(), &mut rng),
            LayoutKind::Platformer => gen_platformer_layout(req.n, None, &mut rng),
        };
        // Rooms are sampled from a stream independent of the layout draw.
        let level = assemble(&plan, &model.ckpt, &w, gameblend::derive_seed(req.seed, 1))?;
        let sidecar = level.sidecar(req.seed, &model.ckpt.config_hash(), &w);
        let mut rooms = Vec::with_capacity(level.segments.len());
        for (loc, seg) in sidecar.location.iter().zip(&level.segments) {
            let playable = match model.playability(&seg.grid, &w) {
                Some(r) => Some(r.map_err(|e| ApiError::bad_request(e.to_string()))?.playable),
                None => None,
            };
            rooms.push(RoomReport {
                gx: loc.gx,
                gy: loc.gy,
                open: loc.open.clone(),
                playable,
            });
        }
        Ok(Json(LayoutResponse {
            grid: level.grid.to_rows(),
            sidecar,
            rooms,
        }))
    })
    .await
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlayabilityRequest {
    pub grid: Vec<Vec<u16>>,
    pub weights: Vec<f64>,
    /// Model whose vocabulary and jump parameters apply; the first loaded
    /// model when absent.
    #[serde(default)]
    pub model: Option<String>,
}

async fn playability(
    State(s): State<Arc<ApiSession>>,
    body: Result<Json<PlayabilityRequest>, JsonRejection>,
) -> ApiResult<Playability> {
    let Json(req) = body?;
    let (id, model) = lookup_or_default(&s, req.model.as_deref())?;
    let w = weights_for(model, req.weights)?;
    let grid = grid_from_rows(model, &req.grid)?;
    let s2 = s.clone();
    blocking(move || {
        let model = lookup(&s2, &id)?;
        match model.playability(&grid, &w) {
            Some(Ok(p)) => Ok(Json(p)),
            Some(Err(e)) => Err(ApiError::bad_request(e.to_string())),
            None => Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("model {id:?} has no jump parameters"),
            )),
        }
    })
    .await
}
