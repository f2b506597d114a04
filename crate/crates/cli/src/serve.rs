//! HTTP API behind the annotation UI.
//!
//! One session per process. Reads share a lock; edits and job bookkeeping
//! take it exclusively, and at most one calibration job runs at a time.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use lidarcam_core::cloud::{GrayImage, PointCloud};
use lidarcam_core::correspondence::{CorrespondenceFile, MatchEntry, MatchSource};
use lidarcam_core::geom::{CameraFile, CameraModel, RigidTransform};
use lidarcam_core::overlay::{encode_png, render_overlay};
use lidarcam_core::pipeline::{
    load_camera_image, load_dense, read_json, stage_calibrate, stage_fov, stage_init_guess, stage_preprocess, stage_render,
    CalibrationResult, InitGuessFile, PipelineConfig, TransformJson, VirtualCameraFile,
};
use lidarcam_core::virtual_camera::{IndexMap, VirtualCamera};

pub const MIN_INIT_PAIRS: usize = 2;
pub const MIN_FINE_PAIRS: usize = 3;

struct PairView {
    cloud: PointCloud,
    image: GrayImage,
    vcam: VirtualCamera,
    index_map: IndexMap,
    camera_png: Vec<u8>,
    lidar_png: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    #[serde(rename = "T_camera_lidar")]
    pub camera_from_lidar: TransformJson,
    pub nid: Option<f64>,
    pub source: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Fine,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: u64,
    pub stage: Stage,
    pub state: JobState,
    pub init: Option<InitGuessFile>,
    pub fine: Option<CalibrationResult>,
    pub fine_refused: Option<String>,
    pub estimate: Option<Estimate>,
    pub error: Option<String>,
}

pub struct Session {
    cfg: PipelineConfig,
    cam: CameraModel,
    pairs: Vec<PairView>,
    manual: Vec<Vec<MatchEntry>>,
    estimate: Option<Estimate>,
    init_done: bool,
    fine_done: bool,
    jobs: BTreeMap<u64, Job>,
    running: Option<u64>,
}

impl Session {
    /// Loads every pair, running preprocess/fov/render first if their
    /// artifacts are missing. Configured correspondence files are ignored:
    /// the session works from manual annotations, resuming any saved ones.
    pub fn open(mut cfg: PipelineConfig) -> anyhow::Result<Self> {
        cfg.validate()?;
        for p in &mut cfg.pairs {
            p.correspondences = None;
        }
        let layout = cfg.layout();
        let rendered = (0..cfg.pairs.len()).all(|k| {
            [layout.cloud(k), layout.virtual_camera(k), layout.index_map(k), layout.lidar_image(k)]
                .iter()
                .all(|p| p.exists())
        });
        if !rendered {
            log::info!("rendering LiDAR images for the session");
            stage_preprocess(&cfg)?;
            stage_fov(&cfg)?;
            stage_render(&cfg)?;
        }
        let cam = cfg.camera()?;
        let mut pairs = Vec::new();
        let mut manual = Vec::new();
        for (k, p) in cfg.pairs.iter().enumerate() {
            let image = load_camera_image(&p.image, &cam)?;
            let lidar = GrayImage::load_png(layout.lidar_image(k))?;
            pairs.push(PairView {
                cloud: load_dense(&layout, k)?,
                camera_png: image.encode_png8()?,
                image,
                vcam: read_json::<VirtualCameraFile>(&layout.virtual_camera(k))?.virtual_camera()?,
                index_map: IndexMap::load(layout.index_map(k))?,
                lidar_png: lidar.encode_png8()?,
            });
            let path = layout.manual_correspondences(k);
            manual.push(if path.exists() {
                CorrespondenceFile::load(&path)?.matches
            } else {
                Vec::new()
            });
        }
        let estimate = cfg.initial_transform.map(|t| Estimate {
            camera_from_lidar: t,
            nid: None,
            source: "config",
        });
        Ok(Self {
            cfg,
            cam,
            pairs,
            manual,
            estimate,
            init_done: false,
            fine_done: false,
            jobs: BTreeMap::new(),
            running: None,
        })
    }

    fn total_pairs(&self) -> usize {
        self.manual.iter().map(Vec::len).sum()
    }

    fn manual_file(&self, k: usize) -> CorrespondenceFile {
        CorrespondenceFile {
            source: MatchSource::Manual,
            matcher_threshold: None,
            matches: self.manual[k].clone(),
        }
    }

    fn persist(&self, k: usize) -> Result<(), ApiError> {
        self.manual_file(k)
            .save(self.cfg.layout().manual_correspondences(k))
            .map_err(|e| ApiError::internal(e.to_string()))
    }

    fn summary(&self) -> Value {
        json!({
            "pairs": self.pairs.len(),
            "camera": CameraFile::from(self.cam.clone()),
            "lidar_images": self.pairs.iter().map(|p| json!({
                "width": p.vcam.model.width(),
                "height": p.vcam.model.height(),
                "equirectangular": p.vcam.model.is_equirectangular(),
            })).collect::<Vec<_>>(),
            "correspondences": self.manual.iter().map(Vec::len).collect::<Vec<_>>(),
            "estimate": self.estimate,
            "status": {
                "rendered": true,
                "init_guess": self.init_done,
                "fine": self.fine_done,
            },
            "running_job": self.running,
            "output_dir": self.cfg.output_dir,
        })
    }

    fn pair(&self, k: usize) -> Result<&PairView, ApiError> {
        self.pairs
            .get(k)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no pair {k}; session has {}", self.pairs.len())))
    }
}

pub type AppState = Arc<RwLock<Session>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: String,
}

impl ApiError {
    fn new(status: StatusCode, reason: impl Into<String>) -> Self {
        Self {
            status,
            reason: reason.into(),
        }
    }

    fn unprocessable(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, reason)
    }

    fn internal(reason: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, reason)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.reason }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn read(state: &AppState) -> std::sync::RwLockReadGuard<'_, Session> {
    state.read().unwrap_or_else(|e| e.into_inner())
}

fn write(state: &AppState) -> std::sync::RwLockWriteGuard<'_, Session> {
    state.write().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Deserialize)]
struct PairQuery {
    #[serde(default)]
    pair: usize,
}

async fn session(State(state): State<AppState>) -> Json<Value> {
    Json(read(&state).summary())
}

async fn camera_image(State(state): State<AppState>, Query(q): Query<PairQuery>) -> ApiResult<Response> {
    Ok(png(read(&state).pair(q.pair)?.camera_png.clone()))
}

async fn lidar_image(State(state): State<AppState>, Query(q): Query<PairQuery>) -> ApiResult<Response> {
    Ok(png(read(&state).pair(q.pair)?.lidar_png.clone()))
}

#[derive(Debug, Deserialize)]
struct LookupQuery {
    u: f64,
    v: f64,
    #[serde(default)]
    pair: usize,
}

fn lookup(view: &PairView, u: f64, v: f64) -> Option<(usize, [f64; 3])> {
    let px = Point2::new(u, v);
    if !u.is_finite() || !v.is_finite() || !view.vcam.model.contains(&px) {
        return None;
    }
    let i = view.index_map.lookup_window(&view.vcam.model, &px)?;
    let p = view.cloud.points[i];
    Some((i, [p.x, p.y, p.z]))
}

async fn indexmap_lookup(State(state): State<AppState>, Query(q): Query<LookupQuery>) -> ApiResult<Json<Value>> {
    let s = read(&state);
    match lookup(s.pair(q.pair)?, q.u, q.v) {
        Some((index, point)) => Ok(Json(json!({ "point": point, "index": index }))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no LiDAR point near ({}, {})", q.u, q.v))),
    }
}

async fn list_correspondences(State(state): State<AppState>, Query(q): Query<PairQuery>) -> ApiResult<Json<CorrespondenceFile>> {
    let s = read(&state);
    s.pair(q.pair)?;
    Ok(Json(s.manual_file(q.pair)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewPair {
    camera_px: [f64; 2],
    lidar_px: [f64; 2],
    #[serde(default)]
    pair: usize,
}

async fn add_correspondence(State(state): State<AppState>, body: Result<Json<NewPair>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let mut s = write(&state);
    if s.running.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "a calibration job is running"));
    }
    let [cu, cv] = req.camera_px;
    if !cu.is_finite() || !cv.is_finite() || !s.cam.contains(&Point2::new(cu, cv)) {
        return Err(ApiError::unprocessable(format!("camera pixel ({cu}, {cv}) is outside the image")));
    }
    let [lu, lv] = req.lidar_px;
    let (_, point) = lookup(s.pair(req.pair)?, lu, lv)
        .ok_or_else(|| ApiError::unprocessable(format!("no LiDAR point near LiDAR pixel ({lu}, {lv})")))?;
    let entry = MatchEntry {
        camera_px: req.camera_px,
        lidar_px: Some(req.lidar_px),
        lidar_point: Some(point),
        confidence: 1.0,
    };
    s.manual[req.pair].push(entry.clone());
    s.persist(req.pair)?;
    let index = s.manual[req.pair].len() - 1;
    Ok((StatusCode::CREATED, Json(json!({ "pair": req.pair, "index": index, "match": entry }))).into_response())
}

#[derive(Debug, Deserialize)]
struct DeleteQuery {
    #[serde(default)]
    pair: usize,
    index: Option<usize>,
}

/// Removes one entry, or all of the pair's entries when no index is given.
async fn delete_correspondences(State(state): State<AppState>, Query(q): Query<DeleteQuery>) -> ApiResult<Json<CorrespondenceFile>> {
    let mut s = write(&state);
    if s.running.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "a calibration job is running"));
    }
    s.pair(q.pair)?;
    match q.index {
        Some(i) if i < s.manual[q.pair].len() => {
            s.manual[q.pair].remove(i);
        }
        Some(i) => return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no correspondence {i}"))),
        None => s.manual[q.pair].clear(),
    }
    s.persist(q.pair)?;
    Ok(Json(s.manual_file(q.pair)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrateRequest {
    stage: Stage,
}

struct JobPlan {
    cfg: PipelineConfig,
    init: bool,
    fine: bool,
}

async fn calibrate(State(state): State<AppState>, body: Result<Json<CalibrateRequest>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let (id, plan, refused) = {
        let mut s = write(&state);
        if let Some(id) = s.running {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("job {id} is still running")));
        }
        let n = s.total_pairs();
        let fine_refusal = (n < MIN_FINE_PAIRS).then(|| format!("≥{MIN_FINE_PAIRS} pairs required for fine registration, have {n}"));
        let init_refusal = (n < MIN_INIT_PAIRS).then(|| format!("≥{MIN_INIT_PAIRS} pairs required for the initial guess, have {n}"));
        let (init, fine, refused) = match req.stage {
            Stage::Init => match init_refusal {
                Some(r) => return Err(ApiError::unprocessable(r)),
                None => (true, false, None),
            },
            Stage::Fine => {
                if let Some(r) = fine_refusal {
                    return Err(ApiError::unprocessable(r));
                }
                if s.estimate.is_none() {
                    return Err(ApiError::unprocessable("no current estimate; run the init stage first"));
                }
                (false, true, None)
            }
            Stage::Both => match (init_refusal, fine_refusal) {
                (Some(r), _) => return Err(ApiError::unprocessable(r)),
                (None, Some(r)) => (true, false, Some(r)),
                (None, None) => (true, true, None),
            },
        };
        let id = s.jobs.keys().next_back().map_or(1, |k| k + 1);
        let mut cfg = s.cfg.clone();
        cfg.initial_transform = s.estimate.as_ref().map(|e| e.camera_from_lidar);
        s.jobs.insert(
            id,
            Job {
                id,
                stage: req.stage,
                state: JobState::Running,
                init: None,
                fine: None,
                fine_refused: refused.clone(),
                estimate: None,
                error: None,
            },
        );
        s.running = Some(id);
        (id, JobPlan { cfg, init, fine }, refused)
    };

    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        let outcome = run_job(plan);
        let mut s = write(&worker);
        s.running = None;
        let Session {
            jobs,
            estimate,
            init_done,
            fine_done,
            ..
        } = &mut *s;
        let job = jobs.get_mut(&id).expect("job registered");
        match outcome {
            Ok((init, fine)) => {
                if let Some(g) = &init {
                    *init_done = true;
                    *estimate = Some(Estimate {
                        camera_from_lidar: g.camera_from_lidar,
                        nid: None,
                        source: "init",
                    });
                }
                if let Some(r) = &fine {
                    *fine_done = true;
                    *estimate = Some(Estimate {
                        camera_from_lidar: r.camera_from_lidar,
                        nid: Some(r.final_nid),
                        source: "fine",
                    });
                }
                job.init = init;
                job.fine = fine;
                job.estimate = estimate.clone();
                job.state = JobState::Succeeded;
            }
            Err(e) => {
                job.error = Some(format!("{e:#}"));
                job.state = JobState::Failed;
            }
        }
    });

    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "job": id, "fine_refused": refused })),
    )
        .into_response())
}

fn run_job(mut plan: JobPlan) -> anyhow::Result<(Option<InitGuessFile>, Option<CalibrationResult>)> {
    use anyhow::Context;
    let mut init = None;
    if plan.init {
        let g = stage_init_guess(&plan.cfg).context("stage `init-guess` failed")?;
        plan.cfg.initial_transform = Some(g.camera_from_lidar);
        init = Some(g);
    }
    let fine = if plan.fine {
        Some(stage_calibrate(&plan.cfg).context("stage `calibrate` failed")?)
    } else {
        None
    };
    Ok((init, fine))
}

async fn job_status(State(state): State<AppState>, Path(id): Path<u64>) -> ApiResult<Json<Job>> {
    read(&state)
        .jobs
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no job {id}")))
}

async fn overlay(State(state): State<AppState>, Query(q): Query<PairQuery>) -> ApiResult<Response> {
    let s = read(&state);
    let view = s.pair(q.pair)?;
    let est = s
        .estimate
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no transform estimate yet"))?;
    let t = RigidTransform::from(&est.camera_from_lidar);
    let img = render_overlay(&view.cloud, &view.image, &s.cam, &t);
    Ok(png(encode_png(&img).map_err(|e| ApiError::internal(e.to_string()))?))
}

/// The API router, optionally serving the UI's static files at `/`.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(session))
        .route("/api/image/camera", get(camera_image))
        .route("/api/image/lidar", get(lidar_image))
        .route("/api/indexmap/lookup", get(indexmap_lookup))
        .route(
            "/api/correspondences",
            get(list_correspondences).post(add_correspondence).delete(delete_correspondences),
        )
        .route("/api/calibrate", post(calibrate))
        .route("/api/job/{id}", get(job_status))
        .route("/api/overlay", get(overlay))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(cfg: PipelineConfig, addr: &str, ui_dir: Option<PathBuf>) -> anyhow::Result<()> {
    use anyhow::Context;
    let session = tokio::task::spawn_blocking(move || Session::open(cfg)).await??;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("cannot listen on {addr}"))?;
    log::info!("serving on http://{}", listener.local_addr()?);
    let app = router(Arc::new(RwLock::new(session)), ui_dir);
    axum::serve(listener, app).await?;
    Ok(())
}
