//! Read-only HTTP inference service over a trained artifact bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoEncoder;
use crate::cav::{Cav, TcavReport, TcavRow, CSV_HEADER};
use crate::error::{Error, Result};
use crate::explore::{blend, out_of_box, query, Ranked};
use crate::regressor::Regressor;
use crate::shapes::{Dataset, PointCloud, Split};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const BUNDLE_FORMAT: &str = "concept-forge-bundle/1";

/// `bundle.json`: paths are relative to the bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub ae: String,
    pub regressor: String,
    pub data: String,
    /// Directory of CAV files.
    pub cavs: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tcav: Option<String>,
}

/// Everything the service needs, loaded once and never mutated.
#[derive(Debug, Clone)]
pub struct SessionBundle {
    pub ae: AutoEncoder,
    pub ae_hash: String,
    pub regressor: Regressor,
    pub dataset: Dataset,
    pub cavs: BTreeMap<String, Cav>,
    pub latents: Vec<Vec<f64>>,
    pub tcav: Option<TcavReport>,
}

impl SessionBundle {
    /// Builds a bundle from in-memory artifacts. `reg_ae_hash` and
    /// `cav_ae_hashes` are the upstream hashes recorded in those artifacts.
    pub fn new(
        ae: AutoEncoder,
        ae_hash: String,
        regressor: Regressor,
        reg_ae_hash: &str,
        dataset: Dataset,
        cavs: Vec<(Cav, String)>,
        tcav: Option<TcavReport>,
    ) -> Result<Self> {
        if reg_ae_hash != ae_hash {
            return Err(Error::ArtifactMismatch(format!(
                "regressor was trained on auto-encoder {reg_ae_hash}, bundle has {ae_hash}"
            )));
        }
        if regressor.latent_dim() != ae.latent_dim() {
            return Err(Error::ArtifactMismatch("regressor and auto-encoder latent sizes differ".into()));
        }
        if dataset.points() != ae.points() {
            return Err(Error::ArtifactMismatch(format!(
                "dataset has {} points per shape, auto-encoder expects {}",
                dataset.points(),
                ae.points()
            )));
        }
        let mut registry = BTreeMap::new();
        for (cav, hash) in cavs {
            if hash != ae_hash {
                return Err(Error::ArtifactMismatch(format!(
                    "CAV `{}` was trained on auto-encoder {hash}, bundle has {ae_hash}",
                    cav.concept_name
                )));
            }
            if cav.dim() != ae.latent_dim() {
                return Err(Error::ArtifactMismatch(format!("CAV `{}` has the wrong dimension", cav.concept_name)));
            }
            let name = cav.concept_name.clone();
            if registry.insert(name.clone(), cav).is_some() {
                return Err(Error::InvalidInput(format!("duplicate concept `{name}` in bundle")));
            }
        }
        let latents = ae.encode_all(&dataset.clouds)?;
        Ok(Self {
            ae,
            ae_hash,
            regressor,
            dataset,
            cavs: registry,
            latents,
            tcav,
        })
    }

    /// Loads `bundle.json` from `dir` and checks that every artifact refers
    /// to the same auto-encoder and dataset.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(BUNDLE_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text)?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::InvalidInput(format!("unsupported bundle format `{}`", manifest.format)));
        }
        let at = |p: &str| -> PathBuf { dir.join(p) };
        let ae = AutoEncoder::load(&at(&manifest.ae))?;
        let reg = Regressor::load(&at(&manifest.regressor))?;
        let dataset = Dataset::load(&at(&manifest.data))?;
        if let Some(meta) = &ae.meta {
            if meta.manifest_hash != dataset.manifest_hash {
                return Err(Error::ArtifactMismatch(format!(
                    "auto-encoder was trained on manifest {}, bundle dataset is {}",
                    meta.manifest_hash, dataset.manifest_hash
                )));
            }
        }
        let cav_dir = at(&manifest.cavs);
        let mut cav_paths: Vec<PathBuf> = std::fs::read_dir(&cav_dir)
            .map_err(|e| Error::io(&cav_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        cav_paths.sort();
        let mut cavs = Vec::new();
        for p in cav_paths {
            let f = Cav::load(&p)?;
            cavs.push((f.cav, f.ae_hash));
        }
        let tcav = manifest.tcav.as_deref().map(|p| TcavReport::load(&at(p))).transpose()?;
        Self::new(ae.ae, ae.hash, reg.reg, &reg.ae_hash, dataset, cavs, tcav)
    }

    fn design_index(&self, id: &str) -> std::result::Result<usize, ApiError> {
        self.dataset
            .index_of(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown design `{id}`")))
    }

    fn cav(&self, name: &str) -> std::result::Result<&Cav, ApiError> {
        self.cavs
            .get(name)
            .ok_or_else(|| ApiError::not_found(format!("unknown concept `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn dimension(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "dimension_mismatch", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Dimension(m) => Self::dimension(m),
            Error::NotFound(m) => Self::not_found(m),
            Error::InvalidInput(m) | Error::NonFinite(m) | Error::Degenerate(m) => Self::malformed(m),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::malformed(r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        Self::malformed(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;
type Shared = State<Arc<SessionBundle>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub points: usize,
    pub latent_dim: usize,
    pub designs: usize,
    pub concepts: usize,
    pub ae_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub id: String,
    pub labels: BTreeSet<String>,
    pub drag: f64,
    pub split: Split,
}

/// A cloud as a flat `[x0, y0, z0, x1, ...]` array of `3 * n_points` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatCloud {
    pub n_points: usize,
    pub points: Vec<f64>,
}

impl FlatCloud {
    fn from_cloud(pc: &PointCloud) -> Self {
        Self {
            n_points: pc.len(),
            points: pc.to_flat(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignDetail {
    pub id: String,
    pub labels: BTreeSet<String>,
    pub drag: f64,
    pub predicted_drag: f64,
    pub latent: Vec<f64>,
    #[serde(flatten)]
    pub cloud: FlatCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptSummary {
    pub name: String,
    pub counter: String,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub points: Vec<f64>,
    /// Optional; checked against `points.len() / 3` when present.
    #[serde(default)]
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResponse {
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeRequest {
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeResponse {
    pub latent: Vec<f64>,
    #[serde(flatten)]
    pub cloud: FlatCloud,
    pub drag: f64,
    pub out_of_box: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendTerm {
    pub concept: String,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendRequest {
    #[serde(default)]
    pub design_id: Option<String>,
    #[serde(default)]
    pub latent: Option<Vec<f64>>,
    #[serde(default)]
    pub terms: Vec<BlendTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryParams {
    pub concept: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub concept: String,
    pub k: usize,
    pub top: Vec<Ranked>,
    pub bottom: Vec<Ranked>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcavResponse {
    pub columns: Vec<String>,
    pub rows: Vec<TcavRow>,
    pub csv: String,
}

pub fn router(bundle: Arc<SessionBundle>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/designs", get(designs))
        .route("/api/designs/{id}", get(design))
        .route("/api/concepts", get(concepts))
        .route("/api/encode", post(encode))
        .route("/api/decode", post(decode))
        .route("/api/blend", post(blend_handler))
        .route("/api/query", get(query_handler))
        .route("/api/tcav", get(tcav))
        .with_state(bundle)
}

pub async fn serve(bundle: SessionBundle, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(Path::new(&addr.to_string()), e))?;
    log::info!("listening on {}", addr);
    axum::serve(listener, router(Arc::new(bundle)))
        .await
        .map_err(|e| Error::io(Path::new(&addr.to_string()), e))
}

async fn health(State(b): Shared) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        points: b.ae.points(),
        latent_dim: b.ae.latent_dim(),
        designs: b.dataset.len(),
        concepts: b.cavs.len(),
        ae_hash: b.ae_hash.clone(),
    })
}

async fn designs(State(b): Shared) -> Json<Vec<DesignSummary>> {
    Json(
        b.dataset
            .manifest
            .entries
            .iter()
            .map(|e| DesignSummary {
                id: e.id.clone(),
                labels: e.labels.clone(),
                drag: e.drag,
                split: e.split,
            })
            .collect(),
    )
}

async fn design(State(b): Shared, UrlPath(id): UrlPath<String>) -> ApiResult<DesignDetail> {
    let i = b.design_index(&id)?;
    let e = &b.dataset.manifest.entries[i];
    Ok(Json(DesignDetail {
        id: e.id.clone(),
        labels: e.labels.clone(),
        drag: e.drag,
        predicted_drag: b.regressor.predict(&b.latents[i])?,
        latent: b.latents[i].clone(),
        cloud: FlatCloud::from_cloud(&b.dataset.clouds[i]),
    }))
}

async fn concepts(State(b): Shared) -> Json<Vec<ConceptSummary>> {
    Json(
        b.cavs
            .values()
            .map(|c| ConceptSummary {
                name: c.concept_name.clone(),
                counter: c.counter_name.clone(),
                train_accuracy: c.train_accuracy,
            })
            .collect(),
    )
}

fn check_latent(b: &SessionBundle, z: &[f64]) -> std::result::Result<(), ApiError> {
    if z.len() != b.ae.latent_dim() {
        return Err(ApiError::dimension(format!(
            "latent has length {}, expected {}",
            z.len(),
            b.ae.latent_dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::malformed("latent has non-finite values"));
    }
    Ok(())
}

fn shape_response(b: &SessionBundle, latent: Vec<f64>) -> std::result::Result<ShapeResponse, ApiError> {
    let cloud = b.ae.decode(&latent)?;
    Ok(ShapeResponse {
        drag: b.regressor.predict(&latent)?,
        out_of_box: out_of_box(&latent),
        cloud: FlatCloud::from_cloud(&cloud),
        latent,
    })
}

async fn encode(State(b): Shared, req: std::result::Result<Json<EncodeRequest>, JsonRejection>) -> ApiResult<EncodeResponse> {
    let Json(req) = req?;
    if req.points.len() % 3 != 0 || req.n_points.is_some_and(|n| n * 3 != req.points.len()) {
        return Err(ApiError::dimension(format!(
            "{} coordinates do not form the declared cloud",
            req.points.len()
        )));
    }
    if req.points.len() != 3 * b.ae.points() {
        return Err(ApiError::dimension(format!(
            "cloud has {} points, auto-encoder expects {}",
            req.points.len() / 3,
            b.ae.points()
        )));
    }
    let pc = PointCloud::from_flat(&req.points)?.normalize()?;
    Ok(Json(EncodeResponse {
        latent: b.ae.encode(&pc)?,
    }))
}

async fn decode(State(b): Shared, req: std::result::Result<Json<DecodeRequest>, JsonRejection>) -> ApiResult<ShapeResponse> {
    let Json(req) = req?;
    check_latent(&b, &req.latent)?;
    Ok(Json(shape_response(&b, req.latent)?))
}

async fn blend_handler(
    State(b): Shared,
    req: std::result::Result<Json<BlendRequest>, JsonRejection>,
) -> ApiResult<ShapeResponse> {
    let Json(req) = req?;
    let z = match (&req.design_id, &req.latent) {
        (Some(id), None) => b.latents[b.design_index(id)?].clone(),
        (None, Some(z)) => {
            check_latent(&b, z)?;
            z.clone()
        }
        _ => return Err(ApiError::malformed("give exactly one of design_id and latent")),
    };
    let mut terms = Vec::with_capacity(req.terms.len());
    for t in &req.terms {
        if !t.eps.is_finite() {
            return Err(ApiError::malformed("eps must be finite"));
        }
        terms.push((b.cav(&t.concept)?, t.eps));
    }
    let edited = blend(&z, &terms)?;
    Ok(Json(shape_response(&b, edited.latent)?))
}

async fn query_handler(
    State(b): Shared,
    params: std::result::Result<Query<QueryParams>, QueryRejection>,
) -> ApiResult<QueryResponse> {
    let Query(params) = params?;
    let cav = b.cav(&params.concept)?;
    let ids: Vec<String> = b.dataset.manifest.entries.iter().map(|e| e.id.clone()).collect();
    let q = query(&ids, &b.latents, cav, params.k)?;
    Ok(Json(QueryResponse {
        concept: params.concept,
        k: q.top.len(),
        top: q.top,
        bottom: q.bottom,
    }))
}

async fn tcav(State(b): Shared) -> ApiResult<TcavResponse> {
    let report = b.tcav.as_ref().ok_or_else(|| ApiError::not_found("bundle has no TCAV report"))?;
    Ok(Json(TcavResponse {
        columns: CSV_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: report.rows.clone(),
        csv: report.to_csv()?,
    }))
}
