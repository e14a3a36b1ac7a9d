//! HTTP API used by the refocusing front end.
//!
//! * `POST /session`: multipart with `image` (PNG), `disparity` (PFM or
//!   grayscale PNG) and optional `raw_disparity=true`. Answers
//!   `{session_id, width, height, preview_width, preview_height}`.
//! * `POST /render`: JSON [`RenderBody`]; answers PNG bytes. The resolved
//!   focus disparity is echoed in the `x-focus-disparity` header.
//! * `GET /errormap`: the same controls as query parameters; answers the
//!   fusion weight map as a grayscale PNG.
//! * `GET /health`: `ok`.
//!
//! Sessions live in memory and are dropped after an idle timeout. Renders run
//! on the blocking pool, at most `workers` at a time.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use bokeh_core::fusion::{render, RenderMode, RenderRequest};
use bokeh_core::imgcore::{
    decode_disparity, decode_png, encode_gray_png, encode_png, normalize_disparity, resize_bilinear,
    resize_image_bilinear, signed_defocus,
};
use bokeh_core::neuralpipe::{arnet_stage, CoreConfig, NrMode};
use bokeh_core::{ApertureSpec, DisparityMap, Error, ImageBuffer, RenderParams};

use crate::focus::Focus;

pub const MAX_PIXELS: usize = 24_000_000;
pub const PREVIEW_MAX_DIM: usize = 768;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Largest accepted upload, in pixels.
    pub max_pixels: usize,
    pub preview_max_dim: usize,
    pub idle: Duration,
    /// Renders allowed to run at once.
    pub workers: usize,
    /// Request body limit in bytes.
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_pixels: MAX_PIXELS,
            preview_max_dim: PREVIEW_MAX_DIM,
            idle: Duration::from_secs(30 * 60),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            body_limit: 512 << 20,
        }
    }
}

struct Session {
    image: Arc<ImageBuffer>,
    disparity: Arc<DisparityMap>,
    preview_image: Arc<ImageBuffer>,
    preview_disparity: Arc<DisparityMap>,
    /// Preview width over native width.
    preview_scale: f64,
    /// Disparity extrema, so the largest blur radius of a request is known
    /// without touching the map.
    disparity_range: (f64, f64),
    last_used: Instant,
}

struct AppState {
    cfg: ServiceConfig,
    sessions: Mutex<HashMap<String, Session>>,
    workers: Arc<Semaphore>,
}

impl AppState {
    fn purge(&self, sessions: &mut HashMap<String, Session>) {
        let idle = self.cfg.idle;
        sessions.retain(|_, s| s.last_used.elapsed() < idle);
    }

    fn touch(&self, id: &str) -> Result<SessionView, ApiError> {
        let mut sessions = self.sessions.lock().expect("session lock");
        self.purge(&mut sessions);
        let s = sessions
            .get_mut(id)
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session {id:?}")))?;
        s.last_used = Instant::now();
        Ok(SessionView {
            image: s.image.clone(),
            disparity: s.disparity.clone(),
            preview_image: s.preview_image.clone(),
            preview_disparity: s.preview_disparity.clone(),
            preview_scale: s.preview_scale,
            disparity_range: s.disparity_range,
        })
    }

    async fn run_blocking<T: Send + 'static>(
        &self,
        f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let permit = self.workers.clone().acquire_owned().await.map_err(internal)?;
        tokio::task::spawn_blocking(move || {
            let _permit = permit;
            f()
        })
        .await
        .map_err(internal)?
    }
}

/// Shared handles to one session's rasters.
struct SessionView {
    image: Arc<ImageBuffer>,
    disparity: Arc<DisparityMap>,
    preview_image: Arc<ImageBuffer>,
    preview_disparity: Arc<DisparityMap>,
    preview_scale: f64,
    disparity_range: (f64, f64),
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Validation(_) | Error::DimensionMismatch { .. } | Error::Decode { .. } => StatusCode::BAD_REQUEST,
            Error::Io { .. } | Error::DefocusOutOfRange { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn new_state(cfg: ServiceConfig) -> Arc<AppState> {
    Arc::new(AppState {
        workers: Arc::new(Semaphore::new(cfg.workers.max(1))),
        cfg,
        sessions: Mutex::new(HashMap::new()),
    })
}

pub fn router(cfg: ServiceConfig) -> Router {
    router_with(new_state(cfg))
}

fn router_with(state: Arc<AppState>) -> Router {
    let limit = state.cfg.body_limit;
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/session", post(create_session))
        .route("/render", post(render_handler))
        .route("/errormap", get(errormap_handler))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until the process is stopped; idle sessions are swept every minute
/// in addition to the sweep on each request.
pub async fn serve(addr: SocketAddr, cfg: ServiceConfig) -> std::io::Result<()> {
    let state = new_state(cfg);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let mut sessions = sweeper.sessions.lock().expect("session lock");
            sweeper.purge(&mut sessions);
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router_with(state)).await
}

/// Width and height from a PNG header, without decoding the pixels.
fn png_dims(bytes: &[u8]) -> Option<(usize, usize)> {
    const SIG: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.len() < 24 || &bytes[..8] != SIG || &bytes[12..16] != b"IHDR" {
        return None;
    }
    let w = u32::from_be_bytes(bytes[16..20].try_into().ok()?);
    let h = u32::from_be_bytes(bytes[20..24].try_into().ok()?);
    Some((w as usize, h as usize))
}

/// Width and height from a PFM header.
fn pfm_dims(bytes: &[u8]) -> Option<(usize, usize)> {
    let head = String::from_utf8_lossy(&bytes[..bytes.len().min(64)]);
    let mut tokens = head.split_ascii_whitespace();
    tokens.next().filter(|t| *t == "Pf" || *t == "PF")?;
    Some((tokens.next()?.parse().ok()?, tokens.next()?.parse().ok()?))
}

fn check_size(what: &str, dims: Option<(usize, usize)>, max: usize) -> Result<(), ApiError> {
    match dims {
        Some((w, h)) if w.saturating_mul(h) > max => Err(ApiError(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{what} is {w}x{h}, over the {max}-pixel limit"),
        )),
        _ => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SessionInfo {
    pub session_id: String,
    pub width: usize,
    pub height: usize,
    pub preview_width: usize,
    pub preview_height: usize,
}

async fn create_session(State(state): State<Arc<AppState>>, mut form: Multipart) -> Result<Json<SessionInfo>, ApiError> {
    let mut image = None;
    let mut disparity = None;
    let mut raw = false;
    loop {
        let field = form.next_field().await.map_err(|e| ApiError(e.status(), e.body_text()))?;
        let Some(field) = field else { break };
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError(e.status(), e.body_text()))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "disparity" => disparity = Some(bytes),
            "raw_disparity" => raw = matches!(&bytes[..], b"true" | b"1"),
            other => return Err(bad_request(format!("unexpected form field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| bad_request("missing image field"))?;
    let disparity = disparity.ok_or_else(|| {
        bad_request("missing disparity field; the service does not estimate disparity")
    })?;
    let max = state.cfg.max_pixels;
    check_size("image", png_dims(&image), max)?;
    check_size("disparity", png_dims(&disparity).or_else(|| pfm_dims(&disparity)), max)?;

    let preview_max = state.cfg.preview_max_dim;
    let session = state
        .run_blocking(move || build_session(&image, &disparity, raw, preview_max))
        .await?;
    let info = SessionInfo {
        session_id: uuid::Uuid::new_v4().to_string(),
        width: session.image.width(),
        height: session.image.height(),
        preview_width: session.preview_image.width(),
        preview_height: session.preview_image.height(),
    };
    let mut sessions = state.sessions.lock().expect("session lock");
    state.purge(&mut sessions);
    sessions.insert(info.session_id.clone(), session);
    Ok(Json(info))
}

/// Native and preview dimensions: the preview keeps the aspect ratio with its
/// longer side at most `max_dim`.
pub fn preview_dims(w: usize, h: usize, max_dim: usize) -> (usize, usize) {
    let long = w.max(h);
    if long <= max_dim {
        return (w, h);
    }
    let s = max_dim as f64 / long as f64;
    (((w as f64 * s).round() as usize).max(1), ((h as f64 * s).round() as usize).max(1))
}

fn build_session(image: &[u8], disparity: &[u8], raw: bool, preview_max: usize) -> Result<Session, ApiError> {
    let image = decode_png(image)?;
    let (w, h) = image.dims();
    let mut d = decode_disparity(disparity)?;
    if d.dims() != (w, h) {
        d = DisparityMap::new(resize_bilinear(&d, w, h));
    }
    if !raw {
        d = normalize_disparity(&d);
    }
    let disparity_range = d.min_max();
    if raw && (disparity_range.0 < 0.0 || disparity_range.1 > 1.0) {
        return Err(bad_request("raw disparity must lie in [0, 1]"));
    }
    let (pw, ph) = preview_dims(w, h, preview_max);
    let preview_image = resize_image_bilinear(&image, pw, ph);
    let preview_disparity = DisparityMap::new(resize_bilinear(&d, pw, ph));
    Ok(Session {
        image: Arc::new(image),
        disparity: Arc::new(d),
        preview_image: Arc::new(preview_image),
        preview_disparity: Arc::new(preview_disparity),
        preview_scale: pw as f64 / w as f64,
        disparity_range,
        last_used: Instant::now(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    #[default]
    Preview,
    Full,
}

fn default_gamma() -> f64 {
    2.2
}

/// Body of `POST /render`. Give either `d_f` or `focus_point` (native pixel
/// coordinates); `rotation` is in degrees.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderBody {
    pub session_id: String,
    #[serde(rename = "K", alias = "k")]
    pub blur: f64,
    #[serde(default)]
    pub d_f: Option<f64>,
    #[serde(default)]
    pub focus_point: Option<[usize; 2]>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub blades: u32,
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub quality: Quality,
    #[serde(default)]
    pub mode: RenderMode,
    #[serde(default)]
    pub nr_mode: Option<NrMode>,
}

/// Query of `GET /errormap`.
#[derive(Clone, Debug, Deserialize)]
pub struct ErrorMapQuery {
    pub session_id: String,
    #[serde(rename = "K", alias = "k")]
    pub blur: f64,
    pub d_f: Option<f64>,
    pub focus_x: Option<usize>,
    pub focus_y: Option<usize>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub blades: u32,
    #[serde(default)]
    pub rotation: f64,
    #[serde(default)]
    pub quality: Quality,
}

struct Resolved {
    image: Arc<ImageBuffer>,
    disparity: Arc<DisparityMap>,
    params: RenderParams,
    max_defocus: f64,
}

/// Picks the raster pair for the quality, resolves focus on the native map
/// and rescales K so that blur radii shrink with the preview.
#[allow(clippy::too_many_arguments)]
fn resolve(
    view: SessionView,
    blur: f64,
    d_f: Option<f64>,
    point: Option<(usize, usize)>,
    gamma: f64,
    blades: u32,
    rotation: f64,
    quality: Quality,
) -> Result<Resolved, ApiError> {
    let focus = match (d_f, point) {
        (Some(_), Some(_)) => return Err(bad_request("give d_f or a focus point, not both")),
        (Some(v), None) => Focus::Disparity(v),
        (None, Some((x, y))) => Focus::Point { x, y },
        (None, None) => return Err(bad_request("missing d_f or focus point")),
    };
    let d_f = focus.resolve(&view.disparity)?;
    let aperture = ApertureSpec::polygon(blades, rotation.to_radians());
    RenderParams::new(blur, d_f, gamma).with_aperture(aperture).validate()?;
    let (image, disparity, scale) = match quality {
        Quality::Full => (view.image, view.disparity, 1.0),
        Quality::Preview => (view.preview_image, view.preview_disparity, view.preview_scale),
    };
    let params = RenderParams::new(blur * scale, d_f, gamma).with_aperture(aperture);
    let (lo, hi) = view.disparity_range;
    let max_defocus = params.blur * (hi - d_f).abs().max((d_f - lo).abs());
    Ok(Resolved {
        image,
        disparity,
        params,
        max_defocus,
    })
}

fn png_response(png: Vec<u8>, headers: &[(&'static str, String)]) -> Response {
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    for (k, v) in headers {
        if let Ok(v) = HeaderValue::from_str(v) {
            resp.headers_mut().insert(*k, v);
        }
    }
    resp
}

async fn render_handler(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body: RenderBody = serde_json::from_slice(&body).map_err(|e| bad_request(format!("bad request body: {e}")))?;
    let view = state.touch(&body.session_id)?;
    let point = body.focus_point.map(|[x, y]| (x, y));
    let r = resolve(view, body.blur, body.d_f, point, body.gamma, body.blades, body.rotation, body.quality)?;
    let cfg = CoreConfig::for_mode(body.nr_mode.unwrap_or(NrMode::Full));
    let mode = body.mode;
    let params = r.params;
    let (png, (w, h)) = state
        .run_blocking(move || {
            let req = RenderRequest::new((*r.image).clone(), (*r.disparity).clone(), r.params)
                .with_mode(mode)
                .with_config(cfg);
            let out = render(&req)?;
            Ok((encode_png(&out.image), out.image.dims()))
        })
        .await?;
    Ok(png_response(
        png,
        &[
            ("x-focus-disparity", format!("{}", params.focus)),
            ("x-render-size", format!("{w}x{h}")),
            ("x-max-defocus", format!("{:.3}", r.max_defocus)),
        ],
    ))
}

async fn errormap_handler(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ErrorMapQuery>,
) -> Result<Response, ApiError> {
    let view = state.touch(&q.session_id)?;
    let point = match (q.focus_x, q.focus_y) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => return Err(bad_request("focus_x and focus_y go together")),
    };
    let r = resolve(view, q.blur, q.d_f, point, q.gamma, q.blades, q.rotation, q.quality)?;
    let focus = r.params.focus;
    let png = state
        .run_blocking(move || {
            let s = signed_defocus(&r.disparity, &r.params);
            let low = arnet_stage(&r.image, &s, &r.params, &CoreConfig::default())?;
            let (w, h) = r.image.dims();
            Ok(encode_gray_png(&resize_bilinear(low.error.as_plane(), w, h)))
        })
        .await?;
    Ok(png_response(png, &[("x-focus-disparity", format!("{focus}"))]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preview_dims_cap_long_side() {
        assert_eq!(preview_dims(640, 480, 768), (640, 480));
        assert_eq!(preview_dims(1920, 1080, 768), (768, 432));
        assert_eq!(preview_dims(10, 4000, 768), (2, 768));
    }

    #[test]
    fn header_dims() {
        let png = encode_png(&ImageBuffer::filled(7, 3, [0.5; 3]));
        assert_eq!(png_dims(&png), Some((7, 3)));
        assert_eq!(png_dims(b"not a png at all, not at all"), None);
        assert_eq!(pfm_dims(b"Pf\n12 5\n-1.0\n"), Some((12, 5)));
        assert_eq!(pfm_dims(b"P6\n12 5\n255\n"), None);
    }

    #[test]
    fn error_statuses() {
        assert_eq!(ApiError::from(Error::Validation("x".into())).0, StatusCode::BAD_REQUEST);
        assert_eq!(
            ApiError::from(Error::DefocusOutOfRange { value: 12.0, limit: 10.5 }).0,
            StatusCode::INTERNAL_SERVER_ERROR
        );
    }
}
