use std::sync::Arc;

use axum::body::Body;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, post};
use axum::{Json, Router};
use bytes::Bytes;
use serde_json::json;

use super::{user_agent_family, DsGetKey, DsGetResult, DsServer, PostError};
use crate::html::CONTENT_TYPE;
use crate::model::{canonicalize_url, url_from_ds_path, FormFactorClass, ValidationError};

/// Form-factor class of a DS GET (`phone`, `tablet` or `desktop`).
pub const FORM_FACTOR_HEADER: &str = "x-ds-formfactor";
/// On 404 responses: `missing` or `expired`.
pub const STATUS_HEADER: &str = "x-ds-status";
/// On DS HTML responses, epoch milliseconds.
pub const GENERATED_AT_HEADER: &str = "x-ds-generated-at";
pub const EXPIRES_AT_HEADER: &str = "x-ds-expires-at";

pub fn router(server: Arc<DsServer>) -> Router {
    let limit = server.config().max_post_bytes;
    Router::new()
        .route("/ds/post", post(ds_post))
        .route("/ds/purge/{*target}", delete(purge))
        .fallback(ds_get)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(server)
}

fn bad_request(msg: impl std::fmt::Display) -> Response {
    (StatusCode::BAD_REQUEST, msg.to_string()).into_response()
}

fn not_found(status: &'static str) -> Response {
    Response::builder()
        .status(StatusCode::NOT_FOUND)
        .header(STATUS_HEADER, status)
        .body(Body::empty())
        .expect("static response")
}

pub(crate) fn parse_key(uri: &Uri, headers: &HeaderMap) -> Result<DsGetKey, ValidationError> {
    let url = url_from_ds_path(uri.path(), uri.query())?;
    let class: FormFactorClass = headers
        .get(FORM_FACTOR_HEADER)
        .ok_or(ValidationError::MissingField("form factor header"))?
        .to_str()
        .map_err(|_| ValidationError::invalid("form_factor", "not ascii"))?
        .parse()?;
    let ua = headers
        .get(header::USER_AGENT)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    Ok(DsGetKey {
        url,
        class,
        user_agent_family: user_agent_family(ua),
    })
}

async fn ds_get(State(server): State<Arc<DsServer>>, method: Method, uri: Uri, headers: HeaderMap) -> Response {
    if method != Method::GET && method != Method::HEAD {
        return StatusCode::METHOD_NOT_ALLOWED.into_response();
    }
    let key = match parse_key(&uri, &headers) {
        Ok(k) => k,
        Err(e) => return bad_request(e),
    };
    match server.ds_get(&key) {
        DsGetResult::Found(doc) => Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, CONTENT_TYPE)
            .header(header::CACHE_CONTROL, "no-store")
            .header(GENERATED_AT_HEADER, doc.generated_at.as_millis())
            .header(EXPIRES_AT_HEADER, doc.expires_at().as_millis())
            .body(Body::from(Bytes::copy_from_slice(&doc.html)))
            .expect("valid response"),
        DsGetResult::Expired => not_found("expired"),
        DsGetResult::NotFound => not_found("missing"),
    }
}

async fn ds_post(State(server): State<Arc<DsServer>>, headers: HeaderMap, body: Bytes) -> Response {
    let header_str = |name| headers.get(name).and_then(|v| v.to_str().ok()).unwrap_or("");
    let content_type = header_str(header::CONTENT_TYPE).to_owned();
    let ua = header_str(header::USER_AGENT).to_owned();
    match server.ds_post(&content_type, body, &ua).await {
        Ok(accepted) => (StatusCode::CREATED, Json(json!({ "status": "accepted", "accepted": accepted }))).into_response(),
        Err(PostError::Invalid(e)) => (
            StatusCode::BAD_REQUEST,
            Json(json!({
                "status": "rejected",
                "reason": e.code(),
                "field": e.field(),
                "message": e.to_string(),
            })),
        )
            .into_response(),
        Err(PostError::Store(e)) => {
            tracing::error!("store failure: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, "store failure").into_response()
        }
    }
}

async fn purge(State(server): State<Arc<DsServer>>, uri: Uri) -> Response {
    let path = uri.path().strip_prefix("/ds/purge").unwrap_or("");
    let url = match url_from_ds_path(path, uri.query()).and_then(|u| canonicalize_url(&u)) {
        Ok(u) => u,
        Err(e) => return bad_request(e),
    };
    let server2 = server.clone();
    let url2 = url.clone();
    match tokio::task::spawn_blocking(move || server2.purge(&url2)).await {
        Ok(Ok(removed)) => Json(json!({ "url": url, "removed": removed })).into_response(),
        Ok(Err(e)) => {
            tracing::error!("purge failure: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, "store failure").into_response()
        }
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}
