//! Synthetic origin serving rasterizable fixture pages.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use ds_core::model::canonicalize_url;
use ds_core::{SharedClock, Timestamp};
use serde::Serialize;

use crate::render::page_html;
use crate::workload::{SpecError, SyntheticPageSpec};

#[derive(Debug, thiserror::Error)]
pub enum OriginError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("duplicate page url {0}")]
    Duplicate(String),
    #[error("binding {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

/// One request as the origin saw it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OriginHit {
    /// `http://{Host}{path-and-query}`, exactly as received.
    pub url: String,
    pub render_index: Option<u64>,
    pub at: Timestamp,
    pub bytes: usize,
}

#[derive(Default)]
struct Inner {
    renders: HashMap<String, u64>,
    hits: Vec<OriginHit>,
}

pub struct OriginState {
    specs: HashMap<String, Arc<SyntheticPageSpec>>,
    clock: SharedClock,
    inner: Mutex<Inner>,
}

impl OriginState {
    pub fn new(specs: &[SyntheticPageSpec], clock: SharedClock) -> Result<Self, OriginError> {
        let mut map = HashMap::new();
        for s in specs {
            s.validate()?;
            if map.insert(s.url.clone(), Arc::new(s.clone())).is_some() {
                return Err(OriginError::Duplicate(s.url.clone()));
            }
        }
        Ok(OriginState {
            specs: map,
            clock,
            inner: Mutex::default(),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn spec(&self, url: &str) -> Option<&Arc<SyntheticPageSpec>> {
        self.specs.get(url)
    }

    pub fn hits(&self) -> Vec<OriginHit> {
        self.lock().hits.clone()
    }

    pub fn render_count(&self, url: &str) -> u64 {
        self.lock().renders.get(url).copied().unwrap_or(0)
    }

    /// Serve `raw_url`, advancing its render counter.
    pub fn serve(&self, raw_url: &str) -> Option<String> {
        let key = canonicalize_url(raw_url).ok()?;
        let spec = self.specs.get(&key);
        let at = self.clock.now();
        let mut inner = self.lock();
        let (body, index) = match spec {
            Some(spec) => {
                let n = inner.renders.entry(key).or_insert(0);
                let index = *n;
                *n += 1;
                (Some(page_html(spec, index, at)), Some(index))
            }
            None => (None, None),
        };
        inner.hits.push(OriginHit {
            url: raw_url.to_owned(),
            render_index: index,
            at,
            bytes: body.as_ref().map_or(0, String::len),
        });
        body
    }
}

pub struct Origin {
    pub addr: SocketAddr,
    pub state: Arc<OriginState>,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for Origin {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub fn origin_router(state: Arc<OriginState>) -> Router {
    Router::new().fallback(move |uri: Uri, headers: HeaderMap| {
        let state = state.clone();
        async move {
            let host = headers.get(header::HOST).and_then(|v| v.to_str().ok()).unwrap_or("");
            let pq = uri.path_and_query().map_or("/", |p| p.as_str());
            let url = format!("http://{host}{pq}");
            match state.serve(&url) {
                Some(html) => ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response(),
                None => Response::builder()
                    .status(StatusCode::NOT_FOUND)
                    .body(axum::body::Body::from("no such page"))
                    .expect("static response"),
            }
        }
    })
}

/// Start an origin for `specs` on `addr` (port 0 picks a free port).
pub async fn run_origin(specs: &[SyntheticPageSpec], clock: SharedClock, addr: SocketAddr) -> Result<Origin, OriginError> {
    let state = Arc::new(OriginState::new(specs, clock)?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| OriginError::Bind { addr, source })?;
    let addr = listener.local_addr().map_err(|source| OriginError::Bind { addr, source })?;
    let app = origin_router(state.clone());
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("origin stopped: {e}");
        }
    });
    Ok(Origin { addr, state, task })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate_workload, WorkloadOptions};
    use ds_core::ManualClock;

    #[test]
    fn counts_renders_per_page() {
        let specs = generate_workload(2, 1, &WorkloadOptions::default());
        let st = OriginState::new(&specs, ManualClock::new(Timestamp(5)).shared()).unwrap();
        let a = st.serve(&specs[0].url).unwrap();
        let b = st.serve(&specs[0].url).unwrap();
        assert_ne!(a, b);
        st.serve(&specs[1].url).unwrap();
        assert!(st.serve("http://nowhere.example/").is_none());
        assert_eq!(st.render_count(&specs[0].url), 2);
        assert_eq!(st.render_count(&specs[1].url), 1);
        let hits = st.hits();
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[1].render_index, Some(1));
        assert_eq!(hits[3].render_index, None);
    }

    #[tokio::test]
    async fn rejects_bad_specs_and_taken_ports() {
        let mut specs = generate_workload(1, 1, &WorkloadOptions::default());
        let clock = ManualClock::new(Timestamp(0)).shared();
        let a = run_origin(&specs, clock.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
        assert!(matches!(
            run_origin(&specs, clock.clone(), a.addr).await,
            Err(OriginError::Bind { .. })
        ));
        specs.push(specs[0].clone());
        assert!(matches!(
            run_origin(&specs, clock.clone(), "127.0.0.1:0".parse().unwrap()).await,
            Err(OriginError::Duplicate(_))
        ));
        specs.pop();
        let dup = specs[0].dynamic[0];
        specs[0].dynamic.push(dup);
        assert!(matches!(
            run_origin(&specs, clock, "127.0.0.1:0".parse().unwrap()).await,
            Err(OriginError::Spec(_))
        ));
    }
}
