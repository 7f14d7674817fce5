//! The client-facing forwarding proxy.

mod config;
pub mod inject;
pub mod state;
pub mod token;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::extract::{ConnectInfo, Request, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::clock::SharedClock;
use crate::html::CONTENT_TYPE;
use crate::model::{canonicalize_url, ds_get_path, FormFactorClass};
use crate::server::{EXPIRES_AT_HEADER, FORM_FACTOR_HEADER, GENERATED_AT_HEADER, STATUS_HEADER};

pub use config::{ProxyConfig, CONFIG_ENV};
pub use inject::{inject_hook, should_inject, DsStatus, HookBlock, HookConfig, DEFAULT_HOOK, SENTINEL};
pub use state::{ConnectionClass, ProxyRequestState, RequestStateTable, RequestTag, SessionState, SessionTable};
pub use token::{detect_prerender_token, tokenize_url, DEFAULT_TOKEN_NAME};

pub const SESSION_HEADER: &str = "x-ds-session";
pub const CONNECTION_HEADER: &str = "x-ds-connection";
/// On every proxy response: `ds-html`, `origin`, or `ds-post`.
pub const SOURCE_HEADER: &str = "x-ds-source";

const HOP_BY_HOP: [&str; 9] = [
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

#[derive(Debug, Default)]
pub struct ProxyCounters {
    pub ds_html_served: AtomicU64,
    pub origin_forwards: AtomicU64,
    pub prerender_requests: AtomicU64,
    pub hooks_injected: AtomicU64,
    pub hook_bytes_injected: AtomicU64,
    pub ds_posts_forwarded: AtomicU64,
    pub ds_posts_refused: AtomicU64,
    pub ds_errors: AtomicU64,
    pub origin_errors: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub ds_html_served: u64,
    pub origin_forwards: u64,
    pub prerender_requests: u64,
    pub hooks_injected: u64,
    pub hook_bytes_injected: u64,
    pub ds_posts_forwarded: u64,
    pub ds_posts_refused: u64,
    pub ds_errors: u64,
    pub origin_errors: u64,
}

impl ProxyCounters {
    pub fn snapshot(&self) -> CounterSnapshot {
        let r = |c: &AtomicU64| c.load(Ordering::Relaxed);
        CounterSnapshot {
            ds_html_served: r(&self.ds_html_served),
            origin_forwards: r(&self.origin_forwards),
            prerender_requests: r(&self.prerender_requests),
            hooks_injected: r(&self.hooks_injected),
            hook_bytes_injected: r(&self.hook_bytes_injected),
            ds_posts_forwarded: r(&self.ds_posts_forwarded),
            ds_posts_refused: r(&self.ds_posts_refused),
            ds_errors: r(&self.ds_errors),
            origin_errors: r(&self.origin_errors),
        }
    }
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

#[derive(Debug, thiserror::Error)]
pub enum ProxyError {
    #[error("loading hook: {0}")]
    Hook(#[from] std::io::Error),
    #[error("building http client: {0}")]
    Client(#[from] reqwest::Error),
}

pub struct DsProxy {
    config: ProxyConfig,
    clock: SharedClock,
    hook: HookBlock,
    states: RequestStateTable,
    sessions: SessionTable,
    origin: reqwest::Client,
    ds: reqwest::Client,
    counters: ProxyCounters,
}

/// `(authority, path-and-query)` of an absolute http URL, fragment dropped.
fn split_origin(url: &str) -> Option<(&str, String)> {
    let rest = url.split_once("://")?.1;
    let rest = rest.split('#').next().unwrap_or("");
    let cut = rest.find(['/', '?']).unwrap_or(rest.len());
    let (authority, pq) = rest.split_at(cut);
    if authority.is_empty() {
        return None;
    }
    let pq = if pq.starts_with('/') { pq.to_owned() } else { format!("/{pq}") };
    Some((authority, pq))
}

fn target_url(uri: &Uri, headers: &HeaderMap) -> Option<String> {
    let pq = uri.path_and_query().map_or("/", |p| p.as_str());
    if let (Some(scheme), Some(authority)) = (uri.scheme_str(), uri.authority()) {
        return Some(format!("{scheme}://{authority}{pq}"));
    }
    let host = headers.get(header::HOST)?.to_str().ok()?;
    Some(format!("http://{host}{pq}"))
}

/// Form-factor class from the explicit header, else a user-agent guess.
pub fn form_factor_of(headers: &HeaderMap) -> FormFactorClass {
    if let Some(class) = headers
        .get(FORM_FACTOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
    {
        return class;
    }
    let ua = headers
        .get(header::USER_AGENT)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    if ua.contains("iPad") || ua.contains("Tablet") {
        FormFactorClass::Tablet
    } else if ua.contains("Mobi") || ua.contains("iPhone") || ua.contains("Android") {
        FormFactorClass::Phone
    } else {
        FormFactorClass::Desktop
    }
}

fn wants_html(headers: &HeaderMap) -> bool {
    match headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()) {
        None => true,
        Some(a) => a.contains("text/html") || a.contains("*/*"),
    }
}

fn is_ds_header(name: &HeaderName) -> bool {
    name.as_str().starts_with("x-ds-")
}

fn forwardable(name: &HeaderName) -> bool {
    !HOP_BY_HOP.contains(&name.as_str()) && !is_ds_header(name)
}

fn text(status: StatusCode, msg: &str) -> Response {
    (status, msg.to_owned()).into_response()
}

impl DsProxy {
    pub fn new(config: ProxyConfig, clock: SharedClock) -> Result<Arc<Self>, ProxyError> {
        let hook_bytes = config.load_hook()?;
        let hook = HookBlock::new(&hook_bytes, &HookConfig::new(config.post_path.clone()));
        let origin = reqwest::Client::builder()
            .no_proxy()
            .redirect(reqwest::redirect::Policy::none())
            .timeout(Duration::from_millis(config.origin_timeout_ms))
            .build()?;
        let ds = reqwest::Client::builder()
            .no_proxy()
            .timeout(Duration::from_millis(config.ds_timeout_ms))
            .build()?;
        Ok(Arc::new(DsProxy {
            states: RequestStateTable::new(Duration::from_secs(config.timeout_secs)),
            sessions: SessionTable::default(),
            config,
            clock,
            hook,
            origin,
            ds,
            counters: ProxyCounters::default(),
        }))
    }

    pub fn config(&self) -> &ProxyConfig {
        &self.config
    }

    pub fn hook(&self) -> &HookBlock {
        &self.hook
    }

    pub fn states(&self) -> &RequestStateTable {
        &self.states
    }

    pub fn counters(&self) -> CounterSnapshot {
        self.counters.snapshot()
    }

    pub fn expire_states(&self) -> usize {
        self.states.expire_states(self.clock.now())
    }

    /// Periodically expire request states on the current runtime.
    pub fn spawn_expiry(self: &Arc<Self>, every: Duration) -> tokio::task::JoinHandle<()> {
        let me = Arc::downgrade(self);
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            tick.tick().await;
            loop {
                tick.tick().await;
                let Some(proxy) = me.upgrade() else { break };
                let n = proxy.expire_states();
                if n > 0 {
                    tracing::debug!(n, "expired request states");
                }
            }
        })
    }

    fn session_of(&self, headers: &HeaderMap, peer: Option<SocketAddr>) -> SessionState {
        let id = headers
            .get(SESSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned)
            .or_else(|| peer.map(|p| p.ip().to_string()))
            .unwrap_or_default();
        let hint = headers.get(CONNECTION_HEADER).and_then(|v| v.to_str().ok());
        self.sessions.observe(&id, hint)
    }

    pub async fn handle_request(&self, req: Request) -> Response {
        let peer = req.extensions().get::<ConnectInfo<SocketAddr>>().map(|c| c.0);
        let (parts, body) = req.into_parts();
        let session = self.session_of(&parts.headers, peer);
        let Some(url) = target_url(&parts.uri, &parts.headers) else {
            return text(StatusCode::BAD_REQUEST, "request target has no host");
        };
        let body = match to_bytes(body, self.config.max_body_bytes).await {
            Ok(b) => b,
            Err(_) => return text(StatusCode::PAYLOAD_TOO_LARGE, "request body too large"),
        };

        if parts.method == Method::POST && parts.uri.path() == self.config.post_path {
            return self.forward_post(&session, &parts.headers, body).await;
        }
        let page_get = (parts.method == Method::GET || parts.method == Method::HEAD) && wants_html(&parts.headers);
        if !page_get {
            return self.forward_origin(&parts.method, &url, &parts.headers, body, None).await;
        }

        let (is_prerender, stripped) = detect_prerender_token(&url, &self.config.token_name);
        let state_url = canonicalize_url(&stripped).unwrap_or_else(|_| stripped.clone());
        if is_prerender {
            bump(&self.counters.prerender_requests);
            let status = match self.states.take_if(&session.session_id, &state_url, RequestTag::Snapshot) {
                Some(_) => DsStatus::Available,
                None => DsStatus::Missing,
            };
            self.states.begin(&session.session_id, &state_url, self.clock.now());
            let _ = self
                .states
                .transition(&session.session_id, &state_url, RequestTag::PreRendering);
            let inject = should_inject(&session, status);
            let resp = self
                .forward_origin(&parts.method, &stripped, &parts.headers, body, inject.then_some(status))
                .await;
            self.states
                .take_if(&session.session_id, &state_url, RequestTag::PreRendering);
            return resp;
        }

        let status = match self.ds_lookup(&state_url, &parts.headers).await {
            Ok((html, ds_headers)) => {
                bump(&self.counters.ds_html_served);
                self.states.begin(&session.session_id, &state_url, self.clock.now());
                let _ = self
                    .states
                    .transition(&session.session_id, &state_url, RequestTag::Snapshot);
                let body = if parts.method == Method::HEAD { Bytes::new() } else { html };
                let mut builder = Response::builder();
                for (name, value) in &ds_headers {
                    builder = builder.header(name, value);
                }
                return builder
                    .status(StatusCode::OK)
                    .header(header::CONTENT_TYPE, CONTENT_TYPE)
                    .header(header::CACHE_CONTROL, "no-store")
                    .header(SOURCE_HEADER, "ds-html")
                    .body(Body::from(body))
                    .expect("valid response");
            }
            Err(status) => status,
        };
        self.states.begin(&session.session_id, &state_url, self.clock.now());
        let inject = should_inject(&session, status);
        self.forward_origin(&parts.method, &url, &parts.headers, body, inject.then_some(status))
            .await
    }

    /// DS GET against the snapshot service. Any failure reads as missing.
    async fn ds_lookup(&self, url: &str, headers: &HeaderMap) -> Result<(Bytes, HeaderMap), DsStatus> {
        let path = ds_get_path(url).map_err(|_| DsStatus::Missing)?;
        let mut req = self
            .ds
            .get(format!("{}{}", self.config.ds_server.trim_end_matches('/'), path))
            .header(FORM_FACTOR_HEADER, form_factor_of(headers).as_str());
        if let Some(ua) = headers.get(header::USER_AGENT) {
            req = req.header(header::USER_AGENT, ua.clone());
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => {
                bump(&self.counters.ds_errors);
                tracing::warn!("ds server unreachable: {e}");
                return Err(DsStatus::Missing);
            }
        };
        match resp.status() {
            StatusCode::OK => {
                let mut passed = HeaderMap::new();
                for name in [GENERATED_AT_HEADER, EXPIRES_AT_HEADER] {
                    if let Some(v) = resp.headers().get(name) {
                        passed.insert(name, v.clone());
                    }
                }
                let html = resp.bytes().await.map_err(|_| {
                    bump(&self.counters.ds_errors);
                    DsStatus::Missing
                })?;
                Ok((html, passed))
            }
            StatusCode::NOT_FOUND => {
                let expired = resp
                    .headers()
                    .get(STATUS_HEADER)
                    .is_some_and(|v| v.as_bytes() == b"expired");
                Err(if expired { DsStatus::Expired } else { DsStatus::Missing })
            }
            other => {
                bump(&self.counters.ds_errors);
                tracing::warn!(status = %other, "ds server error");
                Err(DsStatus::Missing)
            }
        }
    }

    async fn forward_post(&self, session: &SessionState, headers: &HeaderMap, body: Bytes) -> Response {
        if session.connection_class == ConnectionClass::Cellular {
            bump(&self.counters.ds_posts_refused);
            return text(StatusCode::FORBIDDEN, "snapshot upload disabled on cellular");
        }
        let mut req = self
            .ds
            .post(format!("{}/ds/post", self.config.ds_server.trim_end_matches('/')))
            .body(body);
        for name in [header::CONTENT_TYPE, header::USER_AGENT] {
            if let Some(v) = headers.get(&name) {
                req = req.header(name, v.clone());
            }
        }
        match req.send().await {
            Ok(resp) => {
                bump(&self.counters.ds_posts_forwarded);
                let status = resp.status();
                let ct = resp.headers().get(header::CONTENT_TYPE).cloned();
                let bytes = resp.bytes().await.unwrap_or_default();
                let mut out = Response::builder()
                    .status(status)
                    .header(SOURCE_HEADER, "ds-post");
                if let Some(ct) = ct {
                    out = out.header(header::CONTENT_TYPE, ct);
                }
                out.body(Body::from(bytes)).expect("valid response")
            }
            Err(e) => {
                bump(&self.counters.ds_errors);
                tracing::warn!("ds post failed: {e}");
                text(StatusCode::BAD_GATEWAY, "snapshot service unreachable")
            }
        }
    }

    async fn forward_origin(
        &self,
        method: &Method,
        url: &str,
        headers: &HeaderMap,
        body: Bytes,
        inject: Option<DsStatus>,
    ) -> Response {
        bump(&self.counters.origin_forwards);
        let Some((authority, pq)) = split_origin(url) else {
            return text(StatusCode::BAD_REQUEST, "unsupported request target");
        };
        let upstream = match self.config.origin_override {
            Some(addr) => format!("http://{addr}{pq}"),
            None => format!("http://{authority}{pq}"),
        };
        let mut out_headers = HeaderMap::new();
        for (name, value) in headers {
            if forwardable(name) && name != header::HOST && name != header::CONTENT_LENGTH {
                out_headers.append(name.clone(), value.clone());
            }
        }
        out_headers.insert(header::ACCEPT_ENCODING, HeaderValue::from_static("identity"));
        if let Ok(host) = HeaderValue::from_str(authority) {
            out_headers.insert(header::HOST, host);
        }
        let resp = self
            .origin
            .request(method.clone(), &upstream)
            .headers(out_headers)
            .body(body)
            .send()
            .await;
        let resp = match resp {
            Ok(r) => r,
            Err(e) => {
                bump(&self.counters.origin_errors);
                tracing::warn!(%upstream, "origin unreachable: {e}");
                return text(StatusCode::BAD_GATEWAY, "origin unreachable");
            }
        };
        let status = resp.status();
        let resp_headers = resp.headers().clone();
        let mut bytes = match resp.bytes().await {
            Ok(b) => b,
            Err(e) => {
                bump(&self.counters.origin_errors);
                tracing::warn!(%upstream, "origin body: {e}");
                return text(StatusCode::BAD_GATEWAY, "origin response truncated");
            }
        };
        if inject.is_some() && method != Method::HEAD {
            let ct = resp_headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok());
            if let Some(injected) = inject::inject_response(ct, &bytes, &self.hook) {
                bump(&self.counters.hooks_injected);
                self.counters
                    .hook_bytes_injected
                    .fetch_add((injected.len() - bytes.len()) as u64, Ordering::Relaxed);
                bytes = Bytes::from(injected);
            }
        }
        let mut builder = Response::builder().status(status);
        for (name, value) in &resp_headers {
            if forwardable(name) && name != header::CONTENT_LENGTH {
                builder = builder.header(name, value);
            }
        }
        builder
            .header(SOURCE_HEADER, "origin")
            .body(Body::from(bytes))
            .expect("valid response")
    }
}

pub fn router(proxy: Arc<DsProxy>) -> Router {
    Router::new()
        .fallback(|State(p): State<Arc<DsProxy>>, req: Request| async move { p.handle_request(req).await })
        .with_state(proxy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_targets() {
        assert_eq!(split_origin("http://a.com/x?q=1#f"), Some(("a.com", "/x?q=1".to_owned())));
        assert_eq!(split_origin("http://a.com"), Some(("a.com", "/".to_owned())));
        assert_eq!(split_origin("http://a.com:81?q"), Some(("a.com:81", "/?q".to_owned())));
        assert_eq!(split_origin("http:///x"), None);
        assert_eq!(split_origin("nope"), None);
    }

    #[test]
    fn targets_from_uri_or_host() {
        let mut h = HeaderMap::new();
        let abs: Uri = "http://a.com/p?q".parse().unwrap();
        assert_eq!(target_url(&abs, &h).as_deref(), Some("http://a.com/p?q"));
        let origin_form: Uri = "/p".parse().unwrap();
        assert_eq!(target_url(&origin_form, &h), None);
        h.insert(header::HOST, HeaderValue::from_static("b.com"));
        assert_eq!(target_url(&origin_form, &h).as_deref(), Some("http://b.com/p"));
    }

    #[test]
    fn form_factor_header_then_ua() {
        let mut h = HeaderMap::new();
        assert_eq!(form_factor_of(&h), FormFactorClass::Desktop);
        h.insert(header::USER_AGENT, HeaderValue::from_static("Mozilla/5.0 (Linux; Android 6.0) Mobile"));
        assert_eq!(form_factor_of(&h), FormFactorClass::Phone);
        h.insert(FORM_FACTOR_HEADER, HeaderValue::from_static("tablet"));
        assert_eq!(form_factor_of(&h), FormFactorClass::Tablet);
    }
}
