#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::Arc;

use axum::Router;
use ds_core::model::{encode_png, DsPostPayload, LinkRect, Raster};
use ds_core::server::{router, DsServer, ServerConfig};
use ds_core::SharedClock;

pub const BOUNDARY: &str = "dsTestBoundary7f3a";

pub async fn spawn(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>())
            .await
            .unwrap();
    });
    addr
}

pub async fn start_server(config: ServerConfig, clock: SharedClock) -> (Arc<DsServer>, SocketAddr) {
    let server = DsServer::start(config, clock).unwrap();
    let addr = spawn(router(server.clone())).await;
    (server, addr)
}

/// A 48x64 page: static grey, a banner in rows 8..16 that varies with `variant`.
pub fn page(variant: u8) -> Raster {
    let mut r = Raster::filled(48, 64, [200, 200, 200, 255]);
    r.fill_rect(0, 0, 48, 6, [20, 40, 160, 255]);
    r.fill_rect(4, 8, 44, 16, [variant, 255 - variant, 7, 255]);
    r
}

pub fn links() -> Vec<LinkRect> {
    vec![
        LinkRect::new("http://www.a.com/one", 2, 20, 30, 28).unwrap(),
        LinkRect::new("http://www.a.com/two", 2, 40, 40, 50).unwrap(),
    ]
}

/// Payload for a phone-class post (1080x1920, 5.5 in) of `url`.
pub fn payload(url: &str, raster: &Raster) -> DsPostPayload {
    DsPostPayload {
        image: encode_png(raster).into(),
        url: url.to_owned(),
        links: LinkRect::list_to_json(&links()).into(),
        viewport_height: "40".to_owned(),
        ff_width: "1080".to_owned(),
        ff_height: "1920".to_owned(),
        ff_diagonal: Some("5.5".to_owned()),
        user_agent: "TestAgent/1.0".to_owned(),
    }
}

pub fn multipart(p: &DsPostPayload) -> (String, Vec<u8>) {
    (DsPostPayload::content_type(BOUNDARY), p.to_multipart(BOUNDARY))
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().no_proxy().build().unwrap()
}

pub async fn post(client: &reqwest::Client, base: &str, p: &DsPostPayload) -> reqwest::Response {
    let (ct, body) = multipart(p);
    client
        .post(format!("{base}/ds/post"))
        .header("content-type", ct)
        .header("user-agent", &p.user_agent)
        .body(body)
        .send()
        .await
        .unwrap()
}

pub async fn ds_get(client: &reqwest::Client, base: &str, path: &str, class: &str) -> reqwest::Response {
    client
        .get(format!("{base}{path}"))
        .header("x-ds-formfactor", class)
        .send()
        .await
        .unwrap()
}

pub async fn json(resp: reqwest::Response) -> serde_json::Value {
    serde_json::from_slice(&resp.bytes().await.unwrap()).unwrap()
}

/// Upstream requests seen by [`echo_origin`]: `(host, path-and-query)`.
pub type Seen = Arc<std::sync::Mutex<Vec<(String, String)>>>;

/// HTML for every path except `/data.json`; records what it was asked for.
pub async fn echo_origin() -> (SocketAddr, Seen) {
    use axum::http::{header, HeaderMap, Uri};
    use axum::response::IntoResponse;
    let seen: Seen = Arc::default();
    let log = seen.clone();
    let app = Router::new().fallback(move |uri: Uri, headers: HeaderMap| {
        let log = log.clone();
        async move {
            let host = headers
                .get(header::HOST)
                .and_then(|v| v.to_str().ok())
                .unwrap_or("")
                .to_owned();
            let pq = uri.path_and_query().map_or("/", |p| p.as_str()).to_owned();
            log.lock().unwrap().push((host, pq.clone()));
            if uri.path() == "/data.json" {
                return ([(header::CONTENT_TYPE, "application/json")], "{\"a\":\"</body>\"}".to_owned()).into_response();
            }
            assert_eq!(headers.get(header::ACCEPT_ENCODING).unwrap(), "identity");
            assert!(headers.keys().all(|k| !k.as_str().starts_with("x-ds-")));
            (
                [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
                format!("<html><head></head><body>page {pq}</body></html>"),
            )
                .into_response()
        }
    });
    (spawn(app).await, seen)
}

pub fn proxy_client(proxy: SocketAddr, session: &str, connection: &str) -> reqwest::Client {
    use reqwest::header::{HeaderMap, HeaderValue};
    let mut h = HeaderMap::new();
    h.insert("x-ds-session", HeaderValue::from_str(session).unwrap());
    h.insert("x-ds-connection", HeaderValue::from_str(connection).unwrap());
    h.insert("x-ds-formfactor", HeaderValue::from_static("phone"));
    reqwest::Client::builder()
        .proxy(reqwest::Proxy::http(format!("http://{proxy}")).unwrap())
        .default_headers(h)
        .build()
        .unwrap()
}
