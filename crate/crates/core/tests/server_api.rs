mod common;

use std::time::Duration;

use common::*;
use ds_core::server::ServerConfig;
use ds_core::{ManualClock, Timestamp};

const URL: &str = "http://www.a.com/news?id=7";
const PATH: &str = "/www.a.com/news?id=7";

fn clock() -> ManualClock {
    ManualClock::new(Timestamp::from_millis(1_000_000))
}

#[tokio::test]
async fn html_appears_after_third_post() {
    let clock = clock();
    let (server, addr) = start_server(ServerConfig::default(), clock.shared()).await;
    let base = format!("http://{addr}");
    let c = client();

    for i in 0..2u8 {
        let resp = post(&c, &base, &payload(URL, &page(i))).await;
        assert_eq!(resp.status(), 201);
        let v = json(resp).await;
        assert_eq!(v["status"], "accepted");
        assert_eq!(v["accepted"]["group_size"], i as u64 + 1);
        server.quiesce().await;
        let r = ds_get(&c, &base, PATH, "phone").await;
        assert_eq!(r.status(), 404);
        assert_eq!(r.headers()["x-ds-status"], "missing");
        assert!(r.bytes().await.unwrap().is_empty());
        clock.advance(Duration::from_secs(1));
    }
    assert_eq!(post(&c, &base, &payload(URL, &page(2))).await.status(), 201);
    server.quiesce().await;

    let r = ds_get(&c, &base, PATH, "phone").await;
    assert_eq!(r.status(), 200);
    assert!(r.headers()["content-type"].to_str().unwrap().starts_with("text/html"));
    let first = r.bytes().await.unwrap();
    let again = ds_get(&c, &base, PATH, "phone").await.bytes().await.unwrap();
    assert_eq!(first, again);
    let html = String::from_utf8(first.to_vec()).unwrap();
    assert!(html.contains("data:image/png;base64,"));
    assert!(html.contains("href=\"http://www.a.com/news?id=7&amp;__ds_prerender=1\""));

    assert_eq!(ds_get(&c, &base, PATH, "desktop").await.status(), 404);
    assert_eq!(ds_get(&c, &base, "/www.a.com/other", "phone").await.status(), 404);
}

#[tokio::test]
async fn malformed_requests() {
    let (_server, addr) = start_server(ServerConfig::default(), clock().shared()).await;
    let base = format!("http://{addr}");
    let c = client();

    let r = c.get(format!("{base}{PATH}")).send().await.unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(ds_get(&c, &base, PATH, "watch").await.status(), 400);
    assert_eq!(ds_get(&c, &base, "/", "phone").await.status(), 400);

    let mut p = payload(URL, &page(0));
    p.image = b"GIF89a".to_vec().into();
    let r = post(&c, &base, &p).await;
    assert_eq!(r.status(), 400);
    let v = json(r).await;
    assert_eq!(v["status"], "rejected");
    assert_eq!(v["field"], "image");

    let mut p = payload(URL, &page(0));
    p.viewport_height = "20".into();
    let v = json(post(&c, &base, &p).await).await;
    assert_eq!(v["status"], "rejected");
    assert!(v["message"].as_str().unwrap().contains("viewport"));

    let r = c
        .post(format!("{base}/ds/post"))
        .header("content-type", "text/plain")
        .body("hi")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);
}

#[tokio::test]
async fn expired_until_regenerated() {
    let clock = clock();
    let mut cfg = ServerConfig::default();
    cfg.harvest.ttl_seconds = 7200;
    let (server, addr) = start_server(cfg, clock.shared()).await;
    let base = format!("http://{addr}");
    let c = client();
    for i in 0..3 {
        post(&c, &base, &payload(URL, &page(i))).await;
        clock.advance(Duration::from_millis(10));
    }
    server.quiesce().await;
    assert_eq!(ds_get(&c, &base, PATH, "phone").await.status(), 200);

    clock.advance(Duration::from_secs(7200));
    assert_eq!(ds_get(&c, &base, PATH, "phone").await.status(), 200);
    clock.advance(Duration::from_secs(1));
    let r = ds_get(&c, &base, PATH, "phone").await;
    assert_eq!(r.status(), 404);
    assert_eq!(r.headers()["x-ds-status"], "expired");

    // the sweep alone has nothing new to work from
    server.sweep();
    server.quiesce().await;
    assert_eq!(ds_get(&c, &base, PATH, "phone").await.status(), 404);

    post(&c, &base, &payload(URL, &page(9))).await;
    server.quiesce().await;
    assert_eq!(ds_get(&c, &base, PATH, "phone").await.status(), 200);
}

#[tokio::test]
async fn purge_removes_everything() {
    let (server, addr) = start_server(ServerConfig::default(), clock().shared()).await;
    let base = format!("http://{addr}");
    let c = client();
    for i in 0..3 {
        post(&c, &base, &payload(URL, &page(i))).await;
    }
    server.quiesce().await;
    let r = c.delete(format!("{base}/ds/purge{PATH}")).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let v = json(r).await;
    assert_eq!(v["url"], URL);
    assert_eq!(v["removed"], 4);
    let r = ds_get(&c, &base, PATH, "phone").await;
    assert_eq!(r.headers()["x-ds-status"], "missing");
    assert_eq!(server.harvester().record_count(), 0);
}

#[tokio::test]
async fn store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let clock = clock();
    let cfg = ServerConfig {
        store_dir: Some(dir.path().to_owned()),
        ..ServerConfig::default()
    };
    let before = {
        let (server, addr) = start_server(cfg.clone(), clock.shared()).await;
        let base = format!("http://{addr}");
        let c = client();
        for i in 0..3 {
            post(&c, &base, &payload(URL, &page(i))).await;
        }
        server.quiesce().await;
        ds_get(&c, &base, PATH, "phone").await.bytes().await.unwrap()
    };
    let (server, addr) = start_server(cfg, clock.shared()).await;
    server.quiesce().await;
    assert_eq!(server.harvester().record_count(), 3);
    let after = ds_get(&client(), &format!("http://{addr}"), PATH, "phone").await;
    assert_eq!(after.status(), 200);
    assert_eq!(after.bytes().await.unwrap(), before);
}
