//! Simulated client fleet.

use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqwest::header::{HeaderMap, HeaderValue, ACCEPT, CONTENT_TYPE, USER_AGENT};
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Semaphore};

use ds_core::model::{encode_png, DsPostPayload, LinkRect, PartSizes, Raster};
use ds_core::proxy::{HookBlock, CONNECTION_HEADER, SENTINEL, SESSION_HEADER, SOURCE_HEADER};
use ds_core::server::{PostAccepted, EXPIRES_AT_HEADER, FORM_FACTOR_HEADER, GENERATED_AT_HEADER};
use ds_core::Timestamp;

use crate::render::{capture, page_html, parse_render_meta};
use crate::testbed::Testbed;
use crate::workload::SyntheticPageSpec;

pub const USER_AGENT_STRING: &str = "DsHarness/1.0 (Linux; Mobile)";
const BOUNDARY: &str = "dsHarnessBoundary0b7e";
/// Phone screen reported by every simulated client.
pub const SCREEN: (u32, u32, f64) = (1080, 1920, 5.5);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connection {
    Wifi,
    Cellular,
}

impl Connection {
    pub fn as_str(self) -> &'static str {
        match self {
            Connection::Wifi => "wifi",
            Connection::Cellular => "cellular",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: String,
    pub site: usize,
    pub connection: Connection,
    /// Posts uniformly random pixels instead of the page.
    pub adversary: bool,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientMix {
    pub clients_per_site: usize,
    pub adversary_rate: f64,
    pub cellular_rate: f64,
    pub seed: u64,
}

/// Lay out `clients_per_site` clients for each site. Adversarial and
/// cellular clients are exact counts (rounded) drawn without replacement.
pub fn assign_clients(sites: usize, mix: &ClientMix) -> Vec<ClientProfile> {
    let total = sites * mix.clients_per_site;
    let mut rng = ChaCha8Rng::seed_from_u64(mix.seed ^ 0xc11e_75);
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let n_adv = (mix.adversary_rate * total as f64).round() as usize;
    let n_cell = ((mix.cellular_rate * total as f64).round() as usize).min(total - n_adv.min(total));
    let mut adversary = vec![false; total];
    let mut cellular = vec![false; total];
    for &i in &order[..n_adv.min(total)] {
        adversary[i] = true;
    }
    for &i in &order[n_adv.min(total)..n_adv.min(total) + n_cell] {
        cellular[i] = true;
    }
    (0..total)
        .map(|i| ClientProfile {
            id: format!("c{:03}-{}", i / mix.clients_per_site, i % mix.clients_per_site),
            site: i / mix.clients_per_site,
            connection: if cellular[i] { Connection::Cellular } else { Connection::Wifi },
            adversary: adversary[i],
            seed: rng.gen(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    OriginPage {
        url: String,
        status: u16,
        bytes: usize,
        content_length: Option<u64>,
        /// Size of the page as the origin rendered it.
        origin_bytes: Option<usize>,
        hooked: bool,
        /// The received page equals the origin page plus exactly one hook block.
        hook_intact: bool,
        prerender: bool,
    },
    DsHtml {
        url: String,
        bytes: usize,
        content_length: Option<u64>,
        generated_at: Option<u64>,
        expires_at: Option<u64>,
        prerender_href: Option<String>,
    },
    Post {
        url: String,
        adversarial: bool,
        sizes: PartSizes,
        wire_bytes: usize,
        status: u16,
        accepted: Option<PostAccepted>,
    },
    Failure {
        stage: String,
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: usize,
    pub at: Timestamp,
    pub phase: usize,
    pub client: String,
    pub site: usize,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<LoggedEvent>,
}

impl EventLog {
    pub fn iter(&self) -> impl Iterator<Item = &LoggedEvent> {
        self.events.iter()
    }

    pub fn for_site(&self, site: usize) -> impl Iterator<Item = &LoggedEvent> {
        self.events.iter().filter(move |e| e.site == site)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub phases: usize,
    /// Simulated time between phase starts.
    pub phase_gap_secs: u64,
    pub max_concurrent_sites: usize,
}

struct Ctx {
    proxy: String,
    hook: HookBlock,
    post_path: String,
    tx: mpsc::UnboundedSender<(Timestamp, usize, String, usize, Event)>,
    clock: ds_core::ManualClock,
}

impl Ctx {
    fn log(&self, phase: usize, client: &ClientProfile, event: Event) {
        let _ = self.tx.send((self.clock_now(), phase, client.id.clone(), client.site, event));
    }

    fn clock_now(&self) -> Timestamp {
        use ds_core::Clock;
        self.clock.now()
    }
}

fn http_for(ctx: &Ctx, client: &ClientProfile) -> reqwest::Result<reqwest::Client> {
    let mut h = HeaderMap::new();
    h.insert(SESSION_HEADER, HeaderValue::from_str(&client.id).expect("ascii id"));
    h.insert(CONNECTION_HEADER, HeaderValue::from_static(client.connection.as_str()));
    h.insert(FORM_FACTOR_HEADER, HeaderValue::from_static("phone"));
    h.insert(USER_AGENT, HeaderValue::from_static(USER_AGENT_STRING));
    reqwest::Client::builder()
        .proxy(reqwest::Proxy::http(&ctx.proxy)?)
        .default_headers(h)
        .timeout(Duration::from_secs(30))
        .build()
}

fn remove_once(haystack: &[u8], needle: &[u8]) -> Option<Vec<u8>> {
    let at = haystack.windows(needle.len()).position(|w| w == needle)?;
    let mut out = haystack[..at].to_vec();
    out.extend_from_slice(&haystack[at + needle.len()..]);
    Some(out)
}

fn prerender_href(html: &str) -> Option<String> {
    let doc = scraper::Html::parse_document(html);
    let sel = scraper::Selector::parse("link#ds-prerender").ok()?;
    Some(doc.select(&sel).next()?.value().attr("href")?.to_owned())
}

fn header_u64(h: &HeaderMap, name: &str) -> Option<u64> {
    h.get(name)?.to_str().ok()?.parse().ok()
}

fn random_raster(width: u32, height: u32, rng: &mut ChaCha8Rng) -> Raster {
    let mut px = vec![0u8; (width * height * 4) as usize];
    rng.fill(&mut px[..]);
    Raster::new(width, height, px).expect("sized buffer")
}

async fn visit(ctx: &Ctx, http: &reqwest::Client, client: &ClientProfile, spec: &SyntheticPageSpec, phase: usize) {
    let resp = match http.get(&spec.url).header(ACCEPT, "text/html").send().await {
        Ok(r) => r,
        Err(e) => {
            return ctx.log(phase, client, Event::Failure { stage: "get".into(), message: e.to_string() });
        }
    };
    let status = resp.status().as_u16();
    let headers = resp.headers().clone();
    let content_length = resp.content_length();
    let body = resp.bytes().await.unwrap_or_default();
    if headers.get(SOURCE_HEADER).is_some_and(|v| v == "ds-html") {
        let href = prerender_href(&String::from_utf8_lossy(&body));
        ctx.log(
            phase,
            client,
            Event::DsHtml {
                url: spec.url.clone(),
                bytes: body.len(),
                content_length,
                generated_at: header_u64(&headers, GENERATED_AT_HEADER),
                expires_at: header_u64(&headers, EXPIRES_AT_HEADER),
                prerender_href: href.clone(),
            },
        );
        // flip: the pre-render completes, then the tokenized page loads
        let Some(href) = href else { return };
        let resp = match http.get(&href).header(ACCEPT, "text/html").send().await {
            Ok(r) => r,
            Err(e) => {
                return ctx.log(phase, client, Event::Failure { stage: "prerender".into(), message: e.to_string() });
            }
        };
        let status = resp.status().as_u16();
        let content_length = resp.content_length();
        let body = resp.bytes().await.unwrap_or_default();
        origin_page(ctx, http, client, spec, phase, &href, status, content_length, body, true).await;
    } else {
        origin_page(ctx, http, client, spec, phase, &spec.url, status, content_length, body, false).await;
    }
}

#[allow(clippy::too_many_arguments)]
async fn origin_page(
    ctx: &Ctx,
    http: &reqwest::Client,
    client: &ClientProfile,
    spec: &SyntheticPageSpec,
    phase: usize,
    url: &str,
    status: u16,
    content_length: Option<u64>,
    body: Bytes,
    prerender: bool,
) {
    let text = String::from_utf8_lossy(&body);
    let meta = parse_render_meta(&text);
    let expected = meta.map(|(i, at)| page_html(spec, i, at));
    let hooked = text.contains(SENTINEL);
    let hook_intact = hooked
        && expected
            .as_ref()
            .zip(remove_once(&body, ctx.hook.as_bytes()))
            .is_some_and(|(e, stripped)| e.as_bytes() == stripped.as_slice());
    ctx.log(
        phase,
        client,
        Event::OriginPage {
            url: url.to_owned(),
            status,
            bytes: body.len(),
            content_length,
            origin_bytes: expected.as_ref().map(String::len),
            hooked,
            hook_intact,
            prerender,
        },
    );
    // the hook's own Wi-Fi gate
    if !hooked || client.connection != Connection::Wifi {
        return;
    }
    let Some((index, at)) = meta else { return };
    let raster = if client.adversary {
        let mut rng = ChaCha8Rng::seed_from_u64(client.seed ^ (phase as u64) << 32);
        random_raster(spec.width, spec.captured_height(), &mut rng)
    } else {
        capture(spec, index, at)
    };
    let payload = DsPostPayload {
        image: Bytes::from(encode_png(&raster)),
        url: url.to_owned(),
        links: Bytes::from(LinkRect::list_to_json(&spec.links)),
        viewport_height: spec.viewport_height.to_string(),
        ff_width: SCREEN.0.to_string(),
        ff_height: SCREEN.1.to_string(),
        ff_diagonal: Some(SCREEN.2.to_string()),
        user_agent: USER_AGENT_STRING.to_owned(),
    };
    let wire = payload.to_multipart(BOUNDARY);
    let wire_bytes = wire.len();
    let post_url = format!("http://{}{}", spec.host(), ctx.post_path);
    let resp = http
        .post(post_url)
        .header(CONTENT_TYPE, DsPostPayload::content_type(BOUNDARY))
        .body(wire)
        .send()
        .await;
    let (status, accepted) = match resp {
        Ok(r) => {
            let status = r.status().as_u16();
            let body = r.bytes().await.unwrap_or_default();
            let accepted = serde_json::from_slice::<serde_json::Value>(&body)
                .ok()
                .and_then(|v| serde_json::from_value::<PostAccepted>(v.get("accepted")?.clone()).ok());
            (status, accepted)
        }
        Err(e) => {
            return ctx.log(phase, client, Event::Failure { stage: "post".into(), message: e.to_string() });
        }
    };
    ctx.log(
        phase,
        client,
        Event::Post {
            url: url.to_owned(),
            adversarial: client.adversary,
            sizes: payload.part_sizes(),
            wire_bytes,
            status,
            accepted,
        },
    );
}

/// Drive every client through `plan.phases` phases. Sites run
/// concurrently; the clients of one site visit in order, each waiting for
/// background generation to settle before the next arrives.
pub async fn simulate_clients(
    bed: &Testbed,
    specs: &[SyntheticPageSpec],
    clients: &[ClientProfile],
    plan: &SimulationPlan,
) -> EventLog {
    let (tx, mut rx) = mpsc::unbounded_channel();
    let ctx = Arc::new(Ctx {
        proxy: format!("http://{}", bed.proxy_addr),
        hook: bed.proxy.hook().clone(),
        post_path: bed.proxy.config().post_path.clone(),
        tx,
        clock: bed.clock.clone(),
    });
    let collector = tokio::spawn(async move {
        let mut events = Vec::new();
        while let Some((at, phase, client, site, event)) = rx.recv().await {
            events.push(LoggedEvent {
                seq: events.len(),
                at,
                phase,
                client,
                site,
                event,
            });
        }
        EventLog { events }
    });

    let start = {
        use ds_core::Clock;
        bed.clock.now()
    };
    let limit = Arc::new(Semaphore::new(plan.max_concurrent_sites.max(1)));
    for phase in 0..plan.phases {
        bed.clock
            .set(start.plus(Duration::from_secs(plan.phase_gap_secs * phase as u64)));
        let mut set = tokio::task::JoinSet::new();
        for (site, spec) in specs.iter().enumerate() {
            let mine: Vec<ClientProfile> = clients.iter().filter(|c| c.site == site).cloned().collect();
            let spec = spec.clone();
            let ctx = ctx.clone();
            let server = bed.server.clone();
            let limit = limit.clone();
            set.spawn(async move {
                let _permit = limit.acquire_owned().await.expect("open semaphore");
                for client in &mine {
                    match http_for(&ctx, client) {
                        Ok(http) => visit(&ctx, &http, client, &spec, phase).await,
                        Err(e) => ctx.log(phase, client, Event::Failure { stage: "client".into(), message: e.to_string() }),
                    }
                    server.quiesce().await;
                }
            });
        }
        while set.join_next().await.is_some() {}
        bed.server.sweep();
        bed.server.quiesce().await;
        bed.proxy.expire_states();
    }
    drop(ctx);
    collector.await.expect("collector task")
}
