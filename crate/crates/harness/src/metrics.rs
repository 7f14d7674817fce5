//! Post-hoc metrics over an event log and the snapshot store.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use ds_core::harvester::{GenerationOutcome, GroupKey, Harvester, Lookup};
use ds_core::model::FormFactorClass;
use ds_core::proxy::CounterSnapshot;
use ds_core::Timestamp;

use crate::client::{ClientProfile, Connection, Event, EventLog};
use crate::origin::OriginHit;
use crate::workload::SyntheticPageSpec;

/// Inputs the metrics need beyond the log itself.
pub struct MetricsInput<'a> {
    pub log: &'a EventLog,
    pub harvester: &'a Harvester,
    pub specs: &'a [SyntheticPageSpec],
    pub clients: &'a [ClientProfile],
    pub origin_hits: &'a [OriginHit],
    pub proxy_counters: CounterSnapshot,
    pub threshold: usize,
    pub hook_script_bytes: usize,
    pub hook_block_bytes: usize,
    pub token_name: &'a str,
    pub now: Timestamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub site: usize,
    pub url: String,
    pub published: bool,
    pub captured_pixels: usize,
    pub sensitive_pixels: usize,
    pub unchanged_pct: f64,
    pub masked_pct: f64,
    pub false_negative_pct: f64,
    pub false_positive_pct: f64,
    pub generations: usize,
    pub discarded: usize,
    pub discard_pct: f64,
    pub contaminated: usize,
    pub contaminated_discarded: usize,
    pub clean_discarded: usize,
    pub posts_accepted: usize,
    pub ds_html_served: usize,
    pub snapshot_bytes_mean: f64,
    pub links_bytes_mean: f64,
    pub ds_html_bytes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub min: usize,
    pub p50: usize,
    pub p90: usize,
    pub max: usize,
    pub mean: f64,
}

impl Distribution {
    pub fn of(samples: &[usize]) -> Self {
        if samples.is_empty() {
            return Distribution::default();
        }
        let mut s = samples.to_vec();
        s.sort_unstable();
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Distribution {
            count: s.len(),
            min: s[0],
            p50: rank(0.5),
            p90: rank(0.9),
            max: s[s.len() - 1],
            mean: s.iter().sum::<usize>() as f64 / s.len() as f64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeSamples {
    pub snapshot: Vec<usize>,
    pub links: Vec<usize>,
    pub url: Vec<usize>,
    pub post_wire: Vec<usize>,
    pub ds_html: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub snapshot: Distribution,
    pub links: Distribution,
    pub url: Distribution,
    pub post_wire: Distribution,
    pub ds_html: Distribution,
    pub samples: SizeSamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HookOverhead {
    pub script_bytes: usize,
    /// Bytes added to every injected page.
    pub block_bytes: usize,
    pub injected_pages: usize,
    /// Distinct per-page size differences actually observed.
    pub observed: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProtocolCounters {
    pub page_requests: usize,
    pub origin_pages: usize,
    pub hooked_pages: usize,
    pub ds_html_pages: usize,
    pub prerender_fetches: usize,
    pub posts_sent: usize,
    pub posts_accepted: usize,
    pub posts_rejected: usize,
    pub adversarial_posts: usize,
    pub generations_published: usize,
    pub generations_discarded: usize,
    pub stored_records: usize,
    pub origin_hits: usize,
    pub failures: usize,
    pub proxy: CounterSnapshot,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sites: usize,
    pub published_sites: usize,
    pub unchanged_pct: f64,
    pub masked_pct: f64,
    pub false_negative_pct: f64,
    pub false_positive_pct: f64,
    pub discard_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sites: Vec<SiteReport>,
    pub aggregate: Aggregate,
    pub sizes: SizeReport,
    pub hook: HookOverhead,
    pub counters: ProtocolCounters,
    pub properties: Vec<PropertyCheck>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.properties.iter().all(|p| p.pass)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyCheck> {
        self.properties.iter().find(|p| p.name == name)
    }
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

fn mean(v: &[usize]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

struct Pixels {
    total: usize,
    sensitive: usize,
    masked: usize,
    false_negative: usize,
    false_positive: usize,
}

fn check(name: &str, failures: &[String], ok_detail: String) -> PropertyCheck {
    PropertyCheck {
        name: name.to_owned(),
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            ok_detail
        } else {
            let mut d = failures.iter().take(5).cloned().collect::<Vec<_>>().join("; ");
            if failures.len() > 5 {
                d.push_str(&format!("; and {} more", failures.len() - 5));
            }
            d
        },
    }
}

pub fn compute_metrics(input: &MetricsInput<'_>) -> RunReport {
    let log = input.log;
    let connection: BTreeMap<&str, Connection> = input.clients.iter().map(|c| (c.id.as_str(), c.connection)).collect();

    // accepted posts keyed by group, split by honesty
    let mut adversarial: BTreeSet<(GroupKey, Timestamp)> = BTreeSet::new();
    let mut accepted_keys = Vec::new();
    for e in log.iter() {
        if let Event::Post {
            adversarial: adv,
            accepted: Some(a),
            ..
        } = &e.event
        {
            accepted_keys.push(a.key.clone());
            if *adv {
                adversarial.insert((a.key.group.clone(), a.key.received_at));
            }
        }
    }

    let mut sites = Vec::with_capacity(input.specs.len());
    let mut totals = Pixels {
        total: 0,
        sensitive: 0,
        masked: 0,
        false_negative: 0,
        false_positive: 0,
    };
    let mut fn_failures = Vec::new();
    let mut discard_failures = Vec::new();
    let (mut all_generations, mut all_discarded) = (0usize, 0usize);
    let mut published_generations = 0usize;
    let mut overhead_failures = Vec::new();
    let keys = input.harvester.group_keys();

    for (site, spec) in input.specs.iter().enumerate() {
        let mut px = Pixels {
            total: 0,
            sensitive: 0,
            masked: 0,
            false_negative: 0,
            false_positive: 0,
        };
        let mut published = false;
        let (mut generations, mut discarded, mut contaminated, mut contaminated_discarded, mut clean_discarded) =
            (0, 0, 0, 0, 0);
        for key in keys.iter().filter(|k| k.url == spec.url) {
            let Some(group) = input.harvester.group(key) else { continue };
            for g in &group.generations {
                generations += 1;
                let dirty = g.batch.iter().any(|t| adversarial.contains(&(key.clone(), *t)));
                let was_discarded = matches!(g.outcome, GenerationOutcome::Discarded { .. });
                contaminated += usize::from(dirty);
                discarded += usize::from(was_discarded);
                if dirty && was_discarded {
                    contaminated_discarded += 1;
                }
                if !dirty && was_discarded {
                    clean_discarded += 1;
                }
                if dirty && !was_discarded {
                    discard_failures.push(format!("{} generation at {} published with adversarial input", spec.url, g.at));
                }
                if !dirty && was_discarded {
                    discard_failures.push(format!("{} clean generation at {} discarded", spec.url, g.at));
                }
            }
            if let Some(img) = input.harvester.desensitized(key) {
                published = true;
                let (w, h) = img.mask.dimensions();
                for y in 0..h {
                    for x in 0..w {
                        let m = img.mask.get(x, y);
                        let s = spec.is_sensitive(x, y);
                        px.total += 1;
                        px.sensitive += usize::from(s);
                        px.masked += usize::from(m);
                        px.false_negative += usize::from(s && !m);
                        px.false_positive += usize::from(m && !s);
                    }
                }
            }
        }
        if published && px.false_negative > 0 {
            fn_failures.push(format!("{}: {} sensitive pixels left unmasked", spec.url, px.false_negative));
        }
        let ds_html_bytes = match input.harvester.lookup(&spec.url, FormFactorClass::Phone, input.now) {
            Lookup::Found(doc) => {
                if doc.template_overhead() >= 8 * 1024 {
                    overhead_failures.push(format!("{}: template overhead {} bytes", spec.url, doc.template_overhead()));
                }
                if doc.html.len() != doc.image_base64_len + doc.areas_len + doc.template_overhead() {
                    overhead_failures.push(format!("{}: inconsistent document accounting", spec.url));
                }
                Some(doc.html.len())
            }
            _ => None,
        };
        let (mut snaps, mut link_sizes, mut posts_accepted, mut served) = (Vec::new(), Vec::new(), 0, 0);
        for e in log.for_site(site) {
            match &e.event {
                Event::Post {
                    sizes, accepted: Some(_), ..
                } => {
                    posts_accepted += 1;
                    snaps.push(sizes.image);
                    link_sizes.push(sizes.links);
                }
                Event::DsHtml { .. } => served += 1,
                _ => {}
            }
        }
        all_generations += generations;
        all_discarded += discarded;
        published_generations += generations - discarded;
        if published {
            totals.total += px.total;
            totals.sensitive += px.sensitive;
            totals.masked += px.masked;
            totals.false_negative += px.false_negative;
            totals.false_positive += px.false_positive;
        }
        sites.push(SiteReport {
            site,
            url: spec.url.clone(),
            published,
            captured_pixels: px.total,
            sensitive_pixels: px.sensitive,
            unchanged_pct: pct(px.total - px.masked, px.total),
            masked_pct: pct(px.masked, px.total),
            false_negative_pct: pct(px.false_negative, px.total),
            false_positive_pct: pct(px.false_positive, px.total),
            generations,
            discarded,
            discard_pct: pct(discarded, generations),
            contaminated,
            contaminated_discarded,
            clean_discarded,
            posts_accepted,
            ds_html_served: served,
            snapshot_bytes_mean: mean(&snaps),
            links_bytes_mean: mean(&link_sizes),
            ds_html_bytes,
        });
    }

    // log-wide audits
    let mut counters = ProtocolCounters {
        proxy: input.proxy_counters,
        generations_published: published_generations,
        generations_discarded: all_discarded,
        stored_records: input.harvester.record_count(),
        origin_hits: input.origin_hits.len(),
        ..ProtocolCounters::default()
    };
    let mut samples = SizeSamples::default();
    let mut wire_failures = Vec::new();
    let mut hook_failures = Vec::new();
    let mut observed = BTreeSet::new();
    let mut cellular_failures = Vec::new();
    let mut fresh_failures = Vec::new();
    let mut failures = Vec::new();
    let mut threshold_failures = Vec::new();
    let mut flip_failures = Vec::new();
    let mut accepted_per_site: BTreeMap<usize, usize> = BTreeMap::new();
    let mut first_seen: BTreeSet<usize> = BTreeSet::new();
    let mut pending_flip: BTreeMap<&str, usize> = BTreeMap::new();

    for e in log.iter() {
        let cellular = connection.get(e.client.as_str()) == Some(&Connection::Cellular);
        match &e.event {
            Event::OriginPage {
                url,
                bytes,
                content_length,
                origin_bytes,
                hooked,
                hook_intact,
                prerender,
                status,
            } => {
                counters.origin_pages += 1;
                if *prerender {
                    counters.prerender_fetches += 1;
                    if pending_flip.remove(e.client.as_str()).is_none() {
                        flip_failures.push(format!("{} fetched {url} without an interstitial", e.client));
                    }
                    if *status != 200 {
                        flip_failures.push(format!("{} pre-render of {url} got {status}", e.client));
                    }
                } else {
                    counters.page_requests += 1;
                }
                if content_length.map(|c| c as usize) != Some(*bytes) {
                    wire_failures.push(format!("{url}: content-length {content_length:?} but {bytes} bytes"));
                }
                if *hooked {
                    counters.hooked_pages += 1;
                    if cellular {
                        cellular_failures.push(format!("{} got a hooked page on cellular", e.client));
                    }
                    match origin_bytes {
                        Some(o) if *hook_intact => {
                            observed.insert(bytes - o);
                            if bytes - o != input.hook_block_bytes {
                                hook_failures.push(format!("{url}: {} extra bytes", bytes - o));
                            }
                        }
                        _ => hook_failures.push(format!("{url}: page altered beyond hook insertion")),
                    }
                }
            }
            Event::DsHtml {
                url,
                bytes,
                content_length,
                expires_at,
                prerender_href,
                ..
            } => {
                counters.page_requests += 1;
                counters.ds_html_pages += 1;
                samples.ds_html.push(*bytes);
                if content_length.map(|c| c as usize) != Some(*bytes) {
                    wire_failures.push(format!("{url}: content-length {content_length:?} but {bytes} bytes"));
                }
                match expires_at {
                    Some(x) if *x >= e.at.as_millis() => {}
                    _ => fresh_failures.push(format!("{url}: served at {} with expiry {expires_at:?}", e.at)),
                }
                if first_seen.insert(e.site) {
                    let n = accepted_per_site.get(&e.site).copied().unwrap_or(0);
                    if n < input.threshold {
                        threshold_failures.push(format!("{url}: interstitial after {n} accepted posts"));
                    }
                }
                if prerender_href.is_none() {
                    flip_failures.push(format!("{url}: interstitial without pre-render link"));
                }
                if let Some(prev) = pending_flip.insert(e.client.as_str(), e.seq) {
                    flip_failures.push(format!("{}: interstitial {prev} never flipped", e.client));
                }
            }
            Event::Post {
                url,
                adversarial: adv,
                sizes,
                wire_bytes,
                status,
                accepted,
            } => {
                counters.posts_sent += 1;
                counters.adversarial_posts += usize::from(*adv);
                if cellular {
                    cellular_failures.push(format!("{} posted on cellular", e.client));
                }
                samples.post_wire.push(*wire_bytes);
                match accepted {
                    Some(a) => {
                        counters.posts_accepted += 1;
                        *accepted_per_site.entry(e.site).or_default() += 1;
                        samples.snapshot.push(sizes.image);
                        samples.links.push(sizes.links);
                        samples.url.push(sizes.url);
                        let s = a.sizes;
                        let close = |x: usize, y: usize| x.abs_diff(y) <= 1;
                        if !(close(s.image, sizes.image) && close(s.links, sizes.links) && close(s.url, sizes.url)) {
                            wire_failures.push(format!("{url}: sent {sizes:?}, server measured {s:?}"));
                        }
                    }
                    None => {
                        counters.posts_rejected += 1;
                        if !*adv {
                            failures.push(format!("{} post of {url} refused with {status}", e.client));
                        }
                    }
                }
            }
            Event::Failure { stage, message } => {
                failures.push(format!("{} {stage}: {message}", e.client));
            }
        }
    }
    counters.failures = log.iter().filter(|e| matches!(e.event, Event::Failure { .. })).count();
    for (client, seq) in &pending_flip {
        flip_failures.push(format!("{client}: interstitial {seq} never flipped"));
    }
    let token = format!("{}=", input.token_name);
    for hit in input.origin_hits {
        if hit.url.contains(&token) {
            flip_failures.push(format!("origin saw token in {}", hit.url));
        }
    }

    let mut conservation = Vec::new();
    if counters.posts_accepted != counters.stored_records {
        conservation.push(format!(
            "{} accepted posts but {} stored records",
            counters.posts_accepted, counters.stored_records
        ));
    }
    for k in &accepted_keys {
        let found = input
            .harvester
            .group(&k.group)
            .is_some_and(|g| g.records.iter().any(|r| r.received_at == k.received_at));
        if !found {
            conservation.push(format!("accepted post {} at {} not in store", k.group.url, k.received_at));
        }
    }

    let properties = vec![
        check(
            "zero-false-negatives",
            &fn_failures,
            format!("{} published sites, 0 unmasked sensitive pixels", sites.iter().filter(|s| s.published).count()),
        ),
        check(
            "discard-defense",
            &discard_failures,
            format!(
                "{} contaminated generations all discarded, {} clean generations all published",
                sites.iter().map(|s| s.contaminated).sum::<usize>(),
                all_generations - sites.iter().map(|s| s.contaminated).sum::<usize>()
            ),
        ),
        check(
            "threshold",
            &threshold_failures,
            format!("no interstitial before {} accepted posts", input.threshold),
        ),
        check(
            "conservation",
            &conservation,
            format!("{} accepted posts, {} stored records", counters.posts_accepted, counters.stored_records),
        ),
        check(
            "wire-sizes",
            &wire_failures,
            "declared and measured sizes agree within 1 byte".to_owned(),
        ),
        check(
            "hook-overhead-constant",
            &hook_failures,
            format!("{} injected pages, each +{} bytes", counters.hooked_pages, input.hook_block_bytes),
        ),
        check(
            "ds-html-overhead",
            &overhead_failures,
            "template overhead under 8 KiB".to_owned(),
        ),
        check(
            "flip",
            &flip_failures,
            format!("{} interstitials, {} pre-render fetches", counters.ds_html_pages, counters.prerender_fetches),
        ),
        check("cellular-gate", &cellular_failures, "no hooks or posts on cellular".to_owned()),
        check("freshness", &fresh_failures, "no expired interstitial served".to_owned()),
        check("no-failures", &failures, "every request completed".to_owned()),
    ];

    let published_sites = sites.iter().filter(|s| s.published).count();
    let aggregate = Aggregate {
        sites: sites.len(),
        published_sites,
        unchanged_pct: pct(totals.total - totals.masked, totals.total),
        masked_pct: pct(totals.masked, totals.total),
        false_negative_pct: pct(totals.false_negative, totals.total),
        false_positive_pct: pct(totals.false_positive, totals.total),
        discard_pct: pct(all_discarded, all_generations),
    };
    // log order interleaves sites nondeterministically
    for v in [
        &mut samples.snapshot,
        &mut samples.links,
        &mut samples.url,
        &mut samples.post_wire,
        &mut samples.ds_html,
    ] {
        v.sort_unstable();
    }
    let sizes = SizeReport {
        snapshot: Distribution::of(&samples.snapshot),
        links: Distribution::of(&samples.links),
        url: Distribution::of(&samples.url),
        post_wire: Distribution::of(&samples.post_wire),
        ds_html: Distribution::of(&samples.ds_html),
        samples,
    };
    RunReport {
        sites,
        aggregate,
        sizes,
        hook: HookOverhead {
            script_bytes: input.hook_script_bytes,
            block_bytes: input.hook_block_bytes,
            injected_pages: counters.hooked_pages,
            observed: observed.into_iter().collect(),
        },
        counters,
        properties,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution() {
        let d = Distribution::of(&[5, 1, 3, 2, 4, 6, 7, 8, 9, 10]);
        assert_eq!((d.count, d.min, d.p50, d.p90, d.max), (10, 1, 5, 9, 10));
        assert_eq!(d.mean, 5.5);
        assert_eq!(Distribution::of(&[]), Distribution::default());
        assert_eq!(Distribution::of(&[7]).p90, 7);
    }
}
