//! Snapshot store.
//!
//! Records are grouped by canonical URL, form-factor class and exact raster
//! dimensions; pixel-wise comparison only makes sense inside such a group.
//! The harvester decides when a group has enough snapshots to be
//! desensitized and when a previously generated page has gone stale.

mod disk;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::desensitizer::{Desensitization, DesensitizedImage, Region, DEFAULT_DISCARD_THRESHOLD};
use crate::html::DsHtmlDocument;
use crate::model::{FormFactorClass, SnapshotRecord};

pub use disk::DiskStore;

pub const DEFAULT_THRESHOLD: usize = 3;
pub const DEFAULT_TTL_SECONDS: u64 = 2 * 60 * 60;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt store entry {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("group has {have} snapshots, {need} required")]
    BatchTooSmall { have: usize, need: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HostOverride {
    pub threshold: Option<usize>,
    pub ttl_seconds: Option<u64>,
    pub discard_threshold: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarvestConfig {
    pub threshold: usize,
    pub ttl_seconds: u64,
    pub discard_threshold: f64,
    /// Overrides keyed by host (`www.a.com`, or `host:port`).
    pub hosts: HashMap<String, HostOverride>,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        HarvestConfig {
            threshold: DEFAULT_THRESHOLD,
            ttl_seconds: DEFAULT_TTL_SECONDS,
            discard_threshold: DEFAULT_DISCARD_THRESHOLD,
            hosts: HashMap::new(),
        }
    }
}

/// Effective settings for one host.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupPolicy {
    pub threshold: usize,
    pub ttl: Duration,
    pub discard_threshold: f64,
}

impl HarvestConfig {
    pub fn policy_for(&self, host: &str) -> GroupPolicy {
        let o = self.hosts.get(host).cloned().unwrap_or_default();
        GroupPolicy {
            threshold: o.threshold.unwrap_or(self.threshold).max(2),
            ttl: Duration::from_secs(o.ttl_seconds.unwrap_or(self.ttl_seconds)),
            discard_threshold: o.discard_threshold.unwrap_or(self.discard_threshold),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub url: String,
    pub class: FormFactorClass,
    pub width: u32,
    pub height: u32,
}

impl GroupKey {
    pub fn of(record: &SnapshotRecord) -> Self {
        GroupKey {
            url: record.url.clone(),
            class: record.form_factor.class,
            width: record.raster.width(),
            height: record.raster.height(),
        }
    }

    pub fn host(&self) -> String {
        host_of(&self.url)
    }
}

pub(crate) fn host_of(url: &str) -> String {
    url::Url::parse(url)
        .ok()
        .and_then(|u| {
            u.host_str().map(|h| match u.port() {
                Some(p) => format!("{h}:{p}"),
                None => h.to_owned(),
            })
        })
        .unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GenerationOutcome {
    Published { change_fraction: f64, regions: Vec<Region> },
    Discarded { change_fraction: f64 },
}

/// One desensitization run over a group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub at: Timestamp,
    /// Arrival times of the batch members, oldest first.
    pub batch: Vec<Timestamp>,
    #[serde(flatten)]
    pub outcome: GenerationOutcome,
}

#[derive(Clone, Debug)]
pub struct HarvestGroup {
    pub key: GroupKey,
    /// Ordered by `received_at`, strictly increasing.
    pub records: Vec<SnapshotRecord>,
    pub last_generated_at: Option<Timestamp>,
    /// Newest record time that a run (published or discarded) has consumed.
    pub last_processed: Option<Timestamp>,
    pub generations: Vec<GenerationLog>,
    incarnation: u64,
}

impl HarvestGroup {
    fn new(key: GroupKey, incarnation: u64) -> Self {
        HarvestGroup {
            key,
            records: Vec::new(),
            last_generated_at: None,
            last_processed: None,
            generations: Vec::new(),
            incarnation,
        }
    }

    pub fn newest(&self) -> Option<Timestamp> {
        self.records.last().map(|r| r.received_at)
    }

    /// True when there are records no run has looked at yet.
    pub fn has_unprocessed(&self) -> bool {
        match (self.newest(), self.last_processed) {
            (Some(n), Some(p)) => n > p,
            (Some(_), None) => true,
            (None, _) => false,
        }
    }
}

pub fn threshold_reached(group: &HarvestGroup, threshold: usize) -> bool {
    group.records.len() >= threshold
}

/// Whether the group's served page should be regenerated at `now`.
pub fn needs_refresh(group: &HarvestGroup, now: Timestamp, threshold: usize, ttl: Duration) -> bool {
    match group.last_generated_at {
        None => threshold_reached(group, threshold),
        Some(gen) => group.newest().is_some_and(|n| n > gen) || now.since(gen) > ttl,
    }
}

/// The `n` most recent records, oldest first.
pub fn select_batch(group: &HarvestGroup, n: usize) -> Result<Vec<SnapshotRecord>, HarvestError> {
    let have = group.records.len();
    if have < n || n == 0 {
        return Err(HarvestError::BatchTooSmall { have, need: n.max(1) });
    }
    Ok(group.records[have - n..].to_vec())
}

/// Result of looking up the served page for `(url, class)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Lookup {
    Found(Arc<DsHtmlDocument>),
    Expired,
    Missing,
}

/// Work handed to a desensitization job.
#[derive(Clone, Debug)]
pub struct JobInput {
    pub key: GroupKey,
    pub batch: Vec<SnapshotRecord>,
    pub policy: GroupPolicy,
    incarnation: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredKey {
    pub group: GroupKey,
    pub received_at: Timestamp,
}

#[derive(Default)]
struct State {
    groups: BTreeMap<GroupKey, HarvestGroup>,
    published: HashMap<GroupKey, Arc<DsHtmlDocument>>,
    images: HashMap<GroupKey, Arc<DesensitizedImage>>,
    next_incarnation: u64,
}

impl State {
    fn incarnation(&mut self) -> u64 {
        self.next_incarnation += 1;
        self.next_incarnation
    }
}

pub struct Harvester {
    config: HarvestConfig,
    disk: Option<DiskStore>,
    state: Mutex<State>,
}

impl Harvester {
    pub fn in_memory(config: HarvestConfig) -> Self {
        Harvester {
            config,
            disk: None,
            state: Mutex::new(State::default()),
        }
    }

    /// Open (or create) a persistent store rooted at `root`, reloading any
    /// groups already on disk.
    pub fn open(config: HarvestConfig, root: impl Into<PathBuf>) -> Result<Self, HarvestError> {
        let disk = DiskStore::new(root.into())?;
        let mut state = State::default();
        for loaded in disk.load()? {
            let inc = state.incarnation();
            let mut group = HarvestGroup::new(loaded.key.clone(), inc);
            group.records = loaded.records;
            group.last_generated_at = loaded.meta.last_generated_at;
            group.last_processed = loaded.meta.last_processed;
            group.generations = loaded.meta.generations;
            if let Some(doc) = loaded.document {
                state.published.insert(loaded.key.clone(), Arc::new(doc));
            }
            state.groups.insert(loaded.key, group);
        }
        Ok(Harvester {
            config,
            disk: Some(disk),
            state: Mutex::new(state),
        })
    }

    pub fn config(&self) -> &HarvestConfig {
        &self.config
    }

    pub fn policy_for(&self, key: &GroupKey) -> GroupPolicy {
        self.config.policy_for(&key.host())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Append a validated record to its group. Arrival times inside a group
    /// are made strictly increasing so they can serve as record keys.
    pub fn store_snapshot(&self, mut record: SnapshotRecord) -> Result<StoredKey, HarvestError> {
        let key = GroupKey::of(&record);
        let mut state = self.lock();
        if !state.groups.contains_key(&key) {
            let inc = state.incarnation();
            state.groups.insert(key.clone(), HarvestGroup::new(key.clone(), inc));
        }
        let group = state.groups.get_mut(&key).expect("group inserted above");
        if let Some(last) = group.newest() {
            if record.received_at <= last {
                record.received_at = Timestamp(last.0 + 1);
            }
        }
        if let Some(disk) = &self.disk {
            disk.write_record(&key, &record)?;
        }
        let received_at = record.received_at;
        group.records.push(record);
        Ok(StoredKey { group: key, received_at })
    }

    pub fn group(&self, key: &GroupKey) -> Option<HarvestGroup> {
        self.lock().groups.get(key).cloned()
    }

    pub fn group_keys(&self) -> Vec<GroupKey> {
        self.lock().groups.keys().cloned().collect()
    }

    /// Total accepted snapshots for `(url, class)` across all dimensions.
    pub fn accepted_count(&self, url: &str, class: FormFactorClass) -> usize {
        self.lock()
            .groups
            .values()
            .filter(|g| g.key.url == url && g.key.class == class)
            .map(|g| g.records.len())
            .sum()
    }

    pub fn record_count(&self) -> usize {
        self.lock().groups.values().map(|g| g.records.len()).sum()
    }

    /// Whether a desensitization run for `key` would do useful work now.
    pub fn wants_refresh(&self, key: &GroupKey, now: Timestamp) -> bool {
        let policy = self.policy_for(key);
        self.lock().groups.get(key).is_some_and(|g| {
            threshold_reached(g, policy.threshold)
                && g.has_unprocessed()
                && needs_refresh(g, now, policy.threshold, policy.ttl)
        })
    }

    /// Snapshot the batch for a run, or `None` when no run is warranted.
    pub fn begin_job(&self, key: &GroupKey, now: Timestamp) -> Option<JobInput> {
        let policy = self.policy_for(key);
        let state = self.lock();
        let g = state.groups.get(key)?;
        if !(threshold_reached(g, policy.threshold)
            && g.has_unprocessed()
            && needs_refresh(g, now, policy.threshold, policy.ttl))
        {
            return None;
        }
        let batch = select_batch(g, policy.threshold).ok()?;
        Some(JobInput {
            key: key.clone(),
            batch,
            policy,
            incarnation: g.incarnation,
        })
    }

    /// Record the outcome of a run. Results for groups purged (or recreated)
    /// since the run began are dropped; returns whether the result was kept.
    pub fn finish_job(
        &self,
        job: &JobInput,
        at: Timestamp,
        result: &Desensitization,
        document: Option<DsHtmlDocument>,
    ) -> Result<bool, HarvestError> {
        let mut state = self.lock();
        let Some(group) = state.groups.get_mut(&job.key) else {
            return Ok(false);
        };
        if group.incarnation != job.incarnation {
            return Ok(false);
        }
        let outcome = match result {
            Desensitization::Published(img) => GenerationOutcome::Published {
                change_fraction: crate::desensitizer::change_fraction(&img.mask),
                regions: img.regions.clone(),
            },
            Desensitization::Discarded { fraction } => GenerationOutcome::Discarded {
                change_fraction: *fraction,
            },
        };
        group.generations.push(GenerationLog {
            at,
            batch: job.batch.iter().map(|r| r.received_at).collect(),
            outcome,
        });
        group.last_processed = job.batch.last().map(|r| r.received_at);
        let published = matches!(result, Desensitization::Published(_)) && document.is_some();
        if published {
            group.last_generated_at = Some(at);
        }
        let meta = disk::GroupMeta {
            last_generated_at: group.last_generated_at,
            last_processed: group.last_processed,
            generations: group.generations.clone(),
        };
        if let Some(disk) = &self.disk {
            disk.write_group_meta(&job.key, &meta)?;
        }
        if let (Desensitization::Published(img), Some(doc)) = (result, document) {
            if let Some(disk) = &self.disk {
                disk.write_artifacts(&job.key, img, &doc)?;
            }
            state.images.insert(job.key.clone(), Arc::new(img.clone()));
            state.published.insert(job.key.clone(), Arc::new(doc));
        }
        Ok(published)
    }

    /// Freshest non-expired page for `(url, class)`.
    pub fn lookup(&self, url: &str, class: FormFactorClass, now: Timestamp) -> Lookup {
        let state = self.lock();
        let mut newest: Option<&Arc<DsHtmlDocument>> = None;
        let mut any = false;
        for (key, doc) in &state.published {
            if key.url != url || key.class != class {
                continue;
            }
            any = true;
            if doc.is_expired(now) {
                continue;
            }
            if newest.is_none_or(|n| doc.generated_at > n.generated_at) {
                newest = Some(doc);
            }
        }
        match newest {
            Some(doc) => Lookup::Found(doc.clone()),
            None if any => Lookup::Expired,
            None => Lookup::Missing,
        }
    }

    /// Latest desensitized image for a group, if one was published.
    pub fn desensitized(&self, key: &GroupKey) -> Option<Arc<DesensitizedImage>> {
        self.lock().images.get(key).cloned()
    }

    /// Remove every snapshot and artifact for `url`, all form factors.
    /// Returns removed snapshots plus removed artifact sets.
    pub fn purge(&self, url: &str) -> Result<usize, HarvestError> {
        let mut state = self.lock();
        let keys: Vec<GroupKey> = state.groups.keys().filter(|k| k.url == url).cloned().collect();
        let mut removed = 0;
        for key in &keys {
            if let Some(g) = state.groups.remove(key) {
                removed += g.records.len();
            }
            let had_doc = state.published.remove(key).is_some();
            let had_img = state.images.remove(key).is_some();
            if had_doc || had_img {
                removed += 1;
            }
        }
        if let Some(disk) = &self.disk {
            disk.remove_url(url, &keys)?;
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FormFactor, FormFactorBuckets, Raster};

    fn record(url: &str, w: u32, h: u32, at: u64) -> SnapshotRecord {
        SnapshotRecord {
            url: url.into(),
            raster: Arc::new(Raster::filled(w, h, [255, 255, 255, 255])),
            links: vec![],
            viewport_height: 1000,
            form_factor: FormFactor::new(360, 640, None, &FormFactorBuckets::default()).unwrap(),
            user_agent: "ua".into(),
            received_at: Timestamp(at),
        }
    }

    fn group_with(n: usize) -> HarvestGroup {
        let mut g = HarvestGroup::new(GroupKey::of(&record("http://a.com/", 4, 4, 0)), 1);
        for i in 0..n {
            g.records.push(record("http://a.com/", 4, 4, i as u64 + 1));
        }
        g
    }

    #[test]
    fn store_creates_groups_by_dimension() {
        let h = Harvester::in_memory(HarvestConfig::default());
        let k1 = h.store_snapshot(record("http://a.com/", 360, 1280, 1)).unwrap();
        assert_eq!(h.group(&k1.group).unwrap().records.len(), 1);
        let k2 = h.store_snapshot(record("http://a.com/", 412, 1460, 2)).unwrap();
        assert_ne!(k1.group, k2.group);
        assert_eq!(h.group_keys().len(), 2);
        h.store_snapshot(record("http://a.com/", 360, 1280, 3)).unwrap();
        let k = h.store_snapshot(record("http://a.com/", 360, 1280, 4)).unwrap();
        assert!(threshold_reached(&h.group(&k.group).unwrap(), 3));
    }

    #[test]
    fn duplicate_timestamps_are_bumped() {
        let h = Harvester::in_memory(HarvestConfig::default());
        let a = h.store_snapshot(record("http://a.com/", 4, 4, 10)).unwrap();
        let b = h.store_snapshot(record("http://a.com/", 4, 4, 10)).unwrap();
        assert_eq!(a.received_at, Timestamp(10));
        assert_eq!(b.received_at, Timestamp(11));
        assert_eq!(h.accepted_count("http://a.com/", FormFactorClass::Phone), 2);
    }

    #[test]
    fn threshold_cases() {
        assert!(!threshold_reached(&group_with(2), 3));
        assert!(threshold_reached(&group_with(3), 3));
        assert!(!threshold_reached(&group_with(3), 5));
    }

    #[test]
    fn refresh_cases() {
        let ttl = Duration::from_secs(7200);
        let t = 1_000_000;
        let mut g = group_with(3);
        assert!(needs_refresh(&g, Timestamp(0), 3, ttl));
        assert!(!needs_refresh(&group_with(2), Timestamp(0), 3, ttl));

        g.last_generated_at = Some(Timestamp(t));
        g.records.last_mut().unwrap().received_at = Timestamp(t + 1);
        assert!(needs_refresh(&g, Timestamp(t + 1), 3, ttl));

        g.records.last_mut().unwrap().received_at = Timestamp(t - 1);
        assert!(!needs_refresh(&g, Timestamp(t + 600_000), 3, ttl));
        assert!(!needs_refresh(&g, Timestamp(t + 7_200_000), 3, ttl));
        assert!(needs_refresh(&g, Timestamp(t + 7_201_000), 3, ttl));
    }

    #[test]
    fn batch_selection() {
        let g = group_with(5);
        let b = select_batch(&g, 3).unwrap();
        assert_eq!(b.iter().map(|r| r.received_at.0).collect::<Vec<_>>(), vec![3, 4, 5]);
        assert_eq!(select_batch(&group_with(3), 3).unwrap().len(), 3);
        assert!(matches!(select_batch(&group_with(2), 3), Err(HarvestError::BatchTooSmall { have: 2, need: 3 })));
    }

    #[test]
    fn host_overrides() {
        let mut cfg = HarvestConfig::default();
        cfg.hosts.insert(
            "b.com".into(),
            HostOverride {
                threshold: Some(5),
                ..Default::default()
            },
        );
        assert_eq!(cfg.policy_for("a.com").threshold, 3);
        assert_eq!(cfg.policy_for("b.com").threshold, 5);
        assert_eq!(cfg.policy_for("b.com").ttl, Duration::from_secs(7200));
    }

    proptest::proptest! {
        #[test]
        fn refresh_is_monotone_in_time(gen in 0u64..10_000_000, newest in 0u64..10_000_000, t in 0u64..20_000_000, dt in 0u64..10_000_000) {
            let mut g = group_with(3);
            g.records.last_mut().unwrap().received_at = Timestamp(newest);
            g.last_generated_at = Some(Timestamp(gen));
            let ttl = Duration::from_secs(7200);
            if needs_refresh(&g, Timestamp(t), 3, ttl) {
                proptest::prop_assert!(needs_refresh(&g, Timestamp(t + dt), 3, ttl));
            }
        }
    }
}
