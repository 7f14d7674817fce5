//! The snapshot service: DS GET lookup, DS POST intake, purge.

mod api;
mod config;
mod jobs;

use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use crate::clock::{SharedClock, Timestamp};
use crate::desensitizer::Desensitization;
use crate::harvester::{GroupKey, HarvestError, Harvester, JobInput, Lookup, StoredKey};
use crate::html::{generate, DsHtmlDocument, GenerateParams};
use crate::proxy::token::detect_prerender_token;
use crate::model::{validate_ds_post, DsPostPayload, FormFactorClass, PartSizes, ValidationError};

pub use api::{router, EXPIRES_AT_HEADER, FORM_FACTOR_HEADER, GENERATED_AT_HEADER, STATUS_HEADER};
pub use config::{ConfigError, ServerConfig, CONFIG_ENV};
pub(crate) use config::load_toml;
pub use jobs::JobQueue;

/// Lookup key of a DS GET.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DsGetKey {
    pub url: String,
    pub class: FormFactorClass,
    pub user_agent_family: String,
}

/// Product token before the first `/` of a user-agent string.
pub fn user_agent_family(ua: &str) -> String {
    ua.trim().split('/').next().unwrap_or("").trim().to_owned()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DsGetResult {
    Found(Arc<DsHtmlDocument>),
    Expired,
    NotFound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostAccepted {
    pub key: StoredKey,
    pub sizes: PartSizes,
    /// Accepted snapshots for the post's group after this one.
    pub group_size: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum PostError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Store(#[from] HarvestError),
}

pub struct DsServer {
    config: ServerConfig,
    clock: SharedClock,
    harvester: Arc<Harvester>,
    jobs: JobQueue,
}

impl DsServer {
    /// Build the service and start its job workers on the current runtime.
    pub fn start(config: ServerConfig, clock: SharedClock) -> Result<Arc<Self>, HarvestError> {
        let harvester = Arc::new(match &config.store_dir {
            Some(dir) => Harvester::open(config.harvest.clone(), dir)?,
            None => Harvester::in_memory(config.harvest.clone()),
        });
        Ok(Self::with_harvester(config, clock, harvester))
    }

    pub fn with_harvester(config: ServerConfig, clock: SharedClock, harvester: Arc<Harvester>) -> Arc<Self> {
        let job_ctx = (harvester.clone(), clock.clone(), config.clone());
        let jobs = JobQueue::start(config.workers, move |key| {
            let (h, c, cfg) = &job_ctx;
            if let Err(e) = run_job(h, c, cfg, &key) {
                tracing::error!(url = %key.url, "desensitization failed: {e}");
            }
        });
        let server = Arc::new(DsServer {
            config,
            clock,
            harvester,
            jobs,
        });
        // groups reloaded from disk may already be due
        server.sweep();
        server
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn harvester(&self) -> &Arc<Harvester> {
        &self.harvester
    }

    pub fn jobs(&self) -> &JobQueue {
        &self.jobs
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    pub fn ds_get(&self, key: &DsGetKey) -> DsGetResult {
        match self.harvester.lookup(&key.url, key.class, self.clock.now()) {
            Lookup::Found(doc) => DsGetResult::Found(doc),
            Lookup::Expired => DsGetResult::Expired,
            Lookup::Missing => DsGetResult::NotFound,
        }
    }

    /// Validate and store a DS POST, queueing desensitization when the group
    /// is due. Never runs the pipeline inline.
    pub async fn ds_post(&self, content_type: &str, body: Bytes, user_agent: &str) -> Result<PostAccepted, PostError> {
        let mut payload = DsPostPayload::from_multipart(content_type, body, user_agent).await?;
        // a hook running on a flipped page reports the tokenized address
        payload.url = detect_prerender_token(&payload.url, &self.config.token_name).1;
        let sizes = payload.part_sizes();
        let buckets = self.config.form_factor;
        let received_at = self.clock.now();
        let harvester = self.harvester.clone();
        let stored = tokio::task::spawn_blocking(move || -> Result<StoredKey, PostError> {
            let record = validate_ds_post(&payload, received_at, &buckets)?;
            Ok(harvester.store_snapshot(record)?)
        })
        .await
        .expect("ds_post worker panicked")?;
        let group_size = self.harvester.group(&stored.group).map_or(0, |g| g.records.len());
        if self.harvester.wants_refresh(&stored.group, self.clock.now()) {
            self.jobs.schedule(stored.group.clone());
        }
        Ok(PostAccepted {
            key: stored,
            sizes,
            group_size,
        })
    }

    pub fn purge(&self, url: &str) -> Result<usize, HarvestError> {
        self.harvester.purge(url)
    }

    /// Queue every group whose page is due for regeneration.
    pub fn sweep(&self) -> usize {
        let now = self.clock.now();
        let mut n = 0;
        for key in self.harvester.group_keys() {
            if self.harvester.wants_refresh(&key, now) {
                self.jobs.schedule(key);
                n += 1;
            }
        }
        n
    }

    /// Wait until the background queue is empty.
    pub async fn quiesce(&self) {
        self.jobs.wait_idle().await;
    }
}

fn run_job(harvester: &Harvester, clock: &SharedClock, config: &ServerConfig, key: &GroupKey) -> Result<(), HarvestError> {
    let now = clock.now();
    let Some(job) = harvester.begin_job(key, now) else {
        return Ok(());
    };
    let result = match config
        .desensitizer
        .run(&job.batch, job.policy.discard_threshold, now)
    {
        Ok(r) => r,
        Err(e) => {
            tracing::error!(url = %key.url, "desensitizer rejected batch: {e}");
            return Ok(());
        }
    };
    let doc = page_for(&job, &result, config);
    let kept = harvester.finish_job(&job, now, &result, doc)?;
    match &result {
        Desensitization::Published(img) => {
            tracing::info!(url = %key.url, class = %key.class, regions = img.regions.len(), kept, "published")
        }
        Desensitization::Discarded { fraction } => {
            tracing::warn!(url = %key.url, class = %key.class, fraction, "batch discarded")
        }
    }
    Ok(())
}

fn page_for(job: &JobInput, result: &Desensitization, config: &ServerConfig) -> Option<DsHtmlDocument> {
    let base = job.batch.last()?;
    generate(
        result,
        &GenerateParams {
            links: &base.links,
            viewport_height: base.viewport_height,
            original_url: &base.url,
            token_name: &config.token_name,
            ttl_seconds: job.policy.ttl.as_secs(),
        },
    )
    .ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ua_family() {
        assert_eq!(user_agent_family("Mozilla/5.0 (Linux; Android 6.0)"), "Mozilla");
        assert_eq!(user_agent_family("curl"), "curl");
        assert_eq!(user_agent_family(""), "");
    }
}
