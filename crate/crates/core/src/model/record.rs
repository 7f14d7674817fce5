use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FormFactor, LinkRect, Raster};
use crate::clock::Timestamp;

/// One accepted DS POST.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotRecord {
    pub url: String,
    pub raster: Arc<Raster>,
    pub links: Vec<LinkRect>,
    pub viewport_height: u32,
    pub form_factor: FormFactor,
    pub user_agent: String,
    pub received_at: Timestamp,
}

/// Everything in a [`SnapshotRecord`] except the pixels; this is the
/// sidecar persisted next to each stored PNG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub url: String,
    pub links: Vec<LinkRect>,
    pub viewport_height: u32,
    pub form_factor: FormFactor,
    pub user_agent: String,
    pub received_at: Timestamp,
    pub width: u32,
    pub height: u32,
}

impl SnapshotRecord {
    pub fn meta(&self) -> RecordMeta {
        RecordMeta {
            url: self.url.clone(),
            links: self.links.clone(),
            viewport_height: self.viewport_height,
            form_factor: self.form_factor,
            user_agent: self.user_agent.clone(),
            received_at: self.received_at,
            width: self.raster.width(),
            height: self.raster.height(),
        }
    }

    pub fn from_meta(meta: RecordMeta, raster: Raster) -> Self {
        SnapshotRecord {
            url: meta.url,
            raster: Arc::new(raster),
            links: meta.links,
            viewport_height: meta.viewport_height,
            form_factor: meta.form_factor,
            user_agent: meta.user_agent,
            received_at: meta.received_at,
        }
    }
}
