use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;

use bytes::Bytes;
use serde::{Deserialize, Serialize};

use super::{canonicalize_url, decode_png, encode_png, FormFactor, FormFactorBuckets, LinkRect, SnapshotRecord, ValidationError};
use crate::clock::Timestamp;

/// Multipart part names of a DS POST, in wire order.
pub const PART_NAMES: [&str; 7] = [
    "image",
    "url",
    "links",
    "viewport_height",
    "ff_width",
    "ff_height",
    "ff_diagonal",
];

/// The raw parts of a DS POST. Only presence is guaranteed; contents are
/// checked by [`validate_ds_post`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DsPostPayload {
    pub image: Bytes,
    pub url: String,
    pub links: Bytes,
    pub viewport_height: String,
    pub ff_width: String,
    pub ff_height: String,
    pub ff_diagonal: Option<String>,
    pub user_agent: String,
}

/// Byte sizes of the variable-length components of a DS POST.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartSizes {
    pub image: usize,
    pub links: usize,
    pub url: usize,
}

impl DsPostPayload {
    /// Build the payload a hook would send for `record`.
    pub fn from_record(record: &SnapshotRecord) -> Self {
        DsPostPayload {
            image: Bytes::from(encode_png(&record.raster)),
            url: record.url.clone(),
            links: Bytes::from(LinkRect::list_to_json(&record.links)),
            viewport_height: record.viewport_height.to_string(),
            ff_width: record.form_factor.width_px.to_string(),
            ff_height: record.form_factor.height_px.to_string(),
            ff_diagonal: record.form_factor.diagonal_in.map(|d| d.to_string()),
            user_agent: record.user_agent.clone(),
        }
    }

    pub fn part_sizes(&self) -> PartSizes {
        PartSizes {
            image: self.image.len(),
            links: self.links.len(),
            url: self.url.len(),
        }
    }

    /// Serialize as `multipart/form-data` with the given boundary. The user
    /// agent travels in the transport header, not in the body.
    pub fn to_multipart(&self, boundary: &str) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.image.len() + self.links.len() + 1024);
        let text = |out: &mut Vec<u8>, name: &str, value: &[u8]| {
            out.extend_from_slice(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes());
            out.extend_from_slice(value);
            out.extend_from_slice(b"\r\n");
        };
        out.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"snapshot.png\"\r\nContent-Type: image/png\r\n\r\n"
            )
            .as_bytes(),
        );
        out.extend_from_slice(&self.image);
        out.extend_from_slice(b"\r\n");
        text(&mut out, "url", self.url.as_bytes());
        text(&mut out, "links", &self.links);
        text(&mut out, "viewport_height", self.viewport_height.as_bytes());
        text(&mut out, "ff_width", self.ff_width.as_bytes());
        text(&mut out, "ff_height", self.ff_height.as_bytes());
        if let Some(d) = &self.ff_diagonal {
            text(&mut out, "ff_diagonal", d.as_bytes());
        }
        out.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
        out
    }

    pub fn content_type(boundary: &str) -> String {
        format!("multipart/form-data; boundary={boundary}")
    }

    /// Split a `multipart/form-data` body into its named parts.
    pub async fn from_multipart(content_type: &str, body: Bytes, user_agent: &str) -> Result<Self, ValidationError> {
        let boundary = multer::parse_boundary(content_type).map_err(|e| ValidationError::Multipart(e.to_string()))?;
        let stream = futures::stream::once(async move { Ok::<Bytes, Infallible>(body) });
        let mut multipart = multer::Multipart::new(stream, boundary);
        let mut parts: HashMap<String, Bytes> = HashMap::new();
        while let Some(field) = multipart
            .next_field()
            .await
            .map_err(|e| ValidationError::Multipart(e.to_string()))?
        {
            let Some(name) = field.name().map(str::to_owned) else {
                continue;
            };
            let data = field.bytes().await.map_err(|e| ValidationError::Multipart(e.to_string()))?;
            parts.entry(name).or_insert(data);
        }
        Self::from_parts(parts, user_agent)
    }

    pub fn from_parts(mut parts: HashMap<String, Bytes>, user_agent: &str) -> Result<Self, ValidationError> {
        let mut take = |name: &'static str| parts.remove(name).ok_or(ValidationError::MissingField(name));
        let text = |name: &'static str, b: Bytes| {
            String::from_utf8(b.to_vec()).map_err(|_| ValidationError::invalid(name, "not utf-8"))
        };
        let image = take("image")?;
        let url = text("url", take("url")?)?;
        let links = take("links")?;
        let viewport_height = text("viewport_height", take("viewport_height")?)?;
        let ff_width = text("ff_width", take("ff_width")?)?;
        let ff_height = text("ff_height", take("ff_height")?)?;
        let ff_diagonal = match parts.remove("ff_diagonal") {
            Some(b) if !b.is_empty() => Some(text("ff_diagonal", b)?),
            _ => None,
        };
        Ok(DsPostPayload {
            image,
            url,
            links,
            viewport_height,
            ff_width,
            ff_height,
            ff_diagonal,
            user_agent: user_agent.to_owned(),
        })
    }
}

fn parse_positive(field: &'static str, s: &str) -> Result<u32, ValidationError> {
    match s.trim().parse::<u32>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(ValidationError::invalid(field, format!("expected positive integer, got {s:?}"))),
    }
}

/// Turn a DS POST into a [`SnapshotRecord`].
///
/// Snapshots taller than twice the viewport are rejected, never cropped.
/// Links that start inside the raster are clamped to its width; links that
/// end up empty after clamping are dropped.
pub fn validate_ds_post(
    payload: &DsPostPayload,
    received_at: Timestamp,
    buckets: &FormFactorBuckets,
) -> Result<SnapshotRecord, ValidationError> {
    let raster = decode_png(&payload.image)?;
    let url = canonicalize_url(&payload.url)?;
    let viewport_height = parse_positive("viewport_height", &payload.viewport_height)?;
    if u64::from(raster.height()) > 2 * u64::from(viewport_height) {
        return Err(ValidationError::HeightExceedsViewport {
            height: raster.height(),
            viewport: viewport_height,
        });
    }
    let ff_width = parse_positive("ff_width", &payload.ff_width)?;
    let ff_height = parse_positive("ff_height", &payload.ff_height)?;
    let diagonal = payload
        .ff_diagonal
        .as_deref()
        .map(|d| {
            d.trim()
                .parse::<f64>()
                .map_err(|_| ValidationError::invalid("ff_diagonal", format!("not a number: {d:?}")))
        })
        .transpose()?;
    let form_factor = FormFactor::new(ff_width, ff_height, diagonal, buckets)?;

    let links = LinkRect::parse_list(&payload.links)?
        .into_iter()
        .filter_map(|l| if l.top < raster.height() { l.clamp_to_width(raster.width()) } else { Some(l) })
        .collect();

    Ok(SnapshotRecord {
        url,
        raster: Arc::new(raster),
        links,
        viewport_height,
        form_factor,
        user_agent: payload.user_agent.clone(),
        received_at,
    })
}
