//! Append-only directory layout:
//!
//! ```text
//! {root}/{host}/{path-hash}/{class}/{W}x{H}/{epoch-millis}.png
//!                                           {epoch-millis}.json   record sidecar
//!                                           group.json            run history
//!                                           desensitized.png, mask.png
//!                                           ds.html, ds.json      served page
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GenerationLog, GroupKey, HarvestError};
use crate::clock::Timestamp;
use crate::desensitizer::DesensitizedImage;
use crate::html::DsHtmlDocument;
use crate::model::{decode_png, encode_png, RecordMeta, SnapshotRecord};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub(crate) struct GroupMeta {
    pub last_generated_at: Option<Timestamp>,
    pub last_processed: Option<Timestamp>,
    pub generations: Vec<GenerationLog>,
}

#[derive(Serialize, Deserialize)]
struct DocMeta {
    original_url: String,
    generated_at: Timestamp,
    ttl_seconds: u64,
    image_base64_len: usize,
    areas_len: usize,
    area_count: usize,
}

pub(crate) struct LoadedGroup {
    pub key: GroupKey,
    pub records: Vec<SnapshotRecord>,
    pub meta: GroupMeta,
    pub document: Option<DsHtmlDocument>,
}

#[derive(Clone, Debug)]
pub struct DiskStore {
    root: PathBuf,
}

fn path_hash(url: &str) -> String {
    let tail = match url::Url::parse(url) {
        Ok(u) => match u.query() {
            Some(q) => format!("{}?{}", u.path(), q),
            None => u.path().to_owned(),
        },
        Err(_) => url.to_owned(),
    };
    hex::encode(&Sha256::digest(tail.as_bytes())[..16])
}

fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_data()?;
    }
    fs::rename(tmp, path)
}

fn corrupt(path: &Path, reason: impl ToString) -> HarvestError {
    HarvestError::Corrupt {
        path: path.to_owned(),
        reason: reason.to_string(),
    }
}

impl DiskStore {
    pub fn new(root: PathBuf) -> Result<Self, HarvestError> {
        fs::create_dir_all(&root)?;
        Ok(DiskStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn url_dir(&self, url: &str) -> PathBuf {
        self.root.join(super::host_of(url)).join(path_hash(url))
    }

    pub fn group_dir(&self, key: &GroupKey) -> PathBuf {
        self.url_dir(&key.url)
            .join(key.class.as_str())
            .join(format!("{}x{}", key.width, key.height))
    }

    pub(crate) fn write_record(&self, key: &GroupKey, record: &SnapshotRecord) -> Result<(), HarvestError> {
        let dir = self.group_dir(key);
        fs::create_dir_all(&dir)?;
        let stem = record.received_at.as_millis().to_string();
        write_atomic(&dir.join(format!("{stem}.png")), &encode_png(&record.raster))?;
        let meta = serde_json::to_vec_pretty(&record.meta()).expect("record meta serializes");
        write_atomic(&dir.join(format!("{stem}.json")), &meta)?;
        Ok(())
    }

    pub(crate) fn write_group_meta(&self, key: &GroupKey, meta: &GroupMeta) -> Result<(), HarvestError> {
        let dir = self.group_dir(key);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("group.json"), &serde_json::to_vec_pretty(meta).expect("group meta serializes"))?;
        Ok(())
    }

    pub(crate) fn write_artifacts(
        &self,
        key: &GroupKey,
        image: &DesensitizedImage,
        doc: &DsHtmlDocument,
    ) -> Result<(), HarvestError> {
        let dir = self.group_dir(key);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("desensitized.png"), &encode_png(&image.raster))?;
        write_atomic(&dir.join("mask.png"), &image.mask.to_png())?;
        let meta = DocMeta {
            original_url: doc.original_url.clone(),
            generated_at: doc.generated_at,
            ttl_seconds: doc.ttl_seconds,
            image_base64_len: doc.image_base64_len,
            areas_len: doc.areas_len,
            area_count: doc.area_count,
        };
        // html first: a page is only reloaded when ds.json exists
        write_atomic(&dir.join("ds.html"), &doc.html)?;
        write_atomic(&dir.join("ds.json"), &serde_json::to_vec_pretty(&meta).expect("doc meta serializes"))?;
        Ok(())
    }

    pub(crate) fn remove_url(&self, url: &str, keys: &[GroupKey]) -> Result<(), HarvestError> {
        for key in keys {
            let dir = self.group_dir(key);
            if dir.exists() {
                fs::remove_dir_all(dir)?;
            }
        }
        let url_dir = self.url_dir(url);
        if url_dir.exists() {
            fs::remove_dir_all(url_dir)?;
        }
        Ok(())
    }

    fn subdirs(dir: &Path) -> Result<Vec<PathBuf>, HarvestError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_dir() {
                out.push(entry.path());
            }
        }
        out.sort();
        Ok(out)
    }

    pub(crate) fn load(&self) -> Result<Vec<LoadedGroup>, HarvestError> {
        let mut groups = Vec::new();
        for host in Self::subdirs(&self.root)? {
            for hash in Self::subdirs(&host)? {
                for class in Self::subdirs(&hash)? {
                    for dims in Self::subdirs(&class)? {
                        if let Some(g) = self.load_group(&dims)? {
                            groups.push(g);
                        }
                    }
                }
            }
        }
        Ok(groups)
    }

    fn load_group(&self, dir: &Path) -> Result<Option<LoadedGroup>, HarvestError> {
        let mut records = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            let is_record = path.extension().is_some_and(|e| e == "json")
                && path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .is_some_and(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()));
            if !is_record {
                continue;
            }
            let meta: RecordMeta =
                serde_json::from_slice(&fs::read(&path)?).map_err(|e| corrupt(&path, e))?;
            let png_path = path.with_extension("png");
            let raster = decode_png(&fs::read(&png_path)?).map_err(|e| corrupt(&png_path, e))?;
            if raster.dimensions() != (meta.width, meta.height) {
                return Err(corrupt(&png_path, "dimensions disagree with sidecar"));
            }
            records.push(SnapshotRecord::from_meta(meta, raster));
        }
        let Some(first) = records.first() else {
            return Ok(None);
        };
        let key = GroupKey::of(first);
        if let Some(bad) = records.iter().find(|r| GroupKey::of(r) != key) {
            return Err(corrupt(dir, format!("record {} belongs to another group", bad.received_at)));
        }
        if self.group_dir(&key) != dir {
            return Err(corrupt(dir, "directory does not match record key"));
        }
        records.sort_by_key(|r| r.received_at);

        let meta_path = dir.join("group.json");
        let meta = if meta_path.exists() {
            serde_json::from_slice(&fs::read(&meta_path)?).map_err(|e| corrupt(&meta_path, e))?
        } else {
            GroupMeta::default()
        };

        let doc_meta_path = dir.join("ds.json");
        let document = if doc_meta_path.exists() {
            let m: DocMeta =
                serde_json::from_slice(&fs::read(&doc_meta_path)?).map_err(|e| corrupt(&doc_meta_path, e))?;
            let html = fs::read(dir.join("ds.html"))?;
            Some(DsHtmlDocument {
                html: html.into(),
                original_url: m.original_url,
                generated_at: m.generated_at,
                ttl_seconds: m.ttl_seconds,
                image_base64_len: m.image_base64_len,
                areas_len: m.areas_len,
                area_count: m.area_count,
            })
        } else {
            None
        };
        Ok(Some(LoadedGroup {
            key,
            records,
            meta,
            document,
        }))
    }
}
