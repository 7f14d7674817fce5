//! Pixel-wise desensitization of a batch of snapshots.
//!
//! Every pixel position at which any two snapshots of the batch disagree is
//! treated as potentially personal and blanked on the served image. With
//! lossless inputs and a zero tolerance this cannot miss a changed pixel:
//! the final mask is the union of the difference masks of all unordered
//! pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::model::{encode_bilevel_png, Raster, Rgba, SnapshotRecord};

pub const DEFAULT_BLANK: Rgba = [0x80, 0x80, 0x80, 0xff];
pub const DEFAULT_DISCARD_THRESHOLD: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesensitizeError {
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("no masks to combine")]
    EmptyInput,
    #[error("batch of {0} is too small, at least 2 snapshots are required")]
    BatchTooSmall(usize),
}

/// Boolean pixel grid; `true` means the pixel is blanked.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Mask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mask({}x{}, {} set)", self.width, self.height, self.count())
    }
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask { width, height, bits }
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set bits.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dimensions() == other.dimensions() && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    /// 1-bit PNG, white where blanked.
    pub fn to_png(&self) -> Vec<u8> {
        encode_bilevel_png(self.width, self.height, &self.bits)
    }
}

/// Axis-aligned rectangle in raster pixels, `right`/`bottom` exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Region {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl Region {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    pub fn area(&self) -> u64 {
        u64::from(self.right - self.left) * u64::from(self.bottom - self.top)
    }
}

fn check_dims(a: (u32, u32), b: (u32, u32)) -> Result<(), DesensitizeError> {
    if a == b {
        Ok(())
    } else {
        Err(DesensitizeError::DimensionMismatch(a, b))
    }
}

/// Mask of positions where the two rasters differ in any RGBA sample.
pub fn diff_mask(a: &Raster, b: &Raster) -> Result<Mask, DesensitizeError> {
    diff_mask_with_tolerance(a, b, 0)
}

/// Like [`diff_mask`], but a sample only counts as changed when it differs
/// by more than `tolerance`.
pub fn diff_mask_with_tolerance(a: &Raster, b: &Raster, tolerance: u8) -> Result<Mask, DesensitizeError> {
    check_dims(a.dimensions(), b.dimensions())?;
    let pa = a.as_bytes().chunks_exact(4);
    let pb = b.as_bytes().chunks_exact(4);
    let bits = if tolerance == 0 {
        pa.zip(pb).map(|(x, y)| x != y).collect()
    } else {
        pa.zip(pb)
            .map(|(x, y)| x.iter().zip(y).any(|(s, t)| s.abs_diff(*t) > tolerance))
            .collect()
    };
    Ok(Mask {
        width: a.width(),
        height: a.height(),
        bits,
    })
}

/// Bitwise OR of all masks.
pub fn union_masks(masks: &[Mask]) -> Result<Mask, DesensitizeError> {
    let (first, rest) = masks.split_first().ok_or(DesensitizeError::EmptyInput)?;
    let mut out = first.clone();
    for m in rest {
        check_dims(out.dimensions(), m.dimensions())?;
        for (o, b) in out.bits.iter_mut().zip(&m.bits) {
            *o |= *b;
        }
    }
    Ok(out)
}

/// Blank masked pixels with the default blank color.
pub fn apply_mask(base: &Raster, mask: &Mask) -> Result<Raster, DesensitizeError> {
    apply_mask_with(base, mask, DEFAULT_BLANK)
}

pub fn apply_mask_with(base: &Raster, mask: &Mask, blank: Rgba) -> Result<Raster, DesensitizeError> {
    check_dims(base.dimensions(), mask.dimensions())?;
    let mut pixels = base.as_bytes().to_vec();
    for (px, &m) in pixels.chunks_exact_mut(4).zip(&mask.bits) {
        if m {
            px.copy_from_slice(&blank);
        }
    }
    Ok(Raster::new(base.width(), base.height(), pixels).expect("dimensions unchanged"))
}

/// Fraction of set bits, in `[0, 1]`.
pub fn change_fraction(mask: &Mask) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.count() as f64 / mask.len() as f64
}

/// Bounding boxes of the 4-connected components of set bits, ordered by
/// the first pixel of each component in row-major order.
pub fn masked_regions(mask: &Mask) -> Vec<Region> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut regions = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        regions.push(Region {
            left: x0 as u32,
            top: y0 as u32,
            right: x1 as u32 + 1,
            bottom: y1 as u32 + 1,
        });
    }
    regions
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesensitizedImage {
    pub raster: Raster,
    pub mask: Mask,
    pub source_count: usize,
    pub generated_at: Timestamp,
    pub regions: Vec<Region>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Desensitization {
    Published(DesensitizedImage),
    /// The batch changed too much to be trusted.
    Discarded { fraction: f64 },
}

impl Desensitization {
    pub fn is_discarded(&self) -> bool {
        matches!(self, Desensitization::Discarded { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Desensitizer {
    /// Per-channel difference at or below which samples count as equal.
    pub tolerance: u8,
    pub blank_color: Rgba,
}

impl Default for Desensitizer {
    fn default() -> Self {
        Desensitizer {
            tolerance: 0,
            blank_color: DEFAULT_BLANK,
        }
    }
}

impl Desensitizer {
    /// Union of the difference masks of every unordered pair in `rasters`.
    pub fn batch_mask(&self, rasters: &[&Raster]) -> Result<Mask, DesensitizeError> {
        if rasters.len() < 2 {
            return Err(DesensitizeError::BatchTooSmall(rasters.len()));
        }
        let dims = rasters[0].dimensions();
        for r in &rasters[1..] {
            check_dims(dims, r.dimensions())?;
        }
        let mut mask = Mask::empty(dims.0, dims.1);
        for i in 0..rasters.len() {
            for j in i + 1..rasters.len() {
                let d = diff_mask_with_tolerance(rasters[i], rasters[j], self.tolerance)?;
                mask = union_masks(&[mask, d])?;
            }
        }
        Ok(mask)
    }

    /// Run the full pipeline on a batch ordered oldest to newest; the newest
    /// snapshot is the base of the served image.
    pub fn run(
        &self,
        batch: &[SnapshotRecord],
        discard_threshold: f64,
        generated_at: Timestamp,
    ) -> Result<Desensitization, DesensitizeError> {
        let rasters: Vec<&Raster> = batch.iter().map(|r| r.raster.as_ref()).collect();
        let mask = self.batch_mask(&rasters)?;
        let fraction = change_fraction(&mask);
        if fraction > discard_threshold {
            return Ok(Desensitization::Discarded { fraction });
        }
        let base = rasters.last().expect("batch has at least two members");
        let raster = apply_mask_with(base, &mask, self.blank_color)?;
        let regions = masked_regions(&mask);
        Ok(Desensitization::Published(DesensitizedImage {
            raster,
            mask,
            source_count: batch.len(),
            generated_at,
            regions,
        }))
    }
}

/// Desensitize with default settings, stamping the result with the newest
/// record's arrival time.
pub fn desensitize(batch: &[SnapshotRecord], discard_threshold: f64) -> Result<Desensitization, DesensitizeError> {
    let at = batch.iter().map(|r| r.received_at).max().unwrap_or_default();
    Desensitizer::default().run(batch, discard_threshold, at)
}
