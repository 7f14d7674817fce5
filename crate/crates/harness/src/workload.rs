//! Synthetic page specifications and the workload generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ds_core::desensitizer::Region;
use ds_core::model::{canonicalize_url, LinkRect, Rgba};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DynamicKind {
    /// Re-drawn on every render. These are the sensitive labels.
    PerRequest,
    /// Changes once per period of simulated time.
    Scheduled { period_secs: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableRegion {
    pub rect: Region,
    pub color: Rgba,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicRegion {
    pub rect: Region,
    #[serde(flatten)]
    pub kind: DynamicKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPageSpec {
    pub seed: u64,
    /// Canonical page URL.
    pub url: String,
    pub width: u32,
    pub height: u32,
    pub viewport_height: u32,
    pub background: Rgba,
    pub stable: Vec<StableRegion>,
    pub dynamic: Vec<DynamicRegion>,
    pub links: Vec<LinkRect>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("{url}: {reason}")]
    Invalid { url: String, reason: String },
}

fn overlaps(a: &Region, b: &Region) -> bool {
    a.left < b.right && b.left < a.right && a.top < b.bottom && b.top < a.bottom
}

impl SyntheticPageSpec {
    fn invalid(&self, reason: impl Into<String>) -> SpecError {
        SpecError::Invalid {
            url: self.url.clone(),
            reason: reason.into(),
        }
    }

    /// Rows a client captures: at most twice the viewport.
    pub fn captured_height(&self) -> u32 {
        self.height.min(self.viewport_height.saturating_mul(2))
    }

    pub fn host(&self) -> &str {
        let rest = self.url.split_once("://").map_or(self.url.as_str(), |(_, r)| r);
        rest.split(['/', '?']).next().unwrap_or("")
    }

    pub fn sensitive(&self) -> impl Iterator<Item = &Region> {
        self.dynamic
            .iter()
            .filter(|d| d.kind == DynamicKind::PerRequest)
            .map(|d| &d.rect)
    }

    pub fn is_sensitive(&self, x: u32, y: u32) -> bool {
        self.sensitive().any(|r| r.contains(x, y))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if canonicalize_url(&self.url).ok().as_deref() != Some(self.url.as_str()) {
            return Err(self.invalid("url is not canonical"));
        }
        if self.width == 0 || self.height == 0 || self.viewport_height == 0 {
            return Err(self.invalid("empty page"));
        }
        let in_page = |r: &Region| r.left < r.right && r.top < r.bottom && r.right <= self.width && r.bottom <= self.height;
        for s in &self.stable {
            if !in_page(&s.rect) {
                return Err(self.invalid(format!("stable region {:?} outside page", s.rect)));
            }
        }
        for (i, d) in self.dynamic.iter().enumerate() {
            if !in_page(&d.rect) {
                return Err(self.invalid(format!("dynamic region {:?} outside page", d.rect)));
            }
            if let DynamicKind::Scheduled { period_secs: 0 } = d.kind {
                return Err(self.invalid("scheduled region with zero period"));
            }
            if let Some(s) = self.stable.iter().find(|s| overlaps(&s.rect, &d.rect)) {
                return Err(self.invalid(format!("dynamic {:?} overlaps stable {:?}", d.rect, s.rect)));
            }
            if self.dynamic[..i].iter().any(|o| overlaps(&o.rect, &d.rect)) {
                return Err(self.invalid(format!("dynamic regions overlap at {:?}", d.rect)));
            }
        }
        Ok(())
    }

    /// Share of captured pixels covered by any dynamic region.
    pub fn dynamic_fraction(&self) -> f64 {
        let h = self.captured_height();
        let area: u64 = self
            .dynamic
            .iter()
            .map(|d| {
                let bottom = d.rect.bottom.min(h);
                if bottom <= d.rect.top {
                    0
                } else {
                    u64::from(d.rect.right - d.rect.left) * u64::from(bottom - d.rect.top)
                }
            })
            .sum();
        area as f64 / (u64::from(self.width) * u64::from(h)) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadOptions {
    /// Upper bound on [`SyntheticPageSpec::dynamic_fraction`].
    pub max_dynamic_fraction: f64,
    pub banner_period_secs: u64,
    pub with_banners: bool,
    pub with_dynamic: bool,
}

impl Default for WorkloadOptions {
    fn default() -> Self {
        WorkloadOptions {
            max_dynamic_fraction: 0.3,
            banner_period_secs: 2 * 60 * 60,
            with_banners: true,
            with_dynamic: true,
        }
    }
}

fn color(rng: &mut ChaCha8Rng) -> Rgba {
    [rng.gen(), rng.gen(), rng.gen(), 255]
}

fn rect(left: u32, top: u32, right: u32, bottom: u32) -> Region {
    Region { left, top, right, bottom }
}

/// Page `index` of a workload. Deterministic in `(seed, index)`.
pub fn generate_site(seed: u64, index: usize, opts: &WorkloadOptions) -> SyntheticPageSpec {
    let site_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(site_seed);
    let width = [48u32, 64, 80, 96][rng.gen_range(0..4)];
    let height = rng.gen_range(8..=20u32) * 8;
    let viewport_height = rng.gen_range(height * 2 / 5..=height);
    let url = if rng.gen_bool(0.5) {
        format!("http://site{index}.example/")
    } else {
        format!("http://www.site{index}.example/p/{}?id={}", rng.gen_range(1..100u32), rng.gen_range(1..1000u32))
    };
    let captured = height.min(viewport_height * 2);
    let budget = (opts.max_dynamic_fraction * f64::from(width * captured)) as u32;

    let mut stable = vec![StableRegion {
        rect: rect(0, 0, width, 8),
        color: color(&mut rng),
    }];
    let mut dynamic = Vec::new();
    let mut used = 0u32;
    // greeting strip, an ad block, and a schedule banner, stacked below the header
    let mut y = 10;
    let mut try_add = |kind: DynamicKind, w: u32, h: u32, y: &mut u32, rng: &mut ChaCha8Rng| {
        let visible = h.min(captured.saturating_sub(*y));
        if *y + h > height || used + w * visible > budget {
            return;
        }
        let left = rng.gen_range(0..=width - w);
        dynamic.push(DynamicRegion {
            rect: rect(left, *y, left + w, *y + h),
            kind,
        });
        used += w * visible;
        *y += h + 2;
    };
    if opts.with_dynamic {
        try_add(DynamicKind::PerRequest, width / 2, 4, &mut y, &mut rng);
        let ad_w = rng.gen_range(width / 4..=width / 2);
        let ad_h = rng.gen_range(6..=14);
        try_add(DynamicKind::PerRequest, ad_w, ad_h, &mut y, &mut rng);
    }
    if opts.with_banners {
        try_add(
            DynamicKind::Scheduled {
                period_secs: opts.banner_period_secs,
            },
            width,
            6,
            &mut y,
            &mut rng,
        );
    }
    // text blocks fill whatever rows are left
    while y + 4 <= height {
        let h = rng.gen_range(2..=6).min(height - y);
        let left = rng.gen_range(0..width / 4);
        let right = rng.gen_range(width / 2..=width);
        stable.push(StableRegion {
            rect: rect(left, y, right, y + h),
            color: color(&mut rng),
        });
        y += h + rng.gen_range(1..=4);
    }

    let links = (0..rng.gen_range(3..=8))
        .map(|i| {
            let top = rng.gen_range(0..height - 4);
            let bottom = rng.gen_range(top + 2..=(top + 12).min(height));
            let left = rng.gen_range(0..width - 4);
            let right = rng.gen_range(left + 2..=width);
            LinkRect::new(format!("http://site{index}.example/l/{i}"), left, top, right, bottom).expect("non-empty")
        })
        .collect();

    SyntheticPageSpec {
        seed: site_seed,
        url,
        width,
        height,
        viewport_height,
        background: [250, 250, 250, 255],
        stable,
        dynamic,
        links,
    }
}

pub fn generate_workload(sites: usize, seed: u64, opts: &WorkloadOptions) -> Vec<SyntheticPageSpec> {
    (0..sites).map(|i| generate_site(seed, i, opts)).collect()
}
