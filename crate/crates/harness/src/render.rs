//! Deterministic rasterizer and fixture HTML for synthetic pages.

use ds_core::model::{Raster, Rgba};
use ds_core::Timestamp;

use crate::workload::{DynamicKind, SyntheticPageSpec};

/// Per-pixel texture; depends only on seed and position.
fn texture(seed: u64, x: u32, y: u32) -> [u8; 3] {
    let mut h = seed ^ (u64::from(x) << 32) ^ u64::from(y);
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 29;
    [(h >> 8) as u8, (h >> 16) as u8, (h >> 24) as u8]
}

/// XOR `stamp`'s low 24 bits over the texture. For a fixed pixel this is
/// injective in the stamp, so two distinct stamps below 2^24 differ at
/// every pixel.
fn stamped(seed: u64, x: u32, y: u32, stamp: u64) -> Rgba {
    let t = texture(seed, x, y);
    [t[0] ^ stamp as u8, t[1] ^ (stamp >> 8) as u8, t[2] ^ (stamp >> 16) as u8, 255]
}

fn shade(c: Rgba, seed: u64, x: u32, y: u32) -> Rgba {
    let t = texture(seed, x, y)[0] & 0x07;
    [c[0] ^ t, c[1] ^ t, c[2] ^ t, c[3]]
}

/// Period index of a scheduled region at `at`.
pub fn schedule_epoch(period_secs: u64, at: Timestamp) -> u64 {
    at.as_millis() / (period_secs * 1000)
}

/// Full-height raster of render number `render_index` made at time `at`.
pub fn render(spec: &SyntheticPageSpec, render_index: u64, at: Timestamp) -> Raster {
    let mut r = Raster::filled(spec.width, spec.height, spec.background);
    for s in &spec.stable {
        for y in s.rect.top..s.rect.bottom {
            for x in s.rect.left..s.rect.right {
                r.set_pixel(x, y, shade(s.color, spec.seed, x, y));
            }
        }
    }
    for (i, d) in spec.dynamic.iter().enumerate() {
        let region_seed = spec.seed ^ ((i as u64 + 1) << 48);
        let stamp = match d.kind {
            DynamicKind::PerRequest => render_index,
            DynamicKind::Scheduled { period_secs } => schedule_epoch(period_secs, at),
        };
        for y in d.rect.top..d.rect.bottom {
            for x in d.rect.left..d.rect.right {
                r.set_pixel(x, y, stamped(region_seed, x, y, stamp));
            }
        }
    }
    r
}

/// The raster a client uploads: the render cropped to the capture height.
pub fn capture(spec: &SyntheticPageSpec, render_index: u64, at: Timestamp) -> Raster {
    render(spec, render_index, at).crop_height(spec.captured_height())
}

pub const RENDER_META: &str = "ds-render";
pub const RENDERED_AT_META: &str = "ds-rendered-at";

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;").replace('<', "&lt;")
}

/// Fixture HTML served by the origin for one render.
pub fn page_html(spec: &SyntheticPageSpec, render_index: u64, at: Timestamp) -> String {
    let mut out = String::with_capacity(512 + spec.links.len() * 160);
    out.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">");
    out.push_str(&format!("<title>{}</title>", escape(&spec.url)));
    out.push_str(&format!("<meta name=\"{RENDER_META}\" content=\"{render_index}\">"));
    out.push_str(&format!("<meta name=\"{RENDERED_AT_META}\" content=\"{}\">", at.as_millis()));
    out.push_str(&format!(
        "<meta name=\"viewport\" content=\"width={}\"></head>\n<body style=\"margin:0;width:{}px;height:{}px\">\n",
        spec.width, spec.width, spec.height
    ));
    for l in &spec.links {
        out.push_str(&format!(
            "<a href=\"{}\" style=\"position:absolute;left:{}px;top:{}px;width:{}px;height:{}px\"></a>\n",
            escape(&l.url),
            l.left,
            l.top,
            l.width(),
            l.height()
        ));
    }
    out.push_str("</body></html>\n");
    out
}

/// Read render index and time back out of [`page_html`] output.
pub fn parse_render_meta(html: &str) -> Option<(u64, Timestamp)> {
    let doc = scraper::Html::parse_document(html);
    let get = |name: &str| -> Option<u64> {
        let sel = scraper::Selector::parse(&format!("meta[name=\"{name}\"]")).ok()?;
        doc.select(&sel).next()?.value().attr("content")?.parse().ok()
    };
    Some((get(RENDER_META)?, Timestamp::from_millis(get(RENDERED_AT_META)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate_site, WorkloadOptions};

    #[test]
    fn renders_differ_exactly_on_per_request_regions() {
        let spec = generate_site(7, 1, &WorkloadOptions::default());
        let at = Timestamp::from_millis(0);
        let a = render(&spec, 1, at);
        let b = render(&spec, 2, at);
        assert_eq!(render(&spec, 1, at), a);
        for y in 0..spec.height {
            for x in 0..spec.width {
                assert_eq!(a.pixel(x, y) != b.pixel(x, y), spec.is_sensitive(x, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn banner_changes_on_schedule() {
        let spec = generate_site(7, 2, &WorkloadOptions::default());
        let banner = spec
            .dynamic
            .iter()
            .find(|d| matches!(d.kind, DynamicKind::Scheduled { .. }))
            .expect("banner")
            .rect;
        let t0 = Timestamp::from_millis(0);
        let a = render(&spec, 5, t0);
        assert_eq!(render(&spec, 5, Timestamp::from_millis(7_199_999)), a);
        let b = render(&spec, 5, Timestamp::from_millis(7_200_000));
        for y in 0..spec.height {
            for x in 0..spec.width {
                assert_eq!(a.pixel(x, y) != b.pixel(x, y), banner.contains(x, y));
            }
        }
    }

    #[test]
    fn static_pages_render_identically() {
        let opts = WorkloadOptions {
            with_dynamic: false,
            with_banners: false,
            ..WorkloadOptions::default()
        };
        let spec = generate_site(7, 3, &opts);
        assert!(spec.dynamic.is_empty());
        assert_eq!(render(&spec, 1, Timestamp(0)), render(&spec, 99, Timestamp(99_999_999)));
    }

    #[test]
    fn meta_round_trip() {
        let spec = generate_site(7, 4, &WorkloadOptions::default());
        let html = page_html(&spec, 17, Timestamp(123_456));
        assert_eq!(parse_render_meta(&html), Some((17, Timestamp(123_456))));
        assert_eq!(capture(&spec, 0, Timestamp(0)).height(), spec.captured_height());
    }
}
