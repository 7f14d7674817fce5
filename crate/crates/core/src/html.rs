//! Interstitial page generation.
//!
//! A DS HTML document is self-contained: the desensitized snapshot is inlined
//! as a data URI so the page costs a single request-response cycle. Links are
//! overlaid with an image map, the real page is hinted for pre-rendering via a
//! tokenized URL, and a small script flips to that URL once pre-rendering
//! signals completion.

use std::fmt::Write as _;
use std::sync::Arc;

use base64::Engine as _;
use thiserror::Error;

use crate::clock::Timestamp;
use crate::desensitizer::Desensitization;
use crate::model::{encode_png, LinkRect};
use crate::proxy::token::tokenize_url;

/// Template revision embedded in the generator; bump when the markup changes.
pub const TEMPLATE_VERSION: u32 = 1;
const TEMPLATE: &str = include_str!("../templates/ds_html_v1.html");

pub const CONTENT_TYPE: &str = "text/html; charset=utf-8";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HtmlError {
    #[error("cannot generate a page from a discarded batch")]
    Discarded,
}

/// A generated interstitial page.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DsHtmlDocument {
    pub html: Arc<[u8]>,
    pub original_url: String,
    pub generated_at: Timestamp,
    pub ttl_seconds: u64,
    /// Length of the base64 image payload inside `html`.
    pub image_base64_len: usize,
    /// Length of the rendered `<area>` elements inside `html`.
    pub areas_len: usize,
    pub area_count: usize,
}

impl DsHtmlDocument {
    pub fn expires_at(&self) -> Timestamp {
        self.generated_at.plus(std::time::Duration::from_secs(self.ttl_seconds))
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        now > self.expires_at()
    }

    /// Bytes of the document that are neither image nor clickmap.
    pub fn template_overhead(&self) -> usize {
        self.html.len() - self.image_base64_len - self.areas_len
    }
}

pub struct GenerateParams<'a> {
    pub links: &'a [LinkRect],
    pub viewport_height: u32,
    pub original_url: &'a str,
    pub token_name: &'a str,
    pub ttl_seconds: u64,
}

/// Links that fall entirely inside the captured part of the page, with their
/// horizontal extent clamped to the raster width. The captured part ends at
/// `min(raster_height, 2 × viewport_height)`.
pub fn filter_links(links: &[LinkRect], raster_width: u32, raster_height: u32, viewport_height: u32) -> Vec<LinkRect> {
    let limit = u64::from(raster_height).min(2 * u64::from(viewport_height));
    links
        .iter()
        .filter(|l| u64::from(l.bottom) <= limit)
        .filter_map(|l| l.clamp_to_width(raster_width))
        .collect()
}

pub(crate) fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}

/// Single-pass `{{name}}` substitution, so substituted values are never
/// re-scanned for placeholders.
fn render(template: &str, lookup: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").expect("unterminated placeholder in template");
        let name = &after[..end];
        out.push_str(&lookup(name).unwrap_or_else(|| panic!("unknown placeholder {name}")));
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

pub fn generate(image: &Desensitization, params: &GenerateParams<'_>) -> Result<DsHtmlDocument, HtmlError> {
    let Desensitization::Published(image) = image else {
        return Err(HtmlError::Discarded);
    };
    let (width, height) = image.raster.dimensions();
    let retained = filter_links(params.links, width, height, params.viewport_height);

    let mut areas = String::new();
    for l in &retained {
        let _ = writeln!(
            areas,
            "<area shape=\"rect\" coords=\"{},{},{},{}\" href=\"{}\" alt=\"\">",
            l.left,
            l.top,
            l.right,
            l.bottom,
            escape_attr(&l.url)
        );
    }
    let b64 = base64::engine::general_purpose::STANDARD.encode(encode_png(&image.raster));
    let prerender = tokenize_url(params.original_url, params.token_name);

    let html = render(TEMPLATE, |name| {
        Some(match name {
            "title" => escape_attr(params.original_url),
            "prerender_href" => escape_attr(&prerender),
            "image_base64" => b64.clone(),
            "width" => width.to_string(),
            "height" => height.to_string(),
            "areas" => areas.clone(),
            _ => return None,
        })
    });

    Ok(DsHtmlDocument {
        html: Arc::from(html.into_bytes()),
        original_url: params.original_url.to_owned(),
        generated_at: image.generated_at,
        ttl_seconds: params.ttl_seconds,
        image_base64_len: b64.len(),
        areas_len: areas.len(),
        area_count: retained.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desensitizer::{DesensitizedImage, Mask};
    use crate::model::Raster;

    fn image(w: u32, h: u32) -> Desensitization {
        Desensitization::Published(DesensitizedImage {
            raster: Raster::filled(w, h, [255, 255, 255, 255]),
            mask: Mask::empty(w, h),
            source_count: 3,
            generated_at: Timestamp(1_000),
            regions: vec![],
        })
    }

    fn link(l: u32, t: u32, r: u32, b: u32) -> LinkRect {
        LinkRect::new("http://www.a.com/p", l, t, r, b).unwrap()
    }

    fn params<'a>(links: &'a [LinkRect]) -> GenerateParams<'a> {
        GenerateParams {
            links,
            viewport_height: 640,
            original_url: "http://www.a.com/?a=1&b=2",
            token_name: "__ds_prerender",
            ttl_seconds: 7200,
        }
    }

    #[test]
    fn filter_boundaries() {
        assert_eq!(filter_links(&[link(0, 10, 5, 99)], 100, 100, 640), vec![link(0, 10, 5, 99)]);
        assert_eq!(filter_links(&[link(0, 10, 5, 100)], 100, 100, 640).len(), 1);
        assert!(filter_links(&[link(0, 10, 5, 101)], 100, 100, 640).is_empty());
        assert!(filter_links(&[link(0, 1280, 5, 1300)], 360, 2000, 640).is_empty());
        assert!(filter_links(&[], 10, 10, 10).is_empty());
        assert_eq!(filter_links(&[link(300, 0, 400, 5)], 360, 100, 640), vec![link(300, 0, 360, 5)]);
        // order preserved
        let ls = [link(0, 50, 5, 60), link(0, 10, 5, 20)];
        assert_eq!(filter_links(&ls, 10, 100, 640), ls.to_vec());
    }

    #[test]
    fn document_structure() {
        let links = [link(0, 0, 10, 10), link(20, 30, 40, 50)];
        let doc = generate(&image(64, 64), &params(&links)).unwrap();
        let html = std::str::from_utf8(&doc.html).unwrap();
        assert_eq!(html.matches("<area ").count(), 2);
        assert!(html.contains("coords=\"20,30,40,50\""));
        assert_eq!(html.matches("<img ").count(), 1);
        assert_eq!(html.matches("<map ").count(), 1);
        assert!(html.contains("href=\"http://www.a.com/?a=1&amp;b=2&amp;__ds_prerender=1\""));
        assert_eq!(doc.area_count, 2);
        assert!(doc.template_overhead() < 8 * 1024);
        assert!(!html.contains("{{"));
    }

    #[test]
    fn empty_map_and_omitted_links() {
        let doc = generate(&image(64, 64), &params(&[])).unwrap();
        assert_eq!(doc.area_count, 0);
        let links = [link(0, 1280, 10, 1290)];
        let doc = generate(&image(64, 2000), &params(&links)).unwrap();
        assert_eq!(doc.area_count, 0);
    }

    #[test]
    fn discarded_batch_is_an_error() {
        let d = Desensitization::Discarded { fraction: 0.9 };
        assert_eq!(generate(&d, &params(&[])), Err(HtmlError::Discarded));
    }

    #[test]
    fn expiry_is_strict() {
        let doc = generate(&image(4, 4), &params(&[])).unwrap();
        assert!(!doc.is_expired(Timestamp(1_000 + 7_200_000)));
        assert!(doc.is_expired(Timestamp(1_000 + 7_200_001)));
    }

    #[test]
    fn placeholders_in_values_are_not_expanded() {
        let mut p = params(&[]);
        p.original_url = "http://www.a.com/?x={{areas}}";
        let doc = generate(&image(4, 4), &p).unwrap();
        let html = std::str::from_utf8(&doc.html).unwrap();
        assert!(html.contains("x={{areas}}"));
    }

    #[test]
    fn deterministic() {
        let links = [link(1, 2, 3, 4)];
        assert_eq!(generate(&image(8, 8), &params(&links)), generate(&image(8, 8), &params(&links)));
    }
}
