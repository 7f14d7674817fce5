//! Report files: per-site CSV, size samples, JSON, and a text summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::metrics::{Distribution, RunReport, SiteReport};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    SizesCsv,
    Json,
    Text,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 4] = [ReportFormat::Csv, ReportFormat::SizesCsv, ReportFormat::Json, ReportFormat::Text];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::SizesCsv => "sizes.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Text => "summary.txt",
        }
    }
}

fn aggregate_row(report: &RunReport) -> SiteReport {
    let a = &report.aggregate;
    let sum = |f: fn(&SiteReport) -> usize| report.sites.iter().map(f).sum::<usize>();
    let n = report.sites.len().max(1) as f64;
    SiteReport {
        site: report.sites.len(),
        url: "ALL".to_owned(),
        published: a.published_sites == a.sites,
        captured_pixels: sum(|s| s.captured_pixels),
        sensitive_pixels: sum(|s| s.sensitive_pixels),
        unchanged_pct: a.unchanged_pct,
        masked_pct: a.masked_pct,
        false_negative_pct: a.false_negative_pct,
        false_positive_pct: a.false_positive_pct,
        generations: sum(|s| s.generations),
        discarded: sum(|s| s.discarded),
        discard_pct: a.discard_pct,
        contaminated: sum(|s| s.contaminated),
        contaminated_discarded: sum(|s| s.contaminated_discarded),
        clean_discarded: sum(|s| s.clean_discarded),
        posts_accepted: sum(|s| s.posts_accepted),
        ds_html_served: sum(|s| s.ds_html_served),
        snapshot_bytes_mean: report.sites.iter().map(|s| s.snapshot_bytes_mean).sum::<f64>() / n,
        links_bytes_mean: report.sites.iter().map(|s| s.links_bytes_mean).sum::<f64>() / n,
        ds_html_bytes: None,
    }
}

pub fn render_csv(report: &RunReport) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &report.sites {
        w.serialize(s)?;
    }
    w.serialize(aggregate_row(report))?;
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

pub fn render_sizes_csv(report: &RunReport) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["component", "bytes"])?;
    let s = &report.sizes.samples;
    for (name, v) in [
        ("snapshot", &s.snapshot),
        ("links", &s.links),
        ("url", &s.url),
        ("post_wire", &s.post_wire),
        ("ds_html", &s.ds_html),
    ] {
        for b in v {
            w.write_record([name, &b.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

fn dist_line(out: &mut String, name: &str, d: &Distribution) {
    let _ = writeln!(
        out,
        "  {name:<10} n={:<5} min={:<7} p50={:<7} p90={:<7} max={:<7} mean={:.1}",
        d.count, d.min, d.p50, d.p90, d.max, d.mean
    );
}

pub fn render_text(report: &RunReport) -> String {
    let a = &report.aggregate;
    let c = &report.counters;
    let mut out = String::new();
    let _ = writeln!(out, "sites: {} ({} with a published snapshot)", a.sites, a.published_sites);
    let _ = writeln!(out, "pixels (published sites, % of captured area):");
    let _ = writeln!(
        out,
        "  unchanged {:.2}  masked {:.2}  false-neg {:.2}  false-pos {:.2}  discards {:.2}",
        a.unchanged_pct, a.masked_pct, a.false_negative_pct, a.false_positive_pct, a.discard_pct
    );
    let _ = writeln!(out, "sizes (bytes):");
    dist_line(&mut out, "snapshot", &report.sizes.snapshot);
    dist_line(&mut out, "links", &report.sizes.links);
    dist_line(&mut out, "url", &report.sizes.url);
    dist_line(&mut out, "post", &report.sizes.post_wire);
    dist_line(&mut out, "ds-html", &report.sizes.ds_html);
    let _ = writeln!(
        out,
        "hook: script {} bytes, +{} bytes on each of {} injected pages",
        report.hook.script_bytes, report.hook.block_bytes, report.hook.injected_pages
    );
    let _ = writeln!(
        out,
        "requests: {} pages ({} origin, {} interstitial), {} pre-render fetches",
        c.page_requests,
        c.origin_pages - c.prerender_fetches,
        c.ds_html_pages,
        c.prerender_fetches
    );
    let _ = writeln!(
        out,
        "posts: {} sent, {} accepted, {} adversarial; generations: {} published, {} discarded",
        c.posts_sent, c.posts_accepted, c.adversarial_posts, c.generations_published, c.generations_discarded
    );
    let _ = writeln!(out, "properties:");
    for p in &report.properties {
        let _ = writeln!(out, "  {} {}: {}", if p.pass { "PASS" } else { "FAIL" }, p.name, p.detail);
    }
    out
}

pub fn render(report: &RunReport, format: ReportFormat) -> Result<Vec<u8>, ReportError> {
    Ok(match format {
        ReportFormat::Csv => render_csv(report)?,
        ReportFormat::SizesCsv => render_sizes_csv(report)?,
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report)?;
            v.push(b'\n');
            v
        }
        ReportFormat::Text => render_text(report).into_bytes(),
    })
}

/// Write one report file into `dir`; returns its path.
pub fn emit_report(report: &RunReport, format: ReportFormat, dir: &Path) -> Result<PathBuf, ReportError> {
    let path = dir.join(format.file_name());
    let bytes = render(report, format)?;
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_owned(), source })?;
    std::fs::write(&path, bytes).map_err(|source| ReportError::Io { path: path.clone(), source })?;
    Ok(path)
}

pub fn emit_all(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    ReportFormat::ALL.iter().map(|f| emit_report(report, *f, dir)).collect()
}
