use std::path::PathBuf;

use ds_core::model::{decode_png, encode_png};
use ds_core::Timestamp;
use ds_harness::render::{capture, render};
use ds_harness::workload::{generate_site, WorkloadOptions};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Set `DS_BLESS=1` to rewrite the golden files.
fn compare(name: &str, raster: &ds_core::model::Raster) {
    let path = golden(name);
    if std::env::var_os("DS_BLESS").is_some() {
        std::fs::write(&path, encode_png(raster)).unwrap();
    }
    let want = decode_png(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(&want, raster, "{name} drifted");
}

#[test]
fn rasterizer_is_pinned() {
    let spec = generate_site(2024, 0, &WorkloadOptions::default());
    compare("site0_r3_t0.png", &render(&spec, 3, Timestamp(0)));
    compare("site0_r4_t0.png", &render(&spec, 4, Timestamp(0)));
    compare("site0_r3_capture.png", &capture(&spec, 3, Timestamp(8_000_000)));
}

#[test]
fn golden_renders_differ_on_dynamic_pixels_only() {
    let a = decode_png(&std::fs::read(golden("site0_r3_t0.png")).unwrap()).unwrap();
    let b = decode_png(&std::fs::read(golden("site0_r4_t0.png")).unwrap()).unwrap();
    let spec = generate_site(2024, 0, &WorkloadOptions::default());
    let mut differing = 0;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let d = a.pixel(x, y) != b.pixel(x, y);
            assert_eq!(d, spec.is_sensitive(x, y));
            differing += usize::from(d);
        }
    }
    let labelled: u64 = spec.sensitive().map(|r| r.area()).sum();
    assert_eq!(differing as u64, labelled);
    // untouched background keeps its fixed colour
    assert_eq!(a.pixel(spec.width - 1, 9), [250, 250, 250, 255]);
}
