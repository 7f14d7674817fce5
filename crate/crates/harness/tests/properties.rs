use ds_core::desensitizer::diff_mask;
use ds_core::Timestamp;
use ds_harness::client::{assign_clients, ClientMix, Connection};
use ds_harness::render::{capture, page_html, parse_render_meta, render};
use ds_harness::workload::{generate_site, DynamicKind, WorkloadOptions};
use proptest::prelude::*;

const T0: u64 = 1_700_000_000_000;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_sites_are_valid(seed in any::<u64>(), index in 0usize..500) {
        let opts = WorkloadOptions::default();
        let spec = generate_site(seed, index, &opts);
        prop_assert!(spec.validate().is_ok(), "{:?}", spec.validate());
        prop_assert!(spec.dynamic_fraction() <= opts.max_dynamic_fraction + 1e-9);
        for l in &spec.links {
            prop_assert!(l.right <= spec.width && l.bottom <= spec.height);
        }
        prop_assert_eq!(generate_site(seed, index, &opts), spec);
    }

    #[test]
    fn renders_differ_exactly_on_per_request_regions(seed in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assume!(a != b);
        let spec = generate_site(seed, 0, &WorkloadOptions::default());
        let at = Timestamp(T0);
        let mask = diff_mask(&capture(&spec, a, at), &capture(&spec, b, at)).unwrap();
        let (w, h) = mask.dimensions();
        for y in 0..h {
            for x in 0..w {
                prop_assert_eq!(mask.get(x, y), spec.is_sensitive(x, y), "pixel ({}, {})", x, y);
            }
        }
    }

    #[test]
    fn banners_follow_their_schedule(seed in any::<u64>(), offset in 0u64..7_200_000) {
        let spec = generate_site(seed, 1, &WorkloadOptions::default());
        let Some(banner) = spec.dynamic.iter().find(|d| matches!(d.kind, DynamicKind::Scheduled { .. })) else {
            return Ok(());
        };
        let DynamicKind::Scheduled { period_secs } = banner.kind else { unreachable!() };
        let start = Timestamp((T0 / (period_secs * 1000)) * period_secs * 1000);
        let same = Timestamp(start.0 + offset % (period_secs * 1000));
        let next = Timestamp(start.0 + period_secs * 1000);
        let (x, y) = (banner.rect.left, banner.rect.top);
        prop_assert_eq!(render(&spec, 0, start).pixel(x, y), render(&spec, 0, same).pixel(x, y));
        prop_assert_ne!(render(&spec, 0, start).pixel(x, y), render(&spec, 0, next).pixel(x, y));
    }

    #[test]
    fn render_meta_round_trips(seed in any::<u64>(), index in any::<u64>(), at in 0u64..u64::MAX / 2) {
        let spec = generate_site(seed, 2, &WorkloadOptions::default());
        let html = page_html(&spec, index, Timestamp(at));
        prop_assert_eq!(parse_render_meta(&html), Some((index, Timestamp(at))));
    }

    #[test]
    fn client_mix_counts_are_exact(
        sites in 1usize..40,
        per_site in 1usize..8,
        adv in 0.0f64..0.5,
        cell in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let mix = ClientMix { clients_per_site: per_site, adversary_rate: adv, cellular_rate: cell, seed };
        let clients = assign_clients(sites, &mix);
        let total = sites * per_site;
        prop_assert_eq!(clients.len(), total);
        let n_adv = clients.iter().filter(|c| c.adversary).count();
        let n_cell = clients.iter().filter(|c| c.connection == Connection::Cellular).count();
        prop_assert_eq!(n_adv, (adv * total as f64).round() as usize);
        prop_assert_eq!(n_cell, (cell * total as f64).round() as usize);
        prop_assert!(clients.iter().all(|c| !(c.adversary && c.connection == Connection::Cellular)));
        for s in 0..sites {
            prop_assert_eq!(clients.iter().filter(|c| c.site == s).count(), per_site);
        }
        prop_assert_eq!(assign_clients(sites, &mix), clients);
    }
}
