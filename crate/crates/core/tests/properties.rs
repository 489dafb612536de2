use proptest::prelude::*;

use ccgof::analysis::{BandSpec, Transform};
use ccgof::calibrate::{lower_quantile, upper_quantile, CalibrationKey, CalibrationTable, StatKind};
use ccgof::ccurve::{empirical_cc_composite, empirical_cc_simple, empirical_cc_simple_haar, NullMode, Sample};
use ccgof::dyadic::{dim, DyadicGrid};
use ccgof::gofstats::{bcmr_stat, competitor_stat, select_level, Competitor};
use ccgof::ccurve::NullSpec;
use ccgof::refmodels::ReferenceCdf;

fn unit_sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0005f64..0.9995, 8..120)
}

fn real_sample() -> impl Strategy<Value = Vec<f64>> {
    // a spread-out sample; constant samples are degenerate
    prop::collection::vec(-50.0f64..50.0, 10..100).prop_filter("needs spread", |v| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo > 1e-3
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_is_nondecreasing(u in unit_sample(), level in 1u32..8) {
        let s = Sample::new(u).unwrap();
        let series = empirical_cc_simple(&s, &ReferenceCdf::Uniform01, &DyadicGrid::new(level).unwrap(), level).unwrap();
        let prof = series.chi2_profile();
        prop_assert_eq!(prof.len(), level as usize + 1);
        for w in prof.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        let total: f64 = series.bars.iter().map(|b| b * b).sum();
        prop_assert!((prof[level as usize] - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn haar_coefficients_equal_bars(u in unit_sample(), level in 1u32..7) {
        let s = Sample::new(u).unwrap();
        let g = DyadicGrid::new(level).unwrap();
        let a = empirical_cc_simple(&s, &ReferenceCdf::Uniform01, &g, level).unwrap();
        let b = empirical_cc_simple_haar(&s, &ReferenceCdf::Uniform01, &g, level).unwrap();
        for (x, y) in a.bars.iter().zip(&b.bars) {
            prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }

    #[test]
    fn selection_matches_brute_force(p in prop::collection::vec(0.0f64..30.0, 1..9), a in 0.0f64..8.0) {
        let mut prof = p.clone();
        for i in 1..prof.len() {
            prof[i] += prof[i - 1];
        }
        let s = select_level(&prof, a) as usize;
        let val = |k: usize| prof[k] - a * dim(k as u32) as f64;
        for k in 0..prof.len() {
            prop_assert!(val(k) <= val(s));
            if k < s {
                prop_assert!(val(k) < val(s));
            }
        }
    }

    #[test]
    fn composite_statistics_affine_invariant(x in real_sample(), scale in 0.1f64..20.0, shift in -100.0f64..100.0) {
        let s = Sample::new(x.clone()).unwrap();
        let t = s.map(|v| scale * v + shift).unwrap();
        let g = DyadicGrid::new(4).unwrap();
        let a = empirical_cc_composite(&s, &g, 4).unwrap();
        let b = empirical_cc_composite(&t, &g, 4).unwrap();
        for (x, y) in a.bars.iter().zip(&b.bars) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((bcmr_stat(&s).unwrap() - bcmr_stat(&t).unwrap()).abs() < 1e-10);
        for c in Competitor::ALL {
            let u = competitor_stat(&s, c, &NullSpec::CompositeGaussian).unwrap();
            let v = competitor_stat(&t, c, &NullSpec::CompositeGaussian).unwrap();
            prop_assert!((u - v).abs() < 1e-10 * u.abs().max(1.0), "{}: {} vs {}", c, u, v);
        }
    }

    #[test]
    fn quantiles_follow_order_statistics(v in prop::collection::vec(-10.0f64..10.0, 20..400), alpha in 0.01f64..0.3) {
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let m = v.len();
        let k = ((1.0 - alpha) * (m as f64 + 1.0) - 1e-9).ceil() as usize;
        prop_assume!(k >= 1 && k <= m);
        prop_assert_eq!(upper_quantile(&v, alpha).unwrap(), sorted[k - 1]);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        prop_assert_eq!(lower_quantile(&v, alpha).unwrap(), -upper_quantile(&neg, alpha).unwrap());
    }

    #[test]
    fn table_text_round_trip(vals in prop::collection::vec(-1e3f64..1e3, 1..12), n0 in 10usize..500) {
        let mut t = CalibrationTable::new();
        let stats = [StatKind::M, StatKind::P, StatKind::A, StatKind::AD, StatKind::Upper(2, 5), StatKind::Lower(1, 3)];
        for (i, &v) in vals.iter().enumerate() {
            let key = CalibrationKey::new(n0 + i, 0.05, 4, NullMode::Composite, stats[i % stats.len()], 25_000, i as u64);
            t.insert(key, v);
        }
        let back = CalibrationTable::from_text(&t.to_text()).unwrap();
        let a: Vec<_> = t.entries().map(|(k, v)| (*k, v.to_bits())).collect();
        let b: Vec<_> = back.entries().map(|(k, v)| (*k, v.to_bits())).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn band_and_transform_round_trip(r in 1usize..60, len in 0usize..20, upper in any::<bool>(), theta in 0.01f64..1e4) {
        let side = if upper { "upper" } else { "lower" };
        let text = format!("{}:{}:{}", r, r + len, side);
        let b: BandSpec = text.parse().unwrap();
        prop_assert_eq!(b.to_string(), text);
        let t = Transform::Scale { theta };
        prop_assert_eq!(t.to_string().parse::<Transform>().unwrap(), t);
    }
}

#[test]
fn cvm_on_equally_spaced_points() {
    for n in [1usize, 5, 50, 333] {
        let u: Vec<f64> = (1..=n).map(|i| (2 * i - 1) as f64 / (2 * n) as f64).collect();
        let v = ccgof::gofstats::cramer_von_mises(&u);
        assert!((v - 1.0 / (12.0 * n as f64)).abs() < 1e-15, "n={n}");
    }
}
