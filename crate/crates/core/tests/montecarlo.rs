//! Sampler/CDF coherence and null-distribution moments checked by
//! simulation. Seeds are fixed, tolerances are several standard errors.

use ccgof::alternatives::AltSpec;
use ccgof::calibrate::NullEnsemble;
use ccgof::ccurve::NullMode;
use ccgof::dyadic::dim;

/// DKW: P(sup|F̂ − F| > ε) ≤ 2exp(−2nε²); ε for a 1e-4 false-alarm rate.
fn dkw_eps(n: usize) -> f64 {
    ((2.0f64 / 1e-4).ln() / (2.0 * n as f64)).sqrt()
}

fn ks_distance(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn all_specs() -> Vec<AltSpec> {
    let thetas: &[(&str, f64)] = &[
        ("A1_0", 0.3), ("A2_0", 1.5), ("A3_0", 0.5), ("A4_0", 0.3), ("A5_0", 0.15), ("A6_0", 0.3),
        ("A7_0", 2.0), ("A8_0", 0.5), ("A9_0", 0.3), ("A1", 0.14), ("A2", 0.7), ("A3", 0.5), ("A4", 0.4),
        ("A5", 0.3), ("A6", 0.4), ("A7", 2.0), ("A8", 3.5), ("A9", 0.1),
    ];
    thetas.iter().map(|&(id, t)| AltSpec::new(id, t).unwrap_or_else(|e| panic!("{id}: {e}"))).collect()
}

#[test]
fn samplers_agree_with_their_cdfs() {
    let specs = all_specs();
    assert_eq!(specs.len(), 18);
    let n = 20_000;
    for (k, spec) in specs.iter().enumerate() {
        let mut x = spec.sample(n, 100 + k as u64);
        x.sort_by(f64::total_cmp);
        let d = ks_distance(&x, |v| spec.cdf(v));
        assert!(d < dkw_eps(n), "{spec}: sup|F̂ − F| = {d}");
    }
}

#[test]
fn theta_zero_matches_standard_normal_two_sample() {
    // two-sample KS at level 1e-4: c(α)·√((n+m)/(nm))
    let n = 5000;
    let crit = ((2.0f64 / 1e-4).ln() / 2.0).sqrt() * (2.0 / n as f64).sqrt();
    let mut z = AltSpec::gaussian(0.0, 1.0).unwrap().sample(n, 999);
    z.sort_by(f64::total_cmp);
    let mut checked = 0;
    for id in ["A2_0", "A3_0", "A4_0", "A5_0", "A6_0", "A9_0", "A2", "A3", "A4", "A5", "A9"] {
        let Ok(spec) = AltSpec::new(id, 0.0) else { continue };
        let mut x = spec.sample(n, 7);
        x.sort_by(f64::total_cmp);
        let ecdf = |v: f64| z.partition_point(|&w| w <= v) as f64 / n as f64;
        let d = ks_distance(&x, ecdf);
        assert!(d < crit, "{id} at θ=0: D = {d}, critical {crit}");
        checked += 1;
    }
    assert!(checked >= 6);
}

#[test]
fn simple_bars_have_unit_variance() {
    // √n(p − F̂(p))/√(p(1−p)) is a standardized binomial: mean 0, variance 1
    let reps = 20_000;
    let ens = NullEnsemble::new(80, NullMode::Simple, 3, reps, 42).unwrap();
    let rows = ens.map(|r| r.bars.to_vec());
    for j in 0..dim(3) {
        let v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = v.iter().sum::<f64>() / reps as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!(m.abs() < 0.04, "bar {j}: mean {m}");
        assert!((var - 1.0).abs() < 0.05, "bar {j}: variance {var}");
    }
}

#[test]
fn composite_bars_match_durbin_variance() {
    // bars are divided by the Durbin σ(p), so their variance tends to 1
    let reps = 20_000;
    let ens = NullEnsemble::new(400, NullMode::Composite, 2, reps, 43).unwrap();
    let rows = ens.map(|r| r.bars.to_vec());
    for j in 0..dim(2) {
        let v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = v.iter().sum::<f64>() / reps as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!(m.abs() < 0.05, "bar {j}: mean {m}");
        assert!((var - 1.0).abs() < 0.07, "bar {j}: variance {var}");
    }
}

#[test]
fn composite_ensemble_ignores_generator_location_scale() {
    let base = NullEnsemble::new(60, NullMode::Composite, 4, 500, 5).unwrap();
    let moved = NullEnsemble::new(60, NullMode::Composite, 4, 500, 5).unwrap().with_generator(-3.0, 12.5);
    let a = base.map(|r| r.bars.to_vec());
    let b = moved.map(|r| r.bars.to_vec());
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[cfg(feature = "parallel")]
#[test]
fn worker_count_does_not_change_results() {
    let ens = NullEnsemble::new(50, NullMode::Composite, 4, 3000, 77).unwrap();
    let digests: Vec<String> = [1, 4, 16]
        .iter()
        .map(|&k| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
            pool.install(|| ens.digest(|r| r.bars.iter().map(|b| b * b).sum()))
        })
        .collect();
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[0], digests[2]);
}
