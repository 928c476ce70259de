mod common;

use common::{close, Law};
use mpedge::error::Error;
use mpedge::extremal::*;
use mpedge::freeconv;
use mpedge::measure::{JacobiMeasure, Profile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D_PLUS_F1: f64 = 0.703908;

fn f1_weibull() -> WeibullParams<f64> {
    WeibullParams::new(&JacobiMeasure::f1(), 1.5, 2000).unwrap()
}

#[test]
fn weibull_cdf_limits() {
    let p = f1_weibull();
    assert_eq!(weibull_cdf(&p, 0.0), 0.0);
    assert_eq!(weibull_cdf(&p, -3.0), 0.0);
    assert!(weibull_cdf(&p, 1e3) > 1.0 - 1e-6);
}

#[test]
fn weibull_median_closed_form() {
    let p = f1_weibull();
    // C_ν s⁴ / 4 = ln 2
    let s = (4.0 * 2f64.ln() / p.c_nu).powf(0.25);
    assert!((weibull_cdf(&p, s) - 0.5).abs() < 1e-14);
    assert!((p.quantile(0.5) - s).abs() < 1e-14);
}

#[test]
fn c_nu_f1_against_quadrature() {
    let law = Law::f1();
    let oracle = (1.5 / (1.5 - D_PLUS_F1)).powi(4) * 1f64.exp() / law.z;
    let m = JacobiMeasure::f1();
    let d_plus = freeconv::compute_d_plus(&m).unwrap();
    assert!(close(c_nu(&m, 1.5, d_plus).unwrap(), oracle, 1e-5));
    assert!(close(f1_weibull().c_nu, oracle, 1e-5));
}

#[test]
fn c_nu_constant_profile_limit() {
    let m = JacobiMeasure::new(3.0, 0.2, Profile::Constant, 128).unwrap();
    let z = 0.8f64.powi(4) / 4.0;
    let c = c_nu(&m, 2.0, 1.0).unwrap();
    assert!(close(c / 2f64.powi(4), 1.0 / z, 1e-12));
}

#[test]
fn c_nu_power_law_in_gap() {
    let m = JacobiMeasure::f1();
    let a = c_nu(&m, 1.5, 1.3).unwrap();
    let b = c_nu(&m, 1.5, 1.1).unwrap();
    assert!(close(a / b, 16.0, 1e-12));
}

#[test]
fn regime_gating() {
    let m = JacobiMeasure::f1();
    assert!(matches!(c_nu(&m, 0.5, D_PLUS_F1), Err(Error::Regime(_))));
    assert!(matches!(WeibullParams::new(&m, 0.5, 100), Err(Error::Regime(_))));
    assert!(matches!(gaussian_reference(&m, 1.5), Err(Error::Regime(_))));
    assert!(matches!(WeibullParams::new(&JacobiMeasure::f2(), 1.5, 100), Err(Error::Regime(_))));
    assert!(check_regime(&m, 1.5, Mode::Weibull).is_ok());
    assert!(check_regime(&m, 1.5, Mode::Gaussian).is_err());
    assert!(check_regime(&m, 0.5, Mode::Gaussian).is_ok());
}

#[test]
fn rescaling_unit_points() {
    let m = 2000;
    let l_plus = 1.37;
    let kappa = (m as f64).powf(-0.25);
    let s = rescale_supercritical(&[l_plus, l_plus - kappa], l_plus, m, 3.0);
    assert_eq!(s[0], 0.0);
    assert!((s[1] - 1.0).abs() < 1e-12);
    assert_eq!(order_statistic_reference(&[1.0], 0.53, m, 3.0)[0], 0.0);
}

#[test]
fn gaussian_variance_against_quadrature() {
    let m = JacobiMeasure::f1();
    let g = gaussian_reference(&m, 0.5).unwrap();
    assert!(g.variance > 0.0 && g.tau < -1.0);
    let law = Law::f1();
    // τ* from an independent bisection on d⁻¹ ∫ t² / (τ + t)² dν = 1
    let h = |tau: f64| law.expect(|t| t * t / ((tau + t) * (tau + t))) / 0.5 - 1.0;
    let (mut lo, mut hi) = (-3.0, -1.0 - 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    assert!(close(g.tau, tau, 1e-9));
    let first = law.expect(|t| t * tau / (t + tau));
    let second = law.expect(|t| (t * tau / (t + tau)).powi(2));
    let v = (second - first * first) / 0.25;
    assert!(close(g.variance, v, 1e-8), "{} vs {v}", g.variance);
}

#[test]
fn gaussian_variance_vanishes_for_near_atom() {
    let wide = JacobiMeasure::new(2.0, 0.3, Profile::Constant, 128).unwrap();
    let narrow = JacobiMeasure::new(2.0, 0.999, Profile::Constant, 128).unwrap();
    let narrower = JacobiMeasure::new(2.0, 0.9999, Profile::Constant, 128).unwrap();
    let vw: f64 = gaussian_reference(&wide, 0.5).unwrap().variance;
    let vn: f64 = gaussian_reference(&narrow, 0.5).unwrap().variance;
    let vnn = gaussian_reference(&narrower, 0.5).unwrap().variance;
    assert!(vn < 1e-5 * vw, "narrow {vn} wide {vw}");
    // width² scaling
    assert!((vn / vnn - 100.0).abs() < 5.0, "ratio {}", vn / vnn);
}

#[test]
fn ks_self_consistency() {
    let p = f1_weibull();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<f64> = (0..10_000).map(|_| p.quantile(rng.random::<f64>())).collect();
    let ks = ks_distance(&samples, |s| weibull_cdf(&p, s)).unwrap();
    assert!(ks < 0.02, "KS = {ks}");
}

#[test]
fn ks_constant_sample_closed_form() {
    let g = GaussianParams { mean: 0.0f64, variance: 1.0, tau: -2.0, l_plus: 0.0 };
    for c in [-0.7, 0.0, 1.3] {
        let f = g.cdf(c);
        let ks = ks_distance(&[c; 5], |x| g.cdf(x)).unwrap();
        assert!((ks - f.max(1.0 - f)).abs() < 1e-15);
    }
    assert!(ks_distance::<f64>(&[], |x| x).is_err());
}

#[test]
fn order_statistic_law_of_population_extremes() {
    // C_d M^{1/4} (1 - σ_(γ)) over i.i.d. draws against the Poisson-process limit
    let m = JacobiMeasure::f1();
    let edge = freeconv::edge(&m, 1.5).unwrap();
    let c_d = edge.c_d.unwrap();
    let p = WeibullParams::new(&m, 1.5, 4000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tops: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for _ in 0..400 {
        let mut s: Vec<f64> = m.sample_with(&mut rng, 4000);
        s.sort_by(|a, b| b.total_cmp(a));
        for g in 0..3 {
            tops[g].push(s[g]);
        }
    }
    for (g, top) in tops.iter().enumerate() {
        let r = order_statistic_reference(top, c_d, 4000, 3.0);
        let ks = ks_distance(&r, |s| weibull_order_cdf(&p, g + 1, s)).unwrap();
        assert!(ks < 0.15, "gamma {}: KS {ks}", g + 1);
    }
}

#[test]
fn m23_single_and_median() {
    assert!((m23_gap_check(&[1.0f64], &[1.01], 1000).unwrap() - 0.01 * 100.0).abs() < 1e-9);
    assert!(m23_gap_check::<f64>(&[1.0, 2.0], &[1.0], 8).is_err());
}

#[test]
fn report_formats_key_values() {
    let r = TestReport {
        mode: Mode::Weibull,
        sample_count: 10,
        ks_statistic: 0.1,
        location_errors: vec![(1, 0.01)],
        verdicts: vec![Verdict::at_most("ks", 0.1, 0.2)],
    };
    let s = r.to_string();
    assert!(s.starts_with("mode=weibull samples=10 ks=0.1 loc_err_1=0.01"));
    assert!(s.ends_with("pass=true"));
    assert!(!s.contains('\n'));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weibull_cdf_monotone(c in 0.1f64..500.0, beta in 1.1f64..6.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let p = WeibullParams { shape: beta + 1.0, c_nu: c, m: 100, c_d: 0.5 };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(weibull_cdf(&p, lo) <= weibull_cdf(&p, hi));
        prop_assert!((0.0..=1.0).contains(&weibull_cdf(&p, hi)));
    }

    #[test]
    fn c_nu_invariant_under_profile_scaling(c0 in 0.2f64..3.0, c1 in 0.0f64..2.0, beta in 1.5f64..4.0) {
        let f = JacobiMeasure::new(beta, 0.1, Profile::Polynomial(vec![c0, c1]), 96).unwrap();
        let g = JacobiMeasure::new(beta, 0.1, Profile::Polynomial(vec![2.0 * c0, 2.0 * c1]), 96).unwrap();
        let a = c_nu(&f, 3.0, 1.0).unwrap();
        let b = c_nu(&g, 3.0, 1.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn affine_maps_round_trip(lams in proptest::collection::vec(0.5f64..2.0, 1..20), m in 10usize..5000, beta in 1.1f64..5.0) {
        let l_plus = 2.1;
        let s = rescale_supercritical(&lams, l_plus, m, beta);
        let scale = (m as f64).powf(1.0 / (beta + 1.0));
        for (x, y) in lams.iter().zip(&s) {
            prop_assert!((l_plus - y / scale - x).abs() <= 1e-14 * 4.0);
        }
        let r = order_statistic_reference(&lams, 0.4, m, beta);
        for (x, y) in lams.iter().zip(&r) {
            prop_assert!((1.0 - y / (0.4 * scale) - x).abs() <= 1e-14 * 4.0);
        }
    }

    #[test]
    fn gaussian_variance_nonnegative(beta in 0.2f64..4.0, l in 0.05f64..0.8, d in 0.05f64..0.6) {
        let m = JacobiMeasure::new(beta, l, Profile::Exponential, 96).unwrap();
        if let Ok(g) = gaussian_reference(&m, d) {
            prop_assert!(g.variance >= 0.0);
        }
    }
}
