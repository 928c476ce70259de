use faer::Mat;
use mpedge::empirical::{OmegaConfig, OmegaContext};
use mpedge::ensemble::*;
use mpedge::error::Error;
use mpedge::extremal::ks_two_sample;
use mpedge::freeconv::{self, SpectralPoint};
use mpedge::measure::JacobiMeasure;
use num_complex::Complex64;
use proptest::prelude::*;

fn identity(m: usize, n: usize, seed: u64) -> SampleSpec {
    SampleSpec::new(m, n, SigmaSource::Explicit(vec![1.0; m]), seed)
}

fn f1_spec(m: usize, d: f64, seed: u64) -> SampleSpec {
    SampleSpec::with_ratio(m, d, SigmaSource::Measure(JacobiMeasure::f1()), seed)
}

#[test]
fn identity_population_hits_mp_edges() {
    let r = sample_ensemble(&identity(500, 500, 3)).unwrap();
    assert_eq!(r.lambdas.len(), 500);
    assert!((r.lambdas[0] - 4.0).abs() < 0.1, "lambda_1 = {}", r.lambdas[0]);
    assert!(r.lambdas[499].abs() < 0.1, "lambda_M = {}", r.lambdas[499]);
    assert!(r.lambdas.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn tall_case_pads_zeros() {
    // M = 2N: nonzero spectrum on [(1 - 1/√d)², (1 + 1/√d)²] with d = 1/2
    let r = sample_ensemble(&identity(800, 400, 8)).unwrap();
    let hi = (1.0 + 2f64.sqrt()).powi(2);
    let lo = (1.0 - 2f64.sqrt()).powi(2);
    assert!((r.lambdas[0] - hi).abs() < 0.15, "lambda_1 = {}", r.lambdas[0]);
    assert!((r.lambdas[399] - lo).abs() < 0.05, "lambda_N = {}", r.lambdas[399]);
    assert!(r.lambdas[400..].iter().all(|&l| l == 0.0));
    assert!(r.trace_defect() < 1e-12);
}

#[test]
fn spectrum_scales_with_population() {
    let base = sample_ensemble(&identity(120, 200, 21)).unwrap();
    let mut spec = identity(120, 200, 21);
    spec.sigma = SigmaSource::Explicit(vec![0.37; 120]);
    let scaled = sample_ensemble(&spec).unwrap();
    for (a, b) in base.lambdas.iter().zip(&scaled.lambdas) {
        assert!((0.37 * a - b).abs() <= 1e-12 * a.max(1.0));
    }
}

#[test]
fn deterministic_per_seed() {
    let a = sample_ensemble(&f1_spec(80, 1.5, 4)).unwrap();
    let b = sample_ensemble(&f1_spec(80, 1.5, 4)).unwrap();
    let c = sample_ensemble(&f1_spec(80, 1.5, 5)).unwrap();
    assert_eq!(a.lambdas, b.lambdas);
    assert_eq!(a.sigmas, b.sigmas);
    assert_ne!(a.lambdas, c.lambdas);
}

#[test]
fn entry_laws_have_unit_variance_scale() {
    for dist in [EntryDist::Gaussian, EntryDist::Rademacher, EntryDist::Uniform] {
        let mut spec = identity(300, 400, 17);
        spec.entry_dist = dist;
        let x = spec.draw_entries(17);
        let n = (300 * 400) as f64;
        let mean: f64 = (0..300).flat_map(|i| (0..400).map(move |j| (i, j))).map(|ij| x[ij]).sum::<f64>() / n;
        let var: f64 = (0..300).flat_map(|i| (0..400).map(move |j| (i, j))).map(|ij| x[ij] * x[ij]).sum::<f64>() / n;
        assert!(mean.abs() < 5e-4, "{dist}: mean {mean}");
        assert!((var * 400.0 - 1.0).abs() < 0.02, "{dist}: N var {}", var * 400.0);
        let r = sample_ensemble(&spec).unwrap();
        let edge = (1.0 + (300.0f64 / 400.0).sqrt()).powi(2);
        assert!((r.lambdas[0] - edge).abs() < 0.15, "{dist}: lambda_1 {}", r.lambdas[0]);
    }
}

#[test]
fn rotated_population_needs_gaussian_entries() {
    let mut spec = f1_spec(40, 1.5, 1);
    spec.rotated = true;
    spec.entry_dist = EntryDist::Uniform;
    assert!(matches!(sample_ensemble(&spec), Err(Error::Parameter(_))));
    assert!(sample_ensemble(&SampleSpec::new(1, 5, SigmaSource::Explicit(vec![1.0]), 0)).is_err());
}

#[test]
fn rotation_leaves_spectrum_of_same_draw_invariant() {
    // eig(O D^½ Oᵀ X Xᵀ O D^½ Oᵀ) = eig(D^½ (OᵀX)(OᵀX)ᵀ D^½)
    let spec = f1_spec(60, 1.5, 9);
    let sigmas = spec.draw_sigmas(9);
    let x = spec.draw_entries(9);
    let o = haar_orthogonal(60, &mut stream(9, StreamRole::Rotation));
    let d_half = Mat::from_fn(60, 60, |i, j| if i == j { sigmas[i].sqrt() } else { 0.0 });
    let rotated = &o * &d_half * o.transpose() * &x;
    let plain = &d_half * (o.transpose() * &x);
    let a = gram_eigenvalues(rotated.as_ref()).unwrap();
    let b = gram_eigenvalues(plain.as_ref()).unwrap();
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12 * a[0]);
    }
    let mut rspec = spec.clone();
    rspec.rotated = true;
    let r = sample_ensemble(&rspec).unwrap();
    for (u, v) in r.lambdas.iter().zip(&a) {
        assert!((u - v).abs() < 1e-12 * a[0]);
    }
}

#[test]
fn rotated_population_matches_diagonal_in_distribution() {
    let collector = Collector { top_k: 1, ..Default::default() };
    let diag = run_monte_carlo(&f1_spec(400, 1.5, 1000), 200, &collector, None).unwrap();
    let mut spec = f1_spec(400, 1.5, 5000);
    spec.rotated = true;
    let rot = run_monte_carlo(&spec, 200, &collector, None).unwrap();
    let ks = ks_two_sample(&diag.lambda(1), &rot.lambda(1)).unwrap();
    println!("rotation KS(lambda_1) = {ks}");
    assert!(ks < 0.1, "KS = {ks}");
}

#[test]
fn m_trace_large_eta_asymptotics() {
    let r = sample_ensemble(&f1_spec(100, 1.5, 2)).unwrap();
    let t = 1e3;
    let m = m_trace(&r, SpectralPoint::new(0.0, t).unwrap());
    assert!((m - Complex64::new(0.0, 1.0 / t)).norm() < 1e-2 / t);
}

#[test]
fn m_trace_square_case_is_plain_average() {
    let r = sample_ensemble(&identity(70, 70, 6)).unwrap();
    let p = SpectralPoint::new(1.2, 0.05).unwrap();
    let z = p.z();
    let avg: Complex64 = r.lambdas.iter().map(|&l| 1.0 / (l - z)).sum::<Complex64>() / 70.0;
    assert!((m_trace(&r, p) - avg).norm() < 1e-14);
}

#[test]
fn m_trace_is_herglotz() {
    let r = sample_ensemble(&f1_spec(90, 0.5, 12)).unwrap();
    for e in [-1.0, 0.0, 0.5, 1.5, 3.0] {
        for eta in [1e-3, 0.1, 10.0] {
            assert!(m_trace(&r, SpectralPoint::new(e, eta).unwrap()).im > 0.0);
        }
    }
}

#[test]
fn linearization_reproduces_resolvent_identities() {
    let z = SpectralPoint::new(1.0, 0.1).unwrap();
    for seed in 0..5 {
        let p = linearized_probe(&f1_spec(50, 1.0, seed), z).unwrap();
        assert!((p.m_latin - p.m_eigen).norm() < 1e-10, "seed {seed}: {}", (p.m_latin - p.m_eigen).norm());
        assert!(p.trace_relation_defect < 1e-10, "seed {seed}: {}", p.trace_relation_defect);
        assert!(p.schur_defect < 1e-8, "seed {seed}: {}", p.schur_defect);
        assert!(p.ward_defect < 1e-8, "seed {seed}: {}", p.ward_defect);
        assert_eq!(p.probed.len(), 3);
    }
}

#[test]
fn linearization_rectangular_and_rotated() {
    let z = SpectralPoint::new(0.7, 0.05).unwrap();
    for (m, d) in [(40, 1.5), (60, 0.5)] {
        for rotated in [false, true] {
            let mut spec = f1_spec(m, d, 31);
            spec.rotated = rotated;
            let p = linearized_probe(&spec, z).unwrap();
            assert!((p.m_latin - p.m_eigen).norm() < 1e-10);
            assert!(p.trace_relation_defect < 1e-10);
            assert!(p.schur_defect < 1e-8 && p.ward_defect < 1e-8);
        }
    }
    assert!(linearized_probe(&f1_spec(300, 1.5, 1), z).is_err());
}

#[test]
fn single_trial_run_equals_direct_sample() {
    let spec = f1_spec(150, 1.5, 77);
    let collector = Collector { top_k: 150, ..Default::default() };
    let table = run_monte_carlo(&spec, 1, &collector, Some(1)).unwrap();
    let direct = sample_ensemble(&spec).unwrap();
    assert_eq!(table.rows[0].lambdas, direct.lambdas);
    assert_eq!(table.rows[0].sigmas, direct.sigmas);
    assert_eq!(table.rows[0].seed, 77);
}

fn csv_of(table: &TrialTable) -> Vec<u8> {
    let mut out = Vec::new();
    table.write_csv(&mut out).unwrap();
    table.write_histogram_csv(&mut out).unwrap();
    out
}

#[test]
fn trial_table_independent_of_worker_count() {
    let m = JacobiMeasure::f1();
    let spec = f1_spec(120, 1.5, 40);
    let collector = Collector {
        top_k: 3,
        histogram: Some(HistogramSpec { bins: 50, lo: 0.0, hi: 2.0 }),
        local_law: Some(OmegaContext::new(&m, 1.5, 120, OmegaConfig::for_beta(3.0).unwrap()).unwrap()),
        edge: Some(freeconv::edge(&m, 1.5).unwrap()),
    };
    let one = run_monte_carlo(&spec, 6, &collector, Some(1)).unwrap();
    let three = run_monte_carlo(&spec, 6, &collector, Some(3)).unwrap();
    assert_eq!(csv_of(&one), csv_of(&three));
    let text = String::from_utf8(csv_of(&one)).unwrap();
    assert!(text.starts_with("trial,seed,lambda1,lambda2,lambda3,sigma1,sigma2,sigma3,L_plus_pred,local_law\n"));
    assert_eq!(one.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), (40..46).collect::<Vec<_>>());
}

#[test]
fn frozen_population_is_shared() {
    let mut spec = f1_spec(50, 1.5, 3);
    spec.freeze_sigma = true;
    let table = run_monte_carlo(&spec, 4, &Collector { top_k: 5, ..Default::default() }, Some(1)).unwrap();
    assert!(table.rows.iter().all(|r| r.sigmas == table.rows[0].sigmas));
    assert_ne!(table.rows[0].lambdas, table.rows[1].lambdas);
    spec.freeze_sigma = false;
    let table = run_monte_carlo(&spec, 2, &Collector { top_k: 5, ..Default::default() }, Some(1)).unwrap();
    assert_ne!(table.rows[0].sigmas, table.rows[1].sigmas);
}

#[test]
fn run_rejects_zero_trials() {
    assert!(matches!(
        run_monte_carlo(&f1_spec(20, 1.5, 0), 0, &Collector::default(), None),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn upper_tail_convex_for_f1_concave_for_identity() {
    let hist = |spec: SampleSpec, hi: f64| {
        let collector = Collector { top_k: 1, histogram: Some(HistogramSpec { bins: 200, lo: 0.0, hi }), ..Default::default() };
        let t = run_monte_carlo(&spec, 10, &collector, None).unwrap();
        t.histogram.unwrap().1
    };
    let convex = upper_tail_curvature(&hist(f1_spec(400, 1.5, 100), 1.6), 0.1).unwrap();
    let concave = upper_tail_curvature(&hist(identity(400, 600, 100), 3.5), 0.1).unwrap();
    println!("tail curvature: f1 {convex}, identity {concave}");
    assert!(convex > 0.0);
    assert!(concave < 0.0);
}

#[test]
fn local_law_deviation_small_on_restricted_domain() {
    let m = JacobiMeasure::f1();
    let ctx = OmegaContext::new(&m, 1.5, 500, OmegaConfig::for_beta(3.0).unwrap()).unwrap();
    for seed in 0..3 {
        let r = sample_ensemble(&f1_spec(500, 1.5, seed)).unwrap();
        let ll = local_law_deviation(&r, &ctx).unwrap();
        assert!(ll.points > 0);
        assert!(ll.within_bound >= 0.95, "seed {seed}: {ll:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectrum_is_psd_and_matches_trace(
        m in 2usize..40,
        n in 2usize..40,
        dist in 0usize..3,
        rotated in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut spec = f1_spec(m, 1.0, seed);
        spec.n = n;
        spec.entry_dist = [EntryDist::Gaussian, EntryDist::Rademacher, EntryDist::Uniform][dist];
        spec.rotated = rotated && dist == 0;
        let r = sample_ensemble(&spec).unwrap();
        prop_assert_eq!(r.lambdas.len(), m);
        prop_assert!(*r.lambdas.last().unwrap() >= -1e-10 * r.lambdas[0]);
        prop_assert!(r.trace_defect() <= 1e-8 * m as f64);
        prop_assert!(r.sigmas.windows(2).all(|w| w[0] >= w[1]));
    }
}
