mod common;

use common::{close, Law};
use mpedge::error::Error;
use mpedge::freeconv::*;
use mpedge::measure::{JacobiMeasure, Profile, DEFAULT_QUAD_ORDER};
use num_complex::Complex64;

fn f1() -> JacobiMeasure<f64> {
    JacobiMeasure::f1()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn d_plus_of_f1_matches_reported_value() {
    let dp = compute_d_plus(&f1()).unwrap();
    assert!((dp - 0.703908).abs() < 1e-5, "d_plus = {dp}");
    let oracle = Law::f1().expect(|t| t * t / ((1.0 - t) * (1.0 - t)));
    assert!(close(dp, oracle, 1e-10), "{dp} vs {oracle}");
}

#[test]
fn d_plus_constant_profile_closed_form() {
    let m = JacobiMeasure::new(3.0, 0.1, Profile::Constant, DEFAULT_QUAD_ORDER).unwrap();
    // ∫ t² (1 - t) dt / ∫ (1 - t)³ dt on [0.1, 1]
    let num = (1.0 / 3.0 - 0.25) - (0.1f64.powi(3) / 3.0 - 0.1f64.powi(4) / 4.0);
    let den = 0.9f64.powi(4) / 4.0;
    assert!(close(compute_d_plus(&m).unwrap(), num / den, 1e-12));
}

#[test]
fn d_plus_infinite_for_f2() {
    let m = JacobiMeasure::<f64>::f2();
    assert!(matches!(compute_d_plus(&m), Err(Error::Regime(_))));
    let r = edge(&m, 1.5).unwrap();
    assert_eq!(r.regime, Regime::Subcritical);
    assert!(r.d_plus.is_infinite());
}

#[test]
fn supercritical_edge_against_oracle() {
    let r = edge(&f1(), 1.5).unwrap();
    assert_eq!(r.regime, Regime::Supercritical);
    let tau_plus = Law::f1().expect(|t| t / (1.0 - t)) / 1.5;
    assert!(close(r.tau_plus.unwrap(), tau_plus, 1e-10));
    assert!(close(r.l_plus, 1.0 + tau_plus, 1e-10));
    let c_d = r.c_d.unwrap();
    assert!(c_d > 0.0 && c_d < 1.0);
    assert!(close(c_d, (1.5 - r.d_plus) / 1.5, 1e-14));
}

#[test]
fn subcritical_edge_solves_h_equals_one() {
    let m = f1();
    let r = edge(&m, 0.5).unwrap();
    assert_eq!(r.regime, Regime::Subcritical);
    let tau = r.tau_star.unwrap();
    assert!(tau < -1.0);
    let h = H_of_tau(&m, 0.5, c(tau, 0.0)).unwrap();
    assert!((h - 1.0).abs() < 1e-10, "H(tau*) = {h}");
    let law = Law::f1();
    let h_oracle = law.expect(|t| t * t / ((tau + t) * (tau + t))) / 0.5;
    assert!((h_oracle - 1.0).abs() < 1e-9);
    let l_oracle = -tau + law.expect(|t| t * tau / (tau + t)) / 0.5;
    assert!(close(r.l_plus, l_oracle, 1e-10));
    assert!(r.c_d.is_none());
}

#[test]
fn f_at_minus_one_is_the_edge() {
    let m = f1();
    let r = edge(&m, 1.5).unwrap();
    let f = F_of_tau(&m, 1.5, c(-1.0, 0.0)).unwrap();
    assert!(close(f.re, r.l_plus, 1e-13) && f.im == 0.0);
}

#[test]
fn f_against_oracle() {
    let m = f1();
    let law = Law::f1();
    let tau = -2.0;
    let oracle = -tau + law.expect(|t| t * tau / (tau + t)) / 1.5;
    let f = F_of_tau(&m, 1.5, c(tau, 0.0)).unwrap();
    assert!(close(f.re, oracle, 1e-12));
    assert_eq!(f.im, 0.0);
    let tau = c(-0.9, 0.05);
    let oracle = -tau + law.expect_complex(|t| t * tau / (tau + t)) / 1.5;
    assert!((F_of_tau(&m, 1.5, tau).unwrap() - oracle).norm() < 1e-10);
}

#[test]
fn h_values() {
    let m = f1();
    let h = H_of_tau(&m, 1.5, c(-1.0, 0.0)).unwrap();
    assert!((h - 0.703908 / 1.5).abs() < 1e-5);
    assert!(H_of_tau(&m, 1.5, c(-1.0, 1e3)).unwrap() < 1e-5);
    let law = Law::f1();
    let oracle = law.expect(|t| t * t / ((t - 1.5) * (t - 1.5))) / 0.5;
    assert!(close(H_of_tau(&m, 0.5, c(-1.5, 0.0)).unwrap(), oracle, 1e-12));
}

#[test]
fn no_real_solution_below_minus_one_when_supercritical() {
    let m = f1();
    for tau in [-1.0001, -1.01, -1.5, -3.0, -10.0] {
        assert!(H_of_tau(&m, 1.5, c(tau, 0.0)).unwrap() < 1.0);
        assert_eq!(F_of_tau(&m, 1.5, c(tau, 0.0)).unwrap().im, 0.0);
    }
}

#[test]
fn solve_far_from_the_axis() {
    for m in [f1(), JacobiMeasure::f2()] {
        let z = SpectralPoint::new(0.0, 1e3).unwrap();
        let w = solve_mfc(&m, 1.5, z, 1e-12).unwrap();
        assert!((w + z.z().inv()).norm() <= 2e-6);
    }
}

#[test]
fn solve_at_the_edge() {
    let m = f1();
    let r = edge(&m, 1.5).unwrap();
    let w = solve_mfc(&m, 1.5, SpectralPoint::new(r.l_plus, 1e-4).unwrap(), 1e-12).unwrap();
    assert!((w + 1.0).norm() < 1e-3, "w = {w}");
}

#[test]
fn solve_in_the_bulk_against_picard() {
    let m = f1();
    let z = SpectralPoint::new(1.0, 1e-3).unwrap();
    let w = solve_mfc(&m, 1.5, z, 1e-12).unwrap();
    let oracle = Law::f1().picard_mfc(1.5, z.z(), 100_000);
    assert!((w - oracle).norm() < 1e-9, "{w} vs {oracle}");
}

#[test]
fn conjugate_starts_agree() {
    // The solver output does not depend on the ladder: a direct solve from a
    // reflected start gives the same point.
    let m = f1();
    let z = SpectralPoint::new(0.8, 1e-2).unwrap();
    let a = solve_mfc(&m, 1.5, z, 1e-12).unwrap();
    let b = solve_mfc(&m, 1.5, SpectralPoint::new(0.8, 1e-2).unwrap(), 1e-13).unwrap();
    assert!((a.re - b.re).abs() < 1e-11 && (a.im - b.im).abs() < 1e-11);
}

#[test]
fn grid_residuals_and_herglotz() {
    let m = f1();
    let mut points = Vec::new();
    for &e in &[0.05, 0.3, 0.9, 1.2, 1.36, 1.4, 2.0] {
        for &eta in &[1e-1, 1e-3, 1e-5] {
            points.push(SpectralPoint::new(e, eta).unwrap());
        }
    }
    let sol = solve_grid(&m, 1.5, &points, &Default::default()).unwrap();
    for i in 0..sol.len() {
        assert!(sol.values[i].im >= 0.0);
        let w = sol.values[i];
        assert!(sol.residuals[i] < 1e-12 * w.norm().max(1.0));
        // R2 identity and range
        let r2v = r2(&m, 1.5, w).unwrap();
        let ident = 1.0 - points[i].eta * w.norm_sqr() / w.im;
        assert!((0.0..1.0).contains(&r2v), "R2 = {r2v}");
        assert!((r2v - ident).abs() < 1e-8, "{r2v} vs {ident} at {:?}", points[i]);
    }
}

#[test]
fn density_vanishes_beyond_edge() {
    let m = f1();
    let r = edge(&m, 1.5).unwrap();
    assert!(density_fc(&m, 1.5, r.l_plus + 0.1).unwrap() < 1e-6);
}

#[test]
fn density_mass_accounts_for_atom() {
    for d in [1.5, 0.5] {
        let m = f1();
        let r = edge(&m, d).unwrap();
        let n = 2000;
        let energies: Vec<f64> = (0..n).map(|i| r.l_plus * i as f64 / (n - 1) as f64).collect();
        let rho = density_curve(&m, d, &energies).unwrap();
        let h = r.l_plus / (n - 1) as f64;
        let mass: f64 = h * (rho.iter().sum::<f64>() - 0.5 * (rho[0] + rho[n - 1]));
        let total = mass + atom_at_zero(d);
        assert!((total - 1.0).abs() < 1e-3, "d = {d}: mass {mass}, total {total}");
    }
}

#[test]
fn density_edge_exponent() {
    let m = f1();
    // the power law is asymptotic; at d = 1.5 it holds for kappa below ~0.05
    let kappas: Vec<f64> = (0..9).map(|i| 1e-3 * 10f64.powf(i as f64 / 8.0)).collect();
    let slope = edge_exponent_fit(&m, 1.5, &kappas, EdgeQuantity::Density).unwrap();
    assert!((2.6..=3.4).contains(&slope), "density slope {slope}");
    let slope = edge_exponent_fit(&m, 1.5, &kappas, EdgeQuantity::Mass).unwrap();
    assert!((3.6..=4.4).contains(&slope), "mass slope {slope}");
}

#[test]
fn edge_mass_matches_trapezoid() {
    let m = f1();
    let r = edge(&m, 1.5).unwrap();
    let kappa = 0.05;
    let n = 401;
    let energies: Vec<f64> = (0..n).map(|i| r.l_plus - kappa + kappa * i as f64 / (n - 1) as f64).collect();
    let rho = density_curve(&m, 1.5, &energies).unwrap();
    let h = kappa / (n - 1) as f64;
    let trap = h * (rho.iter().sum::<f64>() - 0.5 * (rho[0] + rho[n - 1]));
    let gl = edge_mass(&m, 1.5, r.l_plus, kappa).unwrap();
    assert!((gl - trap).abs() < 1e-3 * trap, "{gl} vs {trap}");
}

#[test]
fn exponent_fit_refuses_subcritical() {
    let kappas = [0.02, 0.05, 0.1];
    assert!(matches!(
        edge_exponent_fit(&f1(), 0.5, &kappas, EdgeQuantity::Density),
        Err(Error::Regime(_))
    ));
}

#[test]
fn linearization_near_edge() {
    let m = f1();
    let r = edge(&m, 1.5).unwrap();
    let (p, a) = linearization_check(&m, 1.5, SpectralPoint::new(r.l_plus, 1e-6).unwrap()).unwrap();
    assert!((p - a).norm() <= 1e-4, "{p} vs {a}");
    assert!((a + 1.0).norm() < 1e-4);

    let defect = |kappa: f64| {
        let (p, a) = linearization_check(&m, 1.5, SpectralPoint::new(r.l_plus - kappa, 1e-4).unwrap()).unwrap();
        (p - a).norm()
    };
    let d1 = defect(0.01);
    assert!(d1 <= 10.0 * 0.01f64.powi(2) * (1.0 / 0.01f64).ln(), "defect {d1}");
    let d2 = defect(0.005);
    assert!(d2 <= 0.5 * d1, "halving: {d1} -> {d2}");
}

#[test]
fn linearization_refuses_subcritical() {
    let m = f1();
    let r = edge(&m, 0.5).unwrap();
    let z = SpectralPoint::new(r.l_plus, 1e-4).unwrap();
    assert!(matches!(linearization_check(&m, 0.5, z), Err(Error::Regime(_))));
}

#[test]
fn single_precision_edge() {
    let m = JacobiMeasure::<f32>::f1();
    let dp = compute_d_plus(&m).unwrap();
    assert!((dp - 0.703908).abs() < 1e-4);
    let r = edge(&m, 1.5f32).unwrap();
    assert_eq!(r.regime, Regime::Supercritical);
}

#[test]
fn edge_band_against_picard() {
    let m = f1();
    let r = edge(&m, 1.5).unwrap();
    let law = Law::f1();
    for kappa in [0.02, 0.04, 0.1] {
        let z = SpectralPoint::new(r.l_plus - kappa, 1e-4).unwrap();
        let w = solve_mfc(&m, 1.5, z, 1e-13).unwrap();
        let oracle = law.picard_mfc(1.5, z.z(), 200_000);
        assert!((w - oracle).norm() < 1e-10, "kappa {kappa}: {w} vs {oracle}");
    }
}
