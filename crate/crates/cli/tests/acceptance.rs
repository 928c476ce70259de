//! Acceptance criteria at desk scale. Each test writes one result line to
//! stderr (bypassing capture) and fails if any check of its criterion fails.
//! Monte-Carlo tables are shared between criteria 4/5 and 6/7.

use std::io::Write;
use std::sync::OnceLock;

use mpedge::empirical::{hat_edge, PopulationSpectrum};
use mpedge::freeconv::compute_d_plus;
use mpedge::measure::JacobiMeasure;
use mpedge_cli::verify::{CriterionResult, Scale, Verifier};

fn verifier() -> &'static Verifier {
    static V: OnceLock<Verifier> = OnceLock::new();
    V.get_or_init(|| Verifier::new(Scale::Desk, None))
}

fn criterion(id: u8) -> CriterionResult {
    let r = verifier().run(id);
    let verdict = if r.pass() { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "acceptance {verdict} {r}");
    r
}

fn require(r: CriterionResult) {
    assert!(r.pass(), "criterion {} ({}) failed: {:?} {:?}", r.id, r.name, r.failed_checks(), r.error);
}

#[test]
fn criterion_01_threshold() {
    let r = criterion(1);
    let d_plus: f64 = compute_d_plus(&JacobiMeasure::f1()).unwrap();
    assert!((d_plus - 0.703908).abs() <= 1e-5, "d_plus = {d_plus}");
    require(r);
}

#[test]
fn criterion_02_null_case_edge() {
    let r = criterion(2);
    for d in [1usize, 2, 4] {
        let s = PopulationSpectrum::new(vec![1.0f64; 300], 300 * d).unwrap();
        let oracle = (1.0 + (1.0 / d as f64).sqrt()).powi(2);
        assert!((hat_edge(&s).unwrap().l_plus - oracle).abs() <= 1e-8);
    }
    require(r);
}

#[test]
fn criterion_03_edge_exponent() {
    require(criterion(3));
}

#[test]
fn criterion_04_supercritical_locations() {
    require(criterion(4));
}

#[test]
fn criterion_05_weibull_limit() {
    require(criterion(5));
}

#[test]
fn criterion_06_subcritical_gaussian() {
    require(criterion(6));
}

#[test]
fn criterion_07_gap_domination() {
    require(criterion(7));
}

#[test]
fn criterion_08_local_law() {
    require(criterion(8));
}

#[test]
fn criterion_09_omega_frequency() {
    require(criterion(9));
}

#[test]
fn criterion_10_resolvent_identities() {
    require(criterion(10));
}

#[test]
fn criterion_11_invariants() {
    require(criterion(11));
}
