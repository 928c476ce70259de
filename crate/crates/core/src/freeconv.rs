//! Deformed Marchenko-Pastur law `ν ⊠ μ_MP`: Stieltjes transform, density
//! and right-edge data.
//!
//! `m_fc` is the upper half-plane solution of
//! `m = (-z + d⁻¹ ∫ t dν(t) / (1 + t m))⁻¹`. On the real axis the edge is
//! described through `τ = 1/m`, with `F(τ) = -τ + d⁻¹ ∫ t τ / (τ + t) dν`
//! mapping `τ` to `z` and `H(τ) = d⁻¹ ∫ t² dν / |τ + t|²`.

use std::fmt;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixed_point::{self, SelfEnergy, SolverOptions, Solved};
use crate::measure::JacobiMeasure;
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;

/// Spectral parameter `z = E + iη`, `η > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint<T> {
    pub energy: T,
    pub eta: T,
}

impl<T: Real> SpectralPoint<T> {
    pub fn new(energy: T, eta: T) -> Result<Self> {
        if !(eta > T::zero()) || !energy.is_finite() || !eta.is_finite() {
            return Err(Error::Parameter(format!("spectral parameter {energy} + i{eta} needs eta > 0")));
        }
        Ok(Self { energy, eta })
    }

    pub fn z(&self) -> Complex<T> {
        Complex::new(self.energy, self.eta)
    }
}

/// Solved values of a Stieltjes transform over a set of spectral parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesSolution<T> {
    pub points: Vec<SpectralPoint<T>>,
    pub values: Vec<Complex<T>>,
    pub residuals: Vec<T>,
    pub iterations: Vec<usize>,
}

impl<T: Real> StieltjesSolution<T> {
    pub(crate) fn from_solved(points: Vec<SpectralPoint<T>>, solved: Vec<Solved<T>>) -> Self {
        Self {
            points,
            values: solved.iter().map(|s| s.value).collect(),
            residuals: solved.iter().map(|s| s.residual).collect(),
            iterations: solved.iter().map(|s| s.iterations).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Supercritical,
    Subcritical,
    Critical,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Supercritical => "supercritical",
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
        })
    }
}

/// Right-edge data for a population law and aspect ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeReport<T> {
    pub d: T,
    /// `+∞` when the threshold integral diverges.
    pub d_plus: T,
    pub tau_plus: Option<T>,
    pub tau_star: Option<T>,
    pub l_plus: T,
    pub regime: Regime,
    /// `(d - d_+) / d`, supercritical only.
    pub c_d: Option<T>,
}

impl<T: Real> EdgeReport<T> {
    pub fn require_supercritical(&self) -> Result<T> {
        match (self.regime, self.c_d) {
            (Regime::Supercritical, Some(c)) => Ok(c),
            _ => Err(Error::Regime(format!(
                "needs d > d_+ (d = {}, d_+ = {}, {})",
                self.d, self.d_plus, self.regime
            ))),
        }
    }

    pub fn require_subcritical(&self) -> Result<T> {
        match (self.regime, self.tau_star) {
            (Regime::Subcritical, Some(t)) => Ok(t),
            _ => Err(Error::Regime(format!(
                "needs d < d_+ (d = {}, d_+ = {}, {})",
                self.d, self.d_plus, self.regime
            ))),
        }
    }
}

impl<T: Real> fmt::Display for EdgeReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={} d_plus={}", self.d, self.d_plus)?;
        if let Some(t) = self.tau_plus {
            write!(f, " tau_plus={t}")?;
        }
        if let Some(t) = self.tau_star {
            write!(f, " tau_star={t}")?;
        }
        write!(f, " L_plus={} regime={}", self.l_plus, self.regime)?;
        match self.c_d {
            Some(c) => write!(f, " C_d={c}"),
            None => write!(f, " C_d=none"),
        }
    }
}

/// Quantity fitted by [`edge_exponent_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeQuantity {
    /// `ρ(L_+ - κ)`, exponent `β`.
    Density,
    /// `∫_{L_+ - κ}^{L_+} ρ`, exponent `β + 1`.
    Mass,
}

/// Width of the band around `d_+` reported as critical.
pub const CRITICAL_BAND: f64 = 1e-12;
/// `η` pair used for Stieltjes inversion.
pub const INVERSION_ETAS: [f64; 2] = [1e-4, 5e-5];
/// Smallest admissible `|τ + t|` over quadrature nodes.
const COLLISION: f64 = 1e-14;

pub(crate) struct FcKernel<'a, T> {
    measure: &'a JacobiMeasure<T>,
    inv_d: T,
}

impl<'a, T: Real> FcKernel<'a, T> {
    pub(crate) fn new(measure: &'a JacobiMeasure<T>, d: T) -> Result<Self> {
        check_ratio(d)?;
        Ok(Self { measure, inv_d: d.recip() })
    }
}

impl<T: Real> SelfEnergy<T> for FcKernel<'_, T> {
    fn eval(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        let one = Complex::new(T::one(), T::zero());
        let pole = if w.norm() > T::zero() { -w.inv() } else { Complex::new(T::infinity(), T::zero()) };
        let mut s = Complex::new(T::zero(), T::zero());
        let mut sigma = s;
        self.measure.visit_near(pole, |t, wt| {
            let inv = (one + w * t).inv();
            s = s + inv * (t * wt);
            sigma = sigma + inv * inv * (t * t * wt);
        });
        Ok((s * self.inv_d, sigma * self.inv_d))
    }
}

fn check_ratio<T: Real>(d: T) -> Result<()> {
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Error::Parameter(format!("aspect ratio d = {d} must be positive")));
    }
    Ok(())
}

/// Mass `1 - 1/d` of the atom at zero carried by `m_fc` when `d > 1`.
pub fn atom_at_zero<T: Real>(d: T) -> T {
    (T::one() - d.recip()).max(T::zero())
}

/// `m_fc(z)` to fixed-point defect `tol`.
pub fn solve_mfc<T: Real>(m: &JacobiMeasure<T>, d: T, z: SpectralPoint<T>, tol: T) -> Result<Complex<T>> {
    let opts = SolverOptions::default().with_tol(tol);
    solve_mfc_with(m, d, z, &opts).map(|s| s.value)
}

pub fn solve_mfc_with<T: Real>(
    m: &JacobiMeasure<T>,
    d: T,
    z: SpectralPoint<T>,
    opts: &SolverOptions<T>,
) -> Result<Solved<T>> {
    let kernel = FcKernel::new(m, d)?;
    let out = fixed_point::solve_column(&kernel, z.energy, &[z.eta], opts, None)?;
    Ok(out[0])
}

/// `m_fc` at each point. Points sharing an energy form one continuation
/// column; columns are solved in parallel.
pub fn solve_grid<T: Real>(
    m: &JacobiMeasure<T>,
    d: T,
    points: &[SpectralPoint<T>],
    opts: &SolverOptions<T>,
) -> Result<StieltjesSolution<T>> {
    let kernel = FcKernel::new(m, d)?;
    let solved = solve_columns(&kernel, points, opts)?;
    Ok(StieltjesSolution::from_solved(points.to_vec(), solved))
}

pub(crate) fn solve_columns<T: Real, K: SelfEnergy<T> + Sync>(
    kernel: &K,
    points: &[SpectralPoint<T>],
    opts: &SolverOptions<T>,
) -> Result<Vec<Solved<T>>> {
    let mut columns: Vec<(T, Vec<usize>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        match columns.iter_mut().find(|(e, _)| *e == p.energy) {
            Some((_, idx)) => idx.push(i),
            None => columns.push((p.energy, vec![i])),
        }
    }
    let per_column: Vec<Result<Vec<(usize, Solved<T>)>>> = columns
        .par_iter()
        .map(|(energy, idx)| {
            let etas: Vec<T> = idx.iter().map(|&i| points[i].eta).collect();
            let solved = fixed_point::solve_column(kernel, *energy, &etas, opts, None)?;
            Ok(idx.iter().copied().zip(solved).collect())
        })
        .collect();
    let mut out = vec![None; points.len()];
    for column in per_column {
        for (i, s) in column? {
            out[i] = Some(s);
        }
    }
    Ok(out.into_iter().map(|s| s.expect("every point solved")).collect())
}

/// Density of the absolutely continuous part of `μ_fc` at `energy`.
///
/// The atom at zero is subtracted analytically before the two-point
/// extrapolation of `π⁻¹ Im m(E + iη)` to `η = 0`.
pub fn density_fc<T: Real>(m: &JacobiMeasure<T>, d: T, energy: T) -> Result<T> {
    let kernel = FcKernel::new(m, d)?;
    density_with(&kernel, d, energy, &SolverOptions::default())
}

pub(crate) fn density_with<T: Real>(
    kernel: &impl SelfEnergy<T>,
    d: T,
    energy: T,
    opts: &SolverOptions<T>,
) -> Result<T> {
    let etas = INVERSION_ETAS.map(T::lit);
    let solved = fixed_point::solve_column(kernel, energy, &etas, opts, None)?;
    let atom = atom_at_zero(d);
    let im = |k: usize| {
        let z = Complex::new(energy, etas[k]);
        (solved[k].value + z.inv() * atom).im
    };
    let rho = (T::lit(2.0) * im(1) - im(0)) / T::PI();
    Ok(rho.max(T::zero()))
}

/// Densities at many energies, in parallel.
pub fn density_curve<T: Real>(m: &JacobiMeasure<T>, d: T, energies: &[T]) -> Result<Vec<T>> {
    let kernel = FcKernel::new(m, d)?;
    let opts = SolverOptions::default();
    energies.par_iter().map(|&e| density_with(&kernel, d, e, &opts)).collect()
}

/// Visits the nodes for an integrand with a pole at `t = -τ`, rejecting
/// real `τ` whose pole sits inside the support.
fn tau_nodes<T: Real>(m: &JacobiMeasure<T>, tau: Complex<T>, mut visit: impl FnMut(T, T)) -> Result<()> {
    if !(tau.re.is_finite() && tau.im.is_finite()) {
        return Err(Error::Evaluation(format!("tau = {tau} is not finite")));
    }
    let collision = T::lit(COLLISION);
    if tau.im.abs() < collision && -tau.re >= m.left() && -tau.re < T::one() {
        return Err(Error::Evaluation(format!("tau = {tau} lies on the singular segment")));
    }
    let mut nearest = T::infinity();
    m.visit_near(-tau, |t, w| {
        nearest = nearest.min((tau + t).norm());
        visit(t, w);
    });
    if nearest < collision {
        return Err(Error::Evaluation(format!("node collision at tau = {tau}")));
    }
    Ok(())
}

fn is_minus_one<T: Real>(tau: Complex<T>) -> bool {
    tau.im == T::zero() && tau.re == -T::one()
}

/// `F(τ) = -τ + d⁻¹ ∫ t τ / (τ + t) dν`.
#[allow(non_snake_case)]
pub fn F_of_tau<T: Real>(m: &JacobiMeasure<T>, d: T, tau: Complex<T>) -> Result<Complex<T>> {
    check_ratio(d)?;
    if is_minus_one(tau) {
        let v = m.integrate_endpoint(T::one(), |t| t)?;
        return Ok(Complex::new(T::one() + v / d, T::zero()));
    }
    let mut acc = Complex::new(T::zero(), T::zero());
    tau_nodes(m, tau, |t, w| acc = acc + tau * (w * t) / (tau + t))?;
    Ok(-tau + acc / d)
}

/// `H(τ) = d⁻¹ ∫ t² dν / ((Re τ + t)² + (Im τ)²)`.
#[allow(non_snake_case)]
pub fn H_of_tau<T: Real>(m: &JacobiMeasure<T>, d: T, tau: Complex<T>) -> Result<T> {
    check_ratio(d)?;
    if is_minus_one(tau) {
        return Ok(compute_d_plus(m)? / d);
    }
    let mut acc = T::zero();
    tau_nodes(m, tau, |t, w| acc = acc + w * t * t / (tau + t).norm_sqr())?;
    Ok(acc / d)
}

/// `d_+ = ∫ t² dν / (1 - t)²`; infinite for `β ≤ 1`.
pub fn compute_d_plus<T: Real>(m: &JacobiMeasure<T>) -> Result<T> {
    if m.beta() <= T::one() {
        return Err(Error::Regime(format!("d_+ = inf for beta = {} <= 1", m.beta())));
    }
    m.integrate_endpoint(T::lit(2.0), |t| t * t)
}

/// `τ_+ = d⁻¹ ∫ t dν / (1 - t)`.
pub fn compute_tau_plus<T: Real>(m: &JacobiMeasure<T>, d: T) -> Result<T> {
    check_ratio(d)?;
    if m.beta() <= T::zero() {
        return Err(Error::Regime(format!("tau_+ = inf for beta = {} <= 0", m.beta())));
    }
    Ok(m.integrate_endpoint(T::one(), |t| t)? / d)
}

/// Edge data for `ν` at ratio `d`. For `β ≤ 1` the threshold is infinite and
/// every `d` is subcritical.
pub fn edge<T: Real>(m: &JacobiMeasure<T>, d: T) -> Result<EdgeReport<T>> {
    check_ratio(d)?;
    let d_plus = match compute_d_plus(m) {
        Ok(v) => v,
        Err(Error::Regime(_)) => T::infinity(),
        Err(e) => return Err(e),
    };
    if (d - d_plus).abs() < T::lit(CRITICAL_BAND) {
        let tau_plus = compute_tau_plus(m, d)?;
        return Ok(EdgeReport {
            d,
            d_plus,
            tau_plus: Some(tau_plus),
            tau_star: None,
            l_plus: T::one() + tau_plus,
            regime: Regime::Critical,
            c_d: None,
        });
    }
    if d > d_plus {
        let tau_plus = compute_tau_plus(m, d)?;
        return Ok(EdgeReport {
            d,
            d_plus,
            tau_plus: Some(tau_plus),
            tau_star: None,
            l_plus: T::one() + tau_plus,
            regime: Regime::Supercritical,
            c_d: Some((d - d_plus) / d),
        });
    }
    let h = |tau: T| H_of_tau(m, d, Complex::new(tau, T::zero()));
    let tau_star = subcritical_root(h, m.beta() > T::one())?;
    let l_plus = F_of_tau(m, d, Complex::new(tau_star, T::zero()))?.re;
    Ok(EdgeReport {
        d,
        d_plus,
        tau_plus: None,
        tau_star: Some(tau_star),
        l_plus,
        regime: Regime::Subcritical,
        c_d: None,
    })
}

/// Root of the decreasing function `h - 1` on `(-∞, -1)`. `finite_at_edge`
/// allows `-1` itself as the right bracket.
pub(crate) fn subcritical_root<T: Real>(mut h: impl FnMut(T) -> Result<T>, finite_at_edge: bool) -> Result<T> {
    let one = T::one();
    let mut step = T::lit(1e-8);
    let mut hi = -one - step;
    if h(hi)? <= one {
        if !finite_at_edge {
            return Err(Error::Root("H(-1 - 1e-8) <= 1 with no finite bracket".into()));
        }
        hi = -one;
    }
    let mut lo = -one - step;
    let mut expansions = 0;
    while h(lo)? >= one {
        hi = lo;
        step = step * T::lit(2.0);
        lo = -one - step;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Root("H stays above 1 on (-inf, -1)".into()));
        }
    }
    let tol = T::lit(1e-14);
    for _ in 0..200 {
        if hi - lo <= tol * lo.abs() {
            break;
        }
        let mid = lo + (hi - lo) / T::lit(2.0);
        if h(mid)? >= one {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo + (hi - lo) / T::lit(2.0))
}

/// `(predicted, actual)` values of `1/m_fc(z)` near a supercritical edge,
/// with `predicted = -1 + (d/(d - d_+)) (L_+ - z)`.
pub fn linearization_check<T: Real>(
    m: &JacobiMeasure<T>,
    d: T,
    z: SpectralPoint<T>,
) -> Result<(Complex<T>, Complex<T>)> {
    let report = edge(m, d)?;
    let c_d = report.require_supercritical()?;
    let offset = Complex::new(report.l_plus, T::zero()) - z.z();
    if offset.norm() > T::lit(0.05) {
        return Err(Error::Parameter(format!("z = {} is farther than 0.05 from L_+", z.z())));
    }
    let predicted = offset / c_d - T::one();
    let actual = solve_mfc(m, d, z, T::lit(1e-12))?.inv();
    Ok((predicted, actual))
}

/// `∫_{L_+ - κ}^{L_+} ρ` by a Gauss-Legendre panel.
pub fn edge_mass<T: Real>(m: &JacobiMeasure<T>, d: T, l_plus: T, kappa: T) -> Result<T> {
    let kernel = FcKernel::new(m, d)?;
    edge_mass_with(&kernel, d, l_plus, kappa)
}

fn edge_mass_with<T: Real>(kernel: &FcKernel<'_, T>, d: T, l_plus: T, kappa: T) -> Result<T> {
    let rule = QuadratureRule::gauss_legendre(16)?;
    let opts = SolverOptions::default();
    let half = kappa / T::lit(2.0);
    let mut acc = T::zero();
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let e = l_plus - half + half * x;
        acc = acc + w * half * density_with(kernel, d, e, &opts)?;
    }
    Ok(acc)
}

/// Least-squares slope of `log q(κ)` against `log κ`.
pub fn edge_exponent_fit<T: Real>(
    m: &JacobiMeasure<T>,
    d: T,
    kappas: &[T],
    quantity: EdgeQuantity,
) -> Result<T> {
    if kappas.len() < 3 {
        return Err(Error::Parameter(format!("edge fit needs at least 3 kappas, got {}", kappas.len())));
    }
    if let Some(k) = kappas.iter().find(|&&k| !(k > T::zero() && k <= T::lit(0.1))) {
        return Err(Error::Parameter(format!("kappa = {k} outside (0, 0.1]")));
    }
    let report = edge(m, d)?;
    report.require_supercritical()?;
    let kernel = FcKernel::new(m, d)?;
    let opts = SolverOptions::default();
    let values: Vec<T> = kappas
        .par_iter()
        .map(|&k| match quantity {
            EdgeQuantity::Density => density_with(&kernel, d, report.l_plus - k, &opts),
            EdgeQuantity::Mass => edge_mass_with(&kernel, d, report.l_plus, k),
        })
        .collect::<Result<_>>()?;
    if let Some(v) = values.iter().find(|v| !(**v > T::zero())) {
        return Err(Error::Evaluation(format!("non-positive edge quantity {v}")));
    }
    let xs: Vec<T> = kappas.iter().map(|k| k.ln()).collect();
    let ys: Vec<T> = values.iter().map(|v| v.ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `R₂(z) = d⁻¹ ∫ t² |w|² dν / |t w + 1|²` at a solved value `w = m_fc(z)`.
pub fn r2<T: Real>(m: &JacobiMeasure<T>, d: T, w: Complex<T>) -> Result<T> {
    check_ratio(d)?;
    let pole = -w.inv();
    let one = Complex::new(T::one(), T::zero());
    let mut acc = T::zero();
    m.visit_near(pole, |t, wt| acc = acc + wt * t * t / (one + w * t).norm_sqr());
    Ok(acc * w.norm_sqr() / d)
}
