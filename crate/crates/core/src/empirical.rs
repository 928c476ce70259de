//! Finite-`M` counterparts of the deterministic edge theory.
//!
//! `m̂_fc` solves the self-consistent equation with the population law
//! replaced by the empirical spectral distribution of a concrete `Σ`.

use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixed_point::{self, SelfEnergy, SolverOptions, Solved};
use crate::freeconv::{self, EdgeReport, FcKernel, Regime, SpectralPoint, StieltjesSolution};
use crate::measure::JacobiMeasure;
use crate::scalar::Real;

/// Eigenvalues of `Σ` in descending order, with the matrix dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpectrum<T> {
    sigmas: Vec<T>,
    n: usize,
}

impl<T: Real> PopulationSpectrum<T> {
    /// Sorts `sigmas` descending; `M = sigmas.len()`.
    pub fn new(mut sigmas: Vec<T>, n: usize) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::Parameter(format!("need M >= 2 population eigenvalues, got {}", sigmas.len())));
        }
        if n == 0 {
            return Err(Error::Parameter("need N >= 1".into()));
        }
        if let Some(s) = sigmas.iter().find(|&&s| !(s > T::zero() && s <= T::one())) {
            return Err(Error::Parameter(format!("population eigenvalue {s} outside (0, 1]")));
        }
        sigmas.sort_by(|a, b| b.partial_cmp(a).expect("finite sigma"));
        Ok(Self { sigmas, n })
    }

    /// `M` i.i.d. draws from `ν`.
    pub fn sample<R: Rng + ?Sized>(measure: &JacobiMeasure<T>, m: usize, n: usize, rng: &mut R) -> Result<Self> {
        Self::new(measure.sample_with(rng, m), n)
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn m(&self) -> usize {
        self.sigmas.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `d̂ = N / M`.
    pub fn ratio(&self) -> T {
        T::from_usize_lossy(self.n) / T::from_usize_lossy(self.m())
    }

    /// `M⁻¹ Σ σ² / (1 - σ)²`, infinite if `σ₁ = 1`.
    pub fn d_plus(&self) -> T {
        if self.sigmas[0] >= T::one() {
            return T::infinity();
        }
        let m = T::from_usize_lossy(self.m());
        self.sigmas.iter().map(|&s| s * s / ((T::one() - s) * (T::one() - s))).sum::<T>() / m
    }
}

pub(crate) struct HatKernel<'a, T> {
    sigmas: &'a [T],
    inv_n: T,
}

impl<'a, T: Real> HatKernel<'a, T> {
    pub(crate) fn new(s: &'a PopulationSpectrum<T>) -> Self {
        Self { sigmas: &s.sigmas, inv_n: T::from_usize_lossy(s.n).recip() }
    }
}

impl<T: Real> SelfEnergy<T> for HatKernel<'_, T> {
    fn eval(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)> {
        let one = Complex::new(T::one(), T::zero());
        let mut s = Complex::new(T::zero(), T::zero());
        let mut sigma = s;
        for &x in self.sigmas {
            let inv = (one + w * x).inv();
            s = s + inv * x;
            sigma = sigma + inv * inv * (x * x);
        }
        Ok((s * self.inv_n, sigma * self.inv_n))
    }
}

/// `m̂_fc(z)` to fixed-point defect `tol`.
pub fn hat_mfc<T: Real>(s: &PopulationSpectrum<T>, z: SpectralPoint<T>, tol: T) -> Result<Complex<T>> {
    let opts = SolverOptions::default().with_tol(tol);
    let kernel = HatKernel::new(s);
    Ok(fixed_point::solve_column(&kernel, z.energy, &[z.eta], &opts, None)?[0].value)
}

/// `m̂_fc` over a set of points, one continuation column per energy.
pub fn hat_mfc_grid<T: Real>(
    s: &PopulationSpectrum<T>,
    points: &[SpectralPoint<T>],
    opts: &SolverOptions<T>,
) -> Result<StieltjesSolution<T>> {
    let kernel = HatKernel::new(s);
    let solved = freeconv::solve_columns(&kernel, points, opts)?;
    Ok(StieltjesSolution::from_solved(points.to_vec(), solved))
}

/// Edge of the empirical deformed law in the subcritical regime:
/// `τ̂ < -1` solves `N⁻¹ Σ σ² / (τ̂ + σ)² = 1` and
/// `L̂_+ = -τ̂ + N⁻¹ Σ σ τ̂ / (τ̂ + σ)`.
///
/// A spectrum with `σ₁ = 1` is always subcritical; otherwise
/// `N⁻¹ Σ σ² / (1 - σ)² > 1` is required.
pub fn hat_edge<T: Real>(s: &PopulationSpectrum<T>) -> Result<EdgeReport<T>> {
    let one = T::one();
    let inv_n = T::from_usize_lossy(s.n).recip();
    let d = s.ratio();
    let d_plus = s.d_plus();
    let at_one = s.sigmas[0] >= one;
    if !at_one && d_plus <= d {
        return Err(Error::Regime(format!(
            "empirical spectrum is supercritical (d = {d}, d_+ = {d_plus}); use predict_eigenvalue"
        )));
    }
    let h = |tau: T| -> Result<T> {
        Ok(s.sigmas.iter().map(|&x| x * x / ((tau + x) * (tau + x))).sum::<T>() * inv_n)
    };
    let tau = freeconv::subcritical_root(h, !at_one)?;
    let l_plus = -tau + s.sigmas.iter().map(|&x| x * tau / (tau + x)).sum::<T>() * inv_n;
    Ok(EdgeReport {
        d,
        d_plus,
        tau_plus: None,
        tau_star: Some(tau),
        l_plus,
        regime: Regime::Subcritical,
        c_d: None,
    })
}

/// `N⁻¹ Σ_{α ≠ exclude} σ_α² |w|² / |σ_α w + 1|²` at a solved `w = m̂_fc(z)`.
pub fn hat_r2<T: Real>(s: &PopulationSpectrum<T>, w: Complex<T>, exclude: Option<usize>) -> T {
    r2_sum(&s.sigmas, s.n, w, exclude)
}

fn r2_sum<T: Real>(sigmas: &[T], n: usize, w: Complex<T>, exclude: Option<usize>) -> T {
    let one = Complex::new(T::one(), T::zero());
    let w2 = w.norm_sqr();
    let total: T = sigmas
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(_, &x)| x * x * w2 / (one + w * x).norm_sqr())
        .sum();
    total / T::from_usize_lossy(n)
}

/// `L_+ - C_d (1 - σ_γ)`.
pub fn predict_eigenvalue<T: Real>(e: &EdgeReport<T>, sigma_gamma: T) -> Result<T> {
    let c_d = e.require_supercritical()?;
    Ok(e.l_plus - c_d * (T::one() - sigma_gamma))
}

/// Tunables of the good-configuration diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaConfig<T> {
    pub phi: T,
    pub n0: usize,
    /// Energies below `L_+`.
    pub energies_inside: usize,
    /// Energies above `L_+`.
    pub energies_outside: usize,
    pub etas: usize,
    pub c_threshold: T,
    /// `ε = eps_ratio · φ` in the third condition.
    pub eps_ratio: T,
    pub c_eps: T,
}

impl<T: Real> OmegaConfig<T> {
    /// `𝔟 = 1/2 - 1/(β + 1)`.
    pub fn frak_b(beta: T) -> T {
        T::lit(0.5) - (beta + T::one()).recip()
    }

    /// Defaults for exponent `β > 1`: `φ = 𝔟/8`, `n₀ = 11`, `𝔠 = 0.95`.
    pub fn for_beta(beta: T) -> Result<Self> {
        if beta <= T::one() {
            return Err(Error::Regime(format!("good configurations need beta > 1, got {beta}")));
        }
        Ok(Self {
            phi: Self::frak_b(beta) / T::lit(8.0),
            n0: 11,
            energies_inside: 48,
            energies_outside: 16,
            etas: 16,
            c_threshold: T::lit(0.95),
            eps_ratio: T::lit(0.5),
            c_eps: T::lit(10.0),
        })
    }

    pub fn validate(&self, beta: T) -> Result<()> {
        let b = Self::frak_b(beta);
        let cap = (T::lit(10.0) + (beta + T::one()) / (beta - T::one())) * b;
        if !(self.phi > T::zero() && self.phi < cap) {
            return Err(Error::Parameter(format!("phi = {} outside (0, {cap})", self.phi)));
        }
        if self.n0 <= 10 {
            return Err(Error::Parameter(format!("n0 = {} must exceed 10", self.n0)));
        }
        if !(self.c_threshold > T::zero() && self.c_threshold < T::one()) {
            return Err(Error::Parameter(format!("c_threshold = {} outside (0, 1)", self.c_threshold)));
        }
        if self.energies_inside + self.energies_outside == 0 || self.etas == 0 {
            return Err(Error::Parameter("empty omega grid".into()));
        }
        Ok(())
    }

    /// `κ₀ = M^{-1/(β+1)}`.
    pub fn kappa0(m: usize, beta: T) -> T {
        T::from_usize_lossy(m).powf(-(beta + T::one()).recip())
    }

    /// `η₀ = M^{-φ} / √M`.
    pub fn eta0(&self, m: usize) -> T {
        let m = T::from_usize_lossy(m);
        m.powf(-self.phi) / m.sqrt()
    }
}

/// Deterministic part of the diagnostic for one `(ν, d, M)`: the spectral
/// grid and `m_fc` on it. Reusable across spectra.
#[derive(Debug, Clone)]
pub struct OmegaContext<T> {
    pub config: OmegaConfig<T>,
    pub m: usize,
    pub d: T,
    pub beta: T,
    pub edge: EdgeReport<T>,
    pub points: Vec<SpectralPoint<T>>,
    pub mfc: Vec<Complex<T>>,
    /// `d⁻¹ ∫ t dν / (t m_fc + 1)` on the grid.
    pub self_energy: Vec<Complex<T>>,
}

impl<T: Real> OmegaContext<T> {
    pub fn new(measure: &JacobiMeasure<T>, d: T, m: usize, config: OmegaConfig<T>) -> Result<Self> {
        let beta = measure.beta();
        config.validate(beta)?;
        let edge = freeconv::edge(measure, d)?;
        let points = domain_grid(measure.left(), &edge, m, beta, &config)?;
        let kernel = FcKernel::new(measure, d)?;
        let solved = freeconv::solve_columns(&kernel, &points, &SolverOptions::default())?;
        let mfc: Vec<Complex<T>> = solved.iter().map(|s| s.value).collect();
        let self_energy = mfc
            .par_iter()
            .map(|&w| kernel.eval(w).map(|(s, _)| s))
            .collect::<Result<_>>()?;
        Ok(Self { config, m, d, beta, edge, points, mfc, self_energy })
    }

    pub fn kappa0(&self) -> T {
        OmegaConfig::kappa0(self.m, self.beta)
    }

    /// Whether `z` with `m_fc(z) = w` lies in `𝒟'_φ` for the spectrum `s`:
    /// `|1 + 1/(σ_α w)| > M^{-1/(β+1)-φ} / 2` for every `α ≥ n₀`.
    pub fn in_domain_prime(&self, s: &PopulationSpectrum<T>, w: Complex<T>) -> bool {
        let mm = T::from_usize_lossy(s.m());
        let bound = mm.powf(-(self.beta + T::one()).recip() - self.config.phi) / T::lit(2.0);
        let inv = w.inv();
        s.sigmas
            .iter()
            .skip(self.config.n0 - 1)
            .all(|&x| (inv / x + T::one()).norm() > bound)
    }
}

/// Log-spaced grid in `𝒟_φ`: energies at log-spaced distances below and
/// above `L_+` within `[l, E_max]`, times log-spaced `η` in
/// `[M^{-1/2-φ}, M^{-1/(β+1)+φ}]`.
pub fn domain_grid<T: Real>(
    l: T,
    edge: &EdgeReport<T>,
    m: usize,
    beta: T,
    cfg: &OmegaConfig<T>,
) -> Result<Vec<SpectralPoint<T>>> {
    let mm = T::from_usize_lossy(m);
    let one = T::one();
    let l_plus = edge.l_plus;
    let e_max = match edge.tau_plus {
        Some(t) => T::lit(2.0) + t,
        None => l_plus + one,
    };
    let eta_lo = mm.powf(-T::lit(0.5) - cfg.phi);
    let eta_hi = mm.powf(-(beta + one).recip() + cfg.phi);
    if !(eta_lo < eta_hi) {
        return Err(Error::Parameter(format!("empty eta range [{eta_lo}, {eta_hi}] at M = {m}")));
    }
    let mut energies = Vec::new();
    let near = T::lit(1e-3);
    for k in log_space(near, l_plus - l, cfg.energies_inside) {
        energies.push(l_plus - k);
    }
    for k in log_space(near, e_max - l_plus, cfg.energies_outside) {
        energies.push(l_plus + k);
    }
    let etas = log_space(eta_lo, eta_hi, cfg.etas);
    let mut points = Vec::with_capacity(energies.len() * etas.len());
    for &e in &energies {
        for &eta in &etas {
            points.push(SpectralPoint::new(e, eta)?);
        }
    }
    Ok(points)
}

fn log_space<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let steps = T::from_usize_lossy(count - 1);
            (0..count)
                .map(|i| (a + (b - a) * T::from_usize_lossy(i) / steps).exp())
                .collect()
        }
    }
}

/// Outcome of the gap condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCheck<T> {
    pub pass: bool,
    /// Smallest gap among the constrained pairs (including `1 - σ₁`).
    pub min_gap: T,
    /// Largest gap among the constrained pairs.
    pub max_gap: T,
    pub lower: T,
    pub upper: T,
}

/// Outcome of a condition evaluated on the spectral grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCheck<T> {
    pub pass: bool,
    /// Worst value over the grid.
    pub worst: T,
    /// The bound it is compared against.
    pub bound: T,
    /// Grid points at which the condition applied.
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaReport<T> {
    pub cond1_gaps: GapCheck<T>,
    pub cond2_r2: GridCheck<T>,
    pub cond3_clt: GridCheck<T>,
    pub overall: bool,
}

impl<T: Real> std::fmt::Display for OmegaReport<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c1 = &self.cond1_gaps;
        let c2 = &self.cond2_r2;
        let c3 = &self.cond3_clt;
        write!(
            f,
            "cond1_pass={} cond1_min_gap={} cond1_max_gap={} cond1_lower={} cond1_upper={} \
             cond2_pass={} cond2_max_r2={} cond2_bound={} cond2_points={} \
             cond3_pass={} cond3_max_dev={} cond3_budget={} overall={}",
            c1.pass, c1.min_gap, c1.max_gap, c1.lower, c1.upper, c2.pass, c2.worst, c2.bound, c2.points,
            c3.pass, c3.worst, c3.bound, self.overall
        )
    }
}

/// Gap condition for `γ < n₀` against all `β ≤ n₀`, plus `|1 - σ₁|`.
pub fn gap_condition<T: Real>(sigmas: &[T], n0: usize, kappa0: T, phi: T, m: usize) -> GapCheck<T> {
    let mm = T::from_usize_lossy(m);
    let lower = mm.powf(-phi) * kappa0;
    let upper = mm.ln() * kappa0;
    let top = n0.min(sigmas.len());
    let mut gaps = vec![(T::one() - sigmas[0]).abs()];
    for g in 0..n0.saturating_sub(1).min(top) {
        for b in 0..top {
            if b != g {
                gaps.push((sigmas[b] - sigmas[g]).abs());
            }
        }
    }
    let min_gap = gaps.iter().copied().fold(T::infinity(), T::min);
    let max_gap = gaps.iter().copied().fold(T::zero(), T::max);
    GapCheck { pass: min_gap > lower && max_gap < upper, min_gap, max_gap, lower, upper }
}

/// Index `α` minimizing `|Re(1 + 1/(σ_α w))|`; ties go to the smaller index.
pub fn closest_index<T: Real>(sigmas: &[T], w: Complex<T>) -> usize {
    let re = w.inv().re;
    let mut best = 0;
    let mut best_val = T::infinity();
    for (i, &s) in sigmas.iter().enumerate() {
        let v = (T::one() + re / s).abs();
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    best
}

/// Evaluates the three good-configuration conditions for `s`.
pub fn omega_check<T: Real>(s: &PopulationSpectrum<T>, ctx: &OmegaContext<T>) -> OmegaReport<T> {
    let cfg = &ctx.config;
    let m = s.m();
    let cond1_gaps = gap_condition(&s.sigmas, cfg.n0, ctx.kappa0(), cfg.phi, m);

    let mut r2_worst = T::zero();
    let mut r2_points = 0;
    let mut dev_worst = T::zero();
    let inv_n = T::from_usize_lossy(s.n).recip();
    let one = Complex::new(T::one(), T::zero());
    for (&w, &fc) in ctx.mfc.iter().zip(&ctx.self_energy) {
        let gamma = closest_index(&s.sigmas, w);
        if gamma + 1 < cfg.n0 {
            r2_points += 1;
            r2_worst = r2_worst.max(r2_sum(&s.sigmas, s.n, w, Some(gamma)));
        }
        let discrete: Complex<T> = s.sigmas.iter().map(|&x| (one + w * x).inv() * x).sum::<Complex<T>>() * inv_n;
        dev_worst = dev_worst.max((discrete - fc).norm());
    }
    let mm = T::from_usize_lossy(m);
    let eps = cfg.eps_ratio * cfg.phi;
    let budget = cfg.c_eps * mm.powf(cfg.phi + eps) / mm.sqrt();
    let cond2_r2 = GridCheck {
        pass: r2_worst < cfg.c_threshold,
        worst: r2_worst,
        bound: cfg.c_threshold,
        points: r2_points,
    };
    let cond3_clt = GridCheck {
        pass: dev_worst <= budget,
        worst: dev_worst,
        bound: budget,
        points: ctx.mfc.len(),
    };
    OmegaReport {
        overall: cond1_gaps.pass && cond2_r2.pass && cond3_clt.pass,
        cond1_gaps,
        cond2_r2,
        cond3_clt,
    }
}

/// Largest `E` in the window around `predict_eigenvalue(σ_γ)` where
/// `1 + Re(1/(σ_γ m̂_fc(E + iη₀)))` changes sign.
pub fn hat_z_gamma<T: Real>(
    s: &PopulationSpectrum<T>,
    gamma: usize,
    edge: &EdgeReport<T>,
    cfg: &OmegaConfig<T>,
) -> Result<T> {
    if gamma == 0 || gamma >= cfg.n0 {
        return Err(Error::Parameter(format!("gamma = {gamma} outside [1, {}]", cfg.n0 - 1)));
    }
    let m = s.m();
    let sigma = s.sigmas[gamma - 1];
    let guess = predict_eigenvalue(edge, sigma)?;
    let mm = T::from_usize_lossy(m);
    let half = T::lit(10.0) * mm.powf(-T::lit(0.5) + T::lit(3.0) * cfg.phi);
    let eta = cfg.eta0(m);
    let kernel = HatKernel::new(s);
    let opts = SolverOptions::default();
    let g = |w: Complex<T>| T::one() + (w * sigma).inv().re;

    const SCAN: usize = 512;
    let lo = guess - half;
    let step = (half + half) / T::from_usize_lossy(SCAN - 1);
    let mut prev: Option<(T, T, Solved<T>)> = None;
    for i in (0..SCAN).rev() {
        let e = lo + step * T::from_usize_lossy(i);
        let start = prev.map(|p| p.2.value);
        let solved = fixed_point::solve_column(&kernel, e, &[eta], &opts, start)?[0];
        let val = g(solved.value);
        if let Some((pe, pv, ps)) = prev {
            if (val <= T::zero()) != (pv <= T::zero()) {
                return bisect_root(&kernel, &g, (e, val, solved), (pe, pv, ps), eta, &opts);
            }
        }
        prev = Some((e, val, solved));
    }
    Err(Error::Root(format!(
        "no sign change of 1 + Re 1/(sigma_{gamma} m) on [{lo}, {}] at eta = {eta}",
        guess + half
    )))
}

fn bisect_root<T: Real>(
    kernel: &HatKernel<'_, T>,
    g: &impl Fn(Complex<T>) -> T,
    mut left: (T, T, Solved<T>),
    mut right: (T, T, Solved<T>),
    eta: T,
    opts: &SolverOptions<T>,
) -> Result<T> {
    for _ in 0..200 {
        if (right.0 - left.0).abs() <= T::lit(1e-14) * right.0.abs().max(T::one()) {
            break;
        }
        let mid = left.0 + (right.0 - left.0) / T::lit(2.0);
        let solved = fixed_point::solve_column(kernel, mid, &[eta], opts, Some(right.2.value))?[0];
        let val = g(solved.value);
        if (val <= T::zero()) == (right.1 <= T::zero()) {
            right = (mid, val, solved);
        } else {
            left = (mid, val, solved);
        }
    }
    Ok(if left.1.abs() < right.1.abs() { left.0 } else { right.0 })
}
