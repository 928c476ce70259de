//! Jacobi population measures `Z⁻¹ (1 - t)^β f(t) dt` on `[l, 1]`.

use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::scalar::Real;

/// Default node count of the attached Gauss-Jacobi rule.
pub const DEFAULT_QUAD_ORDER: usize = 256;
/// Knot count of the tabulated CDF used for inverse-CDF sampling.
pub const CDF_TABLE_POINTS: usize = 4096;
/// Node count of the per-panel rules used near poles.
const PANEL_ORDER: usize = 20;
/// A panel is accepted when every singular point is at least this many
/// panel lengths away.
const PANEL_RATIO: f64 = 0.5;
const MAX_PANEL_DEPTH: u32 = 64;

/// Smooth positive factor `f` of the density.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    /// `f ≡ 1`
    Constant,
    /// `f(t) = e^t`
    Exponential,
    /// `f(t) = c0 + c1 t + c2 t² + …`
    Polynomial(Vec<T>),
}

impl<T: Real> Profile<T> {
    pub fn eval(&self, t: T) -> T {
        match self {
            Profile::Constant => T::one(),
            Profile::Exponential => t.exp(),
            Profile::Polynomial(c) => c.iter().rev().fold(T::zero(), |acc, &ci| acc * t + ci),
        }
    }
}

impl<T: Real> FromStr for Profile<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "const" | "constant" => Ok(Profile::Constant),
            "exp" => Ok(Profile::Exponential),
            _ => {
                let coeffs = s
                    .strip_prefix("poly:")
                    .ok_or_else(|| Error::Parameter(format!("unknown profile `{s}`")))?;
                let parsed = coeffs
                    .split(',')
                    .map(|c| {
                        c.trim()
                            .parse::<f64>()
                            .map(T::lit)
                            .map_err(|e| Error::Parameter(format!("bad coefficient `{c}`: {e}")))
                    })
                    .collect::<Result<Vec<T>>>()?;
                if parsed.is_empty() {
                    return Err(Error::Parameter("polynomial profile needs coefficients".into()));
                }
                Ok(Profile::Polynomial(parsed))
            }
        }
    }
}

impl<T: Real> std::fmt::Display for Profile<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Constant => write!(f, "const"),
            Profile::Exponential => write!(f, "exp"),
            Profile::Polynomial(c) => {
                write!(f, "poly:")?;
                for (i, x) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
struct CdfTable<T> {
    knots: Vec<T>,
    values: Vec<T>,
    slopes: Vec<T>,
}

/// Population spectral law with density `Z⁻¹ (1 - t)^β f(t)` on `[l, 1]`.
///
/// Immutable after construction; every method is `&self`.
#[derive(Debug, Clone)]
pub struct JacobiMeasure<T> {
    beta: T,
    l: T,
    profile: Profile<T>,
    z: T,
    quad_order: usize,
    /// Gauss-Jacobi rule on `[l, 1]` with the `(1 - t)^β` weight absorbed.
    rule: QuadratureRule<T>,
    /// `rule.weights[i] * f(t_i) / Z`
    mass_weights: Vec<T>,
    legendre_ref: QuadratureRule<T>,
    jacobi_ref: QuadratureRule<T>,
    cdf: Arc<OnceLock<CdfTable<T>>>,
}

impl<T: Real> JacobiMeasure<T> {
    /// Builds and normalizes a measure.
    pub fn new(beta: T, l: T, profile: Profile<T>, quad_order: usize) -> Result<Self> {
        if !(beta > -T::one()) {
            return Err(Error::Parameter(format!("beta = {beta} must exceed -1")));
        }
        if !(l > T::zero() && l < T::one()) {
            return Err(Error::Parameter(format!("left endpoint l = {l} must lie in (0, 1)")));
        }
        if quad_order < 2 {
            return Err(Error::Parameter("quad_order must be at least 2".into()));
        }
        let rule = QuadratureRule::gauss_jacobi(quad_order, beta)?.mapped(beta, l, T::one());
        let mut f_nodes = Vec::with_capacity(rule.len());
        for &t in rule.nodes.iter().chain([l, T::one()].iter()) {
            let v = profile.eval(t);
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain(format!("profile {profile} is not positive at t = {t}")));
            }
            f_nodes.push(v);
        }
        f_nodes.truncate(rule.len());
        let z: T = rule.weights.iter().zip(&f_nodes).map(|(&w, &f)| w * f).sum();
        if !(z > T::zero()) {
            return Err(Error::Domain("normalization constant is not positive".into()));
        }
        let mass_weights = rule.weights.iter().zip(&f_nodes).map(|(&w, &f)| w * f / z).collect();
        Ok(Self {
            beta,
            l,
            profile,
            z,
            quad_order,
            rule,
            mass_weights,
            legendre_ref: QuadratureRule::gauss_legendre(PANEL_ORDER)?,
            jacobi_ref: QuadratureRule::gauss_jacobi(PANEL_ORDER, beta)?,
            cdf: Arc::new(OnceLock::new()),
        })
    }

    /// `e^t (1 - t)^3` on `[0.1, 1]`: convex edge, `d_+ ≈ 0.703908`.
    pub fn f1() -> Self {
        Self::new(T::lit(3.0), T::lit(0.1), Profile::Exponential, DEFAULT_QUAD_ORDER)
            .expect("f1 preset is valid")
    }

    /// `e^t (1 - t)^{1/2}` on `[0.1, 1]`: concave edge, `d_+ = ∞`.
    pub fn f2() -> Self {
        Self::new(T::lit(0.5), T::lit(0.1), Profile::Exponential, DEFAULT_QUAD_ORDER)
            .expect("f2 preset is valid")
    }

    /// Looks up a named preset (`f1`, `f2`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "f1" => Some(Self::f1()),
            "f2" => Some(Self::f2()),
            _ => None,
        }
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn left(&self) -> T {
        self.l
    }

    pub fn profile(&self) -> &Profile<T> {
        &self.profile
    }

    /// Normalization constant `Z = ∫ (1 - t)^β f(t) dt`.
    pub fn normalization(&self) -> T {
        self.z
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn rule(&self) -> &QuadratureRule<T> {
        &self.rule
    }

    /// `lim_{t→1} ρ(t) / (1 - t)^β = f(1) / Z`.
    pub fn edge_coefficient(&self) -> T {
        self.profile.eval(T::one()) / self.z
    }

    /// Density `Z⁻¹ (1 - t)^β f(t)`; zero off `[l, 1]`.
    pub fn density(&self, t: T) -> T {
        if t < self.l || t > T::one() {
            return T::zero();
        }
        (T::one() - t).powf(self.beta) * self.profile.eval(t) / self.z
    }

    /// `∫ g dν` with the attached endpoint-weighted rule.
    pub fn integrate(&self, mut g: impl FnMut(T) -> T) -> Result<T> {
        let mut acc = T::zero();
        for (&t, &w) in self.rule.nodes.iter().zip(&self.mass_weights) {
            let v = g(t);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!("integrand is {v} at t = {t}")));
            }
            acc = acc + w * v;
        }
        Ok(acc)
    }

    /// `∫ g(t) (1 - t)^{-k} dν(t)` for smooth `g`.
    ///
    /// The singular factor is folded into a Gauss-Jacobi weight with exponent
    /// `β - k`, so only `g` is sampled. Requires `β - k > -1`.
    pub fn integrate_endpoint(&self, k: T, mut g: impl FnMut(T) -> T) -> Result<T> {
        let a = self.beta - k;
        if !(a > -T::one()) {
            return Err(Error::Parameter(format!(
                "(1-t)^-{k} is not integrable against (1-t)^{} ",
                self.beta
            )));
        }
        let rule = QuadratureRule::gauss_jacobi(self.quad_order, a)?.mapped(a, self.l, T::one());
        let mut acc = T::zero();
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = g(t) * self.profile.eval(t);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!("integrand is {v} at t = {t}")));
            }
            acc = acc + w * v;
        }
        Ok(acc / self.z)
    }

    /// Visits `(t, w)` pairs with `Σ w g(t) ≈ ∫ g dν` for integrands whose
    /// only singularity off `t = 1` is a pole at `pole`.
    ///
    /// Panels are bisected until both the pole and the `(1 - t)^β` endpoint
    /// sit at least half a panel length away; the panel touching `t = 1` uses
    /// a Gauss-Jacobi rule, all others Gauss-Legendre.
    pub fn visit_near(&self, pole: Complex<T>, mut visit: impl FnMut(T, T)) {
        let one = T::one();
        let ratio = T::lit(PANEL_RATIO);
        let min_len = (one - self.l) * T::epsilon() * T::lit(16.0);
        let c = pole.re.max(self.l).min(one);
        let mut stack: Vec<(T, T, u32)> = Vec::with_capacity(2 * MAX_PANEL_DEPTH as usize);
        if c > self.l && c < one {
            stack.push((c, one, 0));
            stack.push((self.l, c, 0));
        } else {
            stack.push((self.l, one, 0));
        }
        while let Some((a, b, depth)) = stack.pop() {
            let len = b - a;
            let touches_edge = b == one;
            let pole_ok = distance_to_segment(pole, a, b) >= ratio * len;
            let edge_ok = touches_edge || one - b >= ratio * len;
            if (pole_ok && edge_ok) || depth >= MAX_PANEL_DEPTH || len <= min_len {
                self.emit_panel(a, b, &mut visit);
            } else {
                let mid = a + len / T::lit(2.0);
                stack.push((mid, b, depth + 1));
                stack.push((a, mid, depth + 1));
            }
        }
    }

    fn emit_panel(&self, a: T, b: T, visit: &mut impl FnMut(T, T)) {
        let half = (b - a) / T::lit(2.0);
        if b == T::one() {
            let scale = half.powf(self.beta + T::one()) / self.z;
            for (&x, &w) in self.jacobi_ref.nodes.iter().zip(&self.jacobi_ref.weights) {
                let t = a + half * (x + T::one());
                visit(t, w * scale * self.profile.eval(t));
            }
        } else {
            for (&x, &w) in self.legendre_ref.nodes.iter().zip(&self.legendre_ref.weights) {
                let t = a + half * (x + T::one());
                visit(t, w * half * self.density(t));
            }
        }
    }

    /// `ν([1 - x, 1])`.
    pub fn tail_probability(&self, x: T) -> Result<T> {
        let span = T::one() - self.l;
        let tol = T::epsilon() * T::lit(8.0);
        if !(x >= T::zero() && x <= span + tol) {
            return Err(Error::Parameter(format!("tail width {x} outside [0, {span}]")));
        }
        if x == T::zero() {
            return Ok(T::zero());
        }
        let x = x.min(span);
        Ok(self.mass_on_edge_panel(T::one() - x))
    }

    /// `ν([a, 1])` by one Gauss-Jacobi panel.
    fn mass_on_edge_panel(&self, a: T) -> T {
        let mut acc = T::zero();
        self.emit_panel(a, T::one(), &mut |_, w| acc = acc + w);
        acc
    }

    /// Distribution function `ν([l, t])`.
    pub fn cdf(&self, t: T) -> T {
        if t <= self.l {
            return T::zero();
        }
        if t >= T::one() {
            return T::one();
        }
        let table = self.cdf_table();
        let (k, s, h) = table.locate(t);
        if k + 2 == table.knots.len() {
            // a cubic cannot follow (1 - t)^{β+1} in the edge cell
            return T::one() - self.mass_on_edge_panel(t);
        }
        table.hermite(k, s, h)
    }

    /// Solves `cdf(t) = u` inside the cell touching `t = 1`.
    fn invert_edge_cell(&self, u: T, start: T) -> T {
        let two = T::lit(2.0);
        let (mut lo, mut hi) = (start, T::one());
        let mut t = (lo + hi) / two;
        for _ in 0..100 {
            let f = T::one() - self.mass_on_edge_panel(t) - u;
            if f > T::zero() {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.density(t);
            let next = if d > T::zero() { t - f / d } else { (lo + hi) / two };
            t = if next > lo && next < hi { next } else { (lo + hi) / two };
            if f.abs() <= T::epsilon() * T::lit(4.0) || hi - lo <= T::epsilon() {
                break;
            }
        }
        t
    }

    fn cdf_table(&self) -> &CdfTable<T> {
        self.cdf.get_or_init(|| self.build_cdf_table())
    }

    fn build_cdf_table(&self) -> CdfTable<T> {
        let n = CDF_TABLE_POINTS;
        let span = T::one() - self.l;
        let knots: Vec<T> = (0..n)
            .map(|k| {
                if k == n - 1 {
                    T::one()
                } else {
                    self.l + span * T::from_usize_lossy(k) / T::from_usize_lossy(n - 1)
                }
            })
            .collect();
        let gl = QuadratureRule::<T>::gauss_legendre(10).expect("static order");
        let mut values = vec![T::zero(); n];
        for k in 0..n - 1 {
            let (a, b) = (knots[k], knots[k + 1]);
            let cell = if k == n - 2 {
                self.mass_on_edge_panel(a)
            } else {
                let half = (b - a) / T::lit(2.0);
                gl.apply(|x| self.density(a + half * (x + T::one()))) * half
            };
            values[k + 1] = values[k] + cell;
        }
        let total = values[n - 1];
        for v in values.iter_mut() {
            *v = *v / total;
        }
        // Exact derivatives, then the Fritsch-Carlson limiter for monotonicity.
        let mut slopes: Vec<T> = knots.iter().map(|&t| self.density(t) / total).collect();
        for k in 0..n - 1 {
            let h = knots[k + 1] - knots[k];
            let delta = (values[k + 1] - values[k]) / h;
            if delta <= T::zero() {
                slopes[k] = T::zero();
                slopes[k + 1] = T::zero();
                continue;
            }
            let a = slopes[k] / delta;
            let b = slopes[k + 1] / delta;
            let r = a * a + b * b;
            let nine = T::lit(9.0);
            if r > nine {
                let tau = T::lit(3.0) / r.sqrt();
                slopes[k] = tau * a * delta;
                slopes[k + 1] = tau * b * delta;
            }
        }
        CdfTable { knots, values, slopes }
    }

    /// Inverse-CDF sample of `count` points from a generator.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<T> {
        let table = self.cdf_table();
        (0..count)
            .map(|_| {
                let u = T::lit(rng.random::<f64>());
                let n = table.values.len();
                if u >= table.values[n - 2] {
                    self.invert_edge_cell(u, table.knots[n - 2])
                } else {
                    table.invert(u)
                }
            })
            .collect()
    }

    /// Deterministic inverse-CDF sample for a seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, count)
    }
}

impl<T: Real> CdfTable<T> {
    fn locate(&self, t: T) -> (usize, T, T) {
        let k = match self.knots.binary_search_by(|x| x.partial_cmp(&t).expect("finite")) {
            Ok(k) => k.min(self.knots.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.knots.len() - 2),
        };
        let h = self.knots[k + 1] - self.knots[k];
        (k, (t - self.knots[k]) / h, h)
    }

    fn hermite(&self, k: usize, s: T, h: T) -> T {
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1
    }

    fn invert(&self, u: T) -> T {
        let n = self.values.len();
        let k = match self.values.binary_search_by(|v| v.partial_cmp(&u).expect("finite")) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.saturating_sub(1).min(n - 2),
        };
        let h = self.knots[k + 1] - self.knots[k];
        // Safeguarded Newton on the monotone cubic within the cell.
        let (mut lo, mut hi) = (T::zero(), T::one());
        let span = self.values[k + 1] - self.values[k];
        let mut s = if span > T::zero() { ((u - self.values[k]) / span).max(T::zero()).min(T::one()) } else { T::zero() };
        for _ in 0..60 {
            let f = self.hermite(k, s, h) - u;
            if f.abs() <= T::epsilon() * T::lit(4.0) {
                break;
            }
            if f > T::zero() {
                hi = s;
            } else {
                lo = s;
            }
            let two = T::lit(2.0);
            let three = T::lit(3.0);
            let six = T::lit(6.0);
            let s2 = s * s;
            let d = (six * s2 - six * s) * self.values[k]
                + (three * s2 - T::lit(4.0) * s + T::one()) * self.slopes[k] * h
                + (six * s - six * s2) * self.values[k + 1]
                + (three * s2 - two * s) * self.slopes[k + 1] * h;
            let next = if d > T::zero() { s - f / d } else { (lo + hi) / two };
            s = if next > lo && next < hi { next } else { (lo + hi) / two };
            if hi - lo <= T::epsilon() {
                break;
            }
        }
        self.knots[k] + h * s
    }
}

fn distance_to_segment<T: Real>(p: Complex<T>, a: T, b: T) -> T {
    let x = p.re.max(a).min(b);
    (p.re - x).hypot(p.im)
}
