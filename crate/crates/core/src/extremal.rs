//! Limiting laws of the largest eigenvalues and goodness-of-fit against them.
//!
//! Above the threshold the rescaled gap `M^{1/(β+1)} (L_+ - λ_γ)` follows the
//! law of the rescaled population order statistics, Weibull for `γ = 1`.
//! Below it `M^{1/2} (λ₁ - L_+)` is asymptotically centered Gaussian.

use std::fmt;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::freeconv::{self, Regime};
use crate::measure::JacobiMeasure;
use crate::scalar::Real;

/// Law of `s = M^{1/(β+1)} (L_+ - λ₁)`: `G(s) = 1 - exp(-C_ν s^{β+1} / (β+1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullParams<T> {
    /// `β + 1`.
    pub shape: T,
    pub c_nu: T,
    pub m: usize,
    pub c_d: T,
}

impl<T: Real> WeibullParams<T> {
    /// Parameters for `(ν, d)` at matrix size `m`.
    pub fn new(measure: &JacobiMeasure<T>, d: T, m: usize) -> Result<Self> {
        let edge = freeconv::edge(measure, d)?;
        let c_d = edge.require_supercritical()?;
        let shape = measure.beta() + T::one();
        if !(shape > T::lit(2.0)) {
            return Err(Error::Regime(format!("Weibull limit needs beta > 1, got {}", measure.beta())));
        }
        Ok(Self { shape, c_nu: c_nu(measure, d, edge.d_plus)?, m, c_d })
    }

    /// `C_ν s^{β+1} / (β+1)`, the exponent of the limit law.
    pub fn intensity(&self, s: T) -> T {
        if s <= T::zero() {
            return T::zero();
        }
        self.c_nu * s.powf(self.shape) / self.shape
    }

    /// `s` with `G(s) = p`.
    pub fn quantile(&self, p: T) -> T {
        (-(T::one() - p).ln() * self.shape / self.c_nu).powf(self.shape.recip())
    }
}

/// `1 - exp(-C_ν s^{β+1} / (β+1))`, zero for `s < 0`.
pub fn weibull_cdf<T: Real>(p: &WeibullParams<T>, s: T) -> T {
    -(-p.intensity(s)).exp_m1()
}

/// Limit law of the `γ`-th rescaled gap:
/// `1 - e^{-x} Σ_{k<γ} x^k / k!` with `x = C_ν s^{β+1} / (β+1)`.
pub fn weibull_order_cdf<T: Real>(p: &WeibullParams<T>, gamma: usize, s: T) -> T {
    let x = p.intensity(s);
    if gamma <= 1 {
        return weibull_cdf(p, s);
    }
    let mut term = T::one();
    let mut partial = T::one();
    for k in 1..gamma {
        term = term * x / T::from_usize_lossy(k);
        partial = partial + term;
    }
    (T::one() - (-x).exp() * partial).max(T::zero())
}

/// `C_ν = (d / (d - d_+))^{β+1} f(1) / Z`.
pub fn c_nu<T: Real>(m: &JacobiMeasure<T>, d: T, d_plus: T) -> Result<T> {
    if !(d > d_plus) {
        return Err(Error::Regime(format!("C_nu needs d > d_+, got d = {d}, d_+ = {d_plus}")));
    }
    let limit = m.edge_coefficient();
    if !(limit > T::zero() && limit.is_finite()) {
        return Err(Error::Domain(format!("edge coefficient f(1)/Z = {limit} is not positive")));
    }
    Ok((d / (d - d_plus)).powf(m.beta() + T::one()) * limit)
}

/// `M^{1/(β+1)} (L_+ - λ)` for each sample.
pub fn rescale_supercritical<T: Real>(lambdas: &[T], l_plus: T, m: usize, beta: T) -> Vec<T> {
    let scale = edge_scale(m, beta);
    lambdas.iter().map(|&l| scale * (l_plus - l)).collect()
}

/// `C_d M^{1/(β+1)} (1 - σ)` for each sample.
pub fn order_statistic_reference<T: Real>(sigmas: &[T], c_d: T, m: usize, beta: T) -> Vec<T> {
    let scale = edge_scale(m, beta) * c_d;
    sigmas.iter().map(|&s| scale * (T::one() - s)).collect()
}

/// `M^{1/(β+1)}`.
pub fn edge_scale<T: Real>(m: usize, beta: T) -> T {
    T::from_usize_lossy(m).powf((beta + T::one()).recip())
}

/// Law of `M^{1/2} (λ₁ - L_+)` below the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams<T> {
    pub mean: T,
    /// `d⁻² Var_ν(t τ / (t + τ))`.
    pub variance: T,
    /// Subcritical `τ < -1`.
    pub tau: T,
    pub l_plus: T,
}

impl<T: Real> GaussianParams<T> {
    pub fn cdf(&self, x: T) -> T {
        normal_cdf(x, self.mean, self.variance)
    }
}

/// `N(mean, variance)` distribution function; a step at `mean` when the
/// variance vanishes.
pub fn normal_cdf<T: Real>(x: T, mean: T, variance: T) -> T {
    if !(variance > T::zero()) {
        return if x < mean { T::zero() } else { T::one() };
    }
    let z = (x - mean).as_f64() / (2.0 * variance.as_f64()).sqrt();
    T::lit(0.5 * libm::erfc(-z))
}

/// Variance of the Gaussian fluctuation at `(ν, d)`, `d < d_+`.
pub fn gaussian_reference<T: Real>(m: &JacobiMeasure<T>, d: T) -> Result<GaussianParams<T>> {
    let edge = freeconv::edge(m, d)?;
    let tau = edge.require_subcritical()?;
    let (mut first, mut second) = (T::zero(), T::zero());
    m.visit_near(Complex::new(-tau, T::zero()), |t, w| {
        let g = t * tau / (t + tau);
        first = first + w * g;
        second = second + w * g * g;
    });
    if !(first.is_finite() && second.is_finite()) {
        return Err(Error::Evaluation(format!("variance integrand not finite at tau = {tau}")));
    }
    let variance = ((second - first * first) / (d * d)).max(T::zero());
    Ok(GaussianParams { mean: T::zero(), variance, tau, l_plus: edge.l_plus })
}

/// Sup distance between the empirical distribution of `samples` and `cdf`.
pub fn ks_distance<T: Real>(samples: &[T], cdf: impl Fn(T) -> T) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Parameter("KS distance of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = T::from_usize_lossy(sorted.len());
    let mut d = T::zero();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        let f = cdf(x);
        let below = T::from_usize_lossy(i) / n;
        let at = T::from_usize_lossy(j) / n;
        d = d.max((f - below).abs()).max((at - f).abs());
        i = j;
    }
    Ok(d.min(T::one()))
}

/// Sup distance between two empirical distribution functions.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("KS distance of an empty sample".into()));
    }
    let sort = |v: &[T]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| x.partial_cmp(y).expect("finite samples"));
        s
    };
    let (a, b) = (sort(a), sort(b));
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (mut i, mut j) = (0, 0);
    let mut d = T::zero();
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((T::from_usize_lossy(i) / na - T::from_usize_lossy(j) / nb).abs());
    }
    Ok(d)
}

/// Median of `|λ₁ - L̂_+| M^{2/3}` over trials, pairing each `λ₁` with the
/// empirical edge of the same trial.
pub fn m23_gap_check<T: Real>(lambdas: &[T], l_plus: &[T], m: usize) -> Result<T> {
    if lambdas.is_empty() || lambdas.len() != l_plus.len() {
        return Err(Error::Parameter(format!(
            "need matching non-empty samples, got {} and {}",
            lambdas.len(),
            l_plus.len()
        )));
    }
    let scale = T::from_usize_lossy(m).powf(T::lit(2.0 / 3.0));
    let gaps: Vec<T> = lambdas.iter().zip(l_plus).map(|(&l, &e)| (l - e).abs() * scale).collect();
    median(&gaps)
}

pub fn median<T: Real>(v: &[T]) -> Result<T> {
    if v.is_empty() {
        return Err(Error::Parameter("median of an empty sample".into()));
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let k = s.len() / 2;
    Ok(if s.len() % 2 == 1 { s[k] } else { (s[k - 1] + s[k]) / T::lit(2.0) })
}

/// Sample mean and unbiased variance.
pub fn mean_variance<T: Real>(v: &[T]) -> Result<(T, T)> {
    if v.len() < 2 {
        return Err(Error::Parameter("need at least two samples".into()));
    }
    let n = T::from_usize_lossy(v.len());
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    Ok((mean, var))
}

/// Which limit a report tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Weibull,
    Gaussian,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "weibull" => Ok(Self::Weibull),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Parameter(format!("unknown mode '{other}'"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Weibull => "weibull",
            Self::Gaussian => "gaussian",
        })
    }
}

/// One thresholded statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

/// Goodness-of-fit summary.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub mode: Mode,
    pub sample_count: usize,
    pub ks_statistic: f64,
    /// `(γ, median |λ_γ - prediction|)`.
    pub location_errors: Vec<(usize, f64)>,
    pub verdicts: Vec<Verdict>,
}

impl TestReport {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mode={} samples={} ks={}", self.mode, self.sample_count, self.ks_statistic)?;
        for (g, e) in &self.location_errors {
            write!(f, " loc_err_{g}={e}")?;
        }
        for v in &self.verdicts {
            write!(f, " {}={} {}_max={} {}_pass={}", v.name, v.value, v.name, v.threshold, v.name, v.pass)?;
        }
        write!(f, " pass={}", self.pass())
    }
}

/// Whether the regime at `(ν, d)` matches `mode`.
pub fn check_regime<T: Real>(m: &JacobiMeasure<T>, d: T, mode: Mode) -> Result<()> {
    let regime = freeconv::edge(m, d)?.regime;
    match (mode, regime) {
        (Mode::Weibull, Regime::Supercritical) | (Mode::Gaussian, Regime::Subcritical) => Ok(()),
        _ => Err(Error::Regime(format!("{mode} limit does not apply in the {regime} regime"))),
    }
}
