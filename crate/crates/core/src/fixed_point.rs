//! Solver for self-consistent equations of the form
//! `w = (-z + S(w))⁻¹`, `Im w ≥ 0`, where `S(w) = c ∫ t dμ(t) / (1 + t w)`.
//!
//! The iteration is damped Picard, `w ← (1 - α) w + α map(w)`. Whenever the
//! Newton step for `1/w + z - S(w) = 0` stays in the upper half-plane it is
//! taken instead; if it fails to reduce the defect the rung falls back to
//! pure Picard. Small `η` is reached through a descending ladder of spectral
//! parameters, each rung warm-started from the previous one.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value of `S(w)` and of `Σ(w) = c ∫ t² dμ / (1 + t w)²` (so `S'(w) = -Σ(w)`).
pub(crate) trait SelfEnergy<T: Real> {
    fn eval(&self, w: Complex<T>) -> Result<(Complex<T>, Complex<T>)>;
}

/// Tunables of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T> {
    /// Accept when `|w - map(w)| < tol · max(1, |w|)`.
    pub tol: T,
    pub max_iter: usize,
    /// Picard damping `α`.
    pub damping: T,
    /// Newton acceleration on top of Picard.
    pub newton: bool,
    /// Top of the `η` ladder.
    pub ladder_top: T,
    /// Ratio between successive ladder rungs.
    pub ladder_ratio: T,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            max_iter: 100_000,
            damping: T::lit(0.5),
            newton: true,
            ladder_top: T::one(),
            ladder_ratio: T::lit(0.1),
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }
}

/// Converged value at one spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solved<T> {
    pub value: Complex<T>,
    pub residual: T,
    pub iterations: usize,
}

pub(crate) fn defect<T: Real>(
    kernel: &impl SelfEnergy<T>,
    z: Complex<T>,
    w: Complex<T>,
) -> Result<(T, Complex<T>, Complex<T>, Complex<T>)> {
    let (s, sigma) = kernel.eval(w)?;
    let map = (s - z).inv();
    Ok(((w - map).norm(), map, s, sigma))
}

/// Solves at a single `z` from the starting value `w0`.
pub(crate) fn solve_from<T: Real>(
    kernel: &impl SelfEnergy<T>,
    z: Complex<T>,
    w0: Complex<T>,
    opts: &SolverOptions<T>,
) -> Result<Solved<T>> {
    let one = T::one();
    let mut w = w0;
    let mut newton = opts.newton;
    let mut last_defect = T::infinity();
    let mut residual = T::infinity();
    for iter in 0..opts.max_iter {
        let (def, map, s, sigma) = defect(kernel, z, w)?;
        residual = def;
        if !def.is_finite() {
            return Err(Error::Solver { iterations: iter, residual: f64::INFINITY });
        }
        if def < opts.tol * w.norm().max(one) {
            return Ok(Solved { value: w, residual: def, iterations: iter });
        }
        if newton && def >= last_defect {
            newton = false;
        }
        last_defect = def;
        let picard = w * (one - opts.damping) + map * opts.damping;
        let mut next = picard;
        if newton {
            // Φ(w) = 1/w + z - S(w), Φ'(w) = -1/w² + Σ(w)
            let inv = w.inv();
            let phi = inv + z - s;
            let dphi = sigma - inv * inv;
            if dphi.norm() > T::zero() {
                let cand = w - phi / dphi;
                if cand.im > T::zero() && cand.re.is_finite() && cand.im.is_finite() {
                    next = cand;
                }
            }
        }
        if next.im < T::zero() {
            next.im = T::zero();
        }
        w = next;
    }
    Err(Error::Solver { iterations: opts.max_iter, residual: residual.as_f64() })
}

/// Solves along `energy + i η_k` for the given `η` values (any order); the
/// ladder runs from `max(ladder_top, max η)` down through every requested
/// value. Results are returned in the order of `etas`.
pub(crate) fn solve_column<T: Real>(
    kernel: &impl SelfEnergy<T>,
    energy: T,
    etas: &[T],
    opts: &SolverOptions<T>,
    start: Option<Complex<T>>,
) -> Result<Vec<Solved<T>>> {
    if etas.iter().any(|&e| !(e > T::zero())) {
        return Err(Error::Parameter("spectral parameter needs eta > 0".into()));
    }
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by(|&a, &b| etas[b].partial_cmp(&etas[a]).expect("finite eta"));
    let mut out = vec![None; etas.len()];
    let mut w = start.unwrap_or(Complex::new(T::zero(), T::one()));
    let mut current = if start.is_some() {
        etas[order[0]]
    } else {
        let top = opts.ladder_top.max(etas[order[0]]);
        let solved = solve_from(kernel, Complex::new(energy, top), w, opts)?;
        w = solved.value;
        top
    };
    for &idx in &order {
        let target = etas[idx];
        // intermediate rungs
        loop {
            let next = current * opts.ladder_ratio;
            if next <= target {
                break;
            }
            w = solve_from(kernel, Complex::new(energy, next), w, opts)?.value;
            current = next;
        }
        let solved = solve_from(kernel, Complex::new(energy, target), w, opts)?;
        w = solved.value;
        current = target;
        out[idx] = Some(solved);
    }
    Ok(out.into_iter().map(|s| s.expect("every eta solved")).collect())
}
