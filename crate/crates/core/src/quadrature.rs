//! Gauss rules with a `(1 - x)^a` endpoint weight.
//!
//! Nodes and weights come from the Golub-Welsch construction: the Jacobi
//! matrix of the orthogonal polynomial family is diagonalized by implicit QL
//! and only the first component of each eigenvector is tracked, which is all
//! the weights need.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A quadrature rule for `∫ (upper - t)^exponent g(t) dt` on a finite interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    /// Abscissae, strictly increasing.
    pub nodes: Vec<T>,
    /// Positive weights; the `(upper - t)^exponent` factor is already absorbed.
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    /// Gauss-Jacobi rule on `[-1, 1]` for the weight `(1 - x)^a`.
    pub fn gauss_jacobi(n: usize, a: T) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("quadrature order must be positive".into()));
        }
        if a <= -T::one() {
            return Err(Error::Parameter(format!("Jacobi exponent {a} must exceed -1")));
        }
        let one = T::one();
        let two = T::lit(2.0);
        let four = T::lit(4.0);
        // b = 0 throughout.
        let mut diag = vec![T::zero(); n];
        let mut off = vec![T::zero(); n];
        diag[0] = -a / (a + two);
        for (k, d) in diag.iter_mut().enumerate().skip(1) {
            let k = T::from_usize_lossy(k);
            let s = two * k + a;
            *d = -(a * a) / (s * (s + two));
        }
        if n > 1 {
            // k = 1 written without the removable (1 + a + b) factor.
            off[0] = (four * (one + a) / ((two + a) * (two + a) * (T::lit(3.0) + a))).sqrt();
        }
        for (k, o) in off.iter_mut().enumerate().take(n - 1).skip(1) {
            let k = T::from_usize_lossy(k + 1);
            let s = two * k + a;
            *o = (four * k * (k + a) * k * (k + a) / (s * s * (s + one) * (s - one))).sqrt();
        }
        let mu0 = two.powf(a + one) / (a + one);
        let (nodes, first) = symmetric_tridiagonal_ql(diag, off)?;
        let mut pairs: Vec<(T, T)> = nodes
            .into_iter()
            .zip(first)
            .map(|(x, v)| (x, mu0 * v * v))
            .collect();
        pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).expect("finite nodes"));
        let (nodes, weights) = pairs.into_iter().unzip();
        Ok(Self { nodes, weights })
    }

    /// Gauss-Legendre rule on `[-1, 1]`.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        Self::gauss_jacobi(n, T::zero())
    }

    /// Maps a `[-1, 1]` Jacobi rule with exponent `a` onto `[lo, hi]`, keeping
    /// the weight `(hi - t)^a` absorbed into the weights.
    pub fn mapped(&self, a: T, lo: T, hi: T) -> Self {
        let half = (hi - lo) / T::lit(2.0);
        let scale = half.powf(a + T::one());
        Self {
            nodes: self.nodes.iter().map(|&x| lo + half * (x + T::one())).collect(),
            weights: self.weights.iter().map(|&w| w * scale).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i g(x_i)`.
    pub fn apply(&self, mut g: impl FnMut(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix together with the first
/// component of each normalized eigenvector.
///
/// `off[i]` couples rows `i` and `i + 1`; `off[n - 1]` is ignored.
fn symmetric_tridiagonal_ql<T: Real>(mut d: Vec<T>, mut e: Vec<T>) -> Result<(Vec<T>, Vec<T>)> {
    let n = d.len();
    let mut z = vec![T::zero(); n];
    z[0] = T::one();
    if n > 0 {
        e[n - 1] = T::zero();
    }
    let eps = T::epsilon();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Solver { iterations: iter, residual: e[l].abs().as_f64() });
            }
            let mut g = (d[l + 1] - d[l]) / (T::lit(2.0) * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + T::lit(2.0) * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if deflated {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok((d, z))
}
