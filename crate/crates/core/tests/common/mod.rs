//! Independent reference computations shared by the integration tests.
//!
//! Nothing here touches the crate's quadrature rules or solvers.

#![allow(dead_code)]

use num_complex::Complex64;

const KRONROD_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = KRONROD_WEIGHTS[7] * fc;
    let mut g = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = h * KRONROD_NODES[i];
        let s = f(c - x) + f(c + x);
        k += KRONROD_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod integration to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth > 60 || (b - a) < 1e-15 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(f, a, b, tol, 0)
}

/// A Jacobi-type law described only through closed-form pieces.
#[derive(Clone, Copy)]
pub struct Law {
    pub beta: f64,
    pub l: f64,
    pub profile: fn(f64) -> f64,
    pub z: f64,
}

fn exp_profile(t: f64) -> f64 {
    t.exp()
}

fn const_profile(_: f64) -> f64 {
    1.0
}

impl Law {
    pub fn new(beta: f64, l: f64, profile: fn(f64) -> f64) -> Self {
        let mut law = Self { beta, l, profile, z: 1.0 };
        law.z = integrate(&|t| (1.0 - t).powf(beta) * profile(t), l, 1.0, 1e-15);
        law
    }

    pub fn f1() -> Self {
        Self::new(3.0, 0.1, exp_profile)
    }

    pub fn f2() -> Self {
        Self::new(0.5, 0.1, exp_profile)
    }

    pub fn constant(beta: f64, l: f64) -> Self {
        Self::new(beta, l, const_profile)
    }

    pub fn density(&self, t: f64) -> f64 {
        (1.0 - t).powf(self.beta) * (self.profile)(t) / self.z
    }

    /// `∫ g dν`.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        integrate(&|t| self.density(t) * g(t), self.l, 1.0, 1e-14)
    }

    pub fn expect_complex(&self, g: impl Fn(f64) -> Complex64) -> Complex64 {
        let re = integrate(&|t| self.density(t) * g(t).re, self.l, 1.0, 1e-14);
        let im = integrate(&|t| self.density(t) * g(t).im, self.l, 1.0, 1e-14);
        Complex64::new(re, im)
    }

    /// Plain damped Picard iteration for `m_fc`, started at `i`.
    pub fn picard_mfc(&self, d: f64, z: Complex64, iterations: usize) -> Complex64 {
        let mut w = Complex64::new(0.0, 1.0);
        for _ in 0..iterations {
            let s = self.expect_complex(|t| t / (1.0 + t * w)) / d;
            let next = 0.5 * w + 0.5 / (s - z);
            if (next - w).norm() < 1e-15 {
                return next;
            }
            w = next;
        }
        w
    }
}

/// Relative comparison helper.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
