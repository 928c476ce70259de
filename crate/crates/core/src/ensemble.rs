//! Sampling of `𝒬 = (Σ^{1/2} X)(Σ^{1/2} X)*`, its spectrum, resolvent probes
//! and seeded Monte Carlo.
//!
//! Every random quantity of a trial comes from its own ChaCha stream keyed
//! by `(seed, role)`, so a trial is reproducible in isolation and the trial
//! table does not depend on scheduling. Dense linear algebra inside a trial
//! runs sequentially.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::DenseSolveCore;
use faer::prelude::*;
use faer::diag::Diag;
use faer::{Accum, Conj};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::empirical::{self, OmegaContext, PopulationSpectrum};
use crate::error::{Error, Result};
use crate::fixed_point::SolverOptions;
use crate::freeconv::{EdgeReport, Regime, SpectralPoint};
use crate::measure::JacobiMeasure;

/// Largest `M + N` accepted by [`linearized_probe`].
pub const PROBE_MAX_DIM: usize = 600;

/// Fraction of failed trials above which a run is rejected.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Law of the entries of `X`, each scaled to mean 0 and variance `1/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum EntryDist {
    #[default]
    Gaussian,
    /// `±1/√N` with equal probability.
    Rademacher,
    /// Uniform on `[-√(3/N), √(3/N)]`.
    Uniform,
}

impl FromStr for EntryDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Parameter(format!("unknown entry distribution '{other}'"))),
        }
    }
}

impl fmt::Display for EntryDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::Uniform => "uniform",
        })
    }
}

/// Where the eigenvalues of `Σ` come from.
#[derive(Debug, Clone)]
pub enum SigmaSource {
    /// `M` i.i.d. draws from the measure, redrawn per seed.
    Measure(JacobiMeasure<f64>),
    /// A fixed list of length `M`.
    Explicit(Vec<f64>),
}

/// Stream roles within one trial seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Sigma = 0,
    Entries = 1,
    Rotation = 2,
    Probe = 3,
}

/// Generator for `role` under `seed`.
pub fn stream(seed: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role as u64);
    rng
}

/// One draw of the model.
#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub m: usize,
    pub n: usize,
    pub entry_dist: EntryDist,
    pub sigma: SigmaSource,
    /// Conjugate `Σ` by a Haar orthogonal matrix (gaussian entries only).
    pub rotated: bool,
    pub seed: u64,
    /// In Monte Carlo, reuse the `Σ` of trial 0 for every trial.
    pub freeze_sigma: bool,
}

impl SampleSpec {
    pub fn new(m: usize, n: usize, sigma: SigmaSource, seed: u64) -> Self {
        Self { m, n, entry_dist: EntryDist::Gaussian, sigma, rotated: false, seed, freeze_sigma: false }
    }

    /// `N = round(d M)`.
    pub fn with_ratio(m: usize, d: f64, sigma: SigmaSource, seed: u64) -> Self {
        Self::new(m, (d * m as f64).round() as usize, sigma, seed)
    }

    pub fn ratio(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < 2 {
            return Err(Error::Parameter(format!("need M, N >= 2, got M = {}, N = {}", self.m, self.n)));
        }
        if self.rotated && self.entry_dist != EntryDist::Gaussian {
            return Err(Error::Parameter("a rotated population needs gaussian entries".into()));
        }
        if let SigmaSource::Explicit(s) = &self.sigma {
            if s.len() != self.m {
                return Err(Error::Parameter(format!("{} explicit sigmas for M = {}", s.len(), self.m)));
            }
            if let Some(x) = s.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Parameter(format!("population eigenvalue {x} must be positive")));
            }
        }
        Ok(())
    }

    /// Population eigenvalues for `seed`, descending.
    pub fn draw_sigmas(&self, seed: u64) -> Vec<f64> {
        let mut s = match &self.sigma {
            SigmaSource::Measure(measure) => measure.sample_with(&mut stream(seed, StreamRole::Sigma), self.m),
            SigmaSource::Explicit(s) => s.clone(),
        };
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// The `M × N` entry matrix for `seed`.
    pub fn draw_entries(&self, seed: u64) -> Mat<f64> {
        let mut rng = stream(seed, StreamRole::Entries);
        let n = self.n as f64;
        let mut x = Mat::<f64>::zeros(self.m, self.n);
        for i in 0..self.m {
            for j in 0..self.n {
                x[(i, j)] = match self.entry_dist {
                    EntryDist::Gaussian => rng.sample::<f64, _>(StandardNormal) / n.sqrt(),
                    EntryDist::Rademacher => {
                        if rng.random::<bool>() {
                            n.sqrt().recip()
                        } else {
                            -n.sqrt().recip()
                        }
                    }
                    EntryDist::Uniform => (3.0 / n).sqrt() * rng.random_range(-1.0..=1.0),
                };
            }
        }
        x
    }
}

/// Spectrum of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    /// Eigenvalues of `𝒬`, descending, length `M`; when `M > N` the trailing
    /// `M - N` entries are exact zeros.
    pub lambdas: Vec<f64>,
    /// Eigenvalues of `Σ`, descending.
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub n: usize,
    /// `‖Σ^{1/2} X‖_F²`, the trace of `𝒬` computed without the eigensolver.
    pub frobenius: f64,
    pub wall_time: Duration,
}

impl EnsembleResult {
    pub fn m(&self) -> usize {
        self.lambdas.len()
    }

    /// `|Σ λ - tr 𝒬| / tr 𝒬`.
    pub fn trace_defect(&self) -> f64 {
        (self.lambdas.iter().sum::<f64>() - self.frobenius).abs() / self.frobenius
    }
}

/// Draws `𝒬` for `spec.seed` and returns its eigenvalues.
pub fn sample_ensemble(spec: &SampleSpec) -> Result<EnsembleResult> {
    spec.validate()?;
    let sigmas = spec.draw_sigmas(spec.seed);
    sample_with_sigmas(spec, spec.seed, sigmas)
}

pub(crate) fn sample_with_sigmas(spec: &SampleSpec, seed: u64, sigmas: Vec<f64>) -> Result<EnsembleResult> {
    let start = Instant::now();
    let x = spec.draw_entries(seed);
    let y = if spec.rotated {
        let o = haar_orthogonal(spec.m, &mut stream(seed, StreamRole::Rotation));
        rotated_root_times(&o, &sigmas, &x)
    } else {
        diagonal_root_times(&sigmas, &x)
    };
    let lambdas = gram_eigenvalues(y.as_ref())?;
    let frobenius = y.squared_norm_l2();
    Ok(EnsembleResult { lambdas, sigmas, seed, n: spec.n, frobenius, wall_time: start.elapsed() })
}

/// `D^{1/2} X`.
pub(crate) fn diagonal_root_times(sigmas: &[f64], x: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| sigmas[i].sqrt() * x[(i, j)])
}

/// `O D^{1/2} Oᵀ X`.
pub(crate) fn rotated_root_times(o: &Mat<f64>, sigmas: &[f64], x: &Mat<f64>) -> Mat<f64> {
    let mut ot_x = Mat::<f64>::zeros(x.nrows(), x.ncols());
    faer::linalg::matmul::matmul(ot_x.as_mut(), Accum::Replace, o.transpose(), x.as_ref(), 1.0, Par::Seq);
    let scaled = diagonal_root_times(sigmas, &ot_x);
    let mut y = Mat::<f64>::zeros(x.nrows(), x.ncols());
    faer::linalg::matmul::matmul(y.as_mut(), Accum::Replace, o.as_ref(), scaled.as_ref(), 1.0, Par::Seq);
    y
}

/// Eigenvalues of `Y Yᵀ` (`M × M`) in descending order, computed from the
/// smaller of `Y Yᵀ` and `Yᵀ Y` and padded with zeros to length `M`.
pub fn gram_eigenvalues(y: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let (m, n) = (y.nrows(), y.ncols());
    let k = m.min(n);
    let mut g = Mat::<f64>::zeros(k, k);
    if m <= n {
        faer::linalg::matmul::matmul(g.as_mut(), Accum::Replace, y, y.transpose(), 1.0, Par::Seq);
    } else {
        faer::linalg::matmul::matmul(g.as_mut(), Accum::Replace, y.transpose(), y, 1.0, Par::Seq);
    }
    let mut values = symmetric_eigenvalues(g.as_ref())?;
    values.reverse();
    values.resize(m, 0.0);
    Ok(values)
}

/// Ascending eigenvalues of a symmetric matrix, single-threaded.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    use faer::linalg::evd;
    let n = a.nrows();
    let mut s = Diag::<f64>::zeros(n);
    let par = Par::Seq;
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        evd::ComputeEigenvectors::No,
        par,
        Default::default(),
    ));
    evd::self_adjoint_evd(a, s.as_mut(), None, par, MemStack::new(&mut buf), Default::default()).map_err(|e| {
        let diag_max = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let diag_min = (0..n).map(|i| a[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        Error::Numerical(format!(
            "symmetric eigensolver failed on {n}x{n} matrix ({e:?}); diagonal range [{diag_min:e}, {diag_max:e}]"
        ))
    })?;
    Ok(s.column_vector().iter().copied().collect())
}

/// Haar-distributed orthogonal matrix: the `Q` factor of a gaussian matrix
/// with the signs of `diag R` absorbed.
pub fn haar_orthogonal<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Mat<f64> {
    use faer::linalg::{householder, qr::no_pivoting::factor};
    let mut a = Mat::<f64>::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let par = Par::Seq;
    let bs = factor::recommended_block_size::<f64>(m, m);
    let mut coeff = Mat::<f64>::zeros(bs, m);
    let mut buf = MemBuffer::new(factor::qr_in_place_scratch::<f64>(m, m, bs, par, Default::default()));
    factor::qr_in_place(a.as_mut(), coeff.as_mut(), par, MemStack::new(&mut buf), Default::default());
    let signs: Vec<f64> = (0..m).map(|i| if a[(i, i)] < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut q = Mat::<f64>::identity(m, m);
    let mut buf =
        MemBuffer::new(householder::apply_block_householder_sequence_on_the_left_in_place_scratch::<f64>(m, bs, m));
    householder::apply_block_householder_sequence_on_the_left_in_place_with_conj(
        a.as_ref(),
        coeff.as_ref(),
        Conj::No,
        q.as_mut(),
        par,
        MemStack::new(&mut buf),
    );
    for (j, &s) in signs.iter().enumerate() {
        for i in 0..m {
            q[(i, j)] *= s;
        }
    }
    q
}

/// `N⁻¹ [Σ_i 1/(λ_i - z) + (N - M)/(0 - z)]`.
pub fn m_trace(r: &EnsembleResult, z: SpectralPoint<f64>) -> Complex<f64> {
    let z = z.z();
    let sum: Complex<f64> = r.lambdas.iter().map(|&l| (Complex::new(l, 0.0) - z).inv()).sum();
    let pad = (r.n as f64 - r.m() as f64) * (-z).inv();
    (sum + pad) / r.n as f64
}

/// Quantities read off the dense inverse of the linearization.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub z: Complex<f64>,
    /// `N⁻¹ Σ_a G_aa`.
    pub m_latin: Complex<f64>,
    /// `M⁻¹ Σ_α G_αα`.
    pub m_greek: Complex<f64>,
    /// [`m_trace`] of the same draw.
    pub m_eigen: Complex<f64>,
    /// `|m - ((Nz)⁻¹ tr(Σ⁻¹ G_Greek) - (N - M)/(Nz))|`.
    pub trace_relation_defect: f64,
    /// Largest `|G_aa - (-z - Σ x_αa G^{(a)}_αβ x_βa)⁻¹|` over the probed `a`.
    pub schur_defect: f64,
    /// Largest `|Σ_b |G_ab|² - Im G_aa / η| / (Im G_aa / η)` over the probed `a`.
    pub ward_defect: f64,
    pub probed: Vec<usize>,
}

/// Number of Latin indices probed by the Schur and Ward checks.
pub const PROBE_INDICES: usize = 3;

/// Builds `H(z) = [[-z I_N, Xᵀ], [X, -Σ⁻¹]]` for the draw of `spec`, inverts
/// it densely and evaluates the resolvent identities.
pub fn linearized_probe(spec: &SampleSpec, z: SpectralPoint<f64>) -> Result<ProbeRecord> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);
    if m + n > PROBE_MAX_DIM {
        return Err(Error::Parameter(format!("linearized probe needs M + N <= {PROBE_MAX_DIM}, got {}", m + n)));
    }
    let sigmas = spec.draw_sigmas(spec.seed);
    let x = spec.draw_entries(spec.seed);
    let sigma_inv = if spec.rotated {
        let o = haar_orthogonal(m, &mut stream(spec.seed, StreamRole::Rotation));
        Mat::from_fn(m, m, |i, j| (0..m).map(|k| o[(i, k)] * o[(j, k)] / sigmas[k]).sum::<f64>())
    } else {
        Mat::from_fn(m, m, |i, j| if i == j { sigmas[i].recip() } else { 0.0 })
    };
    let eigen = {
        let y = if spec.rotated {
            let o = haar_orthogonal(m, &mut stream(spec.seed, StreamRole::Rotation));
            rotated_root_times(&o, &sigmas, &x)
        } else {
            diagonal_root_times(&sigmas, &x)
        };
        EnsembleResult {
            lambdas: gram_eigenvalues(y.as_ref())?,
            sigmas: sigmas.clone(),
            seed: spec.seed,
            n,
            frobenius: y.squared_norm_l2(),
            wall_time: Duration::ZERO,
        }
    };
    let zc = z.z();
    let h = linearization(&x, &sigma_inv, zc);
    let g = dense_inverse(&h)?;

    let nf = n as f64;
    let m_latin: Complex<f64> = (0..n).map(|a| g[(a, a)]).sum::<Complex<f64>>() / nf;
    let m_greek: Complex<f64> = (0..m).map(|a| g[(n + a, n + a)]).sum::<Complex<f64>>() / m as f64;
    let mut weighted = Complex::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            weighted += g[(n + j, n + i)] * sigma_inv[(i, j)];
        }
    }
    let relation = weighted / (zc * nf) - (nf - m as f64) / (zc * nf);
    let trace_relation_defect = (m_latin - relation).norm();

    let mut rng = stream(spec.seed, StreamRole::Probe);
    let mut probed = Vec::with_capacity(PROBE_INDICES);
    while probed.len() < PROBE_INDICES.min(n) {
        let a = rng.random_range(0..n);
        if !probed.contains(&a) {
            probed.push(a);
        }
    }
    let mut schur_defect: f64 = 0.0;
    let mut ward_defect: f64 = 0.0;
    for &a in &probed {
        let minor = remove_index(&h, a);
        let gm = dense_inverse(&minor)?;
        // Greek block of the minor starts at n - 1
        let mut quad = Complex::new(0.0, 0.0);
        for al in 0..m {
            for be in 0..m {
                quad += gm[(n - 1 + al, n - 1 + be)] * (x[(al, a)] * x[(be, a)]);
            }
        }
        let schur = (-zc - quad).inv();
        schur_defect = schur_defect.max((g[(a, a)] - schur).norm());

        let lhs: f64 = (0..n).map(|b| g[(a, b)].norm_sqr()).sum();
        let rhs = g[(a, a)].im / z.eta;
        ward_defect = ward_defect.max((lhs - rhs).abs() / rhs.abs());
    }
    Ok(ProbeRecord {
        z: zc,
        m_latin,
        m_greek,
        m_eigen: m_trace(&eigen, z),
        trace_relation_defect,
        schur_defect,
        ward_defect,
        probed,
    })
}

fn linearization(x: &Mat<f64>, sigma_inv: &Mat<f64>, z: Complex<f64>) -> Mat<c64> {
    let (m, n) = (x.nrows(), x.ncols());
    Mat::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
        (true, true) => {
            if i == j {
                -z
            } else {
                c64::new(0.0, 0.0)
            }
        }
        (true, false) => c64::new(x[(j - n, i)], 0.0),
        (false, true) => c64::new(x[(i - n, j)], 0.0),
        (false, false) => c64::new(-sigma_inv[(i - n, j - n)], 0.0),
    })
}

fn remove_index(h: &Mat<c64>, k: usize) -> Mat<c64> {
    let d = h.nrows() - 1;
    let skip = |i: usize| if i < k { i } else { i + 1 };
    Mat::from_fn(d, d, |i, j| h[(skip(i), skip(j))])
}

fn dense_inverse(h: &Mat<c64>) -> Result<Mat<c64>> {
    let inv = h.partial_piv_lu().inverse();
    if inv.as_ref().is_all_finite() {
        Ok(inv)
    } else {
        Err(Error::Numerical(format!("singular linearization of size {}", h.nrows())))
    }
}

/// Histogram layout for the pooled spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
}

impl HistogramSpec {
    fn bin(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        Some((((x - self.lo) / (self.hi - self.lo)) * self.bins as f64).floor() as usize).map(|b| b.min(self.bins - 1))
    }

    pub fn edges(&self, b: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.bins as f64;
        (self.lo + w * b as f64, self.lo + w * (b + 1) as f64)
    }
}

/// Curvature of a quadratic least-squares fit (in bin units) to the upper
/// tail of a histogram: the bins above the point where `tail_fraction` of the
/// counts remain, up to the last occupied bin. Positive for convex decay.
pub fn upper_tail_curvature(counts: &[u64], tail_fraction: f64) -> Option<f64> {
    let last = counts.iter().rposition(|&c| c > 0)?;
    let total: u64 = counts.iter().sum();
    let target = (tail_fraction * total as f64).ceil() as u64;
    let mut acc = 0;
    let mut first = last;
    while first > 0 && acc < target {
        acc += counts[first];
        first -= 1;
    }
    let xs: Vec<f64> = (first..=last).map(|b| (b - first) as f64).collect();
    if xs.len() < 4 {
        return None;
    }
    let ys: Vec<f64> = (first..=last).map(|b| counts[b] as f64).collect();
    // normal equations for y = c0 + c1 x + c2 x²
    let mut a = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(&ys) {
        let p = [1.0, x, x * x];
        for i in 0..3 {
            r[i] += p[i] * y;
            for j in 0..3 {
                a[i][j] += p[i] * p[j];
            }
        }
    }
    let a = Mat::from_fn(3, 3, |i, j| a[i][j]);
    let r = Mat::from_fn(3, 1, |i, _| r[i]);
    let c = a.partial_piv_lu().solve(&r);
    c[(2, 0)].is_finite().then_some(c[(2, 0)])
}

/// Sup over the admissible grid points of `|m_trace - m̂_fc|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalLawSample {
    pub sup_deviation: f64,
    /// `sup_deviation · M η₀`.
    pub scaled: f64,
    /// Fraction of admissible points with deviation `≤ 10/(M η₀)`.
    pub within_bound: f64,
    pub points: usize,
}

/// Local-law deviation of one draw on the `𝒟'` part of `ctx`'s grid.
pub fn local_law_deviation(r: &EnsembleResult, ctx: &OmegaContext<f64>) -> Result<LocalLawSample> {
    let spectrum = PopulationSpectrum::new(r.sigmas.clone(), r.n)?;
    let points: Vec<SpectralPoint<f64>> = ctx
        .points
        .iter()
        .zip(&ctx.mfc)
        .filter(|(_, &w)| ctx.in_domain_prime(&spectrum, w))
        .map(|(p, _)| *p)
        .collect();
    if points.is_empty() {
        return Err(Error::Parameter("no grid point lies in the restricted domain".into()));
    }
    let hat = empirical::hat_mfc_grid(&spectrum, &points, &SolverOptions::default())?;
    let scale = r.m() as f64 * ctx.config.eta0(r.m());
    let mut sup: f64 = 0.0;
    let mut within = 0usize;
    for (p, &w) in points.iter().zip(&hat.values) {
        let dev = (m_trace(r, *p) - w).norm();
        sup = sup.max(dev);
        if dev * scale <= 10.0 {
            within += 1;
        }
    }
    Ok(LocalLawSample {
        sup_deviation: sup,
        scaled: sup * scale,
        within_bound: within as f64 / points.len() as f64,
        points: points.len(),
    })
}

/// Per-trial statistics extracted by [`run_monte_carlo`].
#[derive(Debug, Clone, Default)]
pub struct Collector {
    /// Number of leading `λ` and `σ` kept.
    pub top_k: usize,
    pub histogram: Option<HistogramSpec>,
    pub local_law: Option<OmegaContext<f64>>,
    /// Deterministic edge; when supercritical, `L_plus_pred` is
    /// `L_+ - C_d (1 - σ₁)`.
    pub edge: Option<EdgeReport<f64>>,
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Supercritical edge: `L_+ - C_d (1 - σ₁)`; otherwise the empirical edge
    /// `L̂_+` of the trial's `Σ`, `NaN` where it does not exist.
    pub l_plus_pred: f64,
    pub local_law: Option<LocalLawSample>,
    pub error: Option<String>,
}

/// Trials in index order plus the pooled histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTable {
    pub top_k: usize,
    pub rows: Vec<TrialRow>,
    pub histogram: Option<(HistogramSpec, Vec<u64>)>,
}

impl TrialTable {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn ok_rows(&self) -> impl Iterator<Item = &TrialRow> {
        self.rows.iter().filter(|r| r.error.is_none())
    }

    /// `λ_γ` (1-based) of every successful trial.
    pub fn lambda(&self, gamma: usize) -> Vec<f64> {
        self.ok_rows().map(|r| r.lambdas[gamma - 1]).collect()
    }

    /// `σ_γ` (1-based) of every successful trial.
    pub fn sigma(&self, gamma: usize) -> Vec<f64> {
        self.ok_rows().map(|r| r.sigmas[gamma - 1]).collect()
    }

    /// `trial,seed,lambda1..lambdaK,sigma1..sigmaK,L_plus_pred[,local_law]`;
    /// failed trials are written with `NaN` values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let with_ll = self.rows.iter().any(|r| r.local_law.is_some());
        let mut header = vec!["trial".to_string(), "seed".to_string()];
        header.extend((1..=self.top_k).map(|k| format!("lambda{k}")));
        header.extend((1..=self.top_k).map(|k| format!("sigma{k}")));
        header.push("L_plus_pred".into());
        if with_ll {
            header.push("local_law".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for r in &self.rows {
            let mut line = format!("{},{}", r.trial, r.seed);
            for k in 0..self.top_k {
                line.push_str(&format!(",{}", r.lambdas.get(k).copied().unwrap_or(f64::NAN)));
            }
            for k in 0..self.top_k {
                line.push_str(&format!(",{}", r.sigmas.get(k).copied().unwrap_or(f64::NAN)));
            }
            line.push_str(&format!(",{}", r.l_plus_pred));
            if with_ll {
                line.push_str(&format!(",{}", r.local_law.map_or(f64::NAN, |l| l.scaled)));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// `bin_left,bin_right,count`.
    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_left,bin_right,count")?;
        if let Some((spec, counts)) = &self.histogram {
            for (b, c) in counts.iter().enumerate() {
                let (lo, hi) = spec.edges(b);
                writeln!(w, "{lo},{hi},{c}")?;
            }
        }
        Ok(())
    }
}

fn run_trial(
    spec: &SampleSpec,
    trial: usize,
    frozen: Option<&[f64]>,
    collector: &Collector,
) -> (TrialRow, Option<Vec<u64>>) {
    let seed = spec.seed.wrapping_add(trial as u64);
    let failed = |e: Error| TrialRow {
        trial,
        seed,
        lambdas: Vec::new(),
        sigmas: Vec::new(),
        l_plus_pred: f64::NAN,
        local_law: None,
        error: Some(e.to_string()),
    };
    let sigmas = frozen.map_or_else(|| spec.draw_sigmas(seed), <[f64]>::to_vec);
    let r = match sample_with_sigmas(spec, seed, sigmas) {
        Ok(r) => r,
        Err(e) => return (failed(e), None),
    };
    let local_law = match &collector.local_law {
        Some(ctx) => match local_law_deviation(&r, ctx) {
            Ok(l) => Some(l),
            Err(e) => return (failed(e), None),
        },
        None => None,
    };
    let l_plus_pred = match &collector.edge {
        Some(e) if e.regime == Regime::Supercritical => {
            empirical::predict_eigenvalue(e, r.sigmas[0]).unwrap_or(f64::NAN)
        }
        _ => PopulationSpectrum::new(r.sigmas.clone(), r.n)
            .and_then(|s| empirical::hat_edge(&s))
            .map_or(f64::NAN, |e| e.l_plus),
    };
    let hist = collector.histogram.map(|h| {
        let mut counts = vec![0u64; h.bins];
        for &l in &r.lambdas {
            if let Some(b) = h.bin(l) {
                counts[b] += 1;
            }
        }
        counts
    });
    let k = collector.top_k.min(r.m());
    let row = TrialRow {
        trial,
        seed,
        lambdas: r.lambdas[..k].to_vec(),
        sigmas: r.sigmas[..k].to_vec(),
        l_plus_pred,
        local_law,
        error: None,
    };
    (row, hist)
}

/// Runs `trials` independent draws; trial `t` uses seed `spec.seed + t`.
///
/// `threads = None` uses the ambient rayon pool. Failed trials are recorded
/// in the table; more than [`MAX_FAILURE_RATE`] of them is an error.
pub fn run_monte_carlo(
    spec: &SampleSpec,
    trials: usize,
    collector: &Collector,
    threads: Option<usize>,
) -> Result<TrialTable> {
    if trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    spec.validate()?;
    if let Some(h) = collector.histogram {
        if h.bins == 0 || !(h.hi > h.lo) {
            return Err(Error::Parameter(format!("bad histogram range [{}, {}) with {} bins", h.lo, h.hi, h.bins)));
        }
    }
    let frozen = spec.freeze_sigma.then(|| spec.draw_sigmas(spec.seed));
    let work = || -> Vec<(TrialRow, Option<Vec<u64>>)> {
        (0..trials)
            .into_par_iter()
            .map(|t| run_trial(spec, t, frozen.as_deref(), collector))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Parameter(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut rows = Vec::with_capacity(trials);
    let mut pooled = collector.histogram.map(|h| (h, vec![0u64; h.bins]));
    for (row, hist) in results {
        if let (Some((_, acc)), Some(counts)) = (pooled.as_mut(), hist) {
            for (a, c) in acc.iter_mut().zip(counts) {
                *a += c;
            }
        }
        rows.push(row);
    }
    let table = TrialTable { top_k: collector.top_k, rows, histogram: pooled };
    let failed = table.failures();
    if failed as f64 > MAX_FAILURE_RATE * trials as f64 {
        return Err(Error::Run { failed, total: trials });
    }
    Ok(table)
}
