//! Command implementations.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use mpedge::empirical::{self, OmegaConfig, OmegaContext, OmegaReport, PopulationSpectrum};
use mpedge::ensemble::{self, Collector, HistogramSpec, SampleSpec, SigmaSource};
use mpedge::extremal::{self, Mode, TestReport, Verdict};
use mpedge::freeconv::{self, EdgeReport};
use mpedge::measure::{JacobiMeasure, Profile, DEFAULT_QUAD_ORDER};
use rayon::prelude::*;

use crate::args::*;
use crate::config::{self, ConfigMap};
use crate::verify::{self, Scale, Verifier};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Settings shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub threads: Option<usize>,
    /// Config echo written at the top of every output file.
    pub header: Vec<(String, String)>,
    pub config_path: Option<PathBuf>,
}

impl Context {
    fn threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    /// Writes `body` below the config header, refusing to overwrite inputs.
    fn write_output(&self, path: &Path, inputs: &[&Path], body: &[u8]) -> Result<()> {
        let guarded = inputs.iter().copied().chain(self.config_path.as_deref());
        for input in guarded {
            if same_file(path, input) {
                return Err(CliError::Config(format!("output {} would overwrite an input", path.display())));
            }
        }
        let mut bytes = config::render_header(&self.header).into_bytes();
        bytes.extend_from_slice(body);
        std::fs::write(path, bytes).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Config(format!("output: {e}"))
}

pub fn dispatch(cmd: &Command, ctx: &Context, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Edge(a) => edge(a, out),
        Command::Density(a) => density(a, ctx, out),
        Command::Omega(a) => omega(a, ctx, out),
        Command::Simulate(a) => simulate(a, ctx, out),
        Command::Extremal(a) => extremal_cmd(a, ctx, out),
        Command::Verify(a) => verify_cmd(a, ctx, out),
    }
}

/// Builds the measure from a preset, a measure file, or explicit flags.
pub fn resolve_measure(a: &MeasureArgs) -> Result<JacobiMeasure<f64>> {
    let order = a.quad_order.unwrap_or(DEFAULT_QUAD_ORDER);
    if let Some(beta) = a.beta {
        let (Some(l), Some(profile)) = (a.l, a.profile.as_deref()) else {
            return Err(CliError::Config("--beta needs --l and --profile".into()));
        };
        return Ok(JacobiMeasure::new(beta, l, profile.parse::<Profile<f64>>()?, order)?);
    }
    let name = a.measure.as_deref().ok_or_else(|| CliError::Config("no measure given".into()))?;
    if let Some(m) = JacobiMeasure::preset(name) {
        if a.quad_order.is_none() {
            return Ok(m);
        }
        return Ok(JacobiMeasure::new(m.beta(), m.left(), m.profile().clone(), order)?);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(CliError::Config(format!("`{name}` is neither a preset nor a measure file")));
    }
    let map = ConfigMap::load(path)?;
    let num = |k: &str| -> Result<Option<f64>> {
        map.get(k)
            .map(|v| v.parse::<f64>().map_err(|e| CliError::Config(format!("{k} = {v}: {e}"))))
            .transpose()
    };
    let quad_order = match map.get("quad_order") {
        Some(v) => Some(v.parse().map_err(|e| CliError::Config(format!("quad_order = {v}: {e}")))?),
        None => a.quad_order,
    };
    let from_file = match (num("beta")?, map.get("measure")) {
        (Some(beta), _) => MeasureArgs {
            measure: None,
            beta: Some(beta),
            l: num("l")?,
            profile: map.get("profile").map(str::to_string),
            quad_order,
        },
        (None, Some(preset)) if JacobiMeasure::<f64>::preset(preset).is_some() => {
            MeasureArgs { measure: Some(preset.to_string()), beta: None, l: None, profile: None, quad_order }
        }
        _ => return Err(CliError::Config(format!("{name}: needs `beta`, `l`, `profile` or a preset `measure`"))),
    };
    resolve_measure(&from_file)
}

/// `(M, N)` from `M` and exactly one of `N`, `d`.
pub fn resolve_dims(d: &DimArgs) -> Result<(usize, usize)> {
    if d.m == 0 {
        return Err(CliError::Config("M must be positive".into()));
    }
    let n = match (d.n, d.d) {
        (Some(n), None) => n,
        (None, Some(r)) if r > 0.0 && r.is_finite() => (r * d.m as f64).round() as usize,
        (None, Some(r)) => return Err(CliError::Config(format!("d = {r} must be positive"))),
        _ => return Err(CliError::Config("give exactly one of --N and --d".into())),
    };
    if n == 0 {
        return Err(CliError::Config("N must be positive".into()));
    }
    Ok((d.m, n))
}

fn edge(a: &EdgeArgs, out: &mut dyn Write) -> Result<()> {
    let m = resolve_measure(&a.measure)?;
    let e = freeconv::edge(&m, a.d)?;
    writeln!(out, "{e}").map_err(io)
}

fn density(a: &DensityArgs, ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let m = resolve_measure(&a.measure)?;
    let e = freeconv::edge(&m, a.d)?;
    let lo = a.emin.unwrap_or(0.0);
    let hi = a.emax.unwrap_or(1.1 * e.l_plus);
    if a.points < 2 || !(hi > lo) {
        return Err(CliError::Config(format!("need points >= 2 and emin < emax, got {} on [{lo}, {hi}]", a.points)));
    }
    let step = (hi - lo) / (a.points - 1) as f64;
    let energies: Vec<f64> = (0..a.points).map(|i| lo + step * i as f64).collect();
    let rho = freeconv::density_curve(&m, a.d, &energies)?;
    let mut body = String::from("E,rho\n");
    for (x, r) in energies.iter().zip(&rho) {
        body.push_str(&format!("{x},{r}\n"));
    }
    match &a.out {
        Some(p) => ctx.write_output(p, &[], body.as_bytes()),
        None => out.write_all(body.as_bytes()).map_err(io),
    }
}

fn omega(a: &OmegaArgs, ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let measure = resolve_measure(&a.measure)?;
    let (m, n) = resolve_dims(&a.dims)?;
    let beta = measure.beta();
    let mut cfg = OmegaConfig::for_beta(beta)?;
    if a.phi != "auto" {
        cfg.phi = a.phi.parse().map_err(|e| CliError::Config(format!("phi = {}: {e}", a.phi)))?;
    }
    if let Some(n0) = a.n0 {
        cfg.n0 = n0;
    }
    if let Some(c) = a.c_threshold {
        cfg.c_threshold = c;
    }
    cfg.validate(beta)?;
    let d = n as f64 / m as f64;
    let octx = OmegaContext::new(&measure, d, m, cfg)?;
    if let Some(path) = &a.sigma_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let sigmas = config::strip_comments(&text)
            .map(|l| l.trim().parse::<f64>().map_err(|e| CliError::Config(format!("sigma `{l}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if sigmas.len() != m {
            return Err(CliError::Config(format!("{} holds {} values, M = {m}", path.display(), sigmas.len())));
        }
        let s = PopulationSpectrum::new(sigmas, n)?;
        let r = empirical::omega_check(&s, &octx);
        return writeln!(out, "M={m} N={n} phi={} {r}", cfg.phi).map_err(io);
    }
    let seed = a.seed.ok_or_else(|| CliError::Config("omega needs --seed or --sigma-file".into()))?;
    if a.seeds == 0 {
        return Err(CliError::Config("seeds must be positive".into()));
    }
    let spec = SampleSpec::new(m, n, SigmaSource::Measure(measure), seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads())
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let reports: Vec<OmegaReport<f64>> = pool.install(|| {
        (0..a.seeds as u64)
            .into_par_iter()
            .map(|k| {
                let s = PopulationSpectrum::new(spec.draw_sigmas(seed + k), n)?;
                Ok(empirical::omega_check(&s, &octx))
            })
            .collect::<std::result::Result<Vec<_>, mpedge::Error>>()
    })?;
    if let Some(path) = &a.out {
        let mut body = String::from("seed,cond1,cond2,cond3,overall,min_gap,max_r2,max_clt_dev\n");
        for (k, r) in reports.iter().enumerate() {
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                seed + k as u64,
                r.cond1_gaps.pass,
                r.cond2_r2.pass,
                r.cond3_clt.pass,
                r.overall,
                r.cond1_gaps.min_gap,
                r.cond2_r2.worst,
                r.cond3_clt.worst
            ));
        }
        ctx.write_output(path, &[], body.as_bytes())?;
    }
    if let [r] = reports.as_slice() {
        return writeln!(out, "M={m} N={n} seed={seed} phi={} {r}", cfg.phi).map_err(io);
    }
    let passed = reports.iter().filter(|r| r.overall).count();
    writeln!(
        out,
        "M={m} N={n} seed={seed} seeds={} phi={} passed={passed} fraction={}",
        a.seeds,
        cfg.phi,
        passed as f64 / a.seeds as f64
    )
    .map_err(io)
}

/// `bins=200[,lo=..,hi=..]`; the range defaults to `[0, 1.25 L_+)`.
pub fn parse_histogram(s: &str, l_plus: f64) -> Result<HistogramSpec> {
    let mut h = HistogramSpec { bins: 200, lo: 0.0, hi: 1.25 * l_plus };
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("histogram option `{part}` is not key=value")))?;
        let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("histogram {k} = {v}: {e}"));
        match k.trim() {
            "bins" => h.bins = v.trim().parse().map_err(|e| bad(&e))?,
            "lo" => h.lo = v.trim().parse().map_err(|e| bad(&e))?,
            "hi" => h.hi = v.trim().parse().map_err(|e| bad(&e))?,
            _ => return Err(CliError::Config(format!("unknown histogram option `{k}`"))),
        }
    }
    if h.bins == 0 || !(h.hi > h.lo) {
        return Err(CliError::Config(format!("bad histogram: {} bins on [{}, {})", h.bins, h.lo, h.hi)));
    }
    Ok(h)
}

fn simulate(a: &SimulateArgs, ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let measure = resolve_measure(&a.measure)?;
    let (m, n) = resolve_dims(&a.dims)?;
    if a.top_k == 0 || a.top_k > m {
        return Err(CliError::Config(format!("top-k = {} must lie in 1..={m}", a.top_k)));
    }
    let mut spec = SampleSpec::new(m, n, SigmaSource::Measure(measure.clone()), a.seed);
    spec.entry_dist = a.entry_dist;
    spec.rotated = a.rotated;
    spec.freeze_sigma = a.freeze_sigma;
    spec.validate()?;
    let edge = freeconv::edge(&measure, spec.ratio())?;
    let histogram = a.hist.as_deref().map(|h| parse_histogram(h, edge.l_plus)).transpose()?;
    let local_law = if a.local_law {
        let cfg = OmegaConfig::for_beta(measure.beta())?;
        Some(OmegaContext::new(&measure, spec.ratio(), m, cfg)?)
    } else {
        None
    };
    let collector = Collector { top_k: a.top_k, histogram, local_law, edge: Some(edge.clone()) };
    let table = ensemble::run_monte_carlo(&spec, a.trials, &collector, Some(ctx.threads()))?;

    let mut body = Vec::new();
    table.write_csv(&mut body).map_err(io)?;
    ctx.write_output(&a.out, &[], &body)?;
    let mut record = format!(
        "trials={} failed={} M={m} N={n} L_plus={} regime={}",
        a.trials,
        table.failures(),
        edge.l_plus,
        edge.regime
    );
    let l1 = table.lambda(1);
    if let Ok((mean, _)) = extremal::mean_variance(&l1) {
        record.push_str(&format!(" lambda1_mean={mean}"));
    }
    if let Some((_, counts)) = &table.histogram {
        let path = a.hist_out.clone().unwrap_or_else(|| a.out.with_file_name("hist.csv"));
        let mut body = Vec::new();
        table.write_histogram_csv(&mut body).map_err(io)?;
        ctx.write_output(&path, &[], &body)?;
        let (curv, shape) = match ensemble::upper_tail_curvature(counts, TAIL_FRACTION) {
            Some(c) if c > 0.0 => (c, "convex"),
            Some(c) if c < 0.0 => (c, "concave"),
            Some(c) => (c, "flat"),
            None => (f64::NAN, "undetermined"),
        };
        record.push_str(&format!(" tail_curvature={curv} tail={shape}"));
    }
    writeln!(out, "{record}").map_err(io)
}

/// Share of the pooled eigenvalues forming the upper tail.
pub const TAIL_FRACTION: f64 = 0.1;

/// `a..b` (inclusive) or a single index, 1-based.
pub fn parse_gamma(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Config(format!("gamma `{s}` is not an index or a range a..b"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => {
            let g = s.trim().parse().map_err(|_| bad())?;
            (g, g)
        }
    };
    if lo == 0 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Columns of a trial table.
pub struct TrialCsv {
    pub header: ConfigMap,
    pub columns: HashMap<String, Vec<f64>>,
}

impl TrialCsv {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let header = if text.starts_with(config::HEADER_PREFIX) { ConfigMap::from_header(&text) } else { ConfigMap::default() };
        let mut lines = config::strip_comments(&text);
        let names: Vec<String> = lines
            .next()
            .ok_or_else(|| CliError::Config(format!("{} has no header row", path.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(CliError::Config(format!("{} row {}: {} fields, expected {}", path.display(), i + 1, fields.len(), names.len())));
            }
            for (c, f) in cols.iter_mut().zip(fields) {
                c.push(f.trim().parse().map_err(|e| CliError::Config(format!("{} row {}: `{f}`: {e}", path.display(), i + 1)))?);
            }
        }
        Ok(Self { header, columns: names.into_iter().zip(cols).collect() })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| CliError::Config(format!("input has no column `{name}`")))
    }
}

/// Finite pairs `(a_i, b_i)`.
fn finite_pairs(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    a.iter().zip(b).filter(|(x, y)| x.is_finite() && y.is_finite()).map(|(x, y)| (*x, *y)).unzip()
}

fn extremal_cmd(a: &ExtremalArgs, ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let csv = TrialCsv::read(&a.input)?;
    let h = &csv.header;
    let mut margs = a.measure.clone();
    if margs.measure.is_none() && margs.beta.is_none() {
        let num = |k: &str| h.get(k).and_then(|v| v.parse::<f64>().ok());
        margs.measure = h.get("measure").map(str::to_string);
        margs.beta = num("beta");
        margs.l = num("l");
        margs.profile = h.get("profile").map(str::to_string);
        if margs.quad_order.is_none() {
            margs.quad_order = h.get("quad_order").and_then(|v| v.parse().ok());
        }
    }
    let measure = resolve_measure(&margs)?;
    let m = match a.m {
        Some(m) => m,
        None => h
            .get("M")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::Config("no --M and none in the input header".into()))?,
    };
    let dims = DimArgs {
        m,
        n: if a.d.is_some() { None } else { h.get("N").and_then(|v| v.parse().ok()) },
        d: a.d.or_else(|| h.get("d").and_then(|v| v.parse().ok())),
    };
    let (m, n) = resolve_dims(&dims)?;
    let d = n as f64 / m as f64;
    extremal::check_regime(&measure, d, a.mode)?;
    let (g_lo, g_hi) = parse_gamma(&a.gamma)?;
    let root_m = (m as f64).sqrt();

    let (report, ecdf) = match a.mode {
        Mode::Weibull => {
            let edge = freeconv::edge(&measure, d)?;
            let c_d = edge.require_supercritical()?;
            let beta = measure.beta();
            let w = extremal::WeibullParams::new(&measure, d, m)?;
            let mut verdicts = Vec::new();
            let mut locs = Vec::new();
            let mut first: Option<(f64, Vec<f64>, Vec<f64>)> = None;
            for gamma in g_lo..=g_hi {
                let (lam, sig) =
                    finite_pairs(csv.column(&format!("lambda{gamma}"))?, csv.column(&format!("sigma{gamma}"))?);
                let s = extremal::rescale_supercritical(&lam, edge.l_plus, m, beta);
                let ks = extremal::ks_distance(&s, |x| extremal::weibull_order_cdf(&w, gamma, x))?;
                let errs: Vec<f64> = lam.iter().zip(&sig).map(|(l, sg)| location_error(&edge, *l, *sg)).collect();
                let loc = extremal::median(&errs)?;
                locs.push((gamma, loc));
                verdicts.push(Verdict::at_most(format!("ks_{gamma}"), ks, a.ks_max));
                verdicts.push(Verdict::at_most(format!("loc_{gamma}"), loc, a.loc_factor / root_m));
                if first.is_none() {
                    let r = extremal::order_statistic_reference(&sig, c_d, m, beta);
                    let pair = extremal::ks_two_sample(&s, &r)?;
                    verdicts.push(Verdict::at_most("coupling", pair, a.coupling_max));
                    first = Some((ks, s, Vec::new()));
                }
            }
            let (ks, s, _) = first.expect("gamma range is non-empty");
            let ecdf = ecdf_rows(&s, |x| extremal::weibull_order_cdf(&w, g_lo, x));
            let r = TestReport { mode: Mode::Weibull, sample_count: s.len(), ks_statistic: ks, location_errors: locs, verdicts };
            (r, ecdf)
        }
        Mode::Gaussian => {
            let g = extremal::gaussian_reference(&measure, d)?;
            let lam = csv.column("lambda1")?;
            let x: Vec<f64> = match a.centering {
                Centering::Fixed => lam.iter().filter(|l| l.is_finite()).map(|l| root_m * (l - g.l_plus)).collect(),
                Centering::Empirical => {
                    let (l, c) = finite_pairs(lam, csv.column("L_plus_pred")?);
                    l.iter().zip(&c).map(|(l, c)| root_m * (l - c)).collect()
                }
            };
            let ks = extremal::ks_distance(&x, |t| extremal::normal_cdf(t, 0.0, g.variance))?;
            let (mean, var) = extremal::mean_variance(&x)?;
            let se = (var / x.len() as f64).sqrt();
            let verdicts = vec![
                Verdict::at_most("ks_normal", ks, a.ks_max),
                Verdict::at_most("mean_se", mean.abs() / se, a.mean_se),
                Verdict::at_most("var_rel", (var / g.variance - 1.0).abs(), a.var_tol),
            ];
            let ecdf = ecdf_rows(&x, |t| extremal::normal_cdf(t, 0.0, g.variance));
            let r = TestReport { mode: Mode::Gaussian, sample_count: x.len(), ks_statistic: ks, location_errors: Vec::new(), verdicts };
            (r, ecdf)
        }
    };
    ctx.write_output(&a.ecdf_out, &[a.input.as_path()], ecdf.as_bytes())?;
    writeln!(out, "{report}").map_err(io)
}

fn location_error(edge: &EdgeReport<f64>, lambda: f64, sigma: f64) -> f64 {
    empirical::predict_eigenvalue(edge, sigma).map_or(f64::NAN, |p| (lambda - p).abs())
}

/// `s,F_emp,F_ref` over the sorted sample.
fn ecdf_rows(samples: &[f64], cdf: impl Fn(f64) -> f64) -> String {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut body = String::from("s,F_emp,F_ref\n");
    for (i, x) in s.iter().enumerate() {
        body.push_str(&format!("{x},{},{}\n", (i + 1) as f64 / n, cdf(*x)));
    }
    body
}

fn verify_cmd(a: &VerifyArgs, ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let scale = match a.scale {
        ScaleArg::Desk => Scale::Desk,
        ScaleArg::Smoke => Scale::Smoke,
    };
    let v = Verifier::new(scale, Some(ctx.threads()));
    let mut failed = Vec::new();
    for id in verify::suite_criteria(a.suite) {
        let r = v.run(id);
        writeln!(out, "{r}").map_err(io)?;
        out.flush().map_err(io)?;
        if !r.pass() {
            failed.push(id.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!("criteria {} failed", failed.join(","))))
    }
}
