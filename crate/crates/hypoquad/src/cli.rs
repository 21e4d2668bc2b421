//! The `hypoquad` command line. Every command produces a [`Report`]; analysis
//! failures become failed verdicts, malformed input is an [`InputError`].

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use faer::c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::galerkin::commutation::commutation_defect;
use crate::galerkin::decay::{exponential_rate, observable_norms};
use crate::galerkin::spectrum::match_distance;
use crate::galerkin::{
    decay_exponent, galerkin_eigenvalues, linear_observable, project_gaussian, propagate, quantize, random_state,
    spectrum_bottom, Amplitude, HermiteBasis,
};
use crate::galerkin::sparse;
use crate::io::{self, NormRow};
use crate::linalg::RMat;
use crate::multiplier::{
    log_grid, multiplier_coefficients_with, verify_lemma1, verify_lemma3, Recursion, TimeQuadraticForm,
};
use crate::ou::{self, GaussianState, OUModel, Variant};
use crate::singular::{defect_forms, direction_index, kernel_chain, symplectic_split, RankTol};
use crate::symplectic::{harmonic_oscillator, kramers, random_accretive, PhaseVector, QuadraticSymbol};

#[derive(Debug, Parser)]
#[command(name = "hypoquad", version, about = "Accretive quadratic operators: structure, semigroup decay and Ornstein–Uhlenbeck models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Singular space, multiplier certificates and spectrum of a symbol file.
    Analyze(Opts),
    /// Propagate random data and fit the short-time decay of directional norms.
    Propagate(Opts),
    /// Build an OU / Fokker–Planck model, emit its conjugated symbol and check its structure.
    Ou(Opts),
    /// Run the property battery on canonical examples and a seeded random ensemble.
    Verify(Opts),
}

#[derive(Debug, Clone, Args)]
pub struct Opts {
    /// Symbol file (analyze, propagate) or model file (ou).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Hermite truncation order per dimension.
    #[arg(long = "N")]
    pub nmax: Option<usize>,
    #[arg(long)]
    pub t_lo: Option<f64>,
    #[arg(long)]
    pub t_hi: Option<f64>,
    #[arg(long)]
    pub t_count: Option<usize>,
    /// Logarithmic instead of linear time spacing.
    #[arg(long)]
    pub log_grid: bool,
    /// Fit window (defaults to the time grid's range).
    #[arg(long)]
    pub fit_lo: Option<f64>,
    #[arg(long)]
    pub fit_hi: Option<f64>,
    /// Comma-separated labels x1..xn, xi1..xin or bracketed 2n-vectors, e.g. "x1,[0,1,0,0]".
    #[arg(long)]
    pub directions: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    /// Where `ou` writes the conjugated symbol file.
    #[arg(long)]
    pub out_symbol: Option<PathBuf>,
    /// Random ensemble size (verify).
    #[arg(long)]
    pub ensemble: Option<usize>,
    /// Number of lattice points reported by analyze.
    #[arg(long, default_value_t = 3)]
    pub spectrum_count: usize,
    /// Compare the Galerkin propagation with the Kolmogorov Gaussian oracle (ou, n ≤ 2).
    #[arg(long)]
    pub oracle: bool,
    /// Inject a sign error into the multiplier recursion; the run must then fail.
    #[arg(long)]
    pub self_test: bool,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Debug, Clone, Args)]
pub struct Tolerances {
    /// Slope tolerance for the exponent −1/2.
    #[arg(long = "tol-slope", default_value_t = 0.1)]
    pub slope: f64,
    /// Slope tolerance for the exponent −3/2; steeper exponents scale it by (2k+1)/3.
    #[arg(long = "tol-slope-steep", default_value_t = 0.15)]
    pub slope_steep: f64,
    #[arg(long = "tol-r2", default_value_t = 0.98)]
    pub r2: f64,
    /// Absolute tolerance on the large-time rate against ω0.
    #[arg(long = "tol-rate", default_value_t = 0.1)]
    pub rate: f64,
    #[arg(long = "tol-margin", default_value_t = 1e-10)]
    pub margin: f64,
    #[arg(long = "tol-route", default_value_t = 1e-9)]
    pub route: f64,
    #[arg(long = "tol-spectrum", default_value_t = 1e-3)]
    pub spectrum: f64,
    #[arg(long = "tol-eigen", default_value_t = 1e-8)]
    pub eigen: f64,
    #[arg(long = "tol-omega", default_value_t = 1e-12)]
    pub omega: f64,
    #[arg(long = "tol-contraction", default_value_t = 1e-8)]
    pub contraction: f64,
    #[arg(long = "tol-accretive", default_value_t = 1e-10)]
    pub accretive: f64,
    #[arg(long = "tol-lyapunov", default_value_t = 1e-10)]
    pub lyapunov: f64,
    #[arg(long = "tol-angle", default_value_t = 1e-8)]
    pub angle: f64,
    #[arg(long = "tol-residual", default_value_t = 1e-12)]
    pub residual: f64,
    #[arg(long = "tol-oracle", id = "tol_oracle", default_value_t = 1e-4)]
    pub oracle: f64,
    #[arg(long = "tol-defect", default_value_t = 1e-8)]
    pub defect: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Opts::parse_defaults().tol
    }
}

impl Opts {
    fn parse_defaults() -> Opts {
        #[derive(Parser)]
        struct Wrap {
            #[command(flatten)]
            o: Opts,
        }
        Wrap::parse_from(["hypoquad"]).o
    }
}

impl Default for Opts {
    fn default() -> Self {
        Self::parse_defaults()
    }
}

impl Tolerances {
    /// ±slope for −1/2 at index 0, ±slope_steep for −3/2, scaled by (2k+1)/3 beyond.
    pub fn slope_for(&self, k: usize) -> f64 {
        match k {
            0 => self.slope,
            _ => self.slope_steep * (2 * k + 1) as f64 / 3.0,
        }
    }

    fn table(&self) -> BTreeMap<String, f64> {
        [
            ("slope", self.slope),
            ("slope_steep", self.slope_steep),
            ("r2", self.r2),
            ("rate", self.rate),
            ("margin", self.margin),
            ("route", self.route),
            ("spectrum", self.spectrum),
            ("eigen", self.eigen),
            ("omega", self.omega),
            ("contraction", self.contraction),
            ("accretive", self.accretive),
            ("lyapunov", self.lyapunov),
            ("angle", self.angle),
            ("residual", self.residual),
            ("oracle", self.oracle),
            ("defect", self.defect),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Malformed input or configuration; the binary exits with status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<Error> for InputError {
    fn from(e: Error) -> Self {
        InputError(e.to_string())
    }
}

type CmdResult = std::result::Result<Report, InputError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// Informational: a reported property, not a violated check.
    Flag,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub check: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input_digest: Option<String>,
    pub config: Value,
    pub tolerances: BTreeMap<String, f64>,
    pub results: Map<String, Value>,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    fn new(command: &str, opts: &Opts, digest: Option<String>) -> Self {
        Report {
            tool: "hypoquad".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input_digest: digest,
            config: json!({
                "N": opts.nmax,
                "t_lo": opts.t_lo,
                "t_hi": opts.t_hi,
                "t_count": opts.t_count,
                "log_grid": opts.log_grid,
                "fit_lo": opts.fit_lo,
                "fit_hi": opts.fit_hi,
                "directions": opts.directions,
                "seed": opts.seed,
                "ensemble": opts.ensemble,
                "spectrum_count": opts.spectrum_count,
                "oracle": opts.oracle,
                "self_test": opts.self_test,
            }),
            tolerances: opts.tol.table(),
            results: Map::new(),
            verdicts: vec![],
        }
    }

    fn put(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.into(), serde_json::to_value(v).expect("results serialize"));
    }

    fn check(&mut self, check: impl Into<String>, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.verdicts.push(Verdict { check: check.into(), status, detail: detail.into() });
    }

    fn flag(&mut self, check: impl Into<String>, detail: impl Into<String>) {
        self.verdicts.push(Verdict { check: check.into(), status: Status::Flag, detail: detail.into() });
    }

    fn fail(&mut self, check: impl Into<String>, e: &Error) {
        self.check(check, false, e.to_string());
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.status != Status::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize") + "\n"
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for v in &self.verdicts {
            let tag = match v.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Flag => "FLAG",
            };
            s += &format!("{tag}  {}: {}\n", v.check, v.detail);
        }
        let count = |st| self.verdicts.iter().filter(|v| v.status == st).count();
        s += &format!(
            "hypoquad {}: {} passed, {} failed, {} flagged\n",
            self.command,
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Flag)
        );
        s
    }
}

/// Runs a parsed command line, writes the requested files and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let (opts, result) = match cli.command {
        Command::Analyze(o) => (o.clone(), cmd_analyze(&o)),
        Command::Propagate(o) => (o.clone(), cmd_propagate(&o)),
        Command::Ou(o) => (o.clone(), cmd_ou(&o)),
        Command::Verify(o) => (o.clone(), cmd_verify(&o)),
    };
    match result {
        Ok(report) => {
            if let Some(p) = &opts.out_json {
                if let Err(e) = std::fs::write(p, report.to_json()) {
                    eprintln!("error: {}: {e}", p.display());
                    return 2;
                }
            }
            print!("{}", report.summary());
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn read_input(opts: &Opts) -> std::result::Result<(String, String), InputError> {
    let path = opts.input.as_ref().ok_or_else(|| InputError("--input is required".into()))?;
    let text = io::read_text(path)?;
    let digest = io::sha256_hex(text.as_bytes());
    Ok((text, digest))
}

fn rows(m: &RMat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn nmax(opts: &Opts, default: usize) -> std::result::Result<usize, InputError> {
    let n = opts.nmax.unwrap_or(default);
    if n < 2 {
        return Err(InputError(format!("--N {n}: must be at least 2")));
    }
    Ok(n)
}

fn time_grid(opts: &Opts, lo: f64, hi: f64, count: usize, min_count: usize) -> std::result::Result<Vec<f64>, InputError> {
    let (lo, hi, count) = (opts.t_lo.unwrap_or(lo), opts.t_hi.unwrap_or(hi), opts.t_count.unwrap_or(count));
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
        return Err(InputError(format!("time grid [{lo}, {hi}]: need 0 ≤ t-lo < t-hi")));
    }
    if count < min_count.max(2) {
        return Err(InputError(format!("--t-count {count}: need at least {}", min_count.max(2))));
    }
    if opts.log_grid {
        if lo <= 0.0 {
            return Err(InputError("--log-grid needs t-lo > 0".into()));
        }
        return Ok(log_grid(lo, hi, count));
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

/// Splits on commas outside square brackets.
fn split_top_level(s: &str) -> Vec<String> {
    let mut out = vec![];
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect()
}

pub fn basis_label(n: usize, idx: usize) -> String {
    if idx < n {
        format!("x{}", idx + 1)
    } else {
        format!("xi{}", idx - n + 1)
    }
}

pub fn parse_directions(spec: Option<&str>, n: usize) -> std::result::Result<Vec<(String, PhaseVector)>, InputError> {
    let Some(spec) = spec else {
        return Ok((0..2 * n).map(|i| (basis_label(n, i), PhaseVector::basis(n, i))).collect());
    };
    let mut out = vec![];
    for tok in split_top_level(spec) {
        let bad = |why: &str| InputError(format!("--directions: `{tok}`: {why}"));
        if let Some(body) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
            let v: Vec<f64> = body
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            if v.len() != 2 * n {
                return Err(bad(&format!("{} entries, expected {}", v.len(), 2 * n)));
            }
            let pv = PhaseVector::real(&v).map_err(|e| bad(&e.to_string()))?;
            out.push((tok.replace(' ', ""), pv));
            continue;
        }
        let (stem, digits) = tok.split_at(tok.find(|c: char| c.is_ascii_digit()).ok_or_else(|| bad("unknown label"))?);
        let j: usize = digits.parse().map_err(|_| bad("unknown label"))?;
        if j == 0 || j > n {
            return Err(bad(&format!("coordinate {j} outside 1..={n}")));
        }
        let idx = match stem {
            "x" => j - 1,
            "xi" => n + j - 1,
            _ => return Err(bad("labels are x1..xn or xi1..xin")),
        };
        out.push((tok.clone(), PhaseVector::basis(n, idx)));
    }
    if out.is_empty() {
        return Err(InputError("--directions: empty list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct MultiplierSummary {
    k0: usize,
    coefficients: crate::multiplier::MultiplierCoefficients,
    sign_margins: Vec<f64>,
    lower_bound_min_margin: f64,
    lower_bound_min_relative_margin: f64,
    lower_bound_worst_t: f64,
    flow_bound_c_min: Option<f64>,
    flow_bound_c_explicit: f64,
    flow_route_difference: f64,
    flow_bound_kernel_violation: bool,
}

/// Multiplier battery on one symbol with S = {0}; verdicts are prefixed by `tag`.
fn multiplier_checks(
    rep: &mut Report,
    tag: &str,
    q: &QuadraticSymbol,
    grid: &[f64],
    recursion: Recursion,
    tol: &Tolerances,
) -> Option<MultiplierSummary> {
    let chain = match kernel_chain(q, RankTol::default()) {
        Ok(c) => c,
        Err(e) => {
            rep.fail(format!("{tag}.kernel_chain"), &e);
            return None;
        }
    };
    let res = multiplier_coefficients_with(q, &chain, recursion)
        .and_then(|c| TimeQuadraticForm::new(q, c))
        .and_then(|form| {
            let l1 = verify_lemma1(&form, grid)?;
            let l3 = verify_lemma3(&form, grid)?;
            Ok((form, l1, l3))
        });
    let (form, l1, l3) = match res {
        Ok(v) => v,
        Err(e) => {
            rep.fail(format!("{tag}.multiplier"), &e);
            return None;
        }
    };
    let c = &form.coeffs;
    let margins = c.sign_margins();
    rep.check(format!("{tag}.coefficients_positive"), c.all_positive(), format!("a = {:?}, b = {:?}", c.a, c.b));
    rep.check(
        format!("{tag}.sign_conditions"),
        margins.iter().all(|&m| m > 0.0),
        format!("min a_j − (2j+2)b_j = {:.3e}", margins.iter().cloned().fold(f64::INFINITY, f64::min)),
    );
    rep.check(
        format!("{tag}.lower_bound"),
        l1.min_relative_margin >= -tol.margin,
        format!("min relative margin {:.3e} at t = {:.3e}", l1.min_relative_margin, l1.worst_t),
    );
    rep.check(
        format!("{tag}.flow_routes"),
        l3.max_route_difference <= tol.route,
        format!("dual-route difference {:.3e}", l3.max_route_difference),
    );
    let detail = format!("minimal C {:?}, explicit C {:.6e}", l3.c_min, l3.c_explicit);
    if l3.c_explicit.is_finite() {
        rep.check(format!("{tag}.flow_bound"), l3.passes(), detail);
    } else if l3.kernel_violation.is_some() {
        rep.check(format!("{tag}.flow_bound"), false, format!("{detail}; D_t ⋠ 0 on Ker M_0"));
    } else {
        rep.flag(format!("{tag}.flow_bound"), format!("{detail}; explicit constant overflows"));
    }
    Some(MultiplierSummary {
        k0: c.k0,
        sign_margins: margins,
        lower_bound_min_margin: l1.min_margin,
        lower_bound_min_relative_margin: l1.min_relative_margin,
        lower_bound_worst_t: l1.worst_t,
        flow_bound_c_min: l3.c_min,
        flow_bound_c_explicit: l3.c_explicit,
        flow_route_difference: l3.max_route_difference,
        flow_bound_kernel_violation: l3.kernel_violation.is_some(),
        coefficients: form.coeffs.clone(),
    })
}

pub fn cmd_analyze(opts: &Opts) -> CmdResult {
    let (text, digest) = read_input(opts)?;
    let q = io::parse_symbol(&text)?;
    let grid = time_grid(opts, 1e-4, 1.0, 50, 2)?;
    let mut rep = Report::new("analyze", opts, Some(digest));
    rep.put("symbol", json!({"n": q.n, "label": q.label, "accretive": q.accretive}));
    if !q.accretive {
        rep.check("symbol.accretive", false, "Re M is not positive semidefinite");
        return Ok(rep);
    }
    analyze_symbol(&mut rep, &q, &grid, opts.spectrum_count, &opts.tol);
    Ok(rep)
}

fn analyze_symbol(rep: &mut Report, q: &QuadraticSymbol, grid: &[f64], spectrum_count: usize, tol: &Tolerances) {
    let chain = match kernel_chain(q, RankTol::default()) {
        Ok(c) => c,
        Err(e) => return rep.fail("singular_space.chain", &e),
    };
    rep.put(
        "chain",
        json!({"k0": chain.k0, "dims": chain.dims(), "s_dim": chain.s_basis.ncols(), "rank_tol": chain.rank_tol, "warnings": chain.warnings}),
    );
    match defect_forms(q, &chain) {
        Ok(d) => rep.put("defect_forms", json!({"c0": d.c0, "kernel_gap": d.kernel_gap})),
        Err(e) => rep.fail("singular_space.defect_forms", &e),
    }
    let Some(k0) = chain.k0 else {
        rep.flag("singular_space.trivial", format!("S ≠ {{0}}: dim S = {}", chain.s_basis.ncols()));
        match symplectic_split(q, &chain) {
            Ok(s) => rep.put(
                "symplectic_split",
                json!({
                    "s_symplectic": s.s_symplectic,
                    "sigma_rank": s.sigma_rank,
                    "splitting_residual": s.splitting_residual,
                    "basis_s": rows(&s.basis_s),
                    "basis_sperp": rows(&s.basis_sperp),
                }),
            ),
            Err(e) => rep.flag("singular_space.symplectic_split", e.to_string()),
        }
        return;
    };
    rep.check("singular_space.trivial", true, format!("S = {{0}}, k0 = {k0}"));
    if let Some(m) = multiplier_checks(rep, "multiplier", q, grid, Recursion::Standard, tol) {
        rep.put("multiplier", m);
    }
    match spectrum_bottom(q, spectrum_count) {
        Ok(h) => {
            rep.check("spectrum.omega0_positive", h.omega0 > 0.0, format!("ω0 = {}", h.omega0));
            rep.put("spectrum", h);
        }
        Err(e) => rep.fail("spectrum.bottom", &e),
    }
}

pub fn cmd_propagate(opts: &Opts) -> CmdResult {
    let (text, digest) = read_input(opts)?;
    let q = io::parse_symbol(&text)?;
    let nm = nmax(opts, 64)?;
    let grid = time_grid(opts, 10f64.powf(-2.5), 0.1, 16, 5)?;
    let dirs = parse_directions(opts.directions.as_deref(), q.n)?;
    let window = (opts.fit_lo.unwrap_or(grid[0]), opts.fit_hi.unwrap_or(*grid.last().unwrap()));
    if window.0 >= window.1 {
        return Err(InputError(format!("fit window [{}, {}] is empty", window.0, window.1)));
    }
    let mut rep = Report::new("propagate", opts, Some(digest));
    let tol = opts.tol.clone();
    if !q.accretive {
        rep.check("symbol.accretive", false, "Re M is not positive semidefinite");
        return Ok(rep);
    }
    let chain = kernel_chain(&q, RankTol::default()).ok();
    let op = match quantize(&q, nm) {
        Ok(op) => op,
        Err(e) => {
            rep.fail("galerkin.quantize", &e);
            return Ok(rep);
        }
    };
    let u0 = random_state(&op.basis, 2.0, Amplitude::Exact, opts.seed);
    let traj = match propagate(&op, &u0, &grid) {
        Ok(t) => t,
        Err(e) => {
            rep.fail("galerkin.propagate", &e);
            return Ok(rep);
        }
    };
    rep.check(
        "galerkin.contraction",
        traj.max_norm_increase <= tol.contraction,
        format!("max norm increase {:.3e}", traj.max_norm_increase),
    );
    let large_time = grid.iter().all(|&t| t >= 1.0);
    let omega0 = spectrum_bottom(&q, 1).map(|h| h.omega0);
    let mut csv = vec![];
    let mut fits = Map::new();
    for (label, x0) in &dirs {
        let tag = format!("decay.{label}");
        let norms = match linear_observable(x0, nm) {
            Ok(obs) => observable_norms(&obs, &traj, sparse::norm(&u0)),
            Err(e) => {
                rep.fail(&tag, &e);
                continue;
            }
        };
        csv.extend(norms.iter().map(|&(t, v)| NormRow { t, norm: v, direction_label: label.clone(), nmax: nm, seed: opts.seed }));
        let index = chain.as_ref().filter(|c| c.s_trivial()).map(|c| direction_index(c, x0));
        if large_time {
            // fits refused: the large-time estimate is e^{−ω0 t}
            match (exponential_rate(&norms), &omega0) {
                (Ok((slope, r2)), Ok(w)) => {
                    fits.insert(label.clone(), json!({"rate": slope, "r2": r2, "omega0": w}));
                    rep.check(
                        format!("{tag}.exponential"),
                        (slope + w).abs() <= tol.rate,
                        format!("log-norm slope {slope:.4} vs −ω0 = {:.4}", -w),
                    );
                }
                (Err(e), _) => rep.fail(format!("{tag}.exponential"), &e),
                (_, Err(e)) => rep.fail(format!("{tag}.exponential"), e),
            }
            continue;
        }
        let fit = match decay_exponent(&norms, window) {
            Ok(f) => f,
            Err(e) => {
                rep.fail(&tag, &e);
                continue;
            }
        };
        let mut entry = json!({"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2, "window": fit.window,
            "half_window_slopes": fit.half_window_slopes});
        match index {
            Some(Ok(k)) => {
                let expected = -((2 * k + 1) as f64) / 2.0;
                entry["index"] = json!(k);
                entry["expected_slope"] = json!(expected);
                rep.check(
                    format!("{tag}.slope"),
                    (fit.slope - expected).abs() <= tol.slope_for(k),
                    format!("slope {:.4} vs {expected} ± {:.3} (index {k})", fit.slope, tol.slope_for(k)),
                );
            }
            Some(Err(e)) => rep.fail(format!("{tag}.index"), &e),
            None => rep.flag(format!("{tag}.slope"), format!("slope {:.4}; S ≠ {{0}}, no predicted exponent", fit.slope)),
        }
        if fit.r2 < tol.r2 {
            rep.flag(format!("{tag}.r2"), format!("low-confidence fit: r² = {:.4} < {}", fit.r2, tol.r2));
        }
        fits.insert(label.clone(), entry);
    }
    rep.put("fits", fits);
    rep.put("nmax", nm);
    if let Some(p) = &opts.out_csv {
        io::write_csv(p, &csv)?;
    }
    Ok(rep)
}

fn model_summary(m: &OUModel) -> Value {
    json!({
        "n": m.n,
        "variant": m.variant,
        "kalman_rank": m.kalman_rank,
        "hypoelliptic": m.hypoelliptic,
        "k0": m.k0,
        "stability": m.stability,
        "trace_b": m.trace_b(),
        "qinf": m.qinf.as_ref().map(rows),
        "lyapunov_residual": m.lyapunov_residual,
    })
}

pub fn cmd_ou(opts: &Opts) -> CmdResult {
    let (text, digest) = read_input(opts)?;
    let (qd, b, variant) = io::parse_model(&text)?;
    let model = ou::ou_build(&qd, &b, variant)?;
    let mut rep = Report::new("ou", opts, Some(digest));
    rep.put("model", model_summary(&model));
    let tol = opts.tol.clone();
    if !model.hypoelliptic {
        rep.flag("ou.hypoelliptic", format!("Kalman rank {} < n = {}: not hypoelliptic, no symbol emitted", model.kalman_rank, model.n));
        return Ok(rep);
    }
    rep.check("ou.hypoelliptic", true, format!("Kalman rank {} = n, k0 = {}", model.kalman_rank, model.k0.unwrap()));
    let Some(res) = model.lyapunov_residual else {
        rep.flag("ou.invariant_measure", format!("σ(B) ⊄ ℂ₋ ({:?}): no invariant measure, no symbol emitted", model.stability));
        return Ok(rep);
    };
    rep.check("ou.lyapunov", res <= tol.lyapunov, format!("relative residual {res:.3e}"));
    let q = match ou::conjugated_symbol(&model) {
        Ok(q) => q,
        Err(e) => {
            rep.fail("ou.conjugated_symbol", &e);
            return Ok(rep);
        }
    };
    if let Some(p) = &opts.out_symbol {
        std::fs::write(p, io::symbol_json(&q)).map_err(|e| InputError(format!("{}: {e}", p.display())))?;
    }
    rep.put("symbol", io::symbol_file(&q));
    ou_structure_checks(&mut rep, "ou", &model, &q, &tol);
    if opts.oracle {
        let nm = nmax(opts, 64)?;
        oracle_check(&mut rep, &model, nm, &tol);
    }
    Ok(rep)
}

fn ou_structure_checks(rep: &mut Report, tag: &str, model: &OUModel, q: &QuadraticSymbol, tol: &Tolerances) {
    let k0 = model.k0.expect("hypoelliptic");
    match kernel_chain(q, RankTol::default()) {
        Ok(c) => rep.check(format!("{tag}.symbol_k0"), c.k0 == Some(k0), format!("chain k0 {:?}, Kalman k0 {k0}", c.k0)),
        Err(e) => rep.fail(format!("{tag}.symbol_k0"), &e),
    }
    match spectrum_bottom(q, 1) {
        Ok(h) => {
            let target = -0.5 * model.trace_b();
            let err = (h.omega0 - target).abs();
            rep.check(
                format!("{tag}.omega0_trace"),
                err <= tol.omega * (1.0 + model.trace_b().abs()),
                format!("ω0 = {} vs −½Tr B = {target} (difference {err:.3e})", h.omega0),
            );
            rep.put("omega0", h.omega0);
            rep.put("k0", k0);
        }
        Err(e) => rep.fail(format!("{tag}.omega0_trace"), &e),
    }
    match ou::index_table(model, q) {
        Ok(t) => {
            let bad: Vec<&str> = t.iter().filter(|r| r.ou_index != r.symbol_index).map(|r| r.label.as_str()).collect();
            rep.check(format!("{tag}.index_agreement"), bad.is_empty(), format!("{} directions, mismatches {bad:?}", t.len()));
            rep.put("index_table", t);
        }
        Err(e) => rep.fail(format!("{tag}.index_agreement"), &e),
    }
    match ou::lemma31_gap(model) {
        Ok(g) => rep.check(format!("{tag}.dual_subspaces"), g <= tol.angle, format!("max principal-angle sine {g:.3e}")),
        Err(e) => rep.fail(format!("{tag}.dual_subspaces"), &e),
    }
    let mut worst: f64 = 0.0;
    for j in 0..=k0 {
        match ou::lambda_generators(model, j) {
            Ok(g) => worst = worst.max(g.symbol_residual).max(g.sign_residual),
            Err(e) => return rep.fail(format!("{tag}.generator_symbols"), &e),
        }
    }
    rep.check(format!("{tag}.generator_symbols"), worst <= tol.residual, format!("max residual over j ≤ {k0}: {worst:.3e}"));
}

fn oracle_check(rep: &mut Report, model: &OUModel, nm: usize, tol: &Tolerances) {
    let n = model.n;
    if n > 2 {
        return rep.flag("ou.oracle", format!("Gaussian projection implemented for n ≤ 2, model has n = {n}"));
    }
    let run = || -> crate::Result<Vec<(f64, f64)>> {
        let q = ou::conjugated_symbol(model)?;
        let mean: Vec<f64> = [0.3, -0.2][..n].to_vec();
        let g = GaussianState::new(mean, RMat::identity(n, n), 1.0)?;
        let basis = HermiteBasis::new(n, nm);
        let (m0, p0, a0) = ou::sqrt_rho_times(model, &g)?;
        let u0 = project_gaussian(&basis, &m0, &p0, a0)?;
        let times = [0.1, 0.5, 1.0];
        let traj = propagate(&quantize(&q, nm)?, &u0, &times)?;
        times
            .iter()
            .zip(&traj.states)
            .map(|(&t, u)| {
                let (m1, p1, a1) = ou::conjugated_gaussian_solution(model, &g, t)?;
                let exact = project_gaussian(&basis, &m1, &p1, a1)?;
                let d: Vec<c64> = exact.iter().zip(u).map(|(a, b)| a - b).collect();
                Ok((t, sparse::norm(&d) / sparse::norm(&exact)))
            })
            .collect()
    };
    match run() {
        Ok(errs) => {
            let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
            rep.check("ou.oracle", worst <= tol.oracle, format!("max relative L² error {worst:.3e} at N = {nm}"));
            rep.put("oracle", errs);
        }
        Err(e) => rep.fail("ou.oracle", &e),
    }
}

/// Symbols with S = {0}, n ≤ 3, drawn from a seeded stream.
pub fn random_trivial_s_symbols(seed: u64, count: usize, max_n: usize) -> Vec<QuadraticSymbol> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![];
    while out.len() < count {
        let n = rng.random_range(1..=max_n);
        let q = random_accretive(&mut rng, n);
        if matches!(kernel_chain(&q, RankTol::default()), Ok(c) if c.s_trivial()) {
            out.push(q);
        }
    }
    out
}

fn worst_of(rep: &mut Report, check: &str, values: &[(bool, f64)], what: &str) {
    let fails = values.iter().filter(|v| !v.0).count();
    let worst = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    rep.check(check, fails == 0, format!("{} cases, {fails} failing, worst {what} {worst:.3e}", values.len()));
}

pub fn cmd_verify(opts: &Opts) -> CmdResult {
    let digest = match &opts.input {
        Some(_) => Some(read_input(opts)?.1),
        None => None,
    };
    let nm = nmax(opts, 32)?;
    let ensemble = opts.ensemble.unwrap_or(20);
    let grid = time_grid(opts, 1e-4, 1.0, 50, 2)?;
    let tol = opts.tol.clone();
    let mut rep = Report::new("verify", opts, digest);

    // canonical symbols
    let ho = harmonic_oscillator(1);
    let kr = kramers();
    for (tag, q, k0) in [("oscillator", &ho, 0usize), ("kramers", &kr, 1)] {
        match kernel_chain(q, RankTol::default()) {
            Ok(c) => rep.check(format!("{tag}.k0"), c.k0 == Some(k0), format!("k0 = {:?}", c.k0)),
            Err(e) => rep.fail(format!("{tag}.k0"), &e),
        }
    }
    multiplier_checks(&mut rep, "oscillator.multiplier", &ho, &grid, Recursion::Standard, &tol);
    let recursion = if opts.self_test { Recursion::FlippedSign } else { Recursion::Standard };
    if opts.self_test {
        rep.flag("self_test", "multiplier recursion for the Kramers symbol runs with a flipped correction sign");
    }
    multiplier_checks(&mut rep, "kramers.multiplier", &kr, &grid, recursion, &tol);

    // random multiplier ensemble
    let symbols = random_trivial_s_symbols(opts.seed, ensemble, 3);
    let runs: Vec<Report> = symbols
        .par_iter()
        .map(|q| {
            let mut r = Report::new("member", opts, None);
            multiplier_checks(&mut r, "m", q, &grid, Recursion::Standard, &tol);
            r
        })
        .collect();
    let mut by_check: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for r in &runs {
        for v in &r.verdicts {
            let e = by_check.entry(v.check.trim_start_matches("m.").to_string()).or_default();
            match v.status {
                Status::Pass => e.0 += 1,
                Status::Fail => e.1 += 1,
                Status::Flag => e.2 += 1,
            }
        }
    }
    for (check, (p, f, fl)) in by_check {
        rep.check(format!("ensemble.multiplier.{check}"), f == 0, format!("{p} pass, {f} fail, {fl} flagged over {ensemble} random symbols"));
    }

    // spectrum
    let spec = || -> crate::Result<(f64, f64)> {
        let ev = galerkin_eigenvalues(&quantize(&ho, nm.max(12))?)?;
        let ho_err = (0..10).map(|k| (ev[k] - c64::new(k as f64 + 0.5, 0.0)).norm()).fold(0.0, f64::max);
        let head = spectrum_bottom(&kr, 6)?;
        let kev = galerkin_eigenvalues(&quantize(&kr, nm)?)?;
        Ok((ho_err, match_distance(&head.lattice, &kev)))
    };
    match spec() {
        Ok((a, b)) => {
            rep.check("spectrum.oscillator_galerkin", a <= tol.eigen, format!("lowest 10 eigenvalues within {a:.3e} of k + 1/2"));
            rep.check("spectrum.kramers_lattice", b <= tol.spectrum, format!("lattice head vs Galerkin at N = {nm}: {b:.3e}"));
        }
        Err(e) => rep.fail("spectrum", &e),
    }

    // Galerkin properties
    galerkin_checks(&mut rep, opts.seed, ensemble, nm, &tol);

    // OU ensemble
    ou_ensemble_checks(&mut rep, opts.seed, ensemble, &tol);
    let km = ou::kramers_model();
    match ou::conjugated_symbol(&km) {
        Ok(q) => ou_structure_checks(&mut rep, "kramers_model", &km, &q, &tol),
        Err(e) => rep.fail("kramers_model.conjugated_symbol", &e),
    }
    Ok(rep)
}

fn galerkin_checks(rep: &mut Report, seed: u64, ensemble: usize, nm: usize, tol: &Tolerances) {
    let ho = harmonic_oscillator(1);
    match commutation_defect(&ho, &PhaseVector::basis(1, 0), 0.3, nm) {
        Ok(d) => rep.check(
            "galerkin.commutation_oscillator",
            d.interior <= tol.defect,
            format!("interior defect {:.3e} at N = {nm}, t = 0.3", d.interior),
        ),
        Err(e) => rep.fail("galerkin.commutation_oscillator", &e),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a1e);
    let small = 12;
    let mut symbols = vec![kramers()];
    symbols.extend((0..ensemble).map(|_| {
        let n = rng.random_range(1..=2);
        random_accretive(&mut rng, n)
    }));
    let results: Vec<crate::Result<(f64, f64, f64, f64)>> = symbols
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let op = quantize(q, small)?;
            let mut worst_acc: f64 = f64::INFINITY;
            for s in 0..5 {
                let u = random_state(&op.basis, 1.0, Amplitude::Gaussian, seed.wrapping_add((i * 5 + s) as u64));
                let re = sparse::dot(&u, &op.apply(&u)).re / sparse::norm(&u).powi(2);
                worst_acc = worst_acc.min(re);
            }
            let u0 = random_state(&op.basis, 1.0, Amplitude::Gaussian, seed.wrapping_add(i as u64));
            let traj = propagate(&op, &u0, &[0.0, 0.05, 0.1, 0.2, 0.5, 1.0])?;
            // linearity and real-part self-adjointness
            let q2 = random_accretive(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 + i as u64)), q.n);
            let (al, be) = (c64::new(0.7, -0.2), c64::new(-1.3, 0.4));
            let comb = quantize(&q.combine(al, &q2, be)?, small)?.a;
            let lin = quantize(q, small)?.a.scale(al).add(&quantize(&q2, small)?.a.scale(be));
            let lin_err = comb.sub(&lin).max_abs() / (1.0 + lin.max_abs());
            let re = quantize(&q.real_part(), small)?.a;
            let sa_err = re.sub(&re.adjoint()).max_abs() / (1.0 + re.max_abs());
            Ok((worst_acc, traj.max_norm_increase, lin_err, sa_err))
        })
        .collect();
    let mut acc = vec![];
    let mut con = vec![];
    let mut lin = vec![];
    let mut sa = vec![];
    for r in results {
        match r {
            Ok((a, c, l, s)) => {
                acc.push((a >= -tol.accretive, -a));
                con.push((c <= tol.contraction, c));
                lin.push((l <= 1e-12, l));
                sa.push((s <= 1e-12, s));
            }
            Err(e) => return rep.fail("galerkin.properties", &e),
        }
    }
    worst_of(rep, "galerkin.accretivity", &acc, "−Re⟨Au,u⟩/‖u‖²");
    worst_of(rep, "galerkin.contraction", &con, "norm increase");
    worst_of(rep, "galerkin.linearity", &lin, "relative entry error");
    worst_of(rep, "galerkin.real_selfadjoint", &sa, "relative asymmetry");
}

fn ou_ensemble_checks(rep: &mut Report, seed: u64, ensemble: usize, tol: &Tolerances) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1e);
    let mut agree = vec![];
    for _ in 0..10 * ensemble {
        let n = rng.random_range(1..=4);
        let (q, b) = ou::random_pair(&mut rng, n);
        match ou::ou_build(&q, &b, Variant::Ou).and_then(|m| Ok((m.hypoelliptic, ou::gram_matrix(&m, 1.0)?))) {
            Ok((h, g)) => agree.push((h == g.nonsingular(), g.lambda_min / g.lambda_max.max(f64::MIN_POSITIVE))),
            Err(e) => return rep.fail("ou.kalman_gram", &e),
        }
    }
    let bad = agree.iter().filter(|a| !a.0).count();
    rep.check("ensemble.ou.kalman_gram", bad == 0, format!("{} random (Q, B), {bad} disagreements", agree.len()));

    let models: Vec<OUModel> = (0..ensemble)
        .map(|_| {
            let n = rng.random_range(1..=4);
            ou::random_hypoelliptic(&mut rng, n)
        })
        .collect();
    let mut sub = Report::new("member", &Opts { tol: tol.clone(), ..Opts::default() }, None);
    for m in &models {
        rep_lyapunov(&mut sub, m, tol);
        match ou::conjugated_symbol(m) {
            Ok(q) => ou_structure_checks(&mut sub, "m", m, &q, tol),
            Err(e) => sub.fail("m.conjugated_symbol", &e),
        }
    }
    let mut by_check: BTreeMap<String, (usize, usize, Vec<String>)> = BTreeMap::new();
    for v in &sub.verdicts {
        let e = by_check.entry(v.check.trim_start_matches("m.").to_string()).or_default();
        if v.status == Status::Fail {
            e.1 += 1;
            e.2.push(v.detail.clone());
        } else {
            e.0 += 1;
        }
    }
    for (check, (p, f, details)) in by_check {
        let first = details.first().map(|d| format!("; first failure: {d}")).unwrap_or_default();
        rep.check(format!("ensemble.ou.{check}"), f == 0, format!("{p} pass, {f} fail over {ensemble} random models{first}"));
    }
}

fn rep_lyapunov(rep: &mut Report, m: &OUModel, tol: &Tolerances) {
    let r = m.lyapunov_residual.unwrap_or(f64::INFINITY);
    rep.check("m.lyapunov", r <= tol.lyapunov, format!("relative residual {r:.3e}"));
}
