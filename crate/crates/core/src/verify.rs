//! Residual checks for every identity the crate implements, run over index
//! ranges and collected into a deterministic, tolerance-tagged report.
//!
//! Tolerances are relative: each entry carries `tolerance = rel * scale`,
//! where `scale` majorizes the magnitudes that enter the residual.
//!
//! * algebraic identities: `rel = 2^{-prec/2}`;
//! * finite-difference checks: `rel = max(C h^2, C delta^2, 10 * 2^{-prec/2})`;
//! * structural identities that hold bit for bit: tolerance `0`.
//!
//! The derivative of `ln h_n` and `ln gamma_n` with respect to `u_k` is
//! checked as `d ln h_n / du_k = -(Q^k)_{n,n} / k` and
//! `d ln gamma_n / du_k = -tr U_k`; the sign follows from differentiating
//! `int psi_n^2 e^{-V} = 1` with `dV/du_k = x^k / k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::float::Constant;
use rug::Float;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laxpair::PolyMatrix2x2;
use crate::model::Model;
use crate::moments::SolveOptions;
use crate::poly::Poly;
use crate::potential::Potential;
use crate::real::{self, Real};
use crate::wavefunction::default_fd_step;

/// Check groups in report order; `--only` accepts these names.
pub const CHECK_NAMES: &[&str] = &[
    "backend_agreement",
    "string_equations",
    "uv_recurrences",
    "ode",
    "eta_expansion",
    "deformation",
    "trace_identity",
    "diag_identity",
    "flow_sum",
    "flow_recursion",
    "structure",
    "divided_difference",
    "psi_routes",
    "orthonormality",
];

/// Default constant `C` in the finite-difference tolerances.
pub const DEFAULT_FD_CONSTANT: f64 = 1024.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultTarget {
    Gamma,
    Beta,
}

/// Shift of a single recurrence coefficient applied after it is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultInjection {
    pub target: FaultTarget,
    pub n: usize,
    pub delta: Real,
}

impl FaultInjection {
    /// Parses `n=IDX,delta=VAL[,target=gamma|beta]`.
    pub fn parse(prec: u32, s: &str) -> Result<Self> {
        let mut n = None;
        let mut delta = None;
        let mut target = FaultTarget::Gamma;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, val) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("fault injection term {part:?} is not key=value")))?;
            match key.trim() {
                "n" => {
                    n = Some(val.trim().parse::<usize>().map_err(|e| {
                        Error::Parse(format!("fault injection index {val:?}: {e}"))
                    })?)
                }
                "delta" => delta = Some(real::parse(prec, val)?),
                "target" => {
                    target = match val.trim() {
                        "gamma" => FaultTarget::Gamma,
                        "beta" => FaultTarget::Beta,
                        other => {
                            return Err(Error::Parse(format!(
                                "fault injection target {other:?} (expected gamma or beta)"
                            )))
                        }
                    }
                }
                other => return Err(Error::Parse(format!("unknown fault injection key {other:?}"))),
            }
        }
        Ok(FaultInjection {
            target,
            n: n.ok_or_else(|| Error::Parse("fault injection needs n=IDX".into()))?,
            delta: delta.ok_or_else(|| Error::Parse("fault injection needs delta=VAL".into()))?,
        })
    }

    pub fn to_text(&self) -> String {
        let t = match self.target {
            FaultTarget::Gamma => "gamma",
            FaultTarget::Beta => "beta",
        };
        format!("n={},delta={},target={t}", self.n, real::to_sci(&self.delta))
    }
}

/// Inputs of [`run_all`]. `None` fields take the documented defaults.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub potential: Potential,
    pub precision: u32,
    /// Truncation order `N`; default `n_max + 2d + 4`.
    pub order: Option<usize>,
    /// Largest `n`; default `min(15, trust)`.
    pub n_max: Option<usize>,
    /// Largest `k`; default `d = deg V'`.
    pub k_max: Option<usize>,
    /// Deformation step; default `2^{-prec/4}`.
    pub delta: Option<Real>,
    /// Base FD step in `x`, scaled by `1 + |x|`; default `2^{-prec/3}`.
    pub fd_step: Option<Real>,
    /// Relative tolerance for algebraic identities; default `2^{-prec/2}`.
    pub tol_algebraic: Option<Real>,
    /// Relative tolerance for FD checks; default from the formula above.
    pub tol_fd: Option<Real>,
    pub fd_constant: f64,
    /// Largest index in the orthonormality check; default `min(10, n_max)`.
    pub ortho_n_max: Option<usize>,
    pub x_samples: usize,
    pub seed: u64,
    pub fault: Option<FaultInjection>,
    /// Check groups to run; empty means all.
    pub only: Vec<String>,
    pub solve: SolveOptions,
}

impl VerifyConfig {
    pub fn new(potential: &Potential, precision: u32) -> Self {
        VerifyConfig {
            potential: potential.with_prec(precision),
            precision,
            order: None,
            n_max: None,
            k_max: None,
            delta: None,
            fd_step: None,
            tol_algebraic: None,
            tol_fd: None,
            fd_constant: DEFAULT_FD_CONSTANT,
            ortho_n_max: None,
            x_samples: 7,
            seed: 0,
            fault: None,
            only: Vec::new(),
            solve: SolveOptions::default(),
        }
    }

    fn selected(&self, name: &str) -> bool {
        self.only.is_empty() || self.only.iter().any(|o| o == name)
    }
}

/// One residual entry.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub check: &'static str,
    pub item: &'static str,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    /// `None` when the check could not be evaluated (see `error`).
    pub residual: Option<Real>,
    pub tolerance: Real,
    pub pass: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckJson {
    pub check: &'static str,
    pub item: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub residual: Option<String>,
    pub tolerance: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckResult {
    fn new(check: &'static str, item: &'static str) -> Self {
        CheckResult {
            check,
            item,
            n: None,
            m: None,
            k: None,
            residual: None,
            tolerance: real::zero(64),
            pass: false,
            error: None,
        }
    }

    fn n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    fn m(mut self, m: usize) -> Self {
        self.m = Some(m);
        self
    }

    fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    /// Passes iff `residual <= tolerance`.
    fn measured(mut self, residual: Real, tolerance: Real) -> Self {
        self.pass = residual.is_finite() && residual <= tolerance;
        self.residual = Some(residual);
        self.tolerance = tolerance;
        self
    }

    fn with_result(self, r: Result<(Real, Real)>) -> Self {
        match r {
            Ok((res, tol)) => self.measured(res, tol),
            Err(e) => self.failed(&e),
        }
    }

    fn failed(mut self, e: &Error) -> Self {
        self.pass = false;
        self.error = Some(e.to_string());
        self
    }

    /// Human-readable index label, e.g. `n=3 k=2`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(k) = self.k {
            parts.push(format!("k={k}"));
        }
        if let Some(n) = self.n {
            parts.push(format!("n={n}"));
        }
        if let Some(m) = self.m {
            parts.push(format!("m={m}"));
        }
        parts.join(" ")
    }

    pub fn to_json(&self) -> CheckJson {
        CheckJson {
            check: self.check,
            item: self.item,
            n: self.n,
            m: self.m,
            k: self.k,
            residual: self.residual.as_ref().map(real::to_sci),
            tolerance: real::to_sci(&self.tolerance),
            pass: self.pass,
            error: self.error.clone(),
        }
    }
}

/// Resolved settings, reported alongside the results.
#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader {
    pub potential: String,
    pub precision: u32,
    pub order: usize,
    /// Largest `n` for which `D_n`, `U_k` and the recurrence checks are inside the trust window.
    pub trust: usize,
    pub vprime_degree: usize,
    pub n_range: [usize; 2],
    pub k_range: [usize; 2],
    pub ortho_n_max: usize,
    pub delta: String,
    pub fd_step: String,
    pub fd_constant: String,
    pub tol_algebraic: String,
    pub tol_fd_ode: String,
    pub tol_fd_deformation: String,
    pub x_samples: Vec<String>,
    pub divided_difference_x: String,
    pub seed: u64,
    pub fault: Option<String>,
    pub only: Vec<String>,
    pub stieltjes_nodes: Option<usize>,
    pub moment_precision: Option<u32>,
    pub log_derivative_convention: &'static str,
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub header: ReportHeader,
    pub checks: Vec<CheckResult>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    header: &'a ReportHeader,
    passed: bool,
    failures: usize,
    checks: Vec<CheckJson>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// `0` when every check passed, `4` otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            4
        }
    }

    /// Checks of one group.
    pub fn group<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a CheckResult> + 'a {
        self.checks.iter().filter(move |c| c.check == check)
    }

    /// Largest residual of a group, ignoring entries that errored.
    pub fn max_residual(&self, check: &str) -> Option<Real> {
        self.group(check)
            .filter_map(|c| c.residual.clone())
            .fold(None, |acc: Option<Real>, r| match acc {
                Some(a) if a >= r => Some(a),
                _ => Some(r),
            })
    }

    pub fn to_json(&self) -> String {
        let j = ReportJson {
            header: &self.header,
            passed: self.passed(),
            failures: self.failures().count(),
            checks: self.checks.iter().map(CheckResult::to_json).collect(),
        };
        serde_json::to_string_pretty(&j).expect("report serializes")
    }

    /// Tab-separated table: `check item indices residual tolerance PASS|FAIL`.
    pub fn to_text(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        out.push_str(&format!(
            "# potential {} | precision {} | N {} | trust {} | n {}..={} | k {}..={}\n",
            h.potential, h.precision, h.order, h.trust, h.n_range[0], h.n_range[1], h.k_range[0], h.k_range[1]
        ));
        out.push_str(&format!(
            "# delta {} | fd step {} | tol algebraic {} | tol fd (ode) {} | tol fd (deformation) {} | seed {}\n",
            h.delta, h.fd_step, h.tol_algebraic, h.tol_fd_ode, h.tol_fd_deformation, h.seed
        ));
        if let Some(f) = &h.fault {
            out.push_str(&format!("# fault injection {f}\n"));
        }
        for c in &self.checks {
            let res = c
                .residual
                .as_ref()
                .map(real::to_sci)
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}",
                c.check,
                c.item,
                c.label(),
                res,
                real::to_sci(&c.tolerance),
                if c.pass { "PASS" } else { "FAIL" }
            ));
            if let Some(e) = &c.error {
                out.push_str(&format!("\t{e}"));
            }
            out.push('\n');
        }
        let failures = self.failures().count();
        out.push_str(&format!(
            "# {} checks, {} failed\n",
            self.checks.len(),
            failures
        ));
        out
    }
}

/// Perturbed pipelines at `u_k +- delta`, rebuilt from scratch.
#[derive(Debug, Clone)]
pub struct Deformation {
    pub k: usize,
    pub plus: Model,
    pub minus: Model,
    /// `u_k(plus) - u_k(minus)`, the exact denominator of the central difference.
    pub du: Real,
}

impl Deformation {
    pub fn build(
        potential: &Potential,
        k: usize,
        delta: &Real,
        order: usize,
        prec: u32,
        opts: &SolveOptions,
    ) -> Result<Self> {
        let p_plus = potential.perturb(k, delta)?;
        let neg = Float::with_val(delta.prec(), -delta);
        let p_minus = potential.perturb(k, &neg)?;
        let (plus, minus) = rayon::join(
            || Model::build_with(&p_plus, order, prec, 1, opts),
            || Model::build_with(&p_minus, order, prec, 1, opts),
        );
        let plus = plus?;
        let minus = minus?;
        let du = Float::with_val(prec, plus.potential.u(k) - minus.potential.u(k));
        Ok(Deformation { k, plus, minus, du })
    }

    /// Central difference of `(psi_{n-1}(x), psi_n(x))` in `u_k`.
    pub fn psi_pair(&self, n: usize, x: &Real) -> Result<[Real; 2]> {
        let a = self.plus.waves.eval_psi_all(n, x)?;
        let b = self.minus.waves.eval_psi_all(n, x)?;
        let d = |i: usize| Float::with_val(self.du.prec(), &a[i] - &b[i]) / &self.du;
        Ok([d(n - 1), d(n)])
    }

    /// Central difference of `ln gamma_n` in `u_k`.
    pub fn log_gamma(&self, n: usize) -> Real {
        let prec = self.du.prec();
        let a = Float::with_val(prec, self.plus.recurrence().gamma(n).ln_ref());
        let b = Float::with_val(prec, self.minus.recurrence().gamma(n).ln_ref());
        (a - b) / &self.du
    }

    /// Central difference of `ln h_n` in `u_k`.
    pub fn log_h(&self, n: usize) -> Real {
        let prec = self.du.prec();
        let a = self.plus.waves.h(n).ln();
        let b = self.minus.waves.h(n).ln();
        Float::with_val(prec, a - b) / &self.du
    }
}

/// `m` Chebyshev points `a cos((2i+1) pi / 2m)` on `[-a, a]`.
pub fn chebyshev_points(a: &Real, m: usize) -> Vec<Real> {
    let prec = a.prec();
    let pi = Float::with_val(prec, Constant::Pi);
    (0..m)
        .map(|i| {
            let t = Float::with_val(prec, &pi * (2 * i as u32 + 1)) / (2 * m as u32);
            t.cos() * a
        })
        .collect()
}

/// Default sampling half-width `4 max_{1<=n<=n_max+1} |gamma_n|`.
pub fn sample_radius(model: &Model, n_max: usize) -> Real {
    let rc = model.recurrence();
    let top = (n_max + 1).min(rc.order());
    let m = real::max_abs(model.prec, (1..=top).map(|n| rc.gamma(n)));
    m * 4u32
}

/// `max |FD_{u_k} psi - U_k psi|` over `xs` for the pair at `n`, with its scale.
pub fn deformation_residual(
    base: &Model,
    def: &Deformation,
    n: usize,
    xs: &[Real],
) -> Result<(Real, Real)> {
    let prec = base.prec;
    let u = base.lax.cal_u_matrix(def.k, n)?;
    let mut worst = real::zero(prec);
    let mut scale = real::one(prec);
    for x in xs {
        let psi = base.waves.eval_psi_all(n, x)?;
        let pair = [psi[n - 1].clone(), psi[n].clone()];
        let lhs = def.psi_pair(n, x)?;
        let rhs = u.apply(x, &pair);
        scale = scale.max(&pair_scale(&u, x, &pair)).max(&real::max_abs(prec, lhs.iter()));
        for i in 0..2 {
            worst = worst.max(&Float::with_val(prec, &lhs[i] - &rhs[i]).abs());
        }
    }
    Ok((worst, scale))
}

/// `(tr U_k, FD of ln gamma_n in u_k)`.
pub fn trace_identity_terms(base: &Model, def: &Deformation, n: usize) -> Result<(Real, Real)> {
    let tr = base.lax.cal_u_matrix(def.k, n)?.trace();
    Ok((tr.coeff(0), def.log_gamma(n)))
}

/// `((Q^k)_{n,n} / k, FD of ln h_n in u_k)`.
pub fn diag_identity_terms(base: &Model, def: &Deformation, n: usize) -> Result<(Real, Real)> {
    let qk = base.lax.powers().get(def.k).entry(n, n)?;
    Ok((qk / def.k as u32, def.log_h(n)))
}

/// `max_x |psi'_fd - D_n psi|` with Richardson-extrapolated central differences,
/// together with its scale.
pub fn ode_residual(model: &Model, n: usize, xs: &[Real], fd_base: &Real) -> Result<(Real, Real)> {
    let prec = model.prec;
    let d = model.lax.d_matrix(n)?;
    let mut worst = real::zero(prec);
    let mut scale = real::one(prec);
    for x in xs {
        let h = Float::with_val(prec, fd_base * (Float::with_val(prec, x.abs_ref()) + 1u32));
        let fd = model.waves.fd_derivative_all(n, x, &h)?;
        let psi = model.waves.eval_psi_all(n, x)?;
        let pair = [psi[n - 1].clone(), psi[n].clone()];
        let rhs = d.apply(x, &pair);
        scale = scale.max(&pair_scale(&d, x, &pair));
        for i in 0..2 {
            let lhs = &fd[n - 1 + i];
            worst = worst.max(&Float::with_val(prec, lhs - &rhs[i]).abs());
        }
    }
    Ok((worst, scale))
}

/// `max_{ij} |M_ij(x)| * max_j |v_j|`, at least 1.
fn pair_scale(m: &PolyMatrix2x2, x: &Real, v: &[Real; 2]) -> Real {
    let prec = m.prec();
    let e = m.eval(x);
    let me = real::max_abs(prec, e.iter().flatten());
    let ve = real::max_abs(prec, v.iter());
    (me * ve).max(&real::one(prec))
}

fn abs(x: &Real) -> Real {
    Float::with_val(x.prec(), x.abs_ref())
}

/// Largest `|coefficient|` of `p` above `bound`.
fn excess_degree(p: &Poly, bound: usize) -> Real {
    real::max_abs(p.prec(), p.coeffs().iter().skip(bound + 1))
}

fn excess_degree_matrix(m: &PolyMatrix2x2, bound: usize) -> Real {
    let prec = m.prec();
    m.entries
        .iter()
        .flatten()
        .map(|e| excess_degree(e, bound))
        .fold(real::zero(prec), |a, b| a.max(&b))
}

/// Resolved ranges and tolerances.
struct Plan {
    prec: u32,
    n_max: usize,
    k_max: usize,
    ortho_n_max: usize,
    delta: Real,
    fd_base: Real,
    alg: Real,
    fd_ode: Real,
    fd_def: Real,
    xs: Vec<Real>,
    x0: Real,
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Agreement,
    StringEq(usize),
    Uv(usize),
    Ode(usize),
    Eta(usize),
    Deform(usize, usize),
    Trace(usize, usize),
    Diag(usize, usize),
    FlowSum(usize),
    FlowRecursion(usize, usize),
    StructGlobal,
    StructK(usize),
    StructN(usize),
    StructKN(usize, usize),
    DividedDifference(usize),
    PsiRoutes(usize),
    Orthonormality,
}

/// Builds the model described by `config` and runs every selected check.
///
/// Individual check failures (including errors inside a check) are recorded
/// in the report; only failures to build the base model are returned as `Err`.
pub fn run_all(config: &VerifyConfig) -> Result<VerificationReport> {
    for o in &config.only {
        if !CHECK_NAMES.contains(&o.as_str()) {
            return Err(Error::Parse(format!(
                "unknown check {o:?}; known checks: {}",
                CHECK_NAMES.join(", ")
            )));
        }
    }
    let prec = config.precision;
    let potential = config.potential.with_prec(prec);
    potential.check_admissible()?;
    let d = potential.vprime_degree();
    let k_max = config.k_max.unwrap_or(d);
    if k_max == 0 {
        return Err(Error::InvalidIndex("k range must contain at least k = 1".into()));
    }
    let requested_n = config.n_max.unwrap_or(15);
    if requested_n == 0 {
        return Err(Error::InvalidIndex("n range must contain at least n = 1".into()));
    }
    let order = config.order.unwrap_or_else(|| Model::default_order(requested_n, d.max(k_max)));

    let clean = Model::build_with(&potential, order, prec, k_max, &config.solve)?;
    let model = match &config.fault {
        None => clean,
        Some(f) => {
            let rc = match f.target {
                FaultTarget::Gamma => clean.recurrence().with_gamma_shift(f.n, &f.delta)?,
                FaultTarget::Beta => clean.recurrence().with_beta_shift(f.n, &f.delta)?,
            };
            let mut m = Model::from_coefficients(&potential, &rc, k_max)?;
            m.certified = clean.certified;
            m
        }
    };

    // Largest n whose D_n, U_k and recurrence checks stay inside the trust window.
    let k_trust = order.saturating_sub(k_max + 1);
    let trust = model.lax.max_n().min(k_trust);
    let n_max = match config.n_max {
        Some(n) if n > trust => {
            return Err(Error::OutsideTrustWindow { n, m: n, trust });
        }
        Some(n) => n,
        None => requested_n.min(trust),
    };
    if n_max == 0 {
        return Err(Error::OutsideTrustWindow { n: 1, m: 1, trust });
    }
    let ortho_n_max = config.ortho_n_max.unwrap_or(10).min(n_max);

    let alg = config
        .tol_algebraic
        .clone()
        .unwrap_or_else(|| real::pow2(prec, -((prec / 2) as i32)));
    let delta = config
        .delta
        .clone()
        .unwrap_or_else(|| real::pow2(prec, -((prec / 4) as i32)));
    let fd_base = config
        .fd_step
        .clone()
        .unwrap_or_else(|| default_fd_step(prec, &real::zero(prec)));
    let c = real::from_f64(prec, config.fd_constant);
    let floor = Float::with_val(prec, &alg * 10u32);
    let fd_formula = |step: &Real| -> Real {
        let v = Float::with_val(prec, step.square_ref()) * &c;
        v.max(&floor)
    };
    let fd_ode = config.tol_fd.clone().unwrap_or_else(|| fd_formula(&fd_base));
    let fd_def = config.tol_fd.clone().unwrap_or_else(|| fd_formula(&delta));

    let a = sample_radius(&model, n_max);
    let xs = chebyshev_points(&a, config.x_samples.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let u: f64 = rng.gen_range(-1.0..1.0);
    let x0 = real::from_f64(prec, u) * &a;

    let plan = Plan {
        prec,
        n_max,
        k_max,
        ortho_n_max,
        delta,
        fd_base,
        alg,
        fd_ode,
        fd_def,
        xs,
        x0,
    };

    let want_deform = ["deformation", "trace_identity", "diag_identity"]
        .iter()
        .any(|c| config.selected(c));
    let deformations: Vec<Result<Deformation>> = if want_deform {
        (1..=k_max)
            .into_par_iter()
            .map(|k| Deformation::build(&potential, k, &plan.delta, order, prec, &config.solve))
            .collect()
    } else {
        Vec::new()
    };

    let jobs = job_list(config, &plan, model.certified.is_some());
    let results: Vec<Vec<CheckResult>> = jobs
        .par_iter()
        .map(|job| run_job(*job, &model, &plan, &deformations))
        .collect();

    let header = ReportHeader {
        potential: potential.to_text(),
        precision: prec,
        order,
        trust,
        vprime_degree: d,
        n_range: [1, n_max],
        k_range: [1, k_max],
        ortho_n_max,
        delta: real::to_sci(&plan.delta),
        fd_step: format!("{} * (1 + |x|)", real::to_sci(&plan.fd_base)),
        fd_constant: format!("{}", config.fd_constant),
        tol_algebraic: real::to_sci(&plan.alg),
        tol_fd_ode: real::to_sci(&plan.fd_ode),
        tol_fd_deformation: real::to_sci(&plan.fd_def),
        x_samples: plan.xs.iter().map(real::to_sci).collect(),
        divided_difference_x: real::to_sci(&plan.x0),
        seed: config.seed,
        fault: config.fault.as_ref().map(FaultInjection::to_text),
        only: config.only.clone(),
        stieltjes_nodes: model.certified.as_ref().map(|c| c.stieltjes_nodes),
        moment_precision: model.certified.as_ref().map(|c| c.moment_prec),
        log_derivative_convention: "d ln h_n/du_k = -(Q^k)_nn/k, d ln gamma_n/du_k = -tr U_k",
    };
    Ok(VerificationReport {
        header,
        checks: results.into_iter().flatten().collect(),
    })
}

fn job_list(config: &VerifyConfig, plan: &Plan, certified: bool) -> Vec<Job> {
    let ns = 1..=plan.n_max;
    let ks = 1..=plan.k_max;
    let kn = || ks.clone().flat_map(|k| ns.clone().map(move |n| (k, n)));
    let mut jobs = Vec::new();
    for name in CHECK_NAMES {
        if !config.selected(name) {
            continue;
        }
        match *name {
            "backend_agreement" if certified => jobs.push(Job::Agreement),
            "string_equations" => jobs.extend((0..=plan.n_max).map(Job::StringEq)),
            "uv_recurrences" => jobs.extend(ns.clone().map(Job::Uv)),
            "ode" => jobs.extend(ns.clone().map(Job::Ode)),
            "eta_expansion" => jobs.extend((0..=plan.n_max).map(Job::Eta)),
            "deformation" => jobs.extend(kn().map(|(k, n)| Job::Deform(k, n))),
            "trace_identity" => jobs.extend(kn().map(|(k, n)| Job::Trace(k, n))),
            "diag_identity" => jobs.extend(kn().map(|(k, n)| Job::Diag(k, n))),
            "flow_sum" => jobs.extend(ns.clone().map(Job::FlowSum)),
            "flow_recursion" => jobs.extend(kn().map(|(k, n)| Job::FlowRecursion(k, n))),
            "structure" => {
                jobs.push(Job::StructGlobal);
                jobs.extend((0..=plan.k_max + 1).map(Job::StructK));
                jobs.extend(ns.clone().map(Job::StructN));
                jobs.extend(kn().map(|(k, n)| Job::StructKN(k, n)));
            }
            "divided_difference" => jobs.extend((0..=plan.n_max).map(Job::DividedDifference)),
            "psi_routes" => jobs.extend((0..=plan.n_max).map(Job::PsiRoutes)),
            "orthonormality" => jobs.push(Job::Orthonormality),
            _ => {}
        }
    }
    jobs
}

fn run_job(job: Job, model: &Model, plan: &Plan, defs: &[Result<Deformation>]) -> Vec<CheckResult> {
    let prec = plan.prec;
    let tol = |scale: &Real| Float::with_val(prec, &plan.alg * scale);
    let lax = &model.lax;
    let exact = || real::zero(prec);
    let deformation = |k: usize| -> Result<&Deformation> {
        defs[k - 1].as_ref().map_err(Clone::clone)
    };
    match job {
        Job::Agreement => {
            let cert = model.certified.as_ref().expect("job only scheduled with a certificate");
            let t = real::pow2(prec, -((prec / 2) as i32));
            cert.agreement
                .per_n
                .iter()
                .filter(|(n, _, _)| *n <= plan.n_max + 1)
                .map(|&(n, dg, db)| {
                    CheckResult::new("backend_agreement", "relative")
                        .n(n)
                        .measured(real::from_f64(prec, dg.max(db)), t.clone())
                })
                .collect()
        }
        Job::StringEq(n) => {
            let vq = lax.vprime_q();
            let scale = vprime_row_scale(model, n);
            let diag = CheckResult::new("string_equations", "diagonal")
                .n(n)
                .with_result(vq.entry(n, n).map(|v| (abs(&v), tol(&scale))));
            if n == 0 {
                return vec![diag];
            }
            let off = CheckResult::new("string_equations", "subdiagonal").n(n).with_result(
                vq.entry(n, n - 1).map(|v| {
                    let target = Float::with_val(prec, n as u32) / lax.gamma(n);
                    let s = scale.clone().max(&abs(&target));
                    (Float::with_val(prec, v - target).abs(), tol(&s))
                }),
            );
            vec![diag, off]
        }
        Job::Uv(n) => match uv_check(model, n) {
            Ok((r1, s1, r2, s2)) => vec![
                CheckResult::new("uv_recurrences", "first").n(n).measured(r1, tol(&s1)),
                CheckResult::new("uv_recurrences", "second").n(n).measured(r2, tol(&s2)),
            ],
            Err(e) => vec![
                CheckResult::new("uv_recurrences", "first").n(n).failed(&e),
                CheckResult::new("uv_recurrences", "second").n(n).failed(&e),
            ],
        },
        Job::Ode(n) => vec![CheckResult::new("ode", "max_over_x").n(n).with_result(
            ode_residual(model, n, &plan.xs, &plan.fd_base)
                .map(|(r, s)| (r, Float::with_val(prec, &plan.fd_ode * &s))),
        )],
        Job::Eta(n) => vec![CheckResult::new("eta_expansion", "max_over_x")
            .n(n)
            .with_result(eta_residual(model, n, &plan.xs).map(|(r, s)| (r, tol(&s))))],
        Job::Deform(k, n) => vec![CheckResult::new("deformation", "max_over_x")
            .k(k)
            .n(n)
            .with_result(deformation(k).and_then(|def| {
                let (r, s) = deformation_residual(model, def, n, &plan.xs)?;
                Ok((r, Float::with_val(prec, &plan.fd_def * &s)))
            }))],
        Job::Trace(k, n) => vec![CheckResult::new("trace_identity", "fd_ln_gamma")
            .k(k)
            .n(n)
            .with_result(deformation(k).and_then(|def| {
                let (tr, fd) = trace_identity_terms(model, def, n)?;
                let s = abs(&tr).max(&abs(&fd)).max(&real::one(prec));
                let r = Float::with_val(prec, &tr + &fd).abs();
                Ok((r, Float::with_val(prec, &plan.fd_def * &s)))
            }))],
        Job::Diag(k, n) => vec![CheckResult::new("diag_identity", "fd_ln_h")
            .k(k)
            .n(n)
            .with_result(deformation(k).and_then(|def| {
                let (q, fd) = diag_identity_terms(model, def, n)?;
                let s = abs(&q).max(&abs(&fd)).max(&real::one(prec));
                let r = Float::with_val(prec, &q + &fd).abs();
                Ok((r, Float::with_val(prec, &plan.fd_def * &s)))
            }))],
        Job::FlowSum(n) => vec![CheckResult::new("flow_sum", "coefficientwise")
            .n(n)
            .with_result((|| {
                let d = lax.d_matrix(n)?;
                let f = lax.d_from_flows(n)?;
                let s = d.max_abs_coeff().max(&f.max_abs_coeff()).max(&real::one(prec));
                Ok((d.max_abs_diff(&f), tol(&s)))
            })())],
        Job::FlowRecursion(k, n) => vec![CheckResult::new("flow_recursion", "coefficientwise")
            .k(k)
            .n(n)
            .with_result((|| {
                let (l, r) = lax.flow_recursion_sides(k, n)?;
                let uk1 = lax.cal_u_matrix(k + 1, n)?.max_abs_coeff() * (2 * (k as u32 + 1));
                let uk = lax.cal_u_matrix(k, n)?.max_abs_coeff() * (2 * k as u32);
                let s = uk1.max(&uk).max(&r.max_abs_coeff()).max(&real::one(prec));
                Ok((l.max_abs_diff(&r), tol(&s)))
            })())],
        Job::StructGlobal => vec![
            CheckResult::new("structure", "p_antisymmetric")
                .measured(lax.p_matrix().max_antisymmetry_defect(), exact()),
            CheckResult::new("structure", "vprime_q_symmetric")
                .measured(lax.vprime_q().max_symmetry_defect(), exact()),
            CheckResult::new("structure", "vprime_q_band")
                .measured(lax.vprime_q().max_outside_band(lax.d()), exact()),
        ],
        Job::StructK(k) => {
            let pk = lax.powers().get(k);
            let mut out = vec![
                CheckResult::new("structure", "power_band")
                    .k(k)
                    .measured(pk.max_outside_band(k), exact()),
                CheckResult::new("structure", "power_symmetric")
                    .k(k)
                    .measured(pk.max_symmetry_defect(), exact()),
            ];
            if k >= 1 {
                out.push(
                    CheckResult::new("structure", "u_antisymmetric")
                        .k(k)
                        .with_result(lax.u_k_matrix(k).map(|u| (u.max_antisymmetry_defect(), exact()))),
                );
            }
            out
        }
        Job::StructN(n) => struct_n(model, n, plan),
        Job::StructKN(k, n) => {
            let cu = lax.cal_u_matrix(k, n);
            let degree = CheckResult::new("structure", "cal_u_degree")
                .k(k)
                .n(n)
                .with_result(cu.as_ref().map_err(Clone::clone).map(|u| {
                    let s = u.max_abs_coeff().max(&real::one(prec));
                    (excess_degree_matrix(u, k), tol(&s))
                }));
            let trace = CheckResult::new("structure", "cal_u_trace_constant")
                .k(k)
                .n(n)
                .with_result(cu.map(|u| (excess_degree(&u.trace(), 0), exact())));
            vec![degree, trace]
        }
        Job::DividedDifference(n) => vec![CheckResult::new("divided_difference", "row_at_x0")
            .n(n)
            .with_result(divided_difference_residual(model, n, &plan.x0).map(|(r, s)| (r, tol(&s))))],
        Job::PsiRoutes(n) => vec![CheckResult::new("psi_routes", "max_over_x")
            .n(n)
            .with_result((|| {
                let mut worst = real::zero(prec);
                let mut scale = real::one(prec);
                for x in &plan.xs {
                    let a = model.waves.eval_psi(n, x)?;
                    let b = model.waves.eval_psi_monic_route(n, x)?;
                    scale = scale.max(&abs(&a));
                    worst = worst.max(&Float::with_val(prec, a - b).abs());
                }
                Ok((worst, tol(&scale)))
            })())],
        Job::Orthonormality => match model.waves.orthonormality_residuals(plan.ortho_n_max) {
            Ok(rows) => rows
                .into_iter()
                .enumerate()
                .flat_map(|(n, row)| {
                    row.into_iter().enumerate().map(move |(j, r)| (n, n + j, r))
                })
                .map(|(n, m, r)| {
                    CheckResult::new("orthonormality", "gram_entry")
                        .n(n)
                        .m(m)
                        .measured(r, plan.alg.clone())
                })
                .collect(),
            Err(e) => vec![CheckResult::new("orthonormality", "gram_entry").failed(&e)],
        },
    }
}

/// `max(1, sum_j |c_j| max_m |(Q^j)_{n,m}|)`.
fn vprime_row_scale(model: &Model, n: usize) -> Real {
    let prec = model.prec;
    let vp = model.potential.vprime_coeffs();
    let mut s = real::zero(prec);
    for (j, c) in vp.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let pj = model.lax.powers().get(j);
        let lo = n.saturating_sub(j);
        let row = (lo..=n + j).map(|m| pj.get(n, m));
        let row_max = row.fold(real::zero(prec), |a, b| a.max(&abs(&b)));
        s += abs(c) * row_max;
    }
    s.max(&real::one(prec))
}

/// Residuals and scales of both `u_n`, `v_n` recurrences.
fn uv_check(model: &Model, n: usize) -> Result<(Real, Real, Real, Real)> {
    let lax = &model.lax;
    let prec = model.prec;
    let (first, second) = lax.uv_recurrence_residuals(n)?;
    let gn = abs(lax.gamma(n));
    let gn1 = abs(lax.gamma(n + 1));
    let bx = abs(lax.beta(n)) + 1u32;
    let norm = |p: Result<Poly>| -> Result<Real> { Ok(p?.max_abs_coeff()) };
    let u_n = norm(lax.r_entry(n, n - 1))?;
    let u_n1 = norm(lax.r_entry(n + 1, n))?;
    let v_n = norm(lax.r_entry(n, n))?;
    let v_n1 = norm(lax.r_entry(n + 1, n + 1))?;
    let v_p = norm(lax.r_entry(n - 1, n - 1))?;
    let vp = real::max_abs(prec, model.potential.vprime_coeffs().iter());
    let one = real::one(prec);
    let s1 = vp
        .max(&Float::with_val(prec, &gn * &u_n))
        .max(&Float::with_val(prec, &gn1 * &u_n1))
        .max(&Float::with_val(prec, &bx * &v_n))
        .max(&one);
    let cross = Float::with_val(prec, &gn1 * &u_n1) + Float::with_val(prec, &gn * &u_n);
    let s2 = Float::with_val(prec, &bx * &cross)
        .max(&(Float::with_val(prec, gn1.square_ref()) * &v_n1))
        .max(&(Float::with_val(prec, gn.square_ref()) * &v_p))
        .max(&one);
    Ok((first.max_abs_coeff(), s1, second.max_abs_coeff(), s2))
}

/// `max_x |V'(x) psi_n - sum_k (eta_{k,n} psi_{n+k} + eta_{k,n-k} psi_{n-k})|`,
/// dropping terms with negative index.
fn eta_residual(model: &Model, n: usize, xs: &[Real]) -> Result<(Real, Real)> {
    let prec = model.prec;
    let lax = &model.lax;
    let d = lax.d();
    let mut etas = Vec::new();
    for k in 1..=d {
        let up = lax.eta(k, n)?;
        let down = if n >= k { Some(lax.eta(k, n - k)?) } else { None };
        etas.push((k, up, down));
    }
    let mut worst = real::zero(prec);
    let mut scale = real::one(prec);
    for x in xs {
        let psi = model.waves.eval_psi_all(n + d, x)?;
        let lhs = model.potential.eval_vprime(x) * &psi[n];
        let mut rhs = real::zero(prec);
        let mut mag = abs(&lhs);
        for (k, up, down) in &etas {
            let t = Float::with_val(prec, up * &psi[n + k]);
            mag += abs(&t);
            rhs += t;
            if let Some(dn) = down {
                let t = Float::with_val(prec, dn * &psi[n - k]);
                mag += abs(&t);
                rhs += t;
            }
        }
        scale = scale.max(&mag);
        worst = worst.max(&Float::with_val(prec, lhs - rhs).abs());
    }
    Ok((worst, scale))
}

/// Row `n` of `R(x0) (Q - x0) - (V'(Q) - V'(x0))`, max over the band.
fn divided_difference_residual(model: &Model, n: usize, x0: &Real) -> Result<(Real, Real)> {
    let prec = model.prec;
    let lax = &model.lax;
    let d = lax.d();
    let q = lax.q();
    let vq = lax.vprime_q();
    let vx = model.potential.eval_vprime(x0);
    let r_lo = n.saturating_sub(d.saturating_sub(1));
    let r_row: Vec<(usize, Real)> = (r_lo..=n + d.saturating_sub(1))
        .map(|m| Ok((m, lax.r_entry(n, m)?.eval(x0))))
        .collect::<Result<_>>()?;
    let mut worst = real::zero(prec);
    let mut scale = real::one(prec);
    for j in n.saturating_sub(d)..=n + d {
        let mut lhs = real::zero(prec);
        let mut mag = real::zero(prec);
        for (m, r) in &r_row {
            if m.abs_diff(j) > 1 {
                continue;
            }
            let mut qmj = q.entry(*m, j)?;
            if *m == j {
                qmj -= x0;
            }
            let t = Float::with_val(prec, r * &qmj);
            mag += abs(&t);
            lhs += t;
        }
        let mut rhs = vq.entry(n, j)?;
        if n == j {
            rhs -= &vx;
        }
        mag += abs(&rhs);
        scale = scale.max(&mag);
        worst = worst.max(&Float::with_val(prec, lhs - rhs).abs());
    }
    Ok((worst, scale))
}

fn struct_n(model: &Model, n: usize, plan: &Plan) -> Vec<CheckResult> {
    let prec = plan.prec;
    let lax = &model.lax;
    let d = lax.d();
    let tol = |scale: &Real| Float::with_val(prec, &plan.alg * scale);
    let exact = real::zero(prec);
    let one = real::one(prec);
    let mut out = Vec::new();

    let r_sym = (|| -> Result<Real> {
        let mut worst = real::zero(prec);
        for m in n.saturating_sub(d)..=n + d {
            let a = lax.r_entry(n, m)?;
            let b = lax.r_entry(m, n)?;
            worst = worst.max(&a.max_abs_diff(&b));
        }
        Ok(worst)
    })();
    out.push(
        CheckResult::new("structure", "r_symmetric")
            .n(n)
            .with_result(r_sym.map(|r| (r, exact.clone()))),
    );

    match lax.derivative_data(n) {
        Ok(dd) => {
            let su = dd.u.max_abs_coeff().max(&one);
            let sv = dd.v.max_abs_coeff().max(&one);
            out.push(
                CheckResult::new("structure", "u_degree")
                    .n(n)
                    .measured(excess_degree(&dd.u, d.saturating_sub(2)), tol(&su)),
            );
            out.push(
                CheckResult::new("structure", "v_degree")
                    .n(n)
                    .measured(excess_degree(&dd.v, d.saturating_sub(1)), tol(&sv)),
            );
        }
        Err(e) => {
            out.push(CheckResult::new("structure", "u_degree").n(n).failed(&e));
            out.push(CheckResult::new("structure", "v_degree").n(n).failed(&e));
        }
    }

    match lax.d_matrix(n) {
        Ok(dm) => {
            let s = dm.max_abs_coeff().max(&one);
            out.push(
                CheckResult::new("structure", "d_degree")
                    .n(n)
                    .measured(excess_degree_matrix(&dm, d), tol(&s)),
            );
            out.push(
                CheckResult::new("structure", "d_traceless")
                    .n(n)
                    .measured(dm.trace().max_abs_coeff(), exact),
            );
        }
        Err(e) => {
            out.push(CheckResult::new("structure", "d_degree").n(n).failed(&e));
            out.push(CheckResult::new("structure", "d_traceless").n(n).failed(&e));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(terms: &[(usize, f64)], prec: u32, n_max: usize) -> VerifyConfig {
        let p = Potential::from_f64(prec, terms).unwrap();
        let mut c = VerifyConfig::new(&p, prec);
        c.n_max = Some(n_max);
        c.ortho_n_max = Some(3);
        c
    }

    #[test]
    fn fault_injection_parses() {
        let f = FaultInjection::parse(64, "n=3,delta=1e-10").unwrap();
        assert_eq!(f.n, 3);
        assert_eq!(f.target, FaultTarget::Gamma);
        let b = FaultInjection::parse(64, "target=beta, n=0, delta=-2").unwrap();
        assert_eq!(b.target, FaultTarget::Beta);
        assert!(FaultInjection::parse(64, "n=3").is_err());
        assert!(FaultInjection::parse(64, "n=x,delta=1").is_err());
        assert!(FaultInjection::parse(64, "n=1,delta=1,target=h").is_err());
    }

    #[test]
    fn chebyshev_points_are_symmetric() {
        let a = real::from_f64(128, 2.0);
        let xs = chebyshev_points(&a, 7);
        assert_eq!(xs.len(), 7);
        assert!(xs[3].clone().abs() < real::pow2(128, -120));
        let s = Float::with_val(128, &xs[0] + &xs[6]).abs();
        assert!(s < real::pow2(128, -120));
        assert!(xs[0] < 2.0 && xs[0] > 1.9);
    }

    #[test]
    fn hermite_report_passes() {
        let rep = run_all(&quick(&[(2, 2.0)], 128, 4)).unwrap();
        if let Some(c) = rep.failures().next() {
            panic!("{} {} {} {:?} {:?}", c.check, c.item, c.label(), c.residual, c.error);
        }
        for name in CHECK_NAMES {
            assert!(rep.group(name).count() > 0, "{name} missing");
        }
        assert_eq!(rep.exit_code(), 0);
    }

    #[test]
    fn only_filter_and_unknown_names() {
        let mut c = quick(&[(2, 2.0)], 128, 3);
        c.only = vec!["flow_sum".into()];
        let rep = run_all(&c).unwrap();
        assert!(rep.checks.iter().all(|r| r.check == "flow_sum"));
        assert_eq!(rep.checks.len(), 3);
        c.only = vec!["nonsense".into()];
        assert!(matches!(run_all(&c), Err(Error::Parse(_))));
    }

    #[test]
    fn injected_gamma_fault_is_flagged() {
        let mut c = quick(&[(4, 1.0)], 128, 5);
        c.only = vec!["string_equations".into()];
        c.fault = Some(FaultInjection::parse(128, "n=3,delta=1e-10").unwrap());
        let rep = run_all(&c).unwrap();
        let flagged: Vec<usize> = rep.failures().filter_map(|r| r.n).collect();
        assert!(flagged.contains(&3));
        assert!(flagged.iter().all(|n| (2..=4).contains(n)), "{flagged:?}");
    }

    #[test]
    fn n_beyond_trust_is_rejected() {
        let mut c = quick(&[(4, 1.0)], 128, 20);
        c.order = Some(12);
        assert!(matches!(run_all(&c), Err(Error::OutsideTrustWindow { .. })));
    }
}
