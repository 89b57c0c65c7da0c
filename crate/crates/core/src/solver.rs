//! Damped Newton on the log form of the equation and the f + eps continuation ladder.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::analysis::{apriori_report, AprioriReport};
use crate::convex::SupportFn;
use crate::equation::{linearize, log_residual_values, residual, ProblemParams};
use crate::error::{Error, Result};
use crate::grid::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Target for sup |G|.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Step reduction factor of the backtracking line search.
    pub backtrack: f64,
    pub min_step: f64,
    /// Accepted iterates keep min eig(b) above this floor.
    pub psd_floor: f64,
    /// Project f, the initial guess and every iterate onto even functions.
    pub enforce_even: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-9,
            max_iters: 50,
            backtrack: 0.5,
            min_step: 2f64.powi(-30),
            psd_floor: 1e-12,
            enforce_even: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol_residual, self.min_step, self.psd_floor]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.max_iters == 0 {
            return Err(Error::InvalidParams(
                "solver tolerances and max_iters must be positive".into(),
            ));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParams(format!(
                "backtracking factor must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    pub eps0: f64,
    pub factor: f64,
    pub eps_min: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            eps0: 1e-1,
            factor: 10f64.powf(-0.5),
            eps_min: 1e-5,
        }
    }
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_min > 0.0 && self.eps0 >= self.eps_min && self.eps0.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "ladder needs eps0 >= eps_min > 0, got eps0 = {}, eps_min = {}",
                self.eps0, self.eps_min
            )));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidParams(format!(
                "ladder factor must lie in (0, 1), got {}",
                self.factor
            )));
        }
        Ok(())
    }

    /// eps0 * factor^k down to eps_min; the last level is snapped to eps_min.
    pub fn levels(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0;
        loop {
            let eps = self.eps0 * self.factor.powi(k);
            if eps < self.eps_min * (1.0 - 1e-9) {
                break;
            }
            if (eps - self.eps_min).abs() <= 1e-9 * self.eps_min {
                out.push(self.eps_min);
                break;
            }
            out.push(eps);
            k += 1;
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub h: SupportFn,
    pub iterations: usize,
    pub plain_sup: f64,
    pub plain_l2: f64,
    pub log_sup: f64,
    pub log_l2: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub max_grad: f64,
    /// max of H = tr b
    pub max_trace_b: f64,
    /// min eigenvalue of b over nodes
    pub psd_margin: f64,
    pub apriori: AprioriReport,
    /// sup |G| before each iteration, ending with the accepted final value.
    pub history: Vec<f64>,
    /// Largest change of G caused by rounding h to the nearest doubles.
    pub residual_floor: f64,
    /// Stopped above `tol_residual` because sup |G| reached `residual_floor`.
    pub roundoff_limited: bool,
    pub wall_time: Duration,
}

/// Norms and extrema derived from a support function; shared by reports and re-verification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetrics {
    pub plain_sup: f64,
    pub plain_l2: f64,
    pub log_sup: f64,
    pub log_l2: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub max_grad: f64,
    pub max_trace_b: f64,
    pub psd_margin: f64,
}

pub fn solution_metrics(h: &SupportFn, f: &ScalarField, params: &ProblemParams) -> Result<SolutionMetrics> {
    let plain = residual(h, f, params)?;
    let g = log_residual_values(h, f, params)?;
    let gf = ScalarField::new(h.grid(), g)?;
    let log_sup = gf.sup_norm();
    let log_l2 = gf.map(|v| v * v)?.integrate().sqrt();
    Ok(SolutionMetrics {
        plain_sup: plain.sup,
        plain_l2: plain.l2,
        log_sup,
        log_l2,
        min_h: h.field().min(),
        max_h: h.field().max(),
        max_grad: (0..h.grid().len()).map(|i| h.grad_norm(i)).fold(0.0, f64::max),
        max_trace_b: h.trace_b().max(),
        psd_margin: h.psd_margin(),
    })
}

impl SolveReport {
    pub fn metrics(&self) -> SolutionMetrics {
        SolutionMetrics {
            plain_sup: self.plain_sup,
            plain_l2: self.plain_l2,
            log_sup: self.log_sup,
            log_l2: self.log_l2,
            min_h: self.min_h,
            max_h: self.max_h,
            max_grad: self.max_grad,
            max_trace_b: self.max_trace_b,
            psd_margin: self.psd_margin,
        }
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_positive_density(f: &ScalarField) -> Result<()> {
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    Ok(())
}

/// Constant initial guess `(max f)^{1/(q-p)}`.
pub fn default_init(f: &ScalarField, params: &ProblemParams) -> Result<SupportFn> {
    check_positive_density(f)?;
    let e = params.constant_exponent()?;
    SupportFn::constant(f.grid(), f.max().powf(e))
}

struct Candidate {
    h: SupportFn,
    g: Vec<f64>,
    sup: f64,
}

fn evaluate(
    values: Vec<f64>,
    f: &ScalarField,
    params: &ProblemParams,
    opts: &SolverOptions,
) -> Option<Candidate> {
    let field = ScalarField::new(f.grid(), values).ok()?;
    let field = if opts.enforce_even {
        field.symmetrize_even()
    } else {
        field
    };
    let h = SupportFn::new(field).ok()?;
    if !(h.psd_margin() > opts.psd_floor) {
        return None;
    }
    let g = log_residual_values(&h, f, params).ok()?;
    let s = sup(&g);
    s.is_finite().then_some(Candidate { h, g, sup: s })
}

/// Backtracking along `h + t d` until sup |G| strictly decreases and the iterate stays admissible.
fn line_search(
    cur: &Candidate,
    dir: &[f64],
    f: &ScalarField,
    params: &ProblemParams,
    opts: &SolverOptions,
) -> Option<Candidate> {
    let mut t = 1.0;
    while t >= opts.min_step {
        let vals: Vec<f64> = cur
            .h
            .values()
            .iter()
            .zip(dir)
            .map(|(h, d)| h + t * d)
            .collect();
        if let Some(c) = evaluate(vals, f, params, opts) {
            if c.sup < cur.sup {
                return Some(c);
            }
        }
        t *= opts.backtrack;
    }
    None
}

/// Damped Newton iteration for `G(h) = 0` with f > 0.
pub fn newton_solve(
    f: &ScalarField,
    params: &ProblemParams,
    init: &SupportFn,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    opts.validate()?;
    check_positive_density(f)?;
    if !init.field().same_grid(f) {
        return Err(Error::GridMismatch);
    }
    let f = if opts.enforce_even {
        f.symmetrize_even()
    } else {
        f.clone()
    };
    // Surface grid/dimension and convexity errors of the initial guess directly.
    log_residual_values(init, &f, params)?;
    let mut cur = evaluate(init.values().to_vec(), &f, params, opts).ok_or_else(|| {
        Error::InvalidParams(format!(
            "initial guess is not admissible (min eig b = {:.3e} <= psd floor {:.1e})",
            init.psd_margin(),
            opts.psd_floor
        ))
    })?;
    let mut history = vec![cur.sup];
    let mut iterations = 0;
    let mut floor = 0.0;
    let mut roundoff_limited = false;
    while cur.sup > opts.tol_residual {
        let sys = linearize(&cur.h, params)?.assemble();
        floor = residual_floor(&sys, cur.h.values());
        if iterations == opts.max_iters {
            if cur.sup <= floor {
                roundoff_limited = true;
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                residual: cur.sup,
                reason: "iteration limit reached".into(),
            });
        }
        let rhs: Vec<f64> = cur.g.iter().map(|v| -v).collect();
        let scale = sys_scale(&cur.h);
        // Plain Newton first, then increasingly shifted (damped) systems.
        let shifts = [0.0, 1e-6, 1e-4, 1e-2, 1e-1, 1.0];
        let mut next = None;
        for &mu in &shifts {
            let Ok(dir) = sys.solve_shifted(&rhs, -mu * scale) else {
                continue;
            };
            if let Some(c) = line_search(&cur, &dir, &f, params, opts) {
                next = Some(c);
                break;
            }
        }
        let Some(c) = next else {
            if cur.sup <= floor {
                roundoff_limited = true;
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                residual: cur.sup,
                reason: format!("line search stalled below step {:.1e}", opts.min_step),
            });
        };
        cur = c;
        iterations += 1;
        history.push(cur.sup);
    }
    let m = solution_metrics(&cur.h, &f, params)?;
    let apriori = apriori_report(&cur.h, &f, params)?;
    Ok(SolveReport {
        h: cur.h,
        iterations,
        plain_sup: m.plain_sup,
        plain_l2: m.plain_l2,
        log_sup: m.log_sup,
        log_l2: m.log_l2,
        min_h: m.min_h,
        max_h: m.max_h,
        max_grad: m.max_grad,
        max_trace_b: m.max_trace_b,
        psd_margin: m.psd_margin,
        apriori,
        history,
        residual_floor: floor,
        roundoff_limited,
        wall_time: start.elapsed(),
    })
}

/// `eps_mach * max_i sum_j |dG_i/dh_j| |h_j|`: the resolution of G over
/// iterates representable in double precision.
fn residual_floor(sys: &crate::linalg::SparseSystem, h: &[f64]) -> f64 {
    sys.abs_apply(h)
        .into_iter()
        .fold(0.0, f64::max)
        * f64::EPSILON
}

/// Size of the zero-order part of the operator, used to scale damping shifts.
fn sys_scale(h: &SupportFn) -> f64 {
    let hmin = h.field().min();
    let bmax = h.b_scale();
    (1.0 / hmin).max(1.0 / bmax.max(f64::MIN_POSITIVE)).min(1e12)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyStep {
    pub sup_h: f64,
    pub sup_grad: f64,
    pub sup_trace_b: f64,
}

#[derive(Clone, Debug)]
pub struct LadderLevel {
    pub eps: f64,
    pub report: SolveReport,
}

#[derive(Clone, Debug)]
pub struct LadderFailure {
    pub eps: f64,
    pub error: Error,
}

#[derive(Clone, Debug)]
pub struct LadderReport {
    pub config: LadderConfig,
    pub levels: Vec<LadderLevel>,
    /// Differences between consecutive levels; `cauchy[k]` compares levels k and k+1.
    pub cauchy: Vec<CauchyStep>,
    /// Set when a level failed to converge; `levels` then holds the completed prefix.
    pub failure: Option<LadderFailure>,
}

impl LadderReport {
    /// Solution at the smallest completed eps.
    pub fn final_h(&self) -> Option<&SupportFn> {
        self.levels.last().map(|l| &l.report.h)
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn cauchy_step(a: &SupportFn, b: &SupportFn) -> CauchyStep {
    let n = a.grid().len();
    let mut out = CauchyStep {
        sup_h: 0.0,
        sup_grad: 0.0,
        sup_trace_b: 0.0,
    };
    for i in 0..n {
        let (ga, gb) = (a.grad(i), b.grad(i));
        let dg = ((ga[0] - gb[0]).powi(2) + (ga[1] - gb[1]).powi(2)).sqrt();
        out.sup_h = out.sup_h.max((a.values()[i] - b.values()[i]).abs());
        out.sup_grad = out.sup_grad.max(dg);
        out.sup_trace_b = out.sup_trace_b.max((a.b(i).trace() - b.b(i).trace()).abs());
    }
    out
}

/// Preconditions of the ladder: f >= 0, not identically zero, and (unless
/// `experimental`) p > q > 0.
pub fn check_ladder_inputs(f: &ScalarField, params: &ProblemParams, experimental: bool) -> Result<()> {
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeDensity { node, value });
    }
    if f.values().iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroDensity);
    }
    params.constant_exponent()?;
    if !experimental && !params.is_guaranteed() {
        return Err(Error::InvalidParams(format!(
            "p = {}, q = {} is outside p > q > 0; pass the experimental flag to run anyway",
            params.p, params.q
        )));
    }
    Ok(())
}

/// Solves with f + eps for each ladder level, warm-starting from the previous level.
///
/// Precondition failures are returned as errors; non-convergence at some level
/// stops the ladder and is recorded in `failure`.
pub fn continuation_ladder(
    f: &ScalarField,
    params: &ProblemParams,
    ladder: &LadderConfig,
    opts: &SolverOptions,
    experimental: bool,
) -> Result<LadderReport> {
    ladder.validate()?;
    opts.validate()?;
    check_ladder_inputs(f, params, experimental)?;
    let mut report = LadderReport {
        config: *ladder,
        levels: Vec::new(),
        cauchy: Vec::new(),
        failure: None,
    };
    for eps in ladder.levels() {
        let fe = f.map(|v| v + eps)?;
        let init = match report.levels.last() {
            Some(l) => l.report.h.clone(),
            None => default_init(&fe, params)?,
        };
        match newton_solve(&fe, params, &init, opts) {
            Ok(r) => {
                if let Some(prev) = report.levels.last() {
                    report.cauchy.push(cauchy_step(&prev.report.h, &r.h));
                }
                report.levels.push(LadderLevel { eps, report: r });
            }
            Err(e @ Error::NonConvergence { .. }) | Err(e @ Error::LinearSolve(_)) => {
                report.failure = Some(LadderFailure { eps, error: e });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}
