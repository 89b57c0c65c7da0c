//! One-dimensional reference solvers and a finite-difference check of the linearization.
//!
//! Both oracles use Fourier collocation with dense Newton steps. On S^1 the
//! unknown is h(theta) on an equispaced periodic grid. For rotationally
//! symmetric data on S^2 the unknown is the profile h(theta), theta the polar
//! angle, extended evenly to a 2 pi periodic function so that h_theta vanishes
//! at both poles; there `b = diag(h'' + h, cot(theta) h' + h)` and the second
//! entry closes to `h'' + h` at the poles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex::SupportFn;
use crate::equation::{linearize, log_residual_values, ProblemParams};
use crate::error::{Error, Result};
use crate::grid::ScalarField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    S1,
    AxisymS2,
}

pub struct OdeProblem<'a> {
    pub mode: OracleMode,
    /// Density as a function of the angle (polar angle for `AxisymS2`).
    pub f: &'a dyn Fn(f64) -> f64,
    pub p: f64,
    pub q: f64,
    /// S^1: number of periodic nodes (even). AxisymS2: number of intervals on [0, pi].
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub mode: OracleMode,
    pub theta: Vec<f64>,
    pub h: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton polishes towards `ORACLE_TARGET` and accepts a stall once below `ORACLE_TOL`.
const ORACLE_TARGET: f64 = 1e-13;
const ORACLE_TOL: f64 = 1e-10;
const ORACLE_MAX_ITERS: usize = 60;

/// First and second Fourier differentiation matrices on m equispaced points of [0, 2 pi).
fn fourier_matrices(m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let dt = 2.0 * PI / m as f64;
    let mut d1 = DMatrix::zeros(m, m);
    let mut d2 = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                d2[(i, j)] = -PI * PI / (3.0 * dt * dt) - 1.0 / 6.0;
                continue;
            }
            let k = i as isize - j as isize;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let half = 0.5 * k as f64 * dt;
            d1[(i, j)] = 0.5 * sign / half.tan();
            d2[(i, j)] = -0.5 * sign / (half.sin() * half.sin());
        }
    }
    (d1, d2)
}

/// Differentiation matrices acting on the values at theta_j = j pi / m, j = 0..=m,
/// of an even 2 pi periodic function.
fn folded_matrices(m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (d1, d2) = fourier_matrices(2 * m);
    let fold = |d: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(m + 1, m + 1);
        for i in 0..=m {
            for j in 0..2 * m {
                let jj = if j <= m { j } else { 2 * m - j };
                out[(i, jj)] += d[(i, j)];
            }
        }
        out
    };
    (fold(&d1), fold(&d2))
}

struct Discretization {
    theta: Vec<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    /// Rows giving cot(theta) h'; at the poles these are the rows of d2.
    cot_d1: Option<DMatrix<f64>>,
}

impl Discretization {
    fn new(mode: OracleMode, size: usize) -> Result<Self> {
        match mode {
            OracleMode::S1 => {
                if size < 8 || size % 2 != 0 {
                    return Err(Error::InvalidParams(format!(
                        "S^1 oracle needs an even node count >= 8, got {size}"
                    )));
                }
                let (d1, d2) = fourier_matrices(size);
                let theta = (0..size).map(|j| j as f64 * 2.0 * PI / size as f64).collect();
                Ok(Self {
                    theta,
                    d1,
                    d2,
                    cot_d1: None,
                })
            }
            OracleMode::AxisymS2 => {
                if size < 4 {
                    return Err(Error::InvalidParams(format!(
                        "axisymmetric oracle needs at least 4 intervals, got {size}"
                    )));
                }
                let (d1, d2) = folded_matrices(size);
                let theta: Vec<f64> = (0..=size).map(|j| j as f64 * PI / size as f64).collect();
                let mut cot = d1.clone();
                for i in 0..=size {
                    if i == 0 || i == size {
                        cot.set_row(i, &d2.row(i));
                    } else {
                        let c = 1.0 / theta[i].tan();
                        for j in 0..=size {
                            cot[(i, j)] *= c;
                        }
                    }
                }
                Ok(Self {
                    theta,
                    d1,
                    d2,
                    cot_d1: Some(cot),
                })
            }
        }
    }

    fn n(&self) -> f64 {
        if self.cot_d1.is_some() {
            3.0
        } else {
            2.0
        }
    }

    /// Log residual; `None` if h <= 0 or b is not positive definite somewhere.
    fn residual(&self, h: &DVector<f64>, lnf: &[f64], p: f64, q: f64) -> Option<DVector<f64>> {
        let h1 = &self.d1 * h;
        let b1 = &self.d2 * h + h;
        let b2 = self.cot_d1.as_ref().map(|c| c * h + h);
        let n = self.n();
        let mut g = DVector::zeros(h.len());
        for i in 0..h.len() {
            if !(h[i] > 0.0 && b1[i] > 0.0) {
                return None;
            }
            let mut ld = b1[i].ln();
            if let Some(b2) = &b2 {
                if !(b2[i] > 0.0) {
                    return None;
                }
                ld += b2[i].ln();
            }
            let r2 = h1[i] * h1[i] + h[i] * h[i];
            g[i] = ld - (p - 1.0) * h[i].ln() - 0.5 * (n - q) * r2.ln() - lnf[i];
        }
        Some(g)
    }

    fn jacobian(&self, h: &DVector<f64>, p: f64, q: f64) -> DMatrix<f64> {
        let m = h.len();
        let h1 = &self.d1 * h;
        let b1 = &self.d2 * h + h;
        let b2 = self.cot_d1.as_ref().map(|c| c * h + h);
        let n = self.n();
        let mut jac = DMatrix::zeros(m, m);
        for i in 0..m {
            let r2 = h1[i] * h1[i] + h[i] * h[i];
            let c = (n - q) / r2;
            for j in 0..m {
                let mut v = self.d2[(i, j)] / b1[i] - c * h1[i] * self.d1[(i, j)];
                if let (Some(cot), Some(b2)) = (&self.cot_d1, &b2) {
                    v += cot[(i, j)] / b2[i];
                }
                jac[(i, j)] = v;
            }
            let mut diag = 1.0 / b1[i] - (p - 1.0) / h[i] - c * h[i];
            if let Some(b2) = &b2 {
                diag += 1.0 / b2[i];
            }
            jac[(i, i)] += diag;
        }
        jac
    }
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve(prob: &OdeProblem) -> Result<OracleSolution> {
    if prob.p == prob.q {
        return Err(Error::EqualExponents(prob.p));
    }
    let disc = Discretization::new(prob.mode, prob.size)?;
    let fv: Vec<f64> = disc.theta.iter().map(|&t| (prob.f)(t)).collect();
    if let Some((node, &value)) = fv.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    let lnf: Vec<f64> = fv.iter().map(|v| v.ln()).collect();
    let max_f = fv.iter().copied().fold(0.0, f64::max);
    let mut h = DVector::from_element(disc.theta.len(), max_f.powf(1.0 / (prob.q - prob.p)));
    let mut g = disc
        .residual(&h, &lnf, prob.p, prob.q)
        .ok_or_else(|| Error::InvalidParams("constant initial guess not admissible".into()))?;
    let mut iterations = 0;
    'newton: while sup(&g) > ORACLE_TARGET {
        if iterations == ORACLE_MAX_ITERS {
            if sup(&g) <= ORACLE_TOL {
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                residual: sup(&g),
                reason: "oracle iteration limit reached".into(),
            });
        }
        let jac = disc.jacobian(&h, prob.p, prob.q);
        let dir = jac.lu().solve(&(-&g)).ok_or_else(|| {
            Error::LinearSolve("singular collocation Jacobian".into())
        })?;
        let cur = sup(&g);
        let mut t = 1.0;
        loop {
            let cand = &h + &dir * t;
            if let Some(gc) = disc.residual(&cand, &lnf, prob.p, prob.q) {
                if sup(&gc) < cur {
                    h = cand;
                    g = gc;
                    break;
                }
            }
            t *= 0.5;
            if t < 2f64.powi(-30) {
                if cur <= ORACLE_TOL {
                    break 'newton;
                }
                return Err(Error::NonConvergence {
                    iterations,
                    residual: cur,
                    reason: "oracle line search stalled".into(),
                });
            }
        }
        iterations += 1;
    }
    Ok(OracleSolution {
        mode: prob.mode,
        theta: disc.theta,
        h: h.iter().copied().collect(),
        residual: sup(&g),
        iterations,
    })
}

/// Periodic collocation solve of the n = 2 equation.
pub fn solve_s1(prob: &OdeProblem) -> Result<OracleSolution> {
    if prob.mode != OracleMode::S1 {
        return Err(Error::InvalidParams("solve_s1 needs mode s1".into()));
    }
    solve(prob)
}

/// Collocation solve of the rotationally symmetric n = 3 equation for the profile h(theta).
pub fn solve_axisym_s2(prob: &OdeProblem) -> Result<OracleSolution> {
    if prob.mode != OracleMode::AxisymS2 {
        return Err(Error::InvalidParams("solve_axisym_s2 needs mode axisym_s2".into()));
    }
    solve(prob)
}

impl OracleSolution {
    /// Values on the full periodic grid (the even extension for `AxisymS2`).
    fn periodic_values(&self) -> Vec<f64> {
        match self.mode {
            OracleMode::S1 => self.h.clone(),
            OracleMode::AxisymS2 => {
                let m = self.h.len() - 1;
                (0..2 * m)
                    .map(|j| if j <= m { self.h[j] } else { self.h[2 * m - j] })
                    .collect()
            }
        }
    }

    /// Trigonometric interpolant of the collocation values.
    pub fn eval(&self, theta: f64) -> f64 {
        let u = self.periodic_values();
        let m = u.len();
        let half = m / 2;
        let dt = 2.0 * PI / m as f64;
        let mut out = u.iter().sum::<f64>() / m as f64;
        for k in 1..=half {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, &v) in u.iter().enumerate() {
                let (s, c) = (k as f64 * j as f64 * dt).sin_cos();
                a += v * c;
                b += v * s;
            }
            let (s, c) = (k as f64 * theta).sin_cos();
            if k == half {
                out += a / m as f64 * c;
            } else {
                out += 2.0 / m as f64 * (a * c + b * s);
            }
        }
        out
    }

    /// Derivative of the interpolant.
    pub fn eval_derivative(&self, theta: f64) -> f64 {
        let u = self.periodic_values();
        let m = u.len();
        let half = m / 2;
        let dt = 2.0 * PI / m as f64;
        let mut out = 0.0;
        for k in 1..half {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, &v) in u.iter().enumerate() {
                let (s, c) = (k as f64 * j as f64 * dt).sin_cos();
                a += v * c;
                b += v * s;
            }
            let (s, c) = (k as f64 * theta).sin_cos();
            out += 2.0 / m as f64 * k as f64 * (b * c - a * s);
        }
        out
    }

    pub fn min_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_h(&self) -> f64 {
        self.h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    /// (step, sup |(G(h + s d) - G(h)) / s - L d| / sup |L d|)
    pub errors: Vec<(f64, f64)>,
    /// Same with the central quotient `(G(h + s d) - G(h - s d)) / 2s`.
    pub central_errors: Vec<(f64, f64)>,
    /// Smallest forward error over all steps, the roundoff floor once steps are tiny.
    pub floor: f64,
}

impl FdCheck {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn error_at(&self, step: f64) -> Option<f64> {
        self.errors.iter().find(|e| e.0 == step).map(|e| e.1)
    }

    pub fn central_error_at(&self, step: f64) -> Option<f64> {
        self.central_errors.iter().find(|e| e.0 == step).map(|e| e.1)
    }
}

/// Finite-difference check of `linearize` in direction `delta`.
///
/// Steps are relative: the perturbation is `s d` with `d = delta |h|_inf / |delta|_inf`,
/// so the errors do not depend on the scale of `delta`. Steps at which `h +- s d`
/// leaves the admissible set get an infinite error.
pub fn fd_check(
    h: &SupportFn,
    f: &ScalarField,
    params: &ProblemParams,
    delta: &ScalarField,
    steps: &[f64],
) -> Result<FdCheck> {
    if !h.field().same_grid(delta) {
        return Err(Error::GridMismatch);
    }
    let d_sup = delta.sup_norm();
    let delta = if d_sup > 0.0 {
        delta.map(|v| v * h.field().sup_norm() / d_sup)?
    } else {
        delta.clone()
    };
    let delta = &delta;
    let g0 = log_residual_values(h, f, params)?;
    let ld = linearize(h, params)?.apply(delta.values());
    let scale = ld.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let g_at = |s: f64| -> Option<Vec<f64>> {
        let shifted = h.field().zip_map(delta, |a, b| a + s * b).ok()?;
        let hs = SupportFn::new(shifted).ok()?;
        log_residual_values(&hs, f, params).ok()
    };
    let rel = |quot: &dyn Fn(usize) -> f64| {
        (0..ld.len())
            .map(|i| (quot(i) - ld[i]).abs())
            .fold(0.0, f64::max)
            / scale
    };
    let mut errors = Vec::with_capacity(steps.len());
    let mut central_errors = Vec::with_capacity(steps.len());
    for &s in steps {
        let plus = g_at(s);
        let fwd = plus
            .as_ref()
            .map(|gp| rel(&|i| (gp[i] - g0[i]) / s))
            .unwrap_or(f64::INFINITY);
        let cen = match (&plus, g_at(-s)) {
            (Some(gp), Some(gm)) => rel(&|i| (gp[i] - gm[i]) / (2.0 * s)),
            _ => f64::INFINITY,
        };
        errors.push((s, fwd));
        central_errors.push((s, cen));
    }
    let floor = errors.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    Ok(FdCheck {
        errors,
        central_errors,
        floor,
    })
}
