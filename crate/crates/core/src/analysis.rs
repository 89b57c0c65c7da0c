//! Structural conditions on the density and a priori estimates for solutions.
//!
//! Condition I asks for `|grad f^{1/(n-2)}| <= A` and `lap f^{1/(n-2)} >= -A`;
//! Condition II asks for `f lap f - (3-q)/(2-q) |grad f|^2 >= -A f^{2 - 1/(n-2)}`.
//! Minimal constants are grid suprema of the node-wise quantities. Where f
//! falls below `f_cut` the conditions are evaluated through their polynomial
//! forms, which do not divide by powers of f.

use serde::{Deserialize, Serialize};

use crate::convex::SupportFn;
use crate::equation::ProblemParams;
use crate::error::{Error, Result};
use crate::grid::{ScalarField, Vec3};

pub const DEFAULT_F_CUT: f64 = 1e-12;
/// Allowed negativity of the polynomial forms on the zero set of f.
pub const DEFAULT_ZERO_SET_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstNode {
    pub node: usize,
    pub x: Vec3,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub n: usize,
    pub f_cut: f64,
    /// sup |grad f^{1/(n-2)}|
    pub a_grad: Option<f64>,
    pub a_grad_worst: Option<WorstNode>,
    /// sup max(0, -lap f^{1/(n-2)})
    pub a_lap: Option<f64>,
    pub a_lap_worst: Option<WorstNode>,
    /// Minimal constant of Condition II and the q it was computed for.
    pub a_ii: Option<f64>,
    pub a_ii_worst: Option<WorstNode>,
    pub q: Option<f64>,
    /// Smallest value of the polynomial form over nodes with f <= f_cut
    /// (must be >= -zero_set_tol).
    pub zero_set_min: Option<f64>,
    pub zero_set_ok: bool,
}

impl ConditionReport {
    fn empty(n: usize, f_cut: f64) -> Self {
        Self {
            n,
            f_cut,
            a_grad: None,
            a_grad_worst: None,
            a_lap: None,
            a_lap_worst: None,
            a_ii: None,
            a_ii_worst: None,
            q: None,
            zero_set_min: None,
            zero_set_ok: true,
        }
    }

    /// Whether every computed constant is at most `a`.
    pub fn satisfied(&self, a: f64) -> bool {
        self.zero_set_ok
            && [self.a_grad, self.a_lap, self.a_ii]
                .iter()
                .flatten()
                .all(|&c| c <= a)
    }
}

fn check_density(f: &ScalarField, n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if f.grid().dim() != n {
        return Err(Error::InvalidParams(format!(
            "n = {n} but the density lives on S^{}",
            f.grid().dim() - 1
        )));
    }
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeDensity { node, value });
    }
    Ok(())
}

fn sup_with_node(f: &ScalarField, vals: impl Iterator<Item = f64>) -> (f64, Option<WorstNode>) {
    let mut best = 0.0;
    let mut worst = None;
    for (i, v) in vals.enumerate() {
        if v > best || (worst.is_none() && v == best && v.is_infinite()) {
            best = v;
            worst = Some(WorstNode {
                node: i,
                x: *f.grid().node(i),
                value: v,
            });
        }
    }
    (best, worst)
}

/// Condition I minimal constants for f on S^{n-1}.
pub fn condition_i(f: &ScalarField, n: usize) -> Result<ConditionReport> {
    condition_i_with_cut(f, n, DEFAULT_F_CUT)
}

pub fn condition_i_with_cut(f: &ScalarField, n: usize, f_cut: f64) -> Result<ConditionReport> {
    check_density(f, n)?;
    let alpha = 1.0 / (n as f64 - 2.0);
    let grid = f.grid();
    let fv = f.values();
    let lap = f.laplacian();
    let grads = f.gradient_components();
    let mut grad_terms = Vec::with_capacity(grid.len());
    let mut lap_terms = Vec::with_capacity(grid.len());
    let mut zero_min = f64::INFINITY;
    for i in 0..grid.len() {
        let g2 = grads[i][0] * grads[i][0] + grads[i][1] * grads[i][1];
        let fi = fv[i];
        let li = lap.values()[i];
        if fi > f_cut || alpha == 1.0 {
            // f^alpha with alpha = 1 needs no special care at zeros.
            let gnorm = alpha * fi.powf(alpha - 1.0) * g2.sqrt();
            let lap_g = alpha * fi.powf(alpha - 2.0) * (fi * li - (1.0 - alpha) * g2);
            grad_terms.push(if alpha == 1.0 { g2.sqrt() } else { gnorm });
            lap_terms.push(if alpha == 1.0 { (-li).max(0.0) } else { (-lap_g).max(0.0) });
        } else {
            // |grad f| <= (n-2) A f^{1-alpha} and
            // f lap f - (1-alpha)|grad f|^2 >= -(n-2) A f^{2-alpha}, at f = 0.
            let poly = fi * li - (1.0 - alpha) * g2;
            zero_min = zero_min.min(poly.min(-g2.sqrt()));
            let blow = |v: f64| if v > DEFAULT_ZERO_SET_TOL { f64::INFINITY } else { 0.0 };
            grad_terms.push(blow(g2.sqrt()));
            lap_terms.push(blow(-poly));
        }
    }
    let (a_grad, gw) = sup_with_node(f, grad_terms.into_iter());
    let (a_lap, lw) = sup_with_node(f, lap_terms.into_iter());
    let mut rep = ConditionReport::empty(n, f_cut);
    rep.a_grad = Some(a_grad);
    rep.a_grad_worst = gw;
    rep.a_lap = Some(a_lap);
    rep.a_lap_worst = lw;
    if zero_min.is_finite() {
        rep.zero_set_min = Some(zero_min);
        rep.zero_set_ok = zero_min >= -DEFAULT_ZERO_SET_TOL;
    }
    Ok(rep)
}

/// Condition II minimal constant; requires q < 2.
pub fn condition_ii(f: &ScalarField, n: usize, q: f64) -> Result<ConditionReport> {
    condition_ii_with_cut(f, n, q, DEFAULT_F_CUT)
}

pub fn condition_ii_with_cut(f: &ScalarField, n: usize, q: f64, f_cut: f64) -> Result<ConditionReport> {
    if !(q < 2.0) {
        return Err(Error::InvalidParams(format!(
            "Condition II needs q < 2, got q = {q}"
        )));
    }
    check_density(f, n)?;
    let c = (3.0 - q) / (2.0 - q);
    let alpha = 1.0 / (n as f64 - 2.0);
    let lap = f.laplacian();
    let grads = f.gradient_components();
    let fv = f.values();
    let mut zero_min = f64::INFINITY;
    let terms: Vec<f64> = (0..fv.len())
        .map(|i| {
            let g2 = grads[i][0] * grads[i][0] + grads[i][1] * grads[i][1];
            let num = fv[i] * lap.values()[i] - c * g2;
            if fv[i] > f_cut {
                (-num / fv[i].powf(2.0 - alpha)).max(0.0)
            } else {
                zero_min = zero_min.min(num);
                if num < -DEFAULT_ZERO_SET_TOL {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        })
        .collect();
    let (a_ii, w) = sup_with_node(f, terms.into_iter());
    let mut rep = ConditionReport::empty(n, f_cut);
    rep.a_ii = Some(a_ii);
    rep.a_ii_worst = w;
    rep.q = Some(q);
    if zero_min.is_finite() {
        rep.zero_set_min = Some(zero_min);
        rep.zero_set_ok = zero_min >= -DEFAULT_ZERO_SET_TOL;
    }
    Ok(rep)
}

/// Node-wise margin `a f lap f - b |grad f|^2 + k A f^{2 - 1/(n-2)}`.
fn additivity_margin(f: &ScalarField, a: f64, b: f64, ka: f64, n: usize) -> Vec<f64> {
    let alpha = 1.0 / (n as f64 - 2.0);
    let lap = f.laplacian();
    let grads = f.gradient_components();
    f.values()
        .iter()
        .enumerate()
        .map(|(i, &fi)| {
            let g2 = grads[i][0] * grads[i][0] + grads[i][1] * grads[i][1];
            a * fi * lap.values()[i] - b * g2 + ka * fi.max(0.0).powf(2.0 - alpha)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    /// f1 and f2 satisfy the inequality with constant A.
    pub hypothesis_ok: bool,
    /// f1 + f2 satisfies it with constant 2A.
    pub holds: bool,
    pub worst_margin: f64,
    pub worst_node: usize,
    pub tol: f64,
}

/// Checks that `f1 + f2` inherits `a f lap f - b|grad f|^2 >= -2A f^{2-1/(n-2)}`
/// from the same inequality (with constant A) for f1 and f2.
pub fn additivity_check(
    f1: &ScalarField,
    f2: &ScalarField,
    a: f64,
    b: f64,
    big_a: f64,
    n: usize,
) -> Result<AdditivityReport> {
    check_density(f1, n)?;
    check_density(f2, n)?;
    let sum = f1.zip_map(f2, |x, y| x + y)?;
    let scale = sum.max().max(1.0);
    let tol = 1e-9 * scale * scale * (1.0 + a.abs() + b.abs() + big_a.abs());
    let hyp = additivity_margin(f1, a, b, big_a, n)
        .into_iter()
        .chain(additivity_margin(f2, a, b, big_a, n))
        .all(|m| m >= -tol);
    let margins = additivity_margin(&sum, a, b, 2.0 * big_a, n);
    let (worst_node, worst_margin) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
    Ok(AdditivityReport {
        hypothesis_ok: hyp,
        holds: worst_margin >= -tol,
        worst_margin,
        worst_node,
        tol,
    })
}

/// Smallest A with `a f lap f - b|grad f|^2 >= -A f^{2-1/(n-2)}` on the grid
/// (nodes with f <= f_cut are skipped).
pub fn minimal_additivity_constant(f: &ScalarField, a: f64, b: f64, n: usize) -> Result<f64> {
    check_density(f, n)?;
    let alpha = 1.0 / (n as f64 - 2.0);
    let raw = additivity_margin(f, a, b, 0.0, n);
    Ok(f.values()
        .iter()
        .zip(raw)
        .filter(|(&fi, _)| fi > DEFAULT_F_CUT)
        .map(|(&fi, m)| (-m / fi.powf(2.0 - alpha)).max(0.0))
        .fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebraicInequality {
    /// sum a_i^2
    pub lhs: f64,
    /// (sum a_i)^2 / (n - 2) where n - 1 is the number of entries
    pub rhs: f64,
    pub holds: bool,
    /// min a_i <= 0 <= max a_i
    pub hypothesis_met: bool,
}

/// `sum a_i^2 >= (sum a_i)^2 / (n-2)` for n-1 reals of mixed sign.
pub fn algebraic_inequality(a: &[f64]) -> Result<AlgebraicInequality> {
    if a.len() < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least two entries, got {}",
            a.len()
        )));
    }
    let lhs: f64 = a.iter().map(|v| v * v).sum();
    let s: f64 = a.iter().sum();
    let rhs = s * s / (a.len() - 1) as f64;
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AlgebraicInequality {
        lhs,
        rhs,
        holds: lhs >= rhs,
        hypothesis_met: min <= 0.0 && max >= 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriTolerances {
    pub c0: f64,
    pub grad: f64,
}

impl Default for AprioriTolerances {
    fn default() -> Self {
        Self { c0: 1e-8, grad: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub min_h: f64,
    /// (max f)^{1/(q-p)}, the bound implied by h^{q-p}(x0) <= max f at the minimum point.
    pub c0_lower_bound: f64,
    /// 1 / (max f)^{p-q}, the value obtained from the bound's printed exponent.
    pub c0_lower_bound_printed: f64,
    pub c0_lower_ok: bool,
    pub max_h: f64,
    pub max_grad: f64,
    /// max |grad h| <= max h
    pub grad_bound_ok: bool,
    /// max of H = tr b = (n-1) h + lap h
    pub max_trace_b: f64,
    pub min_trace_b: f64,
    /// min over nodes of the smallest eigenvalue of b
    pub psd_margin: f64,
    pub tolerances: AprioriTolerances,
}

pub fn apriori_report(h: &SupportFn, f: &ScalarField, params: &ProblemParams) -> Result<AprioriReport> {
    apriori_report_with(h, f, params, AprioriTolerances::default())
}

pub fn apriori_report_with(
    h: &SupportFn,
    f: &ScalarField,
    params: &ProblemParams,
    tol: AprioriTolerances,
) -> Result<AprioriReport> {
    if !h.field().same_grid(f) {
        return Err(Error::GridMismatch);
    }
    let max_f = f.max();
    let c0_lower_bound = max_f.powf(params.constant_exponent()?);
    let c0_lower_bound_printed = 1.0 / max_f.powf(params.p - params.q);
    let min_h = h.field().min();
    let max_h = h.field().max();
    let max_grad = (0..h.grid().len())
        .map(|i| h.grad_norm(i))
        .fold(0.0, f64::max);
    let trace = h.trace_b();
    Ok(AprioriReport {
        min_h,
        c0_lower_bound,
        c0_lower_bound_printed,
        c0_lower_ok: min_h >= c0_lower_bound - tol.c0,
        max_h,
        max_grad,
        grad_bound_ok: max_grad <= max_h + tol.grad,
        max_trace_b: trace.max(),
        min_trace_b: trace.min(),
        psd_margin: h.psd_margin(),
        tolerances: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn constant_density_has_zero_constants() {
        let g = build_grid(3, 3).unwrap();
        let f = ScalarField::constant(&g, 2.0).unwrap();
        let r = condition_i(&f, 3).unwrap();
        assert!(r.a_grad.unwrap() < 1e-10);
        assert!(r.a_lap.unwrap() < 1e-10);
        let r = condition_ii(&f, 3, 1.0).unwrap();
        assert!(r.a_ii.unwrap() < 1e-10);
        assert!(r.satisfied(1e-9));
    }

    #[test]
    fn dimension_and_q_contracts() {
        let g2 = build_grid(2, 32).unwrap();
        let f = ScalarField::constant(&g2, 1.0).unwrap();
        assert!(matches!(condition_i(&f, 2), Err(Error::UnsupportedDimension(2))));
        let g = build_grid(3, 1).unwrap();
        let f = ScalarField::constant(&g, 1.0).unwrap();
        assert!(condition_ii(&f, 3, 2.0).is_err());
        assert!(condition_ii(&f, 3, 2.5).is_err());
        let neg = ScalarField::constant(&g, -1.0).unwrap();
        assert!(matches!(condition_i(&neg, 3), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn equator_density_constants() {
        let g = build_grid(3, 4).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[2] * x[2]).unwrap();
        let r = condition_i(&f, 3).unwrap();
        assert!((r.a_grad.unwrap() - 1.0).abs() < 1e-3, "{:?}", r.a_grad);
        assert!((r.a_lap.unwrap() - 4.0).abs() < 1e-3, "{:?}", r.a_lap);
        let shifted = ScalarField::from_fn(&g, |x| 1.0 + x[2] * x[2]).unwrap();
        let r = condition_i(&shifted, 3).unwrap();
        assert!((r.a_grad.unwrap() - 1.0).abs() < 1e-3);
        assert!((r.a_lap.unwrap() - 4.0).abs() < 1e-3);
    }

    #[test]
    fn condition_ii_equator_is_finite() {
        // ratio -(f lap f - 2|grad f|^2) / f = 6 - 2 t^2 for f = t^2, q = 1
        let g = build_grid(3, 4).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[2] * x[2]).unwrap();
        let r = condition_ii(&f, 3, 1.0).unwrap();
        let a = r.a_ii.unwrap();
        assert!(a.is_finite() && a > 5.0 && a < 6.2, "{a}");
        assert!(r.zero_set_ok);
    }

    #[test]
    fn algebraic_examples() {
        let r = algebraic_inequality(&[1.0, -1.0]).unwrap();
        assert_eq!((r.lhs, r.rhs, r.holds), (2.0, 0.0, true));
        let r = algebraic_inequality(&[3.0, -1.0]).unwrap();
        assert_eq!((r.lhs, r.rhs, r.holds), (10.0, 4.0, true));
        let r = algebraic_inequality(&[2.0, -1.0, -1.0]).unwrap();
        assert_eq!((r.lhs, r.rhs, r.holds), (6.0, 0.0, true));
        // hypothesis violated: all positive, inequality fails
        let r = algebraic_inequality(&[1.0, 1.0, 1.0]).unwrap();
        assert!(!r.hypothesis_met && !r.holds);
        assert!(algebraic_inequality(&[1.0]).is_err());
    }

    #[test]
    fn additivity_constants() {
        let g = build_grid(3, 3).unwrap();
        let one = ScalarField::constant(&g, 1.0).unwrap();
        let r = additivity_check(&one, &one, 1.0, 2.0, 0.0, 3).unwrap();
        assert!(r.holds && r.hypothesis_ok);
        assert!(r.worst_margin.abs() < 1e-9);
    }

    #[test]
    fn apriori_constants() {
        let g = build_grid(3, 2).unwrap();
        let params = ProblemParams::new(3, 2.0, 1.0).unwrap();
        let h = SupportFn::constant(&g, 1.0).unwrap();
        let f = ScalarField::constant(&g, 1.0).unwrap();
        let r = apriori_report(&h, &f, &params).unwrap();
        assert_eq!(r.min_h, 1.0);
        assert_eq!(r.c0_lower_bound, 1.0);
        assert!(r.c0_lower_ok && r.grad_bound_ok);
        assert!((r.max_trace_b - 2.0).abs() < 1e-10);

        let h = SupportFn::constant(&g, 0.25).unwrap();
        let f = ScalarField::constant(&g, 4.0).unwrap();
        let r = apriori_report(&h, &f, &params).unwrap();
        assert!((r.c0_lower_bound - 0.25).abs() < 1e-15);
        assert!(r.c0_lower_ok);
        // 1/(max f)^{p-q} coincides with the derived bound only when p - q = 1
        assert!((r.c0_lower_bound_printed - 0.25).abs() < 1e-15);
        let p3 = ProblemParams::new(3, 3.0, 1.0).unwrap();
        let r = apriori_report(&SupportFn::constant(&g, 0.5).unwrap(), &f, &p3).unwrap();
        assert!((r.c0_lower_bound - 0.5).abs() < 1e-15);
        assert!((r.c0_lower_bound_printed - 1.0 / 16.0).abs() < 1e-15);
    }
}
