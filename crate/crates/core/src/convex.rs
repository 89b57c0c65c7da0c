//! Support and radial functions of origin-enclosing convex bodies.
//!
//! A body M is stored through its support function h on the grid. The
//! boundary point with outer normal x is `X(x) = grad h(x) + h(x) x`, and the
//! radial function is recovered from the halfspace description
//! `rho(u) = min_{<x,u> > 0} h(x) / <x,u>`.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equation::ProblemParams;
use crate::error::{Error, Result};
use crate::grid::{add, dot, norm, scale, Grid, ScalarField, Vec3};
use crate::linalg::SymMat;

/// Default PSD tolerance for exact bodies.
pub const TOL_PSD_EXACT: f64 = 1e-10;
/// Relative PSD tolerance for solver iterates (scaled by the size of b).
pub const TOL_PSD_ITERATE_REL: f64 = 1e-6;

/// Support function with cached covariant derivatives and `b = hess h + h I`.
#[derive(Clone, Debug)]
pub struct SupportFn {
    h: ScalarField,
    grad: Vec<[f64; 2]>,
    b: Vec<SymMat>,
}

impl SupportFn {
    pub fn new(h: ScalarField) -> Result<Self> {
        if let Some((node, &value)) = h.values().iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::NonPositiveSupport { node, value });
        }
        let grid = Arc::clone(h.grid());
        let grad = (0..grid.len()).map(|i| grid.grad_at(h.values(), i)).collect();
        let b = (0..grid.len())
            .map(|i| grid.hess_at(h.values(), i).shift(h.values()[i]))
            .collect();
        Ok(Self { h, grad, b })
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Result<Self> {
        Self::new(ScalarField::constant(grid, c)?)
    }

    pub fn field(&self) -> &ScalarField {
        &self.h
    }

    pub fn values(&self) -> &[f64] {
        self.h.values()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.h.grid()
    }

    /// Gradient at node i in local frame components.
    pub fn grad(&self, i: usize) -> [f64; 2] {
        self.grad[i]
    }

    pub fn grad_norm(&self, i: usize) -> f64 {
        let g = self.grad[i];
        (g[0] * g[0] + g[1] * g[1]).sqrt()
    }

    /// `|grad h|^2 + h^2`, the squared length of the boundary point X(x).
    pub fn rho_sq(&self, i: usize) -> f64 {
        let g = self.grad[i];
        let h = self.h.values()[i];
        g[0] * g[0] + g[1] * g[1] + h * h
    }

    pub fn b(&self, i: usize) -> &SymMat {
        &self.b[i]
    }

    pub fn b_all(&self) -> &[SymMat] {
        &self.b
    }

    /// H = tr b = (n-1) h + lap h.
    pub fn trace_b(&self) -> ScalarField {
        ScalarField::new(self.grid(), self.b.iter().map(SymMat::trace).collect())
            .expect("trace of finite b is finite")
    }

    /// Smallest eigenvalue of b over all nodes.
    pub fn psd_margin(&self) -> f64 {
        self.b.iter().map(SymMat::min_eig).fold(f64::INFINITY, f64::min)
    }

    /// Largest |eigenvalue| of b, the scale used for relative PSD tolerances.
    pub fn b_scale(&self) -> f64 {
        self.b
            .iter()
            .map(|m| m.max_eig().abs().max(m.min_eig().abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_convex_valid(&self, tol_psd: f64) -> bool {
        self.psd_margin() >= -tol_psd
    }

    /// Convexity check with the relaxed, scale-relative tolerance used for iterates.
    pub fn is_convex_iterate(&self) -> bool {
        self.psd_margin() >= -TOL_PSD_ITERATE_REL * self.b_scale().max(1.0)
    }

    /// Boundary points `X(x) = grad h + h x`.
    pub fn embed(&self) -> Vec<Vec3> {
        let grid = self.grid();
        (0..grid.len())
            .map(|i| {
                let tangent = grid.tangent_vector(i, &self.grad[i]);
                add(&tangent, &scale(self.h.values()[i], grid.node(i)))
            })
            .collect()
    }

    /// rho(u) for an arbitrary unit vector u.
    pub fn radial(&self, u: &Vec3) -> Result<f64> {
        radial_from_support(self, u)
    }

    /// Radial function sampled at the grid nodes.
    pub fn radial_field(&self) -> Result<RadialFn> {
        let grid = self.grid();
        let vals: Result<Vec<f64>> = grid
            .nodes()
            .par_iter()
            .map(|u| radial_from_support(self, u))
            .collect();
        RadialFn::new(ScalarField::new(grid, vals?)?)
    }
}

/// Radial function on the grid nodes.
#[derive(Clone, Debug)]
pub struct RadialFn {
    rho: ScalarField,
}

impl RadialFn {
    pub fn new(rho: ScalarField) -> Result<Self> {
        if let Some((node, &value)) = rho.values().iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(Error::NonPositiveSupport { node, value });
        }
        Ok(Self { rho })
    }

    pub fn field(&self) -> &ScalarField {
        &self.rho
    }

    pub fn values(&self) -> &[f64] {
        self.rho.values()
    }

    /// Support function sampled at the grid nodes.
    pub fn support_field(&self) -> Result<ScalarField> {
        let grid = self.rho.grid();
        let vals: Vec<f64> = grid
            .nodes()
            .par_iter()
            .map(|x| support_from_radial(self, x))
            .collect();
        ScalarField::new(grid, vals)
    }
}

/// Local quadratic model `v0 + g.xi + 1/2 xi^T H xi` of a field around a node,
/// in geodesic normal coordinates, built from the node's derivative stencil.
struct LocalModel<'a> {
    grid: &'a Grid,
    node: usize,
    v0: f64,
    g: [f64; 2],
    hess: SymMat,
    reach: f64,
}

impl<'a> LocalModel<'a> {
    fn new(grid: &'a Grid, node: usize, values: &[f64]) -> Self {
        let v0 = values[node];
        let g = grid.grad_at(values, node);
        let hess = grid.hess_at(values, node);
        let st = grid.stencil(node);
        let reach = st.nodes[1..]
            .iter()
            .map(|&j| {
                let c = grid.normal_coords(node, grid.node(j));
                (c[0] * c[0] + c[1] * c[1]).sqrt()
            })
            .fold(0.0, f64::max);
        Self {
            grid,
            node,
            v0,
            g,
            hess,
            reach,
        }
    }

    fn value(&self, xi: [f64; 2]) -> f64 {
        let quad = match self.hess {
            SymMat::One(a) => a * xi[0] * xi[0],
            SymMat::Two([a, b, c]) => a * xi[0] * xi[0] + 2.0 * b * xi[0] * xi[1] + c * xi[1] * xi[1],
        };
        self.v0 + self.g[0] * xi[0] + self.g[1] * xi[1] + 0.5 * quad
    }

    fn exp(&self, xi: [f64; 2]) -> Vec3 {
        let x = self.grid.node(self.node);
        let [e1, e2] = self.grid.frame(self.node);
        let r = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        if r == 0.0 {
            return *x;
        }
        let t = add(&scale(xi[0], e1), &scale(xi[1], e2));
        add(&scale(r.cos(), x), &scale(r.sin() / r, &t))
    }

    /// Minimizes `objective` by Newton iteration with central
    /// finite-difference derivatives, starting at the node. Returns `None`
    /// if the iteration leaves the stencil or fails to settle.
    fn minimize(&self, objective: impl Fn([f64; 2]) -> f64) -> Option<f64> {
        let dims = self.grid.tangent_dim();
        let s = 1e-4 * self.reach;
        let mut xi = [0.0; 2];
        for _ in 0..30 {
            let f0 = objective(xi);
            let at = |d0: f64, d1: f64| objective([xi[0] + d0, xi[1] + d1]);
            let g0 = (at(s, 0.0) - at(-s, 0.0)) / (2.0 * s);
            let h00 = (at(s, 0.0) - 2.0 * f0 + at(-s, 0.0)) / (s * s);
            let step = if dims == 1 {
                if !(h00 > 0.0) {
                    return None;
                }
                [-g0 / h00, 0.0]
            } else {
                let g1 = (at(0.0, s) - at(0.0, -s)) / (2.0 * s);
                let h11 = (at(0.0, s) - 2.0 * f0 + at(0.0, -s)) / (s * s);
                let h01 = (at(s, s) - at(s, -s) - at(-s, s) + at(-s, -s)) / (4.0 * s * s);
                let det = h00 * h11 - h01 * h01;
                if !(h00 > 0.0 && det > 0.0) {
                    return None;
                }
                [-(h11 * g0 - h01 * g1) / det, -(h00 * g1 - h01 * g0) / det]
            };
            xi = [xi[0] + step[0], xi[1] + step[1]];
            if (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() > self.reach {
                return None;
            }
            if (step[0] * step[0] + step[1] * step[1]).sqrt() < 1e-13 * self.reach.max(1e-300) {
                return Some(objective(xi));
            }
        }
        Some(objective(xi))
    }
}

/// rho(u) = min over nodes with <x,u> > 0 of h(x) / <x,u>, refined by a local
/// minimization of `m(xi) / <exp_x(xi), u>` around the minimizing node, where
/// m is the stencil's quadratic model of h.
pub fn radial_from_support(h: &SupportFn, u: &Vec3) -> Result<f64> {
    let grid = h.grid();
    let hv = h.values();
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in grid.nodes().iter().enumerate() {
        let c = dot(x, u);
        if c > 0.0 {
            let r = hv[i] / c;
            if best.map_or(true, |(_, b)| r < b) {
                best = Some((i, r));
            }
        }
    }
    let (node, value) = best.ok_or(Error::NoVisibleNode(*u))?;
    let model = LocalModel::new(grid, node, hv);
    let refined = model.minimize(|xi| {
        let c = dot(&model.exp(xi), u);
        if c > 0.0 {
            model.value(xi) / c
        } else {
            f64::INFINITY
        }
    });
    Ok(match refined {
        Some(r) if r.is_finite() && r > 0.0 && r <= value => r,
        _ => value,
    })
}

/// h(x) = max over nodes u of rho(u) <u,x>, refined by a local maximization of
/// `m(xi) <exp_u(xi), x>` around the maximizing node.
pub fn support_from_radial(rho: &RadialFn, x: &Vec3) -> f64 {
    let grid = rho.rho.grid();
    let rv = rho.values();
    let mut node = 0;
    let mut value = f64::NEG_INFINITY;
    for (i, u) in grid.nodes().iter().enumerate() {
        let s = rv[i] * dot(u, x);
        if s > value {
            value = s;
            node = i;
        }
    }
    let model = LocalModel::new(grid, node, rv);
    match model.minimize(|xi| -model.value(xi) * dot(&model.exp(xi), x)) {
        Some(r) if (-r).is_finite() && -r >= value => -r,
        _ => value,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityTolerances {
    /// Slack in |grad h| <= rho.
    pub grad: f64,
    /// Slack in max h = max rho.
    pub max_eq: f64,
    /// Slack in h(x) >= h_max |<x, x0>|.
    pub cone: f64,
    /// Evenness threshold |h(x) - h(-x)| deciding whether the cone check runs.
    pub even: f64,
}

impl Default for IdentityTolerances {
    fn default() -> Self {
        Self {
            grad: 1e-6,
            max_eq: 1e-6,
            cone: 1e-6,
            even: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricIdentityReport {
    pub max_h: f64,
    pub max_rho: f64,
    pub grad_bound_ok: bool,
    /// max over nodes of |grad h(x)| - rho(u(x)); nonpositive when the bound holds.
    pub grad_bound_worst: f64,
    pub max_eq_ok: bool,
    /// `None` when h is not even.
    pub even_cone_ok: Option<bool>,
    /// min over nodes of h(x) - h_max |<x, x0>|.
    pub even_cone_worst: Option<f64>,
    pub tolerances: IdentityTolerances,
}

/// Checks |grad h| <= rho, max h = max rho and, for even h, the cone bound
/// h(x) >= h_max |<x, x0>| with x0 the maximizing node.
pub fn geometric_identity_report(
    h: &SupportFn,
    tol: IdentityTolerances,
) -> Result<GeometricIdentityReport> {
    let grid = h.grid();
    let rho = h.radial_field()?;
    let max_h = h.field().max();
    let max_rho = rho.field().max();

    let points = h.embed();
    let gaps: Result<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let x = &points[i];
            let r = norm(x);
            let u = scale(1.0 / r, x);
            Ok(h.grad_norm(i) - radial_from_support(h, &u)?)
        })
        .collect();
    let grad_bound_worst = gaps?.into_iter().fold(f64::NEG_INFINITY, f64::max);

    let (even_cone_ok, even_cone_worst) = if h.field().is_even(tol.even) {
        let x0 = *grid.node(h.field().argmax());
        let worst = grid
            .nodes()
            .iter()
            .zip(h.values())
            .map(|(x, &hv)| hv - max_h * dot(x, &x0).abs())
            .fold(f64::INFINITY, f64::min);
        (Some(worst >= -tol.cone), Some(worst))
    } else {
        (None, None)
    };

    Ok(GeometricIdentityReport {
        max_h,
        max_rho,
        grad_bound_ok: grad_bound_worst <= tol.grad,
        grad_bound_worst,
        max_eq_ok: (max_h - max_rho).abs() <= tol.max_eq,
        even_cone_ok,
        even_cone_worst,
        tolerances: tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualIdentity {
    /// integral of h^p f dx
    pub lhs: f64,
    /// integral of rho^q du
    pub rhs: f64,
    pub rel_gap: f64,
}

/// Compares the two sides of `int h^p f dx = int rho^q du`, which holds when
/// h solves the equation for f.
pub fn dual_integral_identity(
    h: &SupportFn,
    f: &ScalarField,
    params: &ProblemParams,
) -> Result<DualIdentity> {
    if !h.field().same_grid(f) {
        return Err(Error::GridMismatch);
    }
    let grid = h.grid();
    let hp: Vec<f64> = h
        .values()
        .iter()
        .zip(f.values())
        .map(|(&hv, &fv)| hv.powf(params.p) * fv)
        .collect();
    let lhs = grid.integrate_values(&hp);
    let rho = h.radial_field()?;
    let rq: Vec<f64> = rho.values().iter().map(|r| r.powf(params.q)).collect();
    let rhs = grid.integrate_values(&rq);
    let rel_gap = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    Ok(DualIdentity { lhs, rhs, rel_gap })
}

/// ASCII OBJ of the embedded body on an S^2 grid, 9 significant digits.
pub fn to_obj(h: &SupportFn) -> Result<String> {
    let grid = h.grid();
    if grid.dim() != 3 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    let mut out = String::new();
    for p in h.embed() {
        writeln!(out, "v {:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]).unwrap();
    }
    for t in grid.triangles() {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn translated_ball(grid: &Arc<Grid>, e: Vec3) -> SupportFn {
        SupportFn::new(ScalarField::from_fn(grid, |x| 1.0 + 0.3 * dot(x, &e)).unwrap()).unwrap()
    }

    #[test]
    fn embed_unit_and_constant() {
        let g = build_grid(3, 2).unwrap();
        let h = SupportFn::constant(&g, 1.0).unwrap();
        for (p, x) in h.embed().iter().zip(g.nodes()) {
            for k in 0..3 {
                assert!((p[k] - x[k]).abs() < 1e-12);
            }
        }
        let h = SupportFn::constant(&g, 2.5).unwrap();
        for p in h.embed() {
            assert!((norm(&p) - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_norm_identity() {
        let g = build_grid(3, 3).unwrap();
        let h = SupportFn::new(
            ScalarField::from_fn(&g, |x| 1.5 + 0.2 * x[0] * x[1] + 0.1 * x[2]).unwrap(),
        )
        .unwrap();
        for (i, p) in h.embed().iter().enumerate() {
            assert!((dot(p, p) - h.rho_sq(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_translated_ball() {
        let g = build_grid(3, 4).unwrap();
        let e = [0.0, 0.0, 1.0];
        let h = translated_ball(&g, e);
        let mut worst: f64 = 0.0;
        for (p, x) in h.embed().iter().zip(g.nodes()) {
            let expect = add(x, &scale(0.3, &e));
            worst = worst.max(norm(&crate::grid::sub(p, &expect)));
        }
        assert!(worst < 1e-3, "worst {worst}");
    }

    #[test]
    fn radial_examples() {
        let g = build_grid(3, 4).unwrap();
        let one = SupportFn::constant(&g, 1.0).unwrap();
        let u = crate::grid::normalize(&[0.3, -0.2, 0.7]);
        assert!((one.radial(&u).unwrap() - 1.0).abs() < 1e-12);

        let e = [0.0, 0.0, 1.0];
        let ball = translated_ball(&g, e);
        assert!((ball.radial(&e).unwrap() - 1.3).abs() < 1e-4);
        // |rho u - 0.3 e| = 1 with u perpendicular to e
        let expect = (1.0f64 - 0.09).sqrt();
        let r = ball.radial(&[1.0, 0.0, 0.0]).unwrap();
        assert!((r - expect).abs() < 1e-4, "{r} vs {expect}");
    }

    #[test]
    fn support_from_radial_examples() {
        let g = build_grid(3, 3).unwrap();
        let rho = RadialFn::new(ScalarField::constant(&g, 1.0).unwrap()).unwrap();
        let h = rho.support_field().unwrap();
        assert!(h.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let rho = RadialFn::new(ScalarField::constant(&g, 0.7).unwrap()).unwrap();
        let h = rho.support_field().unwrap();
        assert!(h.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn duality_roundtrip_converges() {
        let e = [0.0, 0.0, 1.0];
        let mut errs = Vec::new();
        for level in [3, 4] {
            let g = build_grid(3, level).unwrap();
            let h = translated_ball(&g, e);
            let back = h.radial_field().unwrap().support_field().unwrap();
            let err = back
                .values()
                .iter()
                .zip(h.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            errs.push(err);
        }
        assert!(errs[1] < 1e-3, "{errs:?}");
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn identity_report_constant() {
        let g = build_grid(3, 3).unwrap();
        let h = SupportFn::constant(&g, 1.0).unwrap();
        let r = geometric_identity_report(&h, IdentityTolerances::default()).unwrap();
        assert_eq!(r.max_h, 1.0);
        assert!((r.max_rho - 1.0).abs() < 1e-12);
        assert!(r.grad_bound_ok && r.max_eq_ok);
        assert_eq!(r.even_cone_ok, Some(true));
    }

    #[test]
    fn identity_report_translated_ball() {
        let g = build_grid(3, 4).unwrap();
        let h = translated_ball(&g, [0.0, 0.0, 1.0]);
        let tol = IdentityTolerances {
            max_eq: 1e-4,
            ..Default::default()
        };
        let r = geometric_identity_report(&h, tol).unwrap();
        assert!((r.max_h - 1.3).abs() < 1e-12);
        assert!((r.max_rho - 1.3).abs() < 1e-4);
        assert!(r.grad_bound_ok);
        assert_eq!(r.even_cone_ok, None);
    }

    #[test]
    fn dual_identity_constants() {
        let g = build_grid(3, 3).unwrap();
        let params = ProblemParams::new(3, 2.0, 1.0).unwrap();
        let h = SupportFn::constant(&g, 1.0).unwrap();
        let f = ScalarField::constant(&g, 1.0).unwrap();
        let d = dual_integral_identity(&h, &f, &params).unwrap();
        assert!((d.lhs - 4.0 * std::f64::consts::PI).abs() < 1e-10);
        assert!((d.rhs - 4.0 * std::f64::consts::PI).abs() < 1e-10);

        let h = SupportFn::constant(&g, 0.25).unwrap();
        let f = ScalarField::constant(&g, 4.0).unwrap();
        let d = dual_integral_identity(&h, &f, &params).unwrap();
        assert!((d.lhs - std::f64::consts::PI).abs() < 1e-12);
        assert!((d.rhs - std::f64::consts::PI).abs() < 1e-12);
        assert!(d.rel_gap < 1e-12);
    }

    #[test]
    fn obj_layout() {
        let g = build_grid(3, 1).unwrap();
        let h = SupportFn::constant(&g, 1.0).unwrap();
        let obj = to_obj(&h).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 42);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 80);
        let g2 = build_grid(2, 32).unwrap();
        assert!(to_obj(&SupportFn::constant(&g2, 1.0).unwrap()).is_err());
    }
}
