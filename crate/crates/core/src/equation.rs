//! The L_p dual Minkowski equation
//!
//! ```text
//! h^{1-p} (|grad h|^2 + h^2)^{-(n-q)/2} det(hess h + h I) = f   on S^{n-1}
//! ```
//!
//! in plain form (used for reporting) and in logarithmic form
//! `G = log det b - (p-1) log h - (n-q)/2 log(|grad h|^2 + h^2) - log f`,
//! which is what Newton iterates on.

use serde::{Deserialize, Serialize};

use crate::convex::SupportFn;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::{SparseSystem, SymMat};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
}

impl ProblemParams {
    pub fn new(n: usize, p: f64, q: f64) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::UnsupportedDimension(n));
        }
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::InvalidParams(format!("non-finite exponents p = {p}, q = {q}")));
        }
        Ok(Self { n, p, q })
    }

    /// The regime p > q > 0 in which the degenerate theory applies.
    pub fn is_guaranteed(&self) -> bool {
        self.p > self.q && self.q > 0.0
    }

    /// Exponent 1/(q-p) of the constant solution h = c^{1/(q-p)} for f = c.
    pub fn constant_exponent(&self) -> Result<f64> {
        if self.p == self.q {
            return Err(Error::EqualExponents(self.p));
        }
        Ok(1.0 / (self.q - self.p))
    }

    fn check_grid(&self, h: &SupportFn) -> Result<()> {
        if h.grid().dim() != self.n {
            return Err(Error::InvalidParams(format!(
                "params have n = {} but the grid discretizes S^{}",
                self.n,
                h.grid().dim() - 1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualKind {
    Plain,
    Log,
}

#[derive(Clone, Debug)]
pub struct ResidualField {
    pub kind: ResidualKind,
    pub values: ScalarField,
    pub sup: f64,
    pub l2: f64,
}

impl ResidualField {
    fn from_values(kind: ResidualKind, values: ScalarField) -> Self {
        let sup = values.sup_norm();
        let sq: Vec<f64> = values.values().iter().map(|v| v * v).collect();
        let l2 = values.grid().integrate_values(&sq).sqrt();
        Self {
            kind,
            values,
            sup,
            l2,
        }
    }
}

/// Left-hand side h^{1-p} rho^{-(n-q)} det b at each node.
pub fn lhs(h: &SupportFn, params: &ProblemParams) -> Result<ScalarField> {
    params.check_grid(h)?;
    let n = params.n as f64;
    let vals = (0..h.grid().len())
        .map(|i| {
            let hv = h.values()[i];
            hv.powf(1.0 - params.p) * h.rho_sq(i).powf(-(n - params.q) / 2.0) * h.b(i).det()
        })
        .collect();
    ScalarField::new(h.grid(), vals)
}

/// Plain residual `R = LHS - f`.
pub fn residual(h: &SupportFn, f: &ScalarField, params: &ProblemParams) -> Result<ResidualField> {
    if !h.field().same_grid(f) {
        return Err(Error::GridMismatch);
    }
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeDensity { node, value });
    }
    let l = lhs(h, params)?;
    let r = l.zip_map(f, |a, b| a - b)?;
    Ok(ResidualField::from_values(ResidualKind::Plain, r))
}

/// Logarithmic residual `G`. Requires f > 0 and det b > 0 at every node.
pub fn log_residual(h: &SupportFn, f: &ScalarField, params: &ProblemParams) -> Result<ResidualField> {
    let g = log_residual_values(h, f, params)?;
    Ok(ResidualField::from_values(
        ResidualKind::Log,
        ScalarField::new(h.grid(), g)?,
    ))
}

pub(crate) fn log_residual_values(
    h: &SupportFn,
    f: &ScalarField,
    params: &ProblemParams,
) -> Result<Vec<f64>> {
    params.check_grid(h)?;
    if !h.field().same_grid(f) {
        return Err(Error::GridMismatch);
    }
    if let Some((node, &value)) = f.values().iter().enumerate().find(|(_, &v)| v <= 0.0) {
        return Err(Error::NonPositiveDensity { node, value });
    }
    let n = params.n as f64;
    (0..h.grid().len())
        .map(|i| {
            let det = h.b(i).det();
            if !(det > 0.0) {
                return Err(Error::LostConvexity { node: i, det });
            }
            let hv = h.values()[i];
            Ok(det.ln()
                - (params.p - 1.0) * hv.ln()
                - 0.5 * (n - params.q) * h.rho_sq(i).ln()
                - f.values()[i].ln())
        })
        .collect()
}

/// Frechet derivative of the discrete log residual at h:
///
/// `L[d] = tr(b^{-1} (hess d + d I)) - (p-1) d / h - (n-q) (<grad h, grad d> + h d) / (|grad h|^2 + h^2)`.
#[derive(Clone, Debug)]
pub struct Linearization {
    binv: Vec<SymMat>,
    /// Coefficient of d at each node.
    diag: Vec<f64>,
    /// Coefficient of grad d at each node (frame components).
    grad: Vec<[f64; 2]>,
    h: SupportFn,
}

pub fn linearize(h: &SupportFn, params: &ProblemParams) -> Result<Linearization> {
    params.check_grid(h)?;
    let n = params.n as f64;
    let len = h.grid().len();
    let mut binv = Vec::with_capacity(len);
    let mut diag = Vec::with_capacity(len);
    let mut grad = Vec::with_capacity(len);
    for i in 0..len {
        let b = h.b(i);
        let inv = match b.inverse() {
            Some(inv) if b.det() > 0.0 => inv,
            _ => {
                return Err(Error::LostConvexity {
                    node: i,
                    det: b.det(),
                })
            }
        };
        let hv = h.values()[i];
        let r2 = h.rho_sq(i);
        let g = h.grad(i);
        diag.push(inv.trace() - (params.p - 1.0) / hv - (n - params.q) * hv / r2);
        let c = -(n - params.q) / r2;
        grad.push([c * g[0], c * g[1]]);
        binv.push(inv);
    }
    Ok(Linearization {
        binv,
        diag,
        grad,
        h: h.clone(),
    })
}

impl Linearization {
    pub fn apply(&self, delta: &[f64]) -> Vec<f64> {
        let grid = self.h.grid();
        (0..grid.len())
            .map(|i| {
                let hess = grid.hess_at(delta, i);
                let g = grid.grad_at(delta, i);
                self.binv[i].contract(&hess)
                    + self.diag[i] * delta[i]
                    + self.grad[i][0] * g[0]
                    + self.grad[i][1] * g[1]
            })
            .collect()
    }

    /// Sparse matrix of the operator (duplicate entries are summed on assembly).
    pub fn assemble(&self) -> SparseSystem {
        let grid = self.h.grid();
        let nnz: usize = (0..grid.len()).map(|i| grid.stencil(i).nodes.len() + 1).sum();
        let mut sys = SparseSystem::with_capacity(grid.len(), nnz);
        for i in 0..grid.len() {
            let st = grid.stencil(i);
            for (k, &j) in st.nodes.iter().enumerate() {
                let v = self.binv[i].contract_weights(&st.d2[k])
                    + self.grad[i][0] * st.d1[k][0]
                    + self.grad[i][1] * st.d1[k][1];
                sys.push(i, j, v);
            }
            sys.push(i, i, self.diag[i]);
        }
        sys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, dot};
    use std::sync::Arc;

    fn field(grid: &Arc<crate::grid::Grid>, c: f64) -> ScalarField {
        ScalarField::constant(grid, c).unwrap()
    }

    #[test]
    fn constant_solutions_have_zero_residual() {
        for n in [2, 3] {
            let g = if n == 2 { build_grid(2, 32) } else { build_grid(3, 2) }.unwrap();
            for (p, q) in [(2.0, 1.0), (3.0, 1.0), (0.0, 0.0), (-1.0, 0.5)] {
                let params = ProblemParams::new(n, p, q).unwrap();
                let h = SupportFn::constant(&g, 1.0).unwrap();
                let r = residual(&h, &field(&g, 1.0), &params).unwrap();
                assert!(r.sup < 1e-10, "n={n} p={p} q={q} sup={}", r.sup);
                let c: f64 = 0.6;
                let h = SupportFn::constant(&g, c).unwrap();
                let r = residual(&h, &field(&g, c.powf(q - p)), &params).unwrap();
                assert!(r.sup < 1e-10 * c.powf(q - p).max(1.0));
            }
        }
    }

    #[test]
    fn log_residual_examples() {
        let g = build_grid(3, 2).unwrap();
        let params = ProblemParams::new(3, 2.0, 1.0).unwrap();
        let one = SupportFn::constant(&g, 1.0).unwrap();
        assert!(log_residual(&one, &field(&g, 1.0), &params).unwrap().sup < 1e-10);
        let quarter = SupportFn::constant(&g, 0.25).unwrap();
        assert!(log_residual(&quarter, &field(&g, 4.0), &params).unwrap().sup < 1e-10);
        let shifted = log_residual(&one, &field(&g, std::f64::consts::E), &params).unwrap();
        assert!(shifted.values.values().iter().all(|v| (v + 1.0).abs() < 1e-10));
    }

    #[test]
    fn log_residual_errors() {
        let g = build_grid(3, 1).unwrap();
        let params = ProblemParams::new(3, 2.0, 1.0).unwrap();
        let one = SupportFn::constant(&g, 1.0).unwrap();
        let mut fv = vec![1.0; g.len()];
        fv[5] = 0.0;
        let f = ScalarField::new(&g, fv).unwrap();
        assert!(matches!(
            log_residual(&one, &f, &params),
            Err(Error::NonPositiveDensity { node: 5, .. })
        ));
        // h = 1 + 3 <x,e>^2 ... a strongly nonconvex bump loses det b > 0 somewhere
        let bad = SupportFn::new(ScalarField::from_fn(&g, |x| 2.0 - 1.5 * x[2] * x[2]).unwrap()).unwrap();
        assert!(matches!(
            log_residual(&bad, &field(&g, 1.0), &params),
            Err(Error::LostConvexity { .. })
        ));
        assert!(matches!(
            SupportFn::new(field(&g, -1.0)),
            Err(Error::NonPositiveSupport { .. })
        ));
    }

    #[test]
    fn residual_scaling_law() {
        let g = build_grid(3, 3).unwrap();
        let params = ProblemParams::new(3, 2.5, 0.5).unwrap();
        let hf = ScalarField::from_fn(&g, |x| 1.0 + 0.2 * x[0] * x[0] + 0.1 * x[1] * x[2]).unwrap();
        let f = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * x[2] * x[2]).unwrap();
        let lambda: f64 = 1.7;
        let s = lambda.powf(params.q - params.p);
        let r1 = residual(&SupportFn::new(hf.clone()).unwrap(), &f, &params).unwrap();
        let r2 = residual(
            &SupportFn::new(hf.map(|v| lambda * v).unwrap()).unwrap(),
            &f.map(|v| s * v).unwrap(),
            &params,
        )
        .unwrap();
        for (a, b) in r1.values.values().iter().zip(r2.values.values()) {
            assert!((b - s * a).abs() < 1e-12, "{b} vs {}", s * a);
        }
    }

    #[test]
    fn linearization_on_constants() {
        let g = build_grid(3, 2).unwrap();
        let params = ProblemParams::new(3, 2.0, 1.0).unwrap();
        let h = SupportFn::constant(&g, 1.0).unwrap();
        let lin = linearize(&h, &params).unwrap();
        let out = lin.apply(&vec![1.0; g.len()]);
        assert!(out.iter().all(|v| (v + 1.0).abs() < 1e-10));
        let sys = lin.assemble();
        let out2 = sys.apply(&vec![1.0; g.len()]);
        for (a, b) in out.iter().zip(&out2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn linearization_matches_forward_difference() {
        let g = build_grid(3, 3).unwrap();
        let params = ProblemParams::new(3, 2.0, 1.0).unwrap();
        let e = crate::grid::normalize(&[0.2, 0.5, -0.8]);
        let hv: Vec<f64> = g.nodes().iter().map(|x| 1.0 + 0.1 * dot(x, &e).powi(2)).collect();
        let dv: Vec<f64> = g.nodes().iter().map(|x| 0.1 * (x[0] * x[1] + 0.5 * x[2])).collect();
        let f = field(&g, 1.0);
        let h = SupportFn::new(ScalarField::new(&g, hv.clone()).unwrap()).unwrap();
        let base = log_residual_values(&h, &f, &params).unwrap();
        let ld = linearize(&h, &params).unwrap().apply(&dv);
        let scale = ld.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut prev = f64::INFINITY;
        for s in [1e-3, 1e-4, 1e-5] {
            let hs: Vec<f64> = hv.iter().zip(&dv).map(|(a, d)| a + s * d).collect();
            let hs = SupportFn::new(ScalarField::new(&g, hs).unwrap()).unwrap();
            let gs = log_residual_values(&hs, &f, &params).unwrap();
            let err = gs
                .iter()
                .zip(&base)
                .zip(&ld)
                .fold(0.0f64, |m, ((a, b), l)| m.max(((a - b) / s - l).abs()))
                / scale;
            assert!(err < prev / 5.0, "error did not decay linearly: {err} vs {prev}");
            prev = err;
        }
    }
}
