//! Small symmetric tangent matrices and the sparse direct solve used by Newton.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Par};

use crate::error::{Error, Result};

/// Symmetric matrix on the tangent space of S^1 (1x1) or S^2 (2x2).
///
/// The 2x2 case is stored as `[a11, a12, a22]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SymMat {
    One(f64),
    Two([f64; 3]),
}

impl SymMat {
    pub fn zero(tangent_dim: usize) -> Self {
        match tangent_dim {
            1 => SymMat::One(0.0),
            _ => SymMat::Two([0.0; 3]),
        }
    }

    pub fn tangent_dim(&self) -> usize {
        match self {
            SymMat::One(_) => 1,
            SymMat::Two(_) => 2,
        }
    }

    pub fn trace(&self) -> f64 {
        match *self {
            SymMat::One(a) => a,
            SymMat::Two([a, _, c]) => a + c,
        }
    }

    pub fn det(&self) -> f64 {
        match *self {
            SymMat::One(a) => a,
            SymMat::Two([a, b, c]) => a * c - b * b,
        }
    }

    /// `self + s I`
    pub fn shift(&self, s: f64) -> Self {
        match *self {
            SymMat::One(a) => SymMat::One(a + s),
            SymMat::Two([a, b, c]) => SymMat::Two([a + s, b, c + s]),
        }
    }

    /// Explicit inverse; `None` when the determinant is exactly zero.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(match *self {
            SymMat::One(a) => SymMat::One(1.0 / a),
            SymMat::Two([a, b, c]) => SymMat::Two([c / d, -b / d, a / d]),
        })
    }

    pub fn min_eig(&self) -> f64 {
        match *self {
            SymMat::One(a) => a,
            SymMat::Two([a, b, c]) => {
                let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                0.5 * (a + c) - half_gap
            }
        }
    }

    pub fn max_eig(&self) -> f64 {
        match *self {
            SymMat::One(a) => a,
            SymMat::Two([a, b, c]) => {
                let half_gap = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                0.5 * (a + c) + half_gap
            }
        }
    }

    /// Frobenius pairing `tr(self * other)` for symmetric arguments.
    pub fn contract(&self, other: &SymMat) -> f64 {
        match (*self, *other) {
            (SymMat::One(a), SymMat::One(b)) => a * b,
            (SymMat::Two([a, b, c]), SymMat::Two([x, y, z])) => a * x + 2.0 * b * y + c * z,
            _ => panic!("contract: mismatched tangent dimensions"),
        }
    }

    /// Contraction against Hessian stencil weights stored as `[w11, w12, w22]`.
    pub fn contract_weights(&self, w: &[f64; 3]) -> f64 {
        match *self {
            SymMat::One(a) => a * w[0],
            SymMat::Two([a, b, c]) => a * w[0] + 2.0 * b * w[1] + c * w[2],
        }
    }
}

/// Square sparse system assembled from triplets and solved by sparse LU.
pub struct SparseSystem {
    n: usize,
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            triplets: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        Self {
            n,
            triplets: Vec::with_capacity(nnz),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.triplets.push(Triplet::new(row, col, value));
    }

    /// `A x` using the assembled entries (duplicates summed).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.triplets {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// Row sums `sum_j |a_ij| |x_j|` (duplicates counted separately).
    pub fn abs_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.triplets {
            y[t.row] += t.val.abs() * x[t.col].abs();
        }
        y
    }

    /// Solves `(A + shift I) x = rhs`. Runs single-threaded so results are bitwise reproducible.
    pub fn solve_shifted(&self, rhs: &[f64], shift: f64) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::LinearSolve(format!(
                "rhs length {} != system size {}",
                rhs.len(),
                self.n
            )));
        }
        faer::set_global_parallelism(Par::Seq);
        let mut trip = self.triplets.clone();
        if shift != 0.0 {
            for i in 0..self.n {
                trip.push(Triplet::new(i, i, shift));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &trip)
            .map_err(|e| Error::LinearSolve(format!("assembly: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("factorization: {e:?}")))?;
        let b = Col::<f64>::from_fn(self.n, |i| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[i]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        Ok(out)
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.solve_shifted(rhs, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_algebra() {
        let m = SymMat::Two([2.0, 1.0, 3.0]);
        assert_eq!(m.det(), 5.0);
        assert_eq!(m.trace(), 5.0);
        let inv = m.inverse().unwrap();
        // m * inv = I  =>  tr(m inv) = 2
        assert!((m.contract(&inv) - 2.0).abs() < 1e-15);
        let (lo, hi) = (m.min_eig(), m.max_eig());
        assert!((lo * hi - 5.0).abs() < 1e-12);
        assert!((lo + hi - 5.0).abs() < 1e-12);
        assert_eq!(SymMat::Two([1.0, 1.0, 1.0]).inverse(), None);
    }

    #[test]
    fn sparse_tridiagonal_solve() {
        let n = 50;
        let mut sys = SparseSystem::new(n);
        for i in 0..n {
            sys.push(i, i, 4.0);
            if i > 0 {
                sys.push(i, i - 1, -1.0);
            }
            if i + 1 < n {
                sys.push(i, i + 1, -1.0);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = sys.apply(&x_true);
        let x = sys.solve(&b).unwrap();
        for (a, e) in x.iter().zip(&x_true) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}
