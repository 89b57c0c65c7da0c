//! Discretized spheres S^1 and S^2 with quadrature, covariant derivative
//! stencils and antipodal pairing.
//!
//! S^1 is sampled at equispaced angles and differentiated with fourth-order
//! central differences. S^2 is an icosahedral geodesic grid (one icosahedron
//! vertex sits on each pole) with spherical Voronoi weights. Covariant
//! derivatives on S^2 come from a weighted least-squares quartic fit over the
//! two-ring of each node, expressed in geodesic normal coordinates, where the
//! Christoffel symbols vanish at the centre so the fitted second-order
//! coefficients are the covariant Hessian.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::SymMat;

pub type Vec3 = [f64; 3];

pub const MIN_S1_NODES: usize = 16;
pub const MAX_S1_NODES: usize = 1 << 16;
pub const MAX_S2_LEVEL: usize = 6;

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalize(a: &Vec3) -> Vec3 {
    let r = norm(a);
    [a[0] / r, a[1] / r, a[2] / r]
}

/// Which sphere and how finely it is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Ambient dimension n (2 for S^1, 3 for S^2).
    pub n: usize,
    /// Node count on S^1, subdivision level on S^2.
    pub resolution: usize,
}

/// Linear derivative weights at one node. `nodes[0]` is the node itself and its
/// weights are minus the sum of the others, so stencils annihilate constants;
/// they are applied to differences `u_j - u_0`.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub nodes: Vec<usize>,
    /// Gradient weights, one entry per frame direction (second unused on S^1).
    pub d1: Vec<[f64; 2]>,
    /// Hessian weights `[w11, w12, w22]` (only `w11` used on S^1).
    pub d2: Vec<[f64; 3]>,
}

#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    frames: Vec<[Vec3; 2]>,
    stencils: Vec<Stencil>,
    antipode: Vec<usize>,
    triangles: Vec<[usize; 3]>,
    spacing: f64,
}

/// Builds the S^1 grid (`n = 2`, `resolution` = node count) or the S^2 grid
/// (`n = 3`, `resolution` = icosahedral subdivision level).
pub fn build_grid(n: usize, resolution: usize) -> Result<Arc<Grid>> {
    match n {
        2 => Grid::circle(resolution).map(Arc::new),
        3 => Grid::icosahedral(resolution).map(Arc::new),
        other => Err(Error::UnsupportedDimension(other)),
    }
}

impl Grid {
    pub fn circle(count: usize) -> Result<Grid> {
        if !(MIN_S1_NODES..=MAX_S1_NODES).contains(&count) {
            return Err(Error::ResolutionOutOfRange {
                sphere_dim: 1,
                resolution: count,
                reason: "S^1 needs between 16 and 65536 nodes",
            });
        }
        if count % 2 != 0 {
            return Err(Error::ResolutionOutOfRange {
                sphere_dim: 1,
                resolution: count,
                reason: "S^1 node count must be even for antipodal pairing",
            });
        }
        let dt = 2.0 * std::f64::consts::PI / count as f64;
        let mut nodes = Vec::with_capacity(count);
        let mut frames = Vec::with_capacity(count);
        for i in 0..count {
            let t = i as f64 * dt;
            let (s, c) = t.sin_cos();
            nodes.push([c, s, 0.0]);
            frames.push([[-s, c, 0.0], [0.0, 0.0, 0.0]]);
        }
        // Exact antipodal symmetry: node i + N/2 is the bitwise negation of node i.
        let half = count / 2;
        for i in half..count {
            nodes[i] = scale(-1.0, &nodes[i - half]);
            frames[i] = [scale(-1.0, &frames[i - half][0]), [0.0; 3]];
        }
        let antipode = (0..count).map(|i| (i + half) % count).collect();

        // Fourth-order central differences.
        let g1 = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        let g2 = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        let stencils = (0..count)
            .map(|i| {
                let offsets = [0isize, -2, -1, 1, 2];
                let coeff_idx = [2usize, 0, 1, 3, 4];
                let nodes = offsets
                    .iter()
                    .map(|&o| (i as isize + o).rem_euclid(count as isize) as usize)
                    .collect();
                let d1 = coeff_idx.iter().map(|&k| [g1[k] / dt, 0.0]).collect();
                let mut d2: Vec<[f64; 3]> = coeff_idx
                    .iter()
                    .map(|&k| [g2[k] / (dt * dt), 0.0, 0.0])
                    .collect();
                d2[0][0] = -d2[1..].iter().map(|w| w[0]).sum::<f64>();
                Stencil { nodes, d1, d2 }
            })
            .collect();

        Ok(Grid {
            spec: GridSpec { n: 2, resolution: count },
            nodes,
            weights: vec![dt; count],
            frames,
            stencils,
            antipode,
            triangles: Vec::new(),
            spacing: dt,
        })
    }

    pub fn icosahedral(level: usize) -> Result<Grid> {
        if level > MAX_S2_LEVEL {
            return Err(Error::ResolutionOutOfRange {
                sphere_dim: 2,
                resolution: level,
                reason: "icosahedral subdivision level must be 0..=6",
            });
        }
        let (mut nodes, mut tris) = icosahedron();
        for _ in 0..level {
            subdivide(&mut nodes, &mut tris);
        }
        let mut grid = Grid::from_triangulation(nodes, tris)?;
        grid.spec.resolution = level;
        Ok(grid)
    }

    /// Builds an S^2 grid from an arbitrary outward-oriented triangulation of
    /// unit vectors. The node set must be closed under negation.
    pub fn from_triangulation(nodes: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Grid> {
        for (i, x) in nodes.iter().enumerate() {
            for &c in x {
                if !c.is_finite() {
                    return Err(Error::NonFinite { node: i, value: c });
                }
            }
        }
        let count = nodes.len();
        let weights = voronoi_weights(&nodes, &triangles);

        let mut ring1: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); count];
        for t in &triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                ring1[a].insert(b);
                ring1[b].insert(a);
            }
        }
        let frames: Vec<[Vec3; 2]> = nodes.iter().map(tangent_frame).collect();

        let stencils: Vec<Result<Stencil>> = (0..count)
            .into_par_iter()
            .map(|i| {
                let mut ring: BTreeSet<usize> = ring1[i].clone();
                for &j in &ring1[i] {
                    ring.extend(ring1[j].iter().copied());
                }
                ring.remove(&i);
                let mut members = vec![i];
                members.extend(ring);
                fit_stencil(i, &nodes, &frames[i], members)
            })
            .collect();
        let stencils = stencils.into_iter().collect::<Result<Vec<_>>>()?;

        let antipode = antipodal_pairs(&nodes)?;

        let mut total = 0.0;
        let mut edges = 0usize;
        for (i, r) in ring1.iter().enumerate() {
            for &j in r {
                total += dot(&nodes[i], &nodes[j]).clamp(-1.0, 1.0).acos();
                edges += 1;
            }
        }
        let spacing = if edges > 0 { total / edges as f64 } else { 0.0 };

        Ok(Grid {
            spec: GridSpec { n: 3, resolution: 0 },
            nodes,
            weights,
            frames,
            stencils,
            antipode,
            triangles,
            spacing,
        })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    /// Ambient dimension n.
    pub fn dim(&self) -> usize {
        self.spec.n
    }

    /// Dimension n - 1 of the tangent spaces.
    pub fn tangent_dim(&self) -> usize {
        self.spec.n - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node positions; the third coordinate is zero on S^1.
    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Vec3 {
        &self.nodes[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frame(&self, i: usize) -> &[Vec3; 2] {
        &self.frames[i]
    }

    pub fn stencil(&self, i: usize) -> &Stencil {
        &self.stencils[i]
    }

    pub fn antipode(&self, i: usize) -> usize {
        self.antipode[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Mean geodesic distance between neighbouring nodes.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// |S^{n-1}|
    pub fn total_measure(&self) -> f64 {
        match self.spec.n {
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        }
    }

    /// SHA-256 over the little-endian bytes of every node coordinate.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.spec.n as u64).to_le_bytes());
        for x in &self.nodes {
            for c in x {
                hasher.update(c.to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Quadrature sum with a fixed (sequential) summation order.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.weights)
            .fold(0.0, |acc, (v, w)| acc + v * w)
    }

    /// Gradient at node i in frame components.
    pub fn grad_at(&self, values: &[f64], i: usize) -> [f64; 2] {
        let st = &self.stencils[i];
        let u0 = values[i];
        let mut g = [0.0; 2];
        for (k, &j) in st.nodes.iter().enumerate().skip(1) {
            let du = values[j] - u0;
            g[0] += st.d1[k][0] * du;
            g[1] += st.d1[k][1] * du;
        }
        g
    }

    /// Covariant Hessian at node i in the local orthonormal frame.
    pub fn hess_at(&self, values: &[f64], i: usize) -> SymMat {
        let st = &self.stencils[i];
        let u0 = values[i];
        let mut h = [0.0; 3];
        for (k, &j) in st.nodes.iter().enumerate().skip(1) {
            let du = values[j] - u0;
            for c in 0..3 {
                h[c] += st.d2[k][c] * du;
            }
        }
        match self.tangent_dim() {
            1 => SymMat::One(h[0]),
            _ => SymMat::Two(h),
        }
    }

    /// Converts frame components at node i into an ambient tangent vector.
    pub fn tangent_vector(&self, i: usize, g: &[f64; 2]) -> Vec3 {
        let [e1, e2] = &self.frames[i];
        add(&scale(g[0], e1), &scale(g[1], e2))
    }

    /// Geodesic normal coordinates of `y` around node i.
    pub fn normal_coords(&self, i: usize, y: &Vec3) -> [f64; 2] {
        log_map(&self.nodes[i], &self.frames[i], y)
    }
}

/// Values on the nodes of a shared grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::FieldLength {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { node, value });
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.len()])
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Self::new(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First node attaining the maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate_values(&self.values)
    }

    /// Per-node gradient as an ambient tangent vector.
    pub fn gradient(&self) -> Vec<Vec3> {
        (0..self.grid.len())
            .map(|i| {
                let g = self.grid.grad_at(&self.values, i);
                self.grid.tangent_vector(i, &g)
            })
            .collect()
    }

    /// Per-node gradient in local frame components.
    pub fn gradient_components(&self) -> Vec<[f64; 2]> {
        (0..self.grid.len())
            .map(|i| self.grid.grad_at(&self.values, i))
            .collect()
    }

    pub fn hessian(&self) -> Vec<SymMat> {
        (0..self.grid.len())
            .map(|i| self.grid.hess_at(&self.values, i))
            .collect()
    }

    pub fn laplacian(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| self.grid.hess_at(&self.values, i).trace())
            .collect();
        ScalarField {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Even part `(u(x) + u(-x)) / 2`.
    pub fn symmetrize_even(&self) -> ScalarField {
        let values = symmetrize_even_values(&self.grid, &self.values);
        ScalarField {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    pub fn is_even(&self, tol: f64) -> bool {
        (0..self.grid.len())
            .all(|i| (self.values[i] - self.values[self.grid.antipode(i)]).abs() <= tol)
    }
}

pub(crate) fn symmetrize_even_values(grid: &Grid, values: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            let j = grid.antipode(i);
            // Order the pair so node i and its antipode produce bitwise equal results.
            let (a, b) = if i <= j {
                (values[i], values[j])
            } else {
                (values[j], values[i])
            };
            0.5 * (a + b)
        })
        .collect()
}

/// Deterministic orthonormal tangent frame at x: the first vector is the
/// projection of the coordinate axis least aligned with x.
fn tangent_frame(x: &Vec3) -> [Vec3; 2] {
    let mut axis = 0;
    for k in 1..3 {
        if x[k].abs() < x[axis].abs() {
            axis = k;
        }
    }
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let e1 = normalize(&sub(&a, &scale(dot(&a, x), x)));
    let e2 = cross(x, &e1);
    [e1, e2]
}

fn log_map(x: &Vec3, frame: &[Vec3; 2], y: &Vec3) -> [f64; 2] {
    let c = dot(x, y);
    let v = sub(y, &scale(c, x));
    let s = norm(&v);
    if s == 0.0 {
        return [0.0, 0.0];
    }
    let theta = s.atan2(c);
    let k = theta / s;
    [k * dot(&v, &frame[0]), k * dot(&v, &frame[1])]
}

/// Polynomial degree of the derivative fit; nodes whose two-ring is too small
/// for it (only on the level-0 grid) fall back to `MIN_FIT_DEGREE`.
const FIT_DEGREE: usize = 4;
const MIN_FIT_DEGREE: usize = 3;

/// Monomials u^a v^b with 1 <= a + b <= degree; the quadratic ones are scaled so
/// their coefficients are second derivatives.
fn fit_columns(u: f64, v: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree * (degree + 3) / 2);
    for d in 1..=degree {
        for b in 0..=d {
            let mut m = u.powi((d - b) as i32) * v.powi(b as i32);
            if d == 2 && b != 1 {
                m *= 0.5;
            }
            out.push(m);
        }
    }
    out
}

/// Weighted least-squares polynomial fit of `u(y) - u(x)` in normal coordinates.
fn fit_stencil(center: usize, nodes: &[Vec3], frame: &[Vec3; 2], members: Vec<usize>) -> Result<Stencil> {
    let x = &nodes[center];
    let m = members.len() - 1;
    let columns = |d: usize| d * (d + 3) / 2;
    let Some(degree) = (MIN_FIT_DEGREE..=FIT_DEGREE).rev().find(|&d| m >= columns(d)) else {
        return Err(Error::DegenerateStencil {
            node: center,
            reason: format!(
                "{m} neighbours, a degree-{MIN_FIT_DEGREE} fit needs at least {}",
                columns(MIN_FIT_DEGREE)
            ),
        });
    };
    let ncols = columns(degree);
    let coords: Vec<[f64; 2]> = members[1..]
        .iter()
        .map(|&j| log_map(x, frame, &nodes[j]))
        .collect();
    let r0 = coords
        .iter()
        .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
        .sum::<f64>()
        / m as f64;
    if !(r0 > 0.0) {
        return Err(Error::DegenerateStencil {
            node: center,
            reason: "neighbours coincide with the node".into(),
        });
    }

    let mut a = DMatrix::<f64>::zeros(m, ncols);
    let mut w = DVector::<f64>::zeros(m);
    for (row, c) in coords.iter().enumerate() {
        let (u, v) = (c[0] / r0, c[1] / r0);
        let r2 = u * u + v * v;
        let sw = 1.0 / (1.0 + r2);
        w[row] = sw;
        for (k, val) in fit_columns(u, v, degree).iter().enumerate() {
            a[(row, k)] = sw * val;
        }
    }
    // P = R^{-1} Q^T from a Householder QR of the weighted design matrix.
    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..ncols).map(|k| r[(k, k)].abs()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(dmin > 1e-9 * dmax) {
        return Err(Error::DegenerateStencil {
            node: center,
            reason: format!("ill-conditioned fit (R diagonal {dmin:.3e} / {dmax:.3e})"),
        });
    }
    let qt = qr.q().transpose();
    let pinv = r
        .solve_upper_triangular(&qt)
        .ok_or_else(|| Error::DegenerateStencil {
            node: center,
            reason: "singular triangular factor".into(),
        })?;

    let mut d1 = vec![[0.0; 2]; m + 1];
    let mut d2 = vec![[0.0; 3]; m + 1];
    for j in 0..m {
        let sw = w[j];
        d1[j + 1] = [pinv[(0, j)] * sw / r0, pinv[(1, j)] * sw / r0];
        let r02 = r0 * r0;
        d2[j + 1] = [pinv[(2, j)] * sw / r02, pinv[(3, j)] * sw / r02, pinv[(4, j)] * sw / r02];
    }
    // The fit acts on differences u_j - u_0, so the centre weight balances the rest.
    for c in 0..2 {
        d1[0][c] = -(1..=m).fold(0.0, |s, j| s + d1[j][c]);
    }
    for c in 0..3 {
        d2[0][c] = -(1..=m).fold(0.0, |s, j| s + d2[j][c]);
    }
    Ok(Stencil {
        nodes: members,
        d1,
        d2,
    })
}

fn canonical_bits(x: &Vec3) -> [u64; 3] {
    // Adding +0.0 maps -0.0 to +0.0.
    [(x[0] + 0.0).to_bits(), (x[1] + 0.0).to_bits(), (x[2] + 0.0).to_bits()]
}

fn antipodal_pairs(nodes: &[Vec3]) -> Result<Vec<usize>> {
    let lookup: HashMap<[u64; 3], usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, x)| (canonical_bits(x), i))
        .collect();
    nodes
        .iter()
        .enumerate()
        .map(|(i, x)| {
            lookup
                .get(&canonical_bits(&scale(-1.0, x)))
                .copied()
                .ok_or(Error::NotAntipodal { node: i })
        })
        .collect()
}

/// Signed area (spherical excess) of the geodesic triangle abc.
pub(crate) fn spherical_triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let det = dot(a, &cross(b, c));
    let denom = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * det.atan2(denom)
}

/// Areas of the spherical Voronoi cells, accumulated triangle by triangle
/// through the circumcentre and edge midpoints.
fn voronoi_weights(nodes: &[Vec3], triangles: &[[usize; 3]]) -> Vec<f64> {
    let mut w = vec![0.0; nodes.len()];
    for t in triangles {
        let (a, b, c) = (&nodes[t[0]], &nodes[t[1]], &nodes[t[2]]);
        let mut o = normalize(&cross(&sub(b, a), &sub(c, a)));
        if dot(&o, &add(&add(a, b), c)) < 0.0 {
            o = scale(-1.0, &o);
        }
        let mab = normalize(&add(a, b));
        let mbc = normalize(&add(b, c));
        let mca = normalize(&add(c, a));
        w[t[0]] += spherical_triangle_area(a, &mab, &o) + spherical_triangle_area(a, &o, &mca);
        w[t[1]] += spherical_triangle_area(b, &mbc, &o) + spherical_triangle_area(b, &o, &mab);
        w[t[2]] += spherical_triangle_area(c, &mca, &o) + spherical_triangle_area(c, &o, &mbc);
    }
    w
}

/// Regular icosahedron with vertices at both poles; lower ring is the exact
/// negation of the upper ring.
fn icosahedron() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let z = 1.0 / 5f64.sqrt();
    let r = 2.0 / 5f64.sqrt();
    let mut nodes = vec![[0.0, 0.0, 1.0]];
    for k in 0..5 {
        let t = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        nodes.push(normalize(&[r * t.cos(), r * t.sin(), z]));
    }
    for k in 0..5 {
        nodes.push(scale(-1.0, &nodes[1 + k]));
    }
    nodes.push([0.0, 0.0, -1.0]);

    let up = |k: usize| 1 + k % 5;
    // lower vertex between upper k and upper k+1 in longitude
    let lo = |k: usize| 6 + (k + 3) % 5;
    let mut tris = Vec::with_capacity(20);
    for k in 0..5 {
        tris.push([0, up(k), up(k + 1)]);
        tris.push([up(k), lo(k), up(k + 1)]);
        tris.push([lo(k), lo(k + 1), up(k + 1)]);
        tris.push([11, lo(k), lo(k + 1)]);
    }
    for t in &mut tris {
        if dot(&nodes[t[0]], &cross(&nodes[t[1]], &nodes[t[2]])) < 0.0 {
            t.swap(1, 2);
        }
    }
    (nodes, tris)
}

fn subdivide(nodes: &mut Vec<Vec3>, tris: &mut Vec<[usize; 3]>) {
    let mut mids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Vec3>| -> usize {
        let key = (a.min(b), a.max(b));
        *mids.entry(key).or_insert_with(|| {
            nodes.push(normalize(&add(&nodes[key.0], &nodes[key.1])));
            nodes.len() - 1
        })
    };
    let mut out = Vec::with_capacity(tris.len() * 4);
    for t in tris.iter() {
        let ab = midpoint(t[0], t[1], nodes);
        let bc = midpoint(t[1], t[2], nodes);
        let ca = midpoint(t[2], t[0], nodes);
        out.push([t[0], ab, ca]);
        out.push([t[1], bc, ab]);
        out.push([t[2], ca, bc]);
        out.push([ab, bc, ca]);
    }
    *tris = out;
}
