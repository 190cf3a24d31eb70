//! Radial grids, the discrete Laplacian, quadrature and energy functionals.
//!
//! Nodes are cell centres `r_i = φ(s_i)` of a uniform grid in a computational
//! coordinate `s`, with either `φ(s) = s` or `φ(s) = a·sinh(s/a)`. The
//! Laplacian is written in flux form so that it is symmetric with respect to
//! the quadrature weights and maps `r²` to `2D` exactly. The outer face sits
//! at `r_max` and carries the homogeneous Dirichlet condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub r_max: f64,
    /// Width `a` of the sinh map. `None` means uniform spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stretch: Option<f64>,
}

impl GridSpec {
    pub fn uniform(dim: usize, n: usize, r_max: f64) -> Self {
        GridSpec {
            dim,
            n,
            r_max,
            stretch: None,
        }
    }

    pub fn stretched(dim: usize, n: usize, r_max: f64, a: f64) -> Self {
        GridSpec {
            dim,
            n,
            r_max,
            stretch: Some(a),
        }
    }

    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::new(*self)
    }

    pub fn refined(&self) -> Self {
        GridSpec {
            n: 2 * self.n,
            ..*self
        }
    }
}

type Map = Box<dyn Fn(f64) -> f64>;

/// Half-open radial window `[lo, hi)`; `hi = ∞` means up to `r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const FULL: Window = Window {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0) || !(lo < hi) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        Ok(Window { lo, hi })
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r < self.hi
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    spec: GridSpec,
    r: Vec<f64>,
    w: Vec<f64>,
    // face k sits between node k and node k+1 (the last one at r_max)
    face_r: Vec<f64>,
    face_c: Vec<f64>,
    gap: Vec<f64>,
}

impl RadialGrid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let GridSpec {
            dim,
            n,
            r_max,
            stretch,
        } = spec;
        if dim < 3 {
            return Err(Error::DegenerateGrid(format!("dimension {dim} < 3")));
        }
        if n < MIN_NODES {
            return Err(Error::DegenerateGrid(format!(
                "{n} nodes, need at least {MIN_NODES}"
            )));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::DegenerateGrid(format!("r_max = {r_max}")));
        }
        if let Some(a) = stretch {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::DegenerateGrid(format!("stretch width {a}")));
            }
        }

        let (s_max, phi, dphi): (f64, Map, Map) = match stretch {
            None => (r_max, Box::new(|s| s), Box::new(|_| 1.0)),
            Some(a) => (
                a * (r_max / a).asinh(),
                Box::new(move |s| a * (s / a).sinh()),
                Box::new(move |s| (s / a).cosh()),
            ),
        };
        let ds = s_max / n as f64;
        let p = (dim - 1) as i32;

        let mut r = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        for i in 0..n {
            let s = (i as f64 + 0.5) * ds;
            let ri = phi(s);
            let j = ri.powi(p) * dphi(s);
            r.push(ri);
            jac.push(j);
            w.push(ds * j);
        }
        // midpoint rule endpoint correction ds²/24·J'(s_max), one-sided in J
        w[n - 1] += ds / 24.0 * 2.0 * jac[n - 1];
        w[n - 2] += ds / 24.0 * -3.0 * jac[n - 2];
        w[n - 3] += ds / 24.0 * jac[n - 3];

        let mut face_r = Vec::with_capacity(n);
        let mut face_c = Vec::with_capacity(n);
        let mut gap = Vec::with_capacity(n);
        let d = dim as f64;
        let mut cum = 0.0;
        for i in 0..n {
            cum += w[i];
            if i + 1 < n {
                face_r.push(phi((i + 1) as f64 * ds));
                face_c.push(2.0 * d * cum / (r[i] + r[i + 1]));
                gap.push(r[i + 1] - r[i]);
            } else {
                face_r.push(r_max);
                face_c.push(d * cum / r_max);
                gap.push(r_max - r[i]);
            }
        }
        if r.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::DegenerateGrid("nodes not increasing".into()));
        }

        Ok(RadialGrid {
            spec,
            r,
            w,
            face_r,
            face_c,
            gap,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.spec.r_max
    }

    pub fn nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Smallest distance between neighbouring nodes.
    pub fn h_min(&self) -> f64 {
        self.gap.iter().copied().fold(2.0 * self.r[0], f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.gap.iter().copied().fold(0.0, f64::max)
    }

    /// Local spacing around radius `r`.
    pub fn spacing_at(&self, r: f64) -> f64 {
        let k = self.r.partition_point(|&x| x < r).min(self.len() - 1);
        self.gap[k]
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.r.iter().map(|&r| f(r)).collect()
    }

    pub fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.w).map(|(a, w)| a * w).sum()
    }

    pub fn integrate_in(&self, f: &[f64], win: Window) -> f64 {
        self.r
            .iter()
            .zip(f.iter().zip(&self.w))
            .filter(|(r, _)| win.contains(**r))
            .map(|(_, (a, w))| a * w)
            .sum()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.w).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).sqrt()
    }

    /// Δu with an even reflection at the origin and u = 0 at `r_max`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.laplacian_into(u, &mut out);
        out
    }

    pub fn laplacian_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.len();
        let mut left = 0.0;
        for i in 0..n {
            let right_val = if i + 1 < n { u[i + 1] } else { 0.0 };
            let right = self.face_c[i] * (right_val - u[i]) / self.gap[i];
            out[i] = (right - left) / self.w[i];
            left = right;
        }
    }

    /// Tridiagonal stiffness matrix `K` with `−Δ = diag(w)⁻¹ K`.
    /// Returns the diagonal and the super-diagonal.
    pub fn stiffness(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let g: Vec<f64> = (0..n).map(|k| self.face_c[k] / self.gap[k]).collect();
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = g[i] + if i > 0 { g[i - 1] } else { 0.0 };
        }
        let off = g[..n - 1].iter().map(|x| -x).collect();
        (diag, off)
    }

    /// ∫ (∂_r u)² r^{D−1} dr over the faces whose midpoint lies in `win`.
    pub fn dirichlet_in(&self, u: &[f64], win: Window) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for k in 0..n {
            let right = if k + 1 < n { u[k + 1] } else { 0.0 };
            let mid = if k + 1 < n {
                0.5 * (self.r[k] + self.r[k + 1])
            } else {
                0.5 * (self.r[k] + self.r_max())
            };
            if win.contains(mid) {
                let du = right - u[k];
                acc += self.face_c[k] * du * du / self.gap[k];
            }
        }
        acc
    }

    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.dirichlet_in(u, Window::FULL)
    }

    /// ∂_r u at the nodes: three-point stencil, even ghost at the origin and
    /// the Dirichlet value at `r_max`.
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let (xm, um) = if i == 0 {
                    (-self.r[0], u[0])
                } else {
                    (self.r[i - 1], u[i - 1])
                };
                let (xp, up) = if i + 1 < n {
                    (self.r[i + 1], u[i + 1])
                } else {
                    (self.r_max(), 0.0)
                };
                let x0 = self.r[i];
                let h1 = x0 - xm;
                let h2 = xp - x0;
                -h2 / (h1 * (h1 + h2)) * um + (h2 - h1) / (h1 * h2) * u[i] + h1 / (h2 * (h1 + h2)) * up
            })
            .collect()
    }

    /// Four-point Lagrange interpolation of nodal values, using the even
    /// reflection below the first node and the Dirichlet zero at `r_max`.
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        let n = self.len() as isize;
        let r = r.abs();
        if r >= self.r_max() {
            return 0.0;
        }
        let point = |k: isize| -> (f64, f64) {
            if k < 0 {
                let j = (-k - 1) as usize;
                (-self.r[j], values[j])
            } else if k >= n {
                (self.r_max() + (k - n) as f64 * self.gap[self.len() - 1], 0.0)
            } else {
                (self.r[k as usize], values[k as usize])
            }
        };
        let k = self.r.partition_point(|&x| x <= r) as isize - 1;
        let pts = [point(k - 1), point(k), point(k + 1), point(k + 2)];
        let mut acc = 0.0;
        for (i, &(xi, yi)) in pts.iter().enumerate() {
            let mut l = 1.0;
            for (j, &(xj, _)) in pts.iter().enumerate() {
                if i != j {
                    l *= (r - xj) / (xi - xj);
                }
            }
            acc += l * yi;
        }
        acc
    }

    /// Positions of the cell faces; the last one is `r_max`.
    pub fn faces(&self) -> &[f64] {
        &self.face_r
    }
}

/// A state (u, u̇) sampled on grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
}

impl FieldPair {
    pub fn new(u: Vec<f64>, udot: Vec<f64>) -> Result<Self> {
        if u.len() != udot.len() {
            return Err(Error::LengthMismatch {
                expected: u.len(),
                got: udot.len(),
            });
        }
        Ok(FieldPair { u, udot })
    }

    pub fn zeros(n: usize) -> Self {
        FieldPair {
            u: vec![0.0; n],
            udot: vec![0.0; n],
        }
    }

    pub fn static_field(u: Vec<f64>) -> Self {
        let n = u.len();
        FieldPair {
            u,
            udot: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        FieldPair {
            u: self.u.iter().map(|x| c * x).collect(),
            udot: self.udot.iter().map(|x| c * x).collect(),
        }
    }

    /// `self + c·other`
    pub fn axpy(&self, c: f64, other: &FieldPair) -> Self {
        FieldPair {
            u: self.u.iter().zip(&other.u).map(|(a, b)| a + c * b).collect(),
            udot: self
                .udot
                .iter()
                .zip(&other.udot)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &FieldPair) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.udot).all(|x| x.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.u.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn check_pair(grid: &RadialGrid, f: &FieldPair) -> Result<()> {
    grid.check_len(&f.u)?;
    grid.check_len(&f.udot)
}

/// Squared localized energy norm ∫_{lo}^{hi} [u̇² + (∂_r u)² + u²/r²] r^{D−1} dr.
pub fn energy_norm_sq(grid: &RadialGrid, f: &FieldPair, lo: f64, hi: f64) -> Result<f64> {
    let win = Window::new(lo, hi)?;
    check_pair(grid, f)?;
    let mut acc = grid.dirichlet_in(&f.u, win);
    for (i, &r) in grid.nodes().iter().enumerate() {
        if win.contains(r) {
            acc += grid.weights()[i] * (f.udot[i] * f.udot[i] + f.u[i] * f.u[i] / (r * r));
        }
    }
    Ok(acc)
}

pub fn energy_norm(grid: &RadialGrid, f: &FieldPair, lo: f64, hi: f64) -> Result<f64> {
    energy_norm_sq(grid, f, lo, hi).map(f64::sqrt)
}

/// Full-range energy norm.
pub fn e_norm(grid: &RadialGrid, f: &FieldPair) -> f64 {
    energy_norm(grid, f, 0.0, f64::INFINITY).expect("full window is never empty")
}

/// Critical exponent 2D/(D−2).
pub fn critical_power(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 - 2.0)
}

/// ∫ ½[u̇² + (∂_r u)²] − (D−2)/(2D)|u|^{2D/(D−2)} over the window.
pub fn nonlinear_energy(grid: &RadialGrid, f: &FieldPair, lo: f64, hi: f64) -> Result<f64> {
    let win = Window::new(lo, hi)?;
    check_pair(grid, f)?;
    let d = grid.dim() as f64;
    let p = critical_power(grid.dim());
    let mut acc = 0.5 * grid.dirichlet_in(&f.u, win);
    for (i, &r) in grid.nodes().iter().enumerate() {
        if win.contains(r) {
            let w = grid.weights()[i];
            acc += w * (0.5 * f.udot[i] * f.udot[i] - (d - 2.0) / (2.0 * d) * f.u[i].abs().powf(p));
        }
    }
    Ok(acc)
}

/// Full-range nonlinear energy E(u, u̇).
pub fn energy(grid: &RadialGrid, f: &FieldPair) -> f64 {
    nonlinear_energy(grid, f, 0.0, f64::INFINITY).expect("full window is never empty")
}
