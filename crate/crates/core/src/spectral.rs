//! The linearized operator ℒ_λ = −Δ − f'(W_λ), its negative mode, the
//! stable/unstable forms built from it and the orthogonality profile Z.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bubbles::{lambda_ground_state, lambda_w, lambda_w_scaled, nonlinearity_deriv, BubbleFamily};
use crate::error::{Error, Result};
use crate::grid::{FieldPair, GridSpec, RadialGrid};

/// Nodes per unit of λ required near r = λ.
pub const MIN_NODES_PER_SCALE: f64 = 32.0;

/// Symmetric tridiagonal form `A = w^{1/2} ℒ w^{−1/2}` of the linearized operator.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    potential: Vec<f64>,
}

pub fn linearized_operator(grid: &RadialGrid, lambda: f64) -> Result<LinearizedOperator> {
    let per_unit = lambda / grid.spacing_at(lambda);
    if per_unit < MIN_NODES_PER_SCALE {
        return Err(Error::UnderResolved {
            lambda,
            per_unit,
            required: MIN_NODES_PER_SCALE,
        });
    }
    let dim = grid.dim();
    let potential = grid.sample(|r| nonlinearity_deriv(dim, lambda_w(dim, lambda, r)));
    Ok(schrodinger_form(grid, potential))
}

/// −Δ − V in symmetric tridiagonal form for an arbitrary potential.
pub fn schrodinger_form(grid: &RadialGrid, potential: Vec<f64>) -> LinearizedOperator {
    let (k_diag, k_off) = grid.stiffness();
    let w = grid.weights();
    let diag = (0..grid.len()).map(|i| k_diag[i] / w[i] - potential[i]).collect();
    let off = (0..grid.len() - 1)
        .map(|i| k_off[i] / (w[i] * w[i + 1]).sqrt())
        .collect();
    LinearizedOperator { diag, off, potential }
}

impl LinearizedOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// ℒu = −Δu − V u on nodal values.
    pub fn apply(&self, grid: &RadialGrid, u: &[f64]) -> Vec<f64> {
        let lap = grid.laplacian(u);
        lap.iter()
            .zip(u.iter().zip(&self.potential))
            .map(|(l, (v, p))| -l - p * v)
            .collect()
    }

    /// Number of eigenvalues strictly below `sigma` (Sturm sequence).
    pub fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let b2 = if i > 0 {
                self.off[i - 1] * self.off[i - 1]
            } else {
                0.0
            };
            q = self.diag[i] - sigma - if i > 0 { b2 / q } else { 0.0 };
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + sigma.abs() + 1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin_low(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < self.len() {
                    self.off[i].abs()
                } else {
                    0.0
                };
                self.diag[i] - left - right
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// The k-th smallest eigenvalue by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let mut lo = self.gershgorin_low();
        let mut hi = self
            .diag
            .iter()
            .zip(0..)
            .map(|(d, i): (&f64, usize)| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < self.len() {
                    self.off[i].abs()
                } else {
                    0.0
                };
                d + left + right
            })
            .fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector (in the symmetric variables) for an isolated eigenvalue.
    pub fn eigenvector(&self, eigenvalue: f64) -> Vec<f64> {
        let n = self.len();
        let shift = eigenvalue - 1e-10 * eigenvalue.abs().max(1e-3);
        let mut x = vec![1.0; n];
        for _ in 0..4 {
            x = self.solve_shifted(shift, &x);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        x
    }

    /// Solve (A − σ)x = b with the Thomas algorithm.
    pub fn solve_shifted(&self, sigma: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut piv = self.diag[0] - sigma;
        c[0] = if n > 1 { self.off[0] / piv } else { 0.0 };
        d[0] = b[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - sigma - self.off[i - 1] * c[i - 1];
            if i + 1 < n {
                c[i] = self.off[i] / piv;
            }
            d[i] = (b[i] - self.off[i - 1] * d[i - 1]) / piv;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct NegativeMode {
    pub kappa: f64,
    /// Nodal values, unit weighted L² norm, positive at the origin.
    pub y: Vec<f64>,
    pub second_eigenvalue: f64,
}

pub fn negative_mode(grid: &RadialGrid) -> Result<NegativeMode> {
    if grid.dim() < 4 {
        return Err(Error::UnsupportedDimension {
            dim: grid.dim(),
            reason: "the negative mode is computed for D ≥ 4",
        });
    }
    let op = linearized_operator(grid, 1.0)?;
    let count = op.count_below(0.0);
    if count != 1 {
        return Err(Error::Spectral(format!(
            "{count} negative eigenvalues, expected exactly one"
        )));
    }
    let e0 = op.eigenvalue(0);
    let e1 = op.eigenvalue(1);
    let v = op.eigenvector(e0);
    let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
    let y: Vec<f64> = v
        .iter()
        .zip(grid.weights())
        .map(|(x, w)| sign * x / w.sqrt())
        .collect();
    let mode = NegativeMode {
        kappa: (-e0).sqrt(),
        y,
        second_eigenvalue: e1,
    };
    if !(decay_slope(grid, &mode.y) < 0.0) {
        return Err(Error::Spectral("negative mode does not decay".into()));
    }
    Ok(mode)
}

/// Slope of log|Y| against r between r = 10 and r_max/2.
pub fn decay_slope(grid: &RadialGrid, y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = grid
        .nodes()
        .iter()
        .zip(y)
        .filter(|(r, v)| **r >= 10.0 && **r <= 0.5 * grid.r_max() && v.abs() > 1e-250)
        .map(|(r, v)| (*r, v.abs().ln()))
        .collect();
    least_squares_slope(&pts).0
}

/// Slope and RMS residual of a straight-line fit.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rms = (pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, rms)
}

/// The compactly supported bump exp(−1/(1−t²)) placed on [a, b].
pub fn bump(a: f64, b: f64, r: f64) -> f64 {
    let t = (2.0 * r - a - b) / (b - a);
    if t.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - t * t)).exp()
    }
}

pub const Z_INNER: (f64, f64) = (0.5, 1.0);
pub const Z_OUTER: (f64, f64) = (1.5, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZProfile {
    /// Z = ΛW (D ≥ 7).
    LambdaW,
    /// Z = sign·(Z₀ − c·Z₁) with bumps on [1/2, 1] and [3/2, 2].
    Bumps { c: f64, sign: f64 },
}

impl ZProfile {
    pub fn eval(&self, dim: usize, r: f64) -> f64 {
        match *self {
            ZProfile::LambdaW => lambda_ground_state(dim, r),
            ZProfile::Bumps { c, sign } => {
                sign * (bump(Z_INNER.0, Z_INNER.1, r) - c * bump(Z_OUTER.0, Z_OUTER.1, r))
            }
        }
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            ZProfile::LambdaW => None,
            ZProfile::Bumps { .. } => Some((Z_INNER.0, Z_OUTER.1)),
        }
    }
}

/// Pick Z: ΛW for D ≥ 7, otherwise the two-bump profile orthogonal to Y
/// with ⟨Z, ΛW⟩ > 0.
pub fn choose_z(grid: &RadialGrid, y: &[f64]) -> Result<ZProfile> {
    let dim = grid.dim();
    if dim >= 7 {
        return Ok(ZProfile::LambdaW);
    }
    let z0 = grid.sample(|r| bump(Z_INNER.0, Z_INNER.1, r));
    let z1 = grid.sample(|r| bump(Z_OUTER.0, Z_OUTER.1, r));
    let c = grid.inner(&z0, y) / grid.inner(&z1, y);
    let lw = grid.sample(|r| lambda_ground_state(dim, r));
    let raw: Vec<f64> = z0.iter().zip(&z1).map(|(a, b)| a - c * b).collect();
    let p = grid.inner(&raw, &lw);
    let scale = grid.norm(&raw) * grid.norm(&lw);
    if !(p.abs() > 1e-6 * scale) {
        return Err(Error::Config(format!(
            "orthogonality profile is degenerate: ⟨Z, ΛW⟩ = {p:e}"
        )));
    }
    Ok(ZProfile::Bumps { c, sign: p.signum() })
}

/// Default grid for spectral computations in dimension `dim`.
pub fn default_spectral_grid(dim: usize, n: usize) -> GridSpec {
    GridSpec::stretched(dim, n, 60.0, 4.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralPack {
    pub dim: usize,
    pub kappa: f64,
    pub grid: GridSpec,
    pub y: Vec<f64>,
    pub z: ZProfile,
    pub second_eigenvalue: f64,
    #[serde(skip)]
    cached_grid: Option<RadialGrid>,
}

impl SpectralPack {
    pub fn compute(spec: GridSpec) -> Result<Self> {
        let grid = spec.build()?;
        let mode = negative_mode(&grid)?;
        let z = choose_z(&grid, &mode.y)?;
        Ok(SpectralPack {
            dim: spec.dim,
            kappa: mode.kappa,
            grid: spec,
            y: mode.y,
            z,
            second_eigenvalue: mode.second_eigenvalue,
            cached_grid: Some(grid),
        })
    }

    pub fn for_dim(dim: usize) -> Result<Self> {
        Self::compute(default_spectral_grid(dim, 2048))
    }

    pub fn cache_path(dir: &Path, spec: &GridSpec) -> PathBuf {
        let stretch = spec.stretch.map(|a| format!("-a{a}")).unwrap_or_default();
        dir.join(format!(
            "spectral-d{}-n{}-r{}{}.json",
            spec.dim, spec.n, spec.r_max, stretch
        ))
    }

    /// Load from `dir` if a pack for this grid is cached there, else compute and store it.
    pub fn load_or_compute(dir: &Path, spec: GridSpec) -> Result<Self> {
        let path = Self::cache_path(dir, &spec);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(mut pack) = serde_json::from_str::<SpectralPack>(&text) {
                if pack.grid == spec && pack.y.len() == spec.n {
                    pack.cached_grid = Some(spec.build()?);
                    return Ok(pack);
                }
            }
        }
        let pack = Self::compute(spec)?;
        std::fs::create_dir_all(dir)?;
        std::fs::write(&path, serde_json::to_string(&pack)?)?;
        Ok(pack)
    }

    fn grid(&self) -> RadialGrid {
        match &self.cached_grid {
            Some(g) => g.clone(),
            None => self.grid.build().expect("pack grid was valid when built"),
        }
    }

    /// Y(r) by interpolation on the pack grid.
    pub fn y_at(&self, r: f64) -> f64 {
        match &self.cached_grid {
            Some(g) => g.interpolate(&self.y, r),
            None => self.grid().interpolate(&self.y, r),
        }
    }

    pub fn z_at(&self, r: f64) -> f64 {
        self.z.eval(self.dim, r)
    }

    /// Z_λ̲ = λ^{−D/2} Z(·/λ) on `grid`.
    pub fn z_l2(&self, grid: &RadialGrid, lambda: f64) -> Vec<f64> {
        let c = lambda.powf(-(self.dim as f64) / 2.0);
        grid.sample(|r| c * self.z_at(r / lambda))
    }

    /// Y_λ̲ on `grid`, renormalized to unit weighted L² norm there.
    pub fn y_l2(&self, grid: &RadialGrid, lambda: f64) -> Vec<f64> {
        let g = self.grid();
        let mut v = grid.sample(|r| g.interpolate(&self.y, r / lambda));
        let n = grid.norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    pub fn alpha_forms(&self, grid: &RadialGrid, lambda: f64) -> AlphaForms {
        AlphaForms {
            lambda,
            kappa: self.kappa,
            y_l2: self.y_l2(grid, lambda),
        }
    }

    /// ⟨Z, ΛW⟩ and ⟨Z, Y⟩ on the pack grid.
    pub fn z_pairings(&self) -> (f64, f64) {
        let g = self.grid();
        let z = g.sample(|r| self.z_at(r));
        let lw = g.sample(|r| lambda_ground_state(self.dim, r));
        (g.inner(&z, &lw), g.inner(&z, &self.y))
    }
}

/// The linear forms α±_λ together with the modes Y±_λ they are dual to.
///
/// Y_λ is taken as λ·Y_λ̲ so that both slots are built from one grid
/// function and the pairing matrix is the identity for every λ.
#[derive(Debug, Clone)]
pub struct AlphaForms {
    pub lambda: f64,
    pub kappa: f64,
    pub y_l2: Vec<f64>,
}

impl AlphaForms {
    fn pair(&self, grid: &RadialGrid, g: &FieldPair, sign: f64) -> f64 {
        0.5 * (self.kappa / self.lambda * grid.inner(&self.y_l2, &g.u)
            + sign * grid.inner(&self.y_l2, &g.udot))
    }

    /// ⟨α⁺_λ, g⟩
    pub fn plus(&self, grid: &RadialGrid, g: &FieldPair) -> f64 {
        self.pair(grid, g, 1.0)
    }

    /// ⟨α⁻_λ, g⟩
    pub fn minus(&self, grid: &RadialGrid, g: &FieldPair) -> f64 {
        self.pair(grid, g, -1.0)
    }

    fn mode(&self, sign: f64) -> FieldPair {
        let c = self.lambda / self.kappa;
        FieldPair {
            u: self.y_l2.iter().map(|v| c * v).collect(),
            udot: self.y_l2.iter().map(|v| sign * v).collect(),
        }
    }

    pub fn y_plus(&self) -> FieldPair {
        self.mode(1.0)
    }

    pub fn y_minus(&self) -> FieldPair {
        self.mode(-1.0)
    }

    /// [[⟨α⁻,Y⁻⟩, ⟨α⁻,Y⁺⟩], [⟨α⁺,Y⁻⟩, ⟨α⁺,Y⁺⟩]]
    pub fn pairing_matrix(&self, grid: &RadialGrid) -> [[f64; 2]; 2] {
        let ym = self.y_minus();
        let yp = self.y_plus();
        [
            [self.minus(grid, &ym), self.minus(grid, &yp)],
            [self.plus(grid, &ym), self.plus(grid, &yp)],
        ]
    }
}

/// ∫ [ġ² + (∂_r g)² − f'(𝒲) g²] r^{D−1} dr
pub fn coercivity_form(grid: &RadialGrid, fam: &BubbleFamily, g: &FieldPair) -> f64 {
    let dim = grid.dim();
    let pot: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&g.u)
        .map(|(&r, &v)| nonlinearity_deriv(dim, fam.profile(r)) * v * v)
        .collect();
    let kin: f64 = grid.inner(&g.udot, &g.udot);
    kin + grid.dirichlet(&g.u) - grid.integrate(&pot)
}

/// ½⟨D²E(𝒲)g, g⟩ + 2Σ_j(⟨α⁻_{λ_j}, g⟩² + ⟨α⁺_{λ_j}, g⟩²)
pub fn assembled_coercivity(
    grid: &RadialGrid,
    fam: &BubbleFamily,
    pack: &SpectralPack,
    g: &FieldPair,
) -> f64 {
    let mut v = 0.5 * coercivity_form(grid, fam, g);
    for &l in &fam.lambdas {
        let a = pack.alpha_forms(grid, l);
        v += 2.0 * (a.minus(grid, g).powi(2) + a.plus(grid, g).powi(2));
    }
    v
}

/// ℒ(ΛW) residual in weighted L² on the interior half of the grid.
pub fn kernel_residual(grid: &RadialGrid, lambda: f64) -> Result<f64> {
    let op = linearized_operator(grid, lambda)?;
    let lw = grid.sample(|r| lambda_w_scaled(grid.dim(), lambda, r));
    let res = op.apply(grid, &lw);
    let half = 0.5 * grid.r_max();
    let masked: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&res)
        .map(|(r, v)| if *r < half { *v } else { 0.0 })
        .collect();
    Ok(grid.norm(&masked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn dense(op: &LinearizedOperator) -> DMatrix<f64> {
        let n = op.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = op.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = op.off[i];
                m[(i + 1, i)] = op.off[i];
            }
        }
        m
    }

    #[test]
    fn sturm_count_matches_dense_solver() {
        let grid = default_spectral_grid(6, 512).build().unwrap();
        let op = linearized_operator(&grid, 1.0).unwrap();
        let eig = SymmetricEigen::new(dense(&op));
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_eq!(op.count_below(0.0), ev.iter().filter(|v| **v < 0.0).count());
        assert!((op.eigenvalue(0) - ev[0]).abs() < 1e-10);
        assert!((op.eigenvalue(1) - ev[1]).abs() < 1e-10);
    }

    #[test]
    fn eigenpair_residual() {
        let grid = default_spectral_grid(6, 1024).build().unwrap();
        let mode = negative_mode(&grid).unwrap();
        let op = linearized_operator(&grid, 1.0).unwrap();
        let ly = op.apply(&grid, &mode.y);
        let res: Vec<f64> = ly
            .iter()
            .zip(&mode.y)
            .map(|(a, b)| a + mode.kappa.powi(2) * b)
            .collect();
        assert!(grid.norm(&res) < 1e-8);
        assert!((grid.norm(&mode.y) - 1.0).abs() < 1e-12);
        assert!(mode.y[0] > 0.0);
    }

    #[test]
    fn operator_is_symmetric() {
        let grid = default_spectral_grid(6, 512).build().unwrap();
        let op = linearized_operator(&grid, 1.0).unwrap();
        let u = grid.sample(|r| bump(1.0, 9.0, r));
        let v = grid.sample(|r| bump(3.0, 14.0, r) * r.cos());
        let a = grid.inner(&op.apply(&grid, &u), &v);
        let b = grid.inner(&u, &op.apply(&grid, &v));
        assert!((a - b).abs() <= 1e-10 * grid.norm(&u) * grid.norm(&v));
    }

    #[test]
    fn under_resolved_scale_is_rejected() {
        let grid = GridSpec::uniform(6, 64, 60.0).build().unwrap();
        assert!(matches!(
            linearized_operator(&grid, 1.0),
            Err(Error::UnderResolved { .. })
        ));
    }

    #[test]
    fn bump_profile_is_orthogonal_to_y() {
        let pack = SpectralPack::compute(default_spectral_grid(6, 1024)).unwrap();
        let (zl, zy) = pack.z_pairings();
        assert!(zl > 0.0);
        assert!(zy.abs() < 1e-8, "{zy}");
        assert_eq!(pack.z.support(), Some((0.5, 2.0)));
        assert_eq!(pack.z_at(0.3), 0.0);
        assert_eq!(pack.z_at(2.5), 0.0);
    }

    #[test]
    fn pairing_matrix_is_identity() {
        let pack = SpectralPack::compute(default_spectral_grid(6, 512)).unwrap();
        let grid = GridSpec::stretched(6, 2048, 200.0, 3.0).build().unwrap();
        for lambda in [0.5, 1.0, 2.0, 5.0] {
            let m = pack.alpha_forms(&grid, lambda).pairing_matrix(&grid);
            assert!((m[0][0] - 1.0).abs() < 1e-12);
            assert!((m[1][1] - 1.0).abs() < 1e-12);
            assert!(m[0][1].abs() < 1e-12 && m[1][0].abs() < 1e-12);
        }
        let a = pack.alpha_forms(&grid, 1.0);
        assert_eq!(a.plus(&grid, &FieldPair::zeros(grid.len())), 0.0);
    }

    #[test]
    fn least_squares_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 - 0.5 * i as f64)).collect();
        let (s, rms) = least_squares_slope(&pts);
        assert!((s + 0.5).abs() < 1e-12 && rms < 1e-12);
    }
}
