//! Ground state, its dilations, multi-bubble configurations and the
//! closed-form constants attached to them.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{FieldPair, GridSpec, RadialGrid, Window};

fn dimf(dim: usize) -> f64 {
    dim as f64
}

/// W(r) = (1 + r²/(D(D−2)))^{−(D−2)/2}
pub fn ground_state(dim: usize, r: f64) -> f64 {
    let d = dimf(dim);
    (1.0 + r * r / (d * (d - 2.0))).powf(-(d - 2.0) / 2.0)
}

/// ∂_r W
pub fn ground_state_deriv(dim: usize, r: f64) -> f64 {
    let d = dimf(dim);
    -(r / d) * (1.0 + r * r / (d * (d - 2.0))).powf(-d / 2.0)
}

/// W_λ(r) = λ^{−(D−2)/2} W(r/λ)
pub fn lambda_w(dim: usize, lambda: f64, r: f64) -> f64 {
    let d = dimf(dim);
    lambda.powf(-(d - 2.0) / 2.0) * ground_state(dim, r / lambda)
}

/// ΛW = (r∂_r + (D−2)/2)W in closed form.
pub fn lambda_ground_state(dim: usize, r: f64) -> f64 {
    let d = dimf(dim);
    let b = 1.0 + r * r / (d * (d - 2.0));
    ((d - 2.0) / 2.0 - r * r / (2.0 * d)) * b.powf(-d / 2.0)
}

/// Λ̲ΛW = (r∂_r + D/2)ΛW in closed form.
pub fn underline_lambda_lambda_w(dim: usize, r: f64) -> f64 {
    let d = dimf(dim);
    let b = 1.0 + r * r / (d * (d - 2.0));
    let g = (d - 2.0) / 2.0 - r * r / (2.0 * d);
    let dg = -r / d * b.powf(-d / 2.0) - g * r / (d - 2.0) * b.powf(-d / 2.0 - 1.0);
    r * dg + d / 2.0 * g * b.powf(-d / 2.0)
}

/// Ḣ¹-scaled ΛW_λ.
pub fn lambda_w_scaled(dim: usize, lambda: f64, r: f64) -> f64 {
    let d = dimf(dim);
    lambda.powf(-(d - 2.0) / 2.0) * lambda_ground_state(dim, r / lambda)
}

/// L²-scaled ΛW_λ̲.
pub fn lambda_w_l2_scaled(dim: usize, lambda: f64, r: f64) -> f64 {
    let d = dimf(dim);
    lambda.powf(-d / 2.0) * lambda_ground_state(dim, r / lambda)
}

/// Grid versions of Λ = r∂_r + (D−2)/2 and Λ̲ = r∂_r + D/2.
pub fn lambda_generators(grid: &RadialGrid, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = dimf(grid.dim());
    let df = grid.gradient(f);
    let mut lam = Vec::with_capacity(f.len());
    let mut ulam = Vec::with_capacity(f.len());
    for ((&r, &v), &dv) in grid.nodes().iter().zip(f).zip(&df) {
        lam.push(r * dv + (d - 2.0) / 2.0 * v);
        ulam.push(r * dv + d / 2.0 * v);
    }
    (lam, ulam)
}

/// f(u) = |u|^{4/(D−2)} u
pub fn nonlinearity(dim: usize, u: f64) -> f64 {
    match dim {
        3 => u.powi(5),
        4 => u * u * u,
        6 => u.abs() * u,
        _ => u.abs().powf(4.0 / (dimf(dim) - 2.0)) * u,
    }
}

/// f'(u) = (D+2)/(D−2) |u|^{4/(D−2)}
pub fn nonlinearity_deriv(dim: usize, u: f64) -> f64 {
    match dim {
        3 => 5.0 * u.powi(4),
        4 => 3.0 * u * u,
        6 => 2.0 * u.abs(),
        _ => {
            let d = dimf(dim);
            (d + 2.0) / (d - 2.0) * u.abs().powf(4.0 / (d - 2.0))
        }
    }
}

/// |u|^{2D/(D−2)}
pub fn potential_density(dim: usize, u: f64) -> f64 {
    match dim {
        3 => u.powi(6),
        4 => u.powi(4),
        6 => u.abs().powi(3),
        _ => u.abs().powf(2.0 * dimf(dim) / (dimf(dim) - 2.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleFamily {
    pub dim: usize,
    pub iotas: Vec<i8>,
    pub lambdas: Vec<f64>,
}

impl BubbleFamily {
    pub fn new(dim: usize, iotas: Vec<i8>, lambdas: Vec<f64>) -> Result<Self> {
        let fam = BubbleFamily { dim, iotas, lambdas };
        fam.validate()?;
        Ok(fam)
    }

    pub fn single(dim: usize, lambda: f64) -> Self {
        BubbleFamily {
            dim,
            iotas: vec![1],
            lambdas: vec![lambda],
        }
    }

    pub fn empty(dim: usize) -> Self {
        BubbleFamily {
            dim,
            iotas: vec![],
            lambdas: vec![],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::Config(format!("dimension {} < 3", self.dim)));
        }
        if self.iotas.len() != self.lambdas.len() {
            return Err(Error::Config(format!(
                "{} signs for {} scales",
                self.iotas.len(),
                self.lambdas.len()
            )));
        }
        if let Some(s) = self.iotas.iter().find(|s| s.abs() != 1) {
            return Err(Error::Config(format!("bubble sign {s} is not ±1")));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Config("bubble scales must be positive".into()));
        }
        if self.lambdas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Config("bubble scales must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// λ_j/λ_{j+1}
    pub fn ratios(&self) -> Vec<f64> {
        self.lambdas.windows(2).map(|p| p[0] / p[1]).collect()
    }

    /// Σ_j (λ_j/λ_{j+1})^{(D−2)/2}
    pub fn separation(&self) -> f64 {
        let e = (dimf(self.dim) - 2.0) / 2.0;
        self.ratios().iter().map(|x| x.powf(e)).sum()
    }

    pub fn profile(&self, r: f64) -> f64 {
        self.iotas
            .iter()
            .zip(&self.lambdas)
            .map(|(&s, &l)| s as f64 * lambda_w(self.dim, l, r))
            .sum()
    }
}

/// Fraction of r_max over which rendered bubbles are brought to zero.
pub const WALL_TAPER: f64 = 0.05;

/// 1 below (1 − WALL_TAPER)·r_max, 0 at r_max, C² quintic in between.
pub fn wall_taper(r: f64, r_max: f64) -> f64 {
    let start = (1.0 - WALL_TAPER) * r_max;
    if r <= start {
        return 1.0;
    }
    let y = ((r - start) / (r_max - start)).min(1.0);
    1.0 - y * y * y * (10.0 - 15.0 * y + 6.0 * y * y)
}

/// (Σ ι_j W_{λ_j}, 0) on the grid, tapered to zero at the wall. Without the
/// taper the Dirichlet face carries a jump worth r^{D−1}W²/h of energy.
pub fn multibubble(grid: &RadialGrid, fam: &BubbleFamily) -> FieldPair {
    let r_max = grid.r_max();
    FieldPair::static_field(grid.sample(|r| fam.profile(r) * wall_taper(r, r_max)))
}

/// Fraction of ‖∇W_λ‖² lost beyond `r_max`, largest over the family.
pub fn truncation_tail(fam: &BubbleFamily, r_max: f64) -> f64 {
    let d = dimf(fam.dim);
    let total = grad_w_sq(fam.dim);
    fam.lambdas
        .iter()
        .map(|&l| {
            let x = r_max / l;
            // |W'(x)| ≈ (D−2)(D(D−2))^{(D−2)/2} x^{1−D} for large x
            let c = (d - 2.0) * (d * (d - 2.0)).powf((d - 2.0) / 2.0);
            c * c * x.powf(2.0 - d) / (d - 2.0) / total
        })
        .fold(0.0, f64::max)
}

/// ‖∇W‖² = ∫ |W'|² r^{D−1} dr in closed form.
pub fn grad_w_sq(dim: usize) -> f64 {
    // with t = r²/(D(D−2)) the integral is a Beta function
    let d = dimf(dim);
    let k = d * (d - 2.0);
    k.powf(d / 2.0) / (2.0 * d * d) * k * beta(d / 2.0 + 1.0, d / 2.0 - 1.0)
}

fn beta(a: f64, b: f64) -> f64 {
    gamma(a) * gamma(b) / gamma(a + b)
}

/// f_i = f(Σ ι_j W_{λ_j}) − Σ ι_j f(W_{λ_j})
pub fn interaction_term(grid: &RadialGrid, fam: &BubbleFamily) -> Vec<f64> {
    let dim = fam.dim;
    grid.sample(|r| {
        let mut total = 0.0;
        let mut separate = 0.0;
        for (&s, &l) in fam.iotas.iter().zip(&fam.lambdas) {
            let v = s as f64 * lambda_w(dim, l, r);
            total += v;
            separate += nonlinearity(dim, v);
        }
        nonlinearity(dim, total) - separate
    })
}

/// ⟨ΛW_{λ_j} | f_i⟩ by quadrature, `j` zero-based.
pub fn interaction_bracket(grid: &RadialGrid, fam: &BubbleFamily, j: usize) -> f64 {
    let fi = interaction_term(grid, fam);
    let lw = grid.sample(|r| lambda_w_scaled(fam.dim, fam.lambdas[j], r));
    grid.inner(&lw, &fi)
}

/// Leading-order prediction ι_{j−1}C_D(λ_{j−1}/λ_j)^{(D−2)/2} − ι_{j+1}C_D(λ_j/λ_{j+1})^{(D−2)/2}.
pub fn predicted_bracket(fam: &BubbleFamily, j: usize) -> f64 {
    let c = bracket_constant(fam.dim);
    let e = (dimf(fam.dim) - 2.0) / 2.0;
    let mut v = 0.0;
    if j > 0 {
        v += fam.iotas[j - 1] as f64 * c * (fam.lambdas[j - 1] / fam.lambdas[j]).powf(e);
    }
    if j + 1 < fam.len() {
        v -= fam.iotas[j + 1] as f64 * c * (fam.lambdas[j] / fam.lambdas[j + 1]).powf(e);
    }
    v
}

/// A grid fine enough at the smallest scale and long enough for the largest.
pub fn bracket_grid(fam: &BubbleFamily) -> GridSpec {
    let lo = fam.lambdas.first().copied().unwrap_or(1.0);
    let hi = fam.lambdas.last().copied().unwrap_or(1.0);
    let a = lo;
    let r_max = 200.0 * hi;
    let s_max = a * (r_max / a).asinh();
    let n = ((s_max / (a / 64.0)).ceil() as usize).max(1024);
    GridSpec::stretched(fam.dim, n, r_max, a)
}

/// C_D = (D−2)/(2D)·(D(D−2))^{D/2}
pub fn bracket_constant(dim: usize) -> f64 {
    let d = dimf(dim);
    (d - 2.0) / (2.0 * d) * (d * (d - 2.0)).powf(d / 2.0)
}

/// ‖ΛW‖²_{L²} by the tabulated closed form; finite only for D ≥ 5.
/// This formula does not agree with the integral, see [`lambda_w_l2sq_exact`].
pub fn lambda_w_l2sq(dim: usize) -> Result<f64> {
    if dim < 5 {
        return Err(Error::UnsupportedDimension {
            dim,
            reason: "ΛW is not square integrable for D ≤ 4",
        });
    }
    let d = dimf(dim);
    Ok(
        2.0 * (d * d - 4.0) * (d * (d - 2.0)).powf(d / 2.0) / (d * d * (d - 4.0)) * gamma(1.0 + d / 2.0)
            / gamma(d),
    )
}

/// ‖ΛW‖²_{L²} evaluated directly: with s = r²/(D(D−2)),
/// ((D−2)/2)²·½k^{D/2}[B(D/2, D/2−2) − 4B(D/2+1, D/2−1)].
pub fn lambda_w_l2sq_exact(dim: usize) -> Result<f64> {
    if dim < 5 {
        return Err(Error::UnsupportedDimension {
            dim,
            reason: "ΛW is not square integrable for D ≤ 4",
        });
    }
    let d = dimf(dim);
    let k = d * (d - 2.0);
    let h = d / 2.0;
    Ok(((d - 2.0) / 2.0).powi(2) * 0.5 * k.powf(h) * (beta(h, h - 2.0) - 4.0 * beta(h + 1.0, h - 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleConstants {
    pub dim: usize,
    /// ‖ΛW‖² from the integral.
    pub lambda_w_l2sq: Option<f64>,
    /// ‖ΛW‖² from the tabulated closed form.
    pub lambda_w_l2sq_closed_form: Option<f64>,
    pub bracket_const: f64,
    /// ω² = C_D/‖ΛW‖², with the integral value.
    pub omega_sq: Option<f64>,
    pub omega_sq_closed_form: Option<f64>,
}

pub fn bubble_constants(dim: usize) -> BubbleConstants {
    let lw = lambda_w_l2sq_exact(dim).ok();
    let closed = lambda_w_l2sq(dim).ok();
    let c = bracket_constant(dim);
    BubbleConstants {
        dim,
        lambda_w_l2sq: lw,
        lambda_w_l2sq_closed_form: closed,
        bracket_const: c,
        omega_sq: lw.map(|v| c / v),
        omega_sq_closed_form: closed.map(|v| c / v),
    }
}

/// Wide stretched grid on which the ground state's algebraic tails are
/// integrated to high relative accuracy.
pub fn quadrature_grid(dim: usize, r_max: f64) -> Result<RadialGrid> {
    let a = 1.0;
    let s_max = a * (r_max / a).asinh();
    let n = (s_max / 0.004).ceil() as usize;
    GridSpec::stretched(dim, n, r_max, a).build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    /// Analytic estimate of what lies beyond the grid, already added to `value`.
    pub tail: f64,
}

/// ∫ (ΛW)² r^{D−1} dr on a wide grid plus the algebraic tail.
pub fn lambda_w_l2sq_quadrature(dim: usize) -> Result<Quadrature> {
    if dim < 5 {
        return Err(Error::UnsupportedDimension {
            dim,
            reason: "ΛW is not square integrable for D ≤ 4",
        });
    }
    let r_max = 1.0e6;
    let g = quadrature_grid(dim, r_max)?;
    let lw = g.sample(|r| lambda_ground_state(dim, r));
    let d = dimf(dim);
    // ΛW ≈ −c r^{2−D}, c = (D(D−2))^{D/2}/(2D)
    let c = (d * (d - 2.0)).powf(d / 2.0) / (2.0 * d);
    let tail = c * c * r_max.powf(4.0 - d) / (d - 4.0);
    Ok(Quadrature {
        value: g.inner(&lw, &lw) + tail,
        tail,
    })
}

/// C_D recovered as −∫ f'(W)ΛW r^{D−1} dr. Since ℒΛW = 0 this is the flux
/// −lim R^{D−1}(ΛW)'(R) of the harmonic tail of ΛW.
pub fn bracket_constant_quadrature(dim: usize) -> Result<f64> {
    let g = quadrature_grid(dim, 1.0e6)?;
    let v = g.sample(|r| nonlinearity_deriv(dim, ground_state(dim, r)) * lambda_ground_state(dim, r));
    Ok(-g.integrate(&v))
}

/// ⟨Λ̲ΛW, ΛW⟩ together with ‖ΛW‖·‖Λ̲ΛW‖ for scale.
pub fn generator_pairing_quadrature(dim: usize) -> Result<(f64, f64)> {
    let g = quadrature_grid(dim, 1.0e6)?;
    let lw = g.sample(|r| lambda_ground_state(dim, r));
    let ulw = g.sample(|r| underline_lambda_lambda_w(dim, r));
    let pairing = g.inner(&ulw, &lw);
    let scale = g.norm(&lw) * g.norm(&ulw);
    Ok((pairing, scale))
}

/// ∫₀^R (ΛW)² r^{D−1} dr, the regularized quantity for D = 4.
pub fn lambda_w_truncated(dim: usize, radius: f64) -> Result<f64> {
    let g = quadrature_grid(dim, radius)?;
    let lw = g.sample(|r| lambda_ground_state(dim, r));
    Ok(g.inner(&lw, &lw))
}

/// ∫ (∂_r W)² r^{D−1} and ∫ |W|^{2D/(D−2)} r^{D−1} on a grid.
pub fn ground_state_norms(grid: &RadialGrid) -> (f64, f64) {
    let w = grid.sample(|r| ground_state(grid.dim(), r));
    let pot: Vec<f64> = w.iter().map(|&v| potential_density(grid.dim(), v)).collect();
    (grid.dirichlet(&w), grid.integrate(&pot))
}

/// (‖ΔW + f(W)‖, ‖f(W)‖) in weighted L² over `win`. Keep `win` away from the
/// wall, where the truncated W carries a jump.
pub fn stationarity_residual(grid: &RadialGrid, win: Window) -> (f64, f64) {
    let dim = grid.dim();
    let w = grid.sample(|r| ground_state(dim, r));
    let fw: Vec<f64> = w.iter().map(|&v| nonlinearity(dim, v)).collect();
    let res: Vec<f64> = grid.laplacian(&w).iter().zip(&fw).map(|(a, b)| a + b).collect();
    let sq = |v: &[f64]| {
        grid.integrate_in(&v.iter().map(|x| x * x).collect::<Vec<_>>(), win)
            .sqrt()
    };
    (sq(&res), sq(&fw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_state_values() {
        assert_eq!(ground_state(6, 0.0), 1.0);
        assert!((ground_state(4, 8f64.sqrt()) - 0.5).abs() < 1e-15);
        let far = ground_state(6, 100.0);
        assert!((far / 5.76e-6 - 1.0).abs() < 0.03);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for dim in [4, 5, 6, 7] {
            for r in [0.3, 1.0, 4.0, 17.0] {
                let h = 1e-5;
                let fd = (ground_state(dim, r + h) - ground_state(dim, r - h)) / (2.0 * h);
                assert!((fd - ground_state_deriv(dim, r)).abs() < 1e-8);
                let lw = r * ground_state_deriv(dim, r) + (dim as f64 - 2.0) / 2.0 * ground_state(dim, r);
                assert!((lw - lambda_ground_state(dim, r)).abs() < 1e-14);
                let fd = (lambda_ground_state(dim, r + h) - lambda_ground_state(dim, r - h)) / (2.0 * h);
                let ul = r * fd + dim as f64 / 2.0 * lambda_ground_state(dim, r);
                assert!((ul - underline_lambda_lambda_w(dim, r)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn lambda_w_at_origin() {
        for dim in 3..9 {
            assert_eq!(lambda_ground_state(dim, 0.0), (dim as f64 - 2.0) / 2.0);
        }
    }

    #[test]
    fn nonlinearity_values() {
        assert_eq!(nonlinearity(6, -2.0), -4.0);
        assert_eq!(nonlinearity_deriv(6, -2.0), 4.0);
        assert_eq!(nonlinearity(4, 3.0), 27.0);
        assert_eq!(nonlinearity_deriv(4, 3.0), 27.0);
        assert!((nonlinearity(5, 2.0) - 2f64.powf(7.0 / 3.0)).abs() < 1e-12);
        assert_eq!(nonlinearity(7, 0.0), 0.0);
    }

    #[test]
    fn closed_form_constants() {
        assert!((lambda_w_l2sq(6).unwrap() - 614.4).abs() < 1e-9);
        assert!((bracket_constant(6) - 4608.0).abs() < 1e-9);
        let c = bubble_constants(6);
        assert!((c.omega_sq_closed_form.unwrap() - 7.5).abs() < 1e-12);
        assert!((c.omega_sq.unwrap() - 1.25).abs() < 1e-12);
        assert!((lambda_w_l2sq_exact(6).unwrap() - 3686.4).abs() < 1e-9);
        for d in 5..=8 {
            let q = lambda_w_l2sq_quadrature(d).unwrap().value;
            assert!((q / lambda_w_l2sq_exact(d).unwrap() - 1.0).abs() < 1e-6, "{d}");
        }
        assert!(lambda_w_l2sq(4).is_err());
        assert!(bubble_constants(4).omega_sq.is_none());
    }

    #[test]
    fn family_validation() {
        assert!(BubbleFamily::new(6, vec![1, 1], vec![2.0, 1.0]).is_err());
        assert!(BubbleFamily::new(6, vec![1, 0], vec![1.0, 2.0]).is_err());
        assert!(BubbleFamily::new(6, vec![1], vec![1.0, 2.0]).is_err());
        let f = BubbleFamily::new(6, vec![1, -1], vec![1.0, 32.0]).unwrap();
        assert_eq!(f.ratios(), vec![1.0 / 32.0]);
    }

    #[test]
    fn single_bubble_has_no_interaction() {
        let g = GridSpec::uniform(6, 256, 50.0).build().unwrap();
        let fam = BubbleFamily::single(6, 1.0);
        assert!(interaction_term(&g, &fam).iter().all(|v| *v == 0.0));
        assert_eq!(interaction_bracket(&g, &fam, 0), 0.0);
        assert_eq!(predicted_bracket(&fam, 0), 0.0);
        let empty = multibubble(&g, &BubbleFamily::empty(6));
        assert!(empty.u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grad_w_closed_form() {
        let g = quadrature_grid(6, 1e5).unwrap();
        let (grad, pot) = ground_state_norms(&g);
        assert!((grad / grad_w_sq(6) - 1.0).abs() < 1e-4);
        let dw: Vec<f64> = g.sample(|r| ground_state_deriv(6, r).powi(2));
        assert!((g.integrate(&dw) / grad_w_sq(6) - 1.0).abs() < 1e-8);
        // Nehari identity
        assert!((grad - pot).abs() < 1e-4 * grad);
    }
}
