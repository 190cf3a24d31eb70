//! Below-ground-state functionals: Nehari K, J, Z(u⃗), the modified energy Ẽ
//! and the energy-trapping check.

use serde::Serialize;

use crate::bubbles::{multibubble, BubbleFamily};
use crate::grid::{critical_power, energy, FieldPair, RadialGrid};

/// Relative margin on the strict inequalities of the trap.
pub const TRAP_MARGIN: f64 = 1e-6;

fn power_integral(grid: &RadialGrid, u: &[f64]) -> f64 {
    let p = critical_power(grid.dim());
    grid.nodes()
        .iter()
        .enumerate()
        .map(|(i, _)| grid.weights()[i] * u[i].abs().powf(p))
        .sum()
}

/// K(u) = ‖∇u‖² − ‖u‖^{p+1}_{p+1}
pub fn nehari_k(grid: &RadialGrid, u: &[f64]) -> f64 {
    grid.dirichlet(u) - power_integral(grid, u)
}

/// J(u) = ½‖∇u‖² − ‖u‖^{p+1}_{p+1}/(p+1)
pub fn kinetic_j(grid: &RadialGrid, u: &[f64]) -> f64 {
    0.5 * grid.dirichlet(u) - power_integral(grid, u) / critical_power(grid.dim())
}

/// Z(u⃗) = ⟨u̇, u⟩ + α‖u‖²
pub fn z_functional(grid: &RadialGrid, f: &FieldPair, alpha: f64) -> f64 {
    grid.inner(&f.udot, &f.u) + alpha * grid.inner(&f.u, &f.u)
}

/// Ẽ = 2E + αZ
pub fn etilde(grid: &RadialGrid, f: &FieldPair, alpha: f64) -> f64 {
    2.0 * energy(grid, f) + alpha * z_functional(grid, f, alpha)
}

/// ½(‖u̇‖² + α²‖u‖² + ‖u̇ + αu‖²) + 2J(u)
pub fn etilde_expanded(grid: &RadialGrid, f: &FieldPair, alpha: f64) -> f64 {
    let shifted: Vec<f64> = f.udot.iter().zip(&f.u).map(|(v, u)| v + alpha * u).collect();
    0.5 * (grid.inner(&f.udot, &f.udot)
        + alpha * alpha * grid.inner(&f.u, &f.u)
        + grid.inner(&shifted, &shifted))
        + 2.0 * kinetic_j(grid, &f.u)
}

/// dẼ/dt along the flow: −α‖u̇‖² − αK(u) + α²⟨u, u̇⟩.
pub fn etilde_rate(grid: &RadialGrid, f: &FieldPair, alpha: f64) -> f64 {
    -alpha * grid.inner(&f.udot, &f.udot) - alpha * nehari_k(grid, &f.u)
        + alpha * alpha * grid.inner(&f.u, &f.udot)
}

/// The short form −3α‖u̇‖² − αK(u), without the cross terms; kept for comparison.
pub fn etilde_rate_short(grid: &RadialGrid, f: &FieldPair, alpha: f64) -> f64 {
    -3.0 * alpha * grid.inner(&f.udot, &f.udot) - alpha * nehari_k(grid, &f.u)
}

/// E(W, 0) and ‖∇W‖² sampled on a given grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundStateLevels {
    pub energy: f64,
    pub grad_sq: f64,
}

impl GroundStateLevels {
    pub fn on(grid: &RadialGrid) -> Self {
        let w = multibubble(grid, &BubbleFamily::single(grid.dim(), 1.0));
        GroundStateLevels {
            energy: energy(grid, &w),
            grad_sq: grid.dirichlet(&w.u),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapReport {
    pub e_value: f64,
    pub grad_sq: f64,
    pub grad_w_sq: f64,
    pub threshold: f64,
    pub inside_trap: bool,
    pub k_value: f64,
    pub j_value: f64,
    pub etilde_value: f64,
}

impl TrapReport {
    /// Inside the trap K must be positive (zero only for the zero state).
    pub fn consistent(&self) -> bool {
        !self.inside_trap || self.k_value > 0.0 || self.grad_sq == 0.0
    }
}

pub fn trap_check(grid: &RadialGrid, f: &FieldPair, alpha: f64, levels: &GroundStateLevels) -> TrapReport {
    let e_value = energy(grid, f);
    let grad_sq = grid.dirichlet(&f.u);
    let below_energy = e_value < levels.energy - TRAP_MARGIN * levels.energy.abs();
    let below_grad = grad_sq < levels.grad_sq * (1.0 - TRAP_MARGIN);
    TrapReport {
        e_value,
        grad_sq,
        grad_w_sq: levels.grad_sq,
        threshold: levels.energy,
        inside_trap: below_energy && below_grad,
        k_value: nehari_k(grid, &f.u),
        j_value: kinetic_j(grid, &f.u),
        etilde_value: etilde(grid, f, alpha),
    }
}
