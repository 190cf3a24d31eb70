//! Cutoffs, the truncated potential q_{c,R}, localized virial operators and
//! the virial functionals with their cutoff error terms.

use serde::Serialize;

use crate::bubbles::{nonlinearity, potential_density};
use crate::error::{Error, Result};
use crate::grid::{FieldPair, RadialGrid};

/// 10y³ − 15y⁴ + 6y⁵ clamped to [0, 1].
pub fn smoothstep5(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else if y >= 1.0 {
        1.0
    } else {
        y * y * y * (10.0 + y * (-15.0 + 6.0 * y))
    }
}

fn smoothstep5_deriv(y: f64) -> f64 {
    if y <= 0.0 || y >= 1.0 {
        0.0
    } else {
        30.0 * y * y * (1.0 - y) * (1.0 - y)
    }
}

/// χ_ρ(r) = χ(r/ρ) with χ = 1 on [0, 1], 0 on [2, ∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cutoff {
    pub rho: f64,
}

impl Cutoff {
    pub fn new(rho: f64) -> Self {
        Cutoff { rho }
    }

    pub fn profile(x: f64) -> f64 {
        1.0 - smoothstep5(x - 1.0)
    }

    /// x·χ'(x)
    pub fn profile_r_deriv(x: f64) -> f64 {
        -x * smoothstep5_deriv(x - 1.0)
    }

    pub fn chi(&self, r: f64) -> f64 {
        Self::profile(r / self.rho)
    }

    /// (r∂_rχ)(r/ρ)
    pub fn r_dchi(&self, r: f64) -> f64 {
        Self::profile_r_deriv(r / self.rho)
    }
}

/// Degree-9 smoothstep, C⁴ at both ends, with its first three derivatives.
fn smoothstep9(y: f64) -> [f64; 4] {
    if y <= 0.0 {
        return [0.0; 4];
    }
    if y >= 1.0 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    // 126y⁵ − 420y⁶ + 540y⁷ − 315y⁸ + 70y⁹
    let c = [126.0, -420.0, 540.0, -315.0, 70.0];
    let mut out = [0.0; 4];
    for (k, &ck) in c.iter().enumerate() {
        let p = 5 + k as i32;
        let pf = p as f64;
        out[0] += ck * y.powi(p);
        out[1] += ck * pf * y.powi(p - 1);
        out[2] += ck * pf * (pf - 1.0) * y.powi(p - 2);
        out[3] += ck * pf * (pf - 1.0) * (pf - 2.0) * y.powi(p - 3);
    }
    out
}

fn smoothstep9_bounds() -> [f64; 4] {
    let mut m = [0.0f64; 4];
    for i in 0..=4000 {
        let v = smoothstep9(i as f64 / 4000.0);
        for k in 0..4 {
            m[k] = m[k].max(v[k].abs());
        }
    }
    m
}

/// A concrete q_{c,R}: q'(r) = r·s(log r) with s = 1 on [−log R, log R],
/// s = 0 outside [−log R̃, log R̃], joined by degree-9 smoothsteps of
/// log-length ℓ = log(R̃/R).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncatedQ {
    pub dim: usize,
    pub c: f64,
    pub big_r: f64,
    pub ell: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct QSamples {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ddq: Vec<f64>,
    pub lap: Vec<f64>,
    pub bilap: Vec<f64>,
}

impl TruncatedQ {
    pub fn r_tilde(&self) -> f64 {
        self.big_r * self.ell.exp()
    }

    /// s and its first three x-derivatives at x = log r.
    fn s(&self, x: f64) -> [f64; 4] {
        let l0 = self.big_r.ln();
        if x.abs() <= l0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        let sign = x.signum();
        let y = (x.abs() - l0) / self.ell;
        let st = smoothstep9(y);
        let k = sign / self.ell;
        [1.0 - st[0], -st[1] * k, -st[2] * k * k, -st[3] * k * k * k]
    }

    pub fn dq(&self, r: f64) -> f64 {
        r * self.s(r.ln())[0]
    }

    pub fn ddq(&self, r: f64) -> f64 {
        let s = self.s(r.ln());
        s[0] + s[1]
    }

    /// Δq = D·s + s_x
    pub fn lap(&self, r: f64) -> f64 {
        let s = self.s(r.ln());
        self.dim as f64 * s[0] + s[1]
    }

    /// Δ²q = r^{−2}[D(D−2)s_x + (2D−2)s_xx + s_xxx]
    pub fn bilap(&self, r: f64) -> f64 {
        let s = self.s(r.ln());
        let d = self.dim as f64;
        (d * (d - 2.0) * s[1] + (2.0 * d - 2.0) * s[2] + s[3]) / (r * r)
    }

    /// (q'/r)' = s_x / r
    pub fn dq_over_r_deriv(&self, r: f64) -> f64 {
        self.s(r.ln())[1] / r
    }

    fn integral(&self, x0: f64, x1: f64) -> f64 {
        // ∫ e^{2x} s(x) dx, composite Gauss–Legendre
        const NODES: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const WEIGHTS: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        if x1 <= x0 {
            return 0.0;
        }
        let pieces = ((x1 - x0) / 0.05).ceil().max(1.0) as usize;
        let h = (x1 - x0) / pieces as f64;
        let mut acc = 0.0;
        for p in 0..pieces {
            let mid = x0 + (p as f64 + 0.5) * h;
            for (t, w) in NODES.iter().zip(WEIGHTS) {
                let x = mid + 0.5 * h * t;
                acc += w * 0.5 * h * (2.0 * x).exp() * self.s(x)[0];
            }
        }
        acc
    }

    pub fn q(&self, r: f64) -> f64 {
        let l0 = self.big_r.ln();
        let x = r.ln();
        let lim = l0 + self.ell;
        if x.abs() <= l0 {
            0.5 * r * r
        } else if x > 0.0 {
            0.5 * self.big_r.powi(2) + self.integral(l0, x.min(lim))
        } else {
            0.5 / self.big_r.powi(2) - self.integral(x.max(-lim), -l0)
        }
    }

    pub fn sample(&self, grid: &RadialGrid) -> QSamples {
        QSamples {
            q: grid.sample(|r| self.q(r)),
            dq: grid.sample(|r| self.dq(r)),
            ddq: grid.sample(|r| self.ddq(r)),
            lap: grid.sample(|r| self.lap(r)),
            bilap: grid.sample(|r| self.bilap(r)),
        }
    }

    /// Assert properties (i)–(vi) at the given radii.
    pub fn check_at(&self, radii: &[f64]) -> Result<()> {
        let c = self.c;
        let rt = self.r_tilde();
        let fail = |index: u8, detail: String| Err(Error::QProperty { index, detail });
        for &r in radii {
            if r >= 1.0 / self.big_r && r <= self.big_r {
                let q = self.q(r);
                if (q - 0.5 * r * r).abs() > 1e-12 * q.abs().max(1e-300) {
                    return fail(1, format!("q({r}) = {q}"));
                }
            }
            if (r >= rt || r <= 1.0 / rt) && self.dq(r) != 0.0 {
                return fail(2, format!("q'({r}) = {}", self.dq(r)));
            }
            if self.dq(r).abs() > r * (1.0 + 1e-12) || self.ddq(r).abs() > 2.0 {
                return fail(3, format!("q' or q'' too large at r = {r}"));
            }
            if self.lap(r) < -c {
                return fail(4, format!("Δq({r}) = {} < −{c}", self.lap(r)));
            }
            if self.bilap(r).abs() * r * r > c {
                return fail(5, format!("r²|Δ²q| = {} at r = {r}", self.bilap(r).abs() * r * r));
            }
            if self.dq_over_r_deriv(r).abs() * r > c {
                return fail(6, format!("r|(q'/r)'| too large at r = {r}"));
            }
        }
        Ok(())
    }

    /// Log-spaced radii across [R̃⁻¹/10, 10R̃].
    pub fn check_radii(&self) -> Vec<f64> {
        let lim = self.r_tilde().ln() + 10f64.ln();
        let n = 20_000;
        (0..=n)
            .map(|k| (-lim + 2.0 * lim * k as f64 / n as f64).exp())
            .collect()
    }
}

/// Build q_{c,R} and verify its properties on a log-spaced set and on the grid.
pub fn build_q(c: f64, big_r: f64, grid: &RadialGrid) -> Result<(TruncatedQ, QSamples)> {
    if !(c > 0.0) || !(big_r > 1.0) {
        return Err(Error::Config(format!(
            "need c > 0 and R > 1, got c = {c}, R = {big_r}"
        )));
    }
    let q = truncated_q(grid.dim(), c, big_r);
    q.check_at(&q.check_radii())?;
    q.check_at(grid.nodes())?;
    Ok((q, q.sample(grid)))
}

/// The construction without verification.
pub fn truncated_q(dim: usize, c: f64, big_r: f64) -> TruncatedQ {
    let b = smoothstep9_bounds();
    let d = dim as f64;
    let bound = |l: f64| {
        let v = d * (d - 2.0) * b[1] / l + (2.0 * d - 2.0) * b[2] / (l * l) + b[3] / l.powi(3);
        v.max(b[1] / l)
    };
    let mut ell = 1.05 * (d * (d - 2.0) * b[1] / c).max(1.0);
    while bound(ell) > 0.95 * c {
        ell *= 1.05;
    }
    TruncatedQ { dim, c, big_r, ell }
}

/// (A(λ)g, A̲(λ)g)
pub fn virial_ops(q: &TruncatedQ, lambda: f64, grid: &RadialGrid, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = grid.dim() as f64;
    let dg = grid.gradient(g);
    let mut a = Vec::with_capacity(g.len());
    let mut ua = Vec::with_capacity(g.len());
    for ((&r, &v), &dv) in grid.nodes().iter().zip(g).zip(&dg) {
        let x = r / lambda;
        let transport = q.dq(x) * dv;
        let lap = q.lap(x) / lambda;
        a.push(transport + (d - 2.0) / (2.0 * d) * lap * v);
        ua.push(transport + 0.5 * lap * v);
    }
    (a, ua)
}

/// Whether the focusing term is present in the flow being audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Focusing,
    Linear,
}

impl Nonlinearity {
    pub fn force(&self, dim: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Focusing => nonlinearity(dim, u),
            Nonlinearity::Linear => 0.0,
        }
    }

    pub fn density(&self, dim: usize, u: f64) -> f64 {
        match self {
            Nonlinearity::Focusing => potential_density(dim, u),
            Nonlinearity::Linear => 0.0,
        }
    }
}

/// Multiplier M in V = ⟨∂_t u | χ_ρ M u⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Multiplier {
    /// r∂_r u
    Radial,
    /// u
    Mass,
    /// r∂_r u + (D−2)/2 u
    Dilation,
    /// r∂_r u + D/2 u
    L2Dilation,
}

impl Multiplier {
    pub const ALL: [Multiplier; 4] = [
        Multiplier::Radial,
        Multiplier::Mass,
        Multiplier::Dilation,
        Multiplier::L2Dilation,
    ];

    /// (coefficient of r∂_r u, coefficient of u)
    fn coefficients(&self, dim: usize) -> (f64, f64) {
        let d = dim as f64;
        match self {
            Multiplier::Radial => (1.0, 0.0),
            Multiplier::Mass => (0.0, 1.0),
            Multiplier::Dilation => (1.0, (d - 2.0) / 2.0),
            Multiplier::L2Dilation => (1.0, d / 2.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Multiplier::Radial => "radial",
            Multiplier::Mass => "mass",
            Multiplier::Dilation => "dilation",
            Multiplier::L2Dilation => "l2_dilation",
        }
    }
}

pub fn virial_value(grid: &RadialGrid, state: &FieldPair, cutoff: Cutoff, m: Multiplier) -> f64 {
    let (a, b) = m.coefficients(grid.dim());
    let du = grid.gradient(&state.u);
    let mut acc = 0.0;
    for (i, &r) in grid.nodes().iter().enumerate() {
        let chi = cutoff.chi(r);
        if chi != 0.0 {
            acc += grid.weights()[i] * state.udot[i] * chi * (a * r * du[i] + b * state.u[i]);
        }
    }
    acc
}

/// e^{α(t−T)}·V, the finite-time normalization.
pub fn exp_weighted(value: f64, alpha: f64, t: f64, t_ref: f64) -> f64 {
    (alpha * (t - t_ref)).exp() * value
}

/// The cutoff error terms (Ω₁, Ω₂).
pub fn omega_errors(
    grid: &RadialGrid,
    state: &FieldPair,
    cutoff: Cutoff,
    rho_prime: f64,
    nl: Nonlinearity,
) -> (f64, f64) {
    let dim = grid.dim();
    let d = dim as f64;
    let du = grid.gradient(&state.u);
    let rate = rho_prime / cutoff.rho;
    let (mut o1, mut o2) = (0.0, 0.0);
    for (i, &r) in grid.nodes().iter().enumerate() {
        let rc = cutoff.r_dchi(r);
        if rc == 0.0 {
            continue;
        }
        let w = grid.weights()[i] * rc;
        let (u, ut, ur) = (state.u[i], state.udot[i], du[i]);
        o1 +=
            w * (-rate * ut * r * ur - 0.5 * (ut * ut + ur * ur) - 0.5 * (d - 2.0) / d * nl.density(dim, u));
        o2 += w * (-rate * ut * u - ur * u / r);
    }
    (o1, o2)
}

/// Right-hand side of the virial identity for multiplier `m`.
pub fn virial_rhs(
    grid: &RadialGrid,
    state: &FieldPair,
    cutoff: Cutoff,
    rho_prime: f64,
    alpha: f64,
    m: Multiplier,
    nl: Nonlinearity,
) -> f64 {
    let dim = grid.dim();
    let d = dim as f64;
    let du = grid.gradient(&state.u);
    let (mut kin, mut pot) = (0.0, 0.0);
    for (i, &r) in grid.nodes().iter().enumerate() {
        let chi = cutoff.chi(r);
        if chi == 0.0 {
            continue;
        }
        let w = grid.weights()[i] * chi;
        kin += w * state.udot[i] * state.udot[i];
        pot += w * (du[i] * du[i] - nl.density(dim, state.u[i]));
    }
    let v = virial_value(grid, state, cutoff, m);
    let (o1, o2) = omega_errors(grid, state, cutoff, rho_prime, nl);
    let main = match m {
        Multiplier::Radial => -d / 2.0 * kin + (d - 2.0) / 2.0 * pot + o1,
        Multiplier::Mass => kin - pot + o2,
        Multiplier::Dilation => -kin + o1 + (d - 2.0) / 2.0 * o2,
        Multiplier::L2Dilation => -pot + o1 + d / 2.0 * o2,
    };
    main - alpha * v
}

/// ρ(t) = ρ₀ + rate·t
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffSchedule {
    pub rho0: f64,
    pub rate: f64,
}

impl CutoffSchedule {
    pub fn fixed(rho: f64) -> Self {
        CutoffSchedule { rho0: rho, rate: 0.0 }
    }

    pub fn at(&self, t: f64) -> Cutoff {
        Cutoff::new(self.rho0 + self.rate * t)
    }
}

/// Collects V(t) and the right-hand side at equally spaced times.
#[derive(Debug, Clone)]
pub struct VirialRecorder {
    pub schedule: CutoffSchedule,
    pub multiplier: Multiplier,
    pub nonlinearity: Nonlinearity,
    pub alpha: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub max_residual: f64,
    pub max_value: f64,
    pub relative: f64,
}

impl VirialRecorder {
    pub fn new(schedule: CutoffSchedule, multiplier: Multiplier, alpha: f64, nl: Nonlinearity) -> Self {
        VirialRecorder {
            schedule,
            multiplier,
            nonlinearity: nl,
            alpha,
            times: vec![],
            values: vec![],
            rhs: vec![],
        }
    }

    pub fn record(&mut self, grid: &RadialGrid, t: f64, state: &FieldPair) {
        let cut = self.schedule.at(t);
        self.times.push(t);
        self.values.push(virial_value(grid, state, cut, self.multiplier));
        self.rhs.push(virial_rhs(
            grid,
            state,
            cut,
            self.schedule.rate,
            self.alpha,
            self.multiplier,
            self.nonlinearity,
        ));
    }

    /// |dV/dt − RHS| at interior samples, dV/dt by fourth-order central differences.
    pub fn residuals(&self) -> Vec<(f64, f64)> {
        let n = self.times.len();
        if n < 5 {
            return vec![];
        }
        let dt = self.times[1] - self.times[0];
        (2..n - 2)
            .map(|k| {
                let v = &self.values;
                let dv = (v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / (12.0 * dt);
                (self.times[k], (dv - self.rhs[k]).abs())
            })
            .collect()
    }

    pub fn summary(&self) -> ResidualSummary {
        let max_residual = self.residuals().iter().map(|p| p.1).fold(0.0, f64::max);
        let max_value = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ResidualSummary {
            max_residual,
            max_value,
            relative: if max_value > 0.0 {
                max_residual / max_value
            } else {
                0.0
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn cutoff_shape() {
        let mut worst = 0.0f64;
        for k in 0..=3000 {
            let x = k as f64 / 1000.0;
            let v = Cutoff::profile(x);
            assert!((0.0..=1.0).contains(&v));
            worst = worst.max(Cutoff::profile_r_deriv(x).abs());
        }
        assert!(worst <= 3.0);
        assert_eq!(Cutoff::profile(0.7), 1.0);
        assert_eq!(Cutoff::profile(2.0), 0.0);
    }

    #[test]
    fn truncated_q_properties() {
        let grid = GridSpec::stretched(6, 1024, 200.0, 2.0).build().unwrap();
        for (c, r) in [(1.0, 2.0), (0.5, 10.0), (2.0, 50.0)] {
            let (q, samples) = build_q(c, r, &grid).unwrap();
            assert!((q.q(1.0) - 0.5).abs() < 1e-15);
            assert_eq!(q.dq(q.r_tilde() * 1.01), 0.0);
            assert!(samples.lap.iter().all(|v| *v + c >= 0.0));
        }
    }

    #[test]
    fn q_matches_integral_of_q_prime() {
        let q = truncated_q(6, 1.0, 3.0);
        for &r in &[0.1, 5.0, 40.0, 1e3] {
            let h = 1e-6 * r;
            let fd = (q.q(r + h) - q.q(r - h)) / (2.0 * h);
            assert!((fd / q.dq(r) - 1.0).abs() < 1e-6, "{r}");
        }
        let far = q.q(q.r_tilde() * 2.0);
        assert_eq!(far, q.q(q.r_tilde() * 5.0));
    }

    #[test]
    fn operator_difference() {
        let grid = GridSpec::uniform(6, 400, 40.0).build().unwrap();
        let q = truncated_q(6, 1.0, 4.0);
        let g = grid.sample(|r| (-(r - 3.0).powi(2)).exp());
        for lambda in [0.25, 1.0, 4.0] {
            let (a, ua) = virial_ops(&q, lambda, &grid, &g);
            for (i, &r) in grid.nodes().iter().enumerate() {
                let expect = -q.lap(r / lambda) * g[i] / (6.0 * lambda);
                assert!((a[i] - ua[i] - expect).abs() < 1e-12);
            }
            let zero = vec![0.0; grid.len()];
            assert!(virial_ops(&q, lambda, &grid, &zero).0.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn static_states_have_no_virial() {
        let grid = GridSpec::uniform(6, 200, 20.0).build().unwrap();
        let f = FieldPair::static_field(grid.sample(|r| (-r * r).exp()));
        for m in Multiplier::ALL {
            assert_eq!(virial_value(&grid, &f, Cutoff::new(3.0), m), 0.0);
        }
    }

    #[test]
    fn omega_vanishes_inside() {
        let grid = GridSpec::uniform(6, 400, 40.0).build().unwrap();
        let u = grid.sample(|r| crate::spectral::bump(0.0, 4.0, r));
        let f = FieldPair::new(u.clone(), u).unwrap();
        let (o1, o2) = omega_errors(&grid, &f, Cutoff::new(10.0), 0.7, Nonlinearity::Focusing);
        assert_eq!((o1, o2), (0.0, 0.0));
    }
}
