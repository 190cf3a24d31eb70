//! Method-of-lines RK4 integration of the damped flow
//! u̇ = v, v̇ = Δu − αv + f(u), with diagnostics at a fixed cadence.

use serde::{Deserialize, Serialize};

use crate::bubbles::{multibubble, BubbleFamily};
use crate::error::{Error, Result};
use crate::grid::{e_norm, energy, energy_norm_sq, FieldPair, GridSpec, RadialGrid};
use crate::spectral::SpectralPack;
use crate::virial::Nonlinearity;

/// A run stops as a blow-up candidate once its E-norm exceeds this multiple
/// of the initial one.
pub const BLOWUP_FACTOR: f64 = 1e3;

/// Fraction of E-norm² allowed beyond the support radius.
pub const SUPPORT_TAIL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// amplitude · Σ ι_j W_{λ_j}, at rest.
    Multibubble {
        iotas: Vec<i8>,
        lambdas: Vec<f64>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Σ ι_j W_{λ_j} + ε·(Y_λ, μ₊Y_λ) on the bubble of index `bubble`.
    UnstableSeed {
        iotas: Vec<i8>,
        lambdas: Vec<f64>,
        epsilon: f64,
        #[serde(default)]
        bubble: usize,
    },
    /// (A·exp(−(r−c)²/w²), B·exp(−(r−c)²/w²))
    Gaussian {
        amplitude: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        velocity: f64,
    },
    Samples {
        u: Vec<f64>,
        udot: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// μ₊ = (−α + √(α² + 4κ²))/2, the growth rate of the damped unstable mode.
pub fn damped_rate(alpha: f64, kappa: f64) -> f64 {
    0.5 * (-alpha + (alpha * alpha + 4.0 * kappa * kappa).sqrt())
}

impl InitialData {
    pub fn needs_spectrum(&self) -> bool {
        matches!(self, InitialData::UnstableSeed { .. })
    }

    /// Sample the data on `grid`. `pack` is required for seeded data.
    pub fn materialize(
        &self,
        grid: &RadialGrid,
        alpha: f64,
        pack: Option<&SpectralPack>,
    ) -> Result<FieldPair> {
        let dim = grid.dim();
        match self {
            InitialData::Multibubble {
                iotas,
                lambdas,
                amplitude,
            } => {
                let fam = BubbleFamily::new(dim, iotas.clone(), lambdas.clone())?;
                Ok(multibubble(grid, &fam).scaled(*amplitude))
            }
            InitialData::UnstableSeed {
                iotas,
                lambdas,
                epsilon,
                bubble,
            } => {
                let fam = BubbleFamily::new(dim, iotas.clone(), lambdas.clone())?;
                let lambda = *fam
                    .lambdas
                    .get(*bubble)
                    .ok_or_else(|| Error::Config(format!("seed bubble {bubble} out of range")))?;
                let pack = pack.ok_or_else(|| Error::Config("seeded data needs a spectral pack".into()))?;
                if pack.dim != dim {
                    return Err(Error::Config(format!(
                        "spectral pack is for D = {}, grid is D = {dim}",
                        pack.dim
                    )));
                }
                let y = pack.y_l2(grid, lambda);
                let mu = damped_rate(alpha, pack.kappa / lambda);
                let seed = FieldPair {
                    u: y.clone(),
                    udot: y.iter().map(|v| mu * v).collect(),
                };
                Ok(multibubble(grid, &fam).axpy(*epsilon, &seed))
            }
            InitialData::Gaussian {
                amplitude,
                center,
                width,
                velocity,
            } => {
                let prof = grid.sample(|r| (-((r - center) / width).powi(2)).exp());
                Ok(FieldPair {
                    u: prof.iter().map(|v| amplitude * v).collect(),
                    udot: prof.iter().map(|v| velocity * v).collect(),
                })
            }
            InitialData::Samples { u, udot } => {
                grid.check_len(u)?;
                FieldPair::new(u.clone(), udot.clone())
            }
        }
    }
}

fn default_cadence() -> f64 {
    0.1
}

fn default_nonlinearity() -> Nonlinearity {
    Nonlinearity::Focusing
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    /// Defaults to a quarter of the smallest spacing.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_end: f64,
    pub grid: GridSpec,
    pub initial: InitialData,
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    #[serde(default = "default_nonlinearity")]
    pub nonlinearity: Nonlinearity,
}

/// A validated run: grid built, data sampled, time step fixed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub grid: RadialGrid,
    pub initial: FieldPair,
    pub dt: f64,
    pub substeps: usize,
    pub support_radius: f64,
}

/// Smallest R such that the E-norm² of `f` beyond R is at most
/// `SUPPORT_TAIL` of the total.
pub fn support_radius(grid: &RadialGrid, f: &FieldPair) -> f64 {
    let total = energy_norm_sq(grid, f, 0.0, f64::INFINITY).unwrap_or(0.0);
    if total == 0.0 {
        return 0.0;
    }
    let r = grid.nodes();
    let (mut lo, mut hi) = (0usize, r.len() - 1);
    // the face against the wall carries the truncation jump, which does not travel
    let edge = r[hi] * (1.0 + 1e-12);
    let tail = |k: usize| energy_norm_sq(grid, f, r[k], edge).unwrap_or(0.0);
    if tail(0) <= SUPPORT_TAIL * total {
        return r[0];
    }
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if tail(mid) <= SUPPORT_TAIL * total {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    r[hi]
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn prepare(&self, pack: Option<&SpectralPack>) -> Result<Prepared> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be a finite number ≥ 0, got {}", self.alpha));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.cadence > 0.0) {
            return bad(format!("cadence must be positive, got {}", self.cadence));
        }
        if self.grid.dim < 3 {
            return bad(format!("grid.dim must be ≥ 3, got {}", self.grid.dim));
        }
        let grid = self.grid.build()?;
        let h = grid.h_min();
        let requested = self.dt.unwrap_or(0.25 * h);
        if !(requested > 0.0) {
            return bad(format!("dt must be positive, got {requested}"));
        }
        if requested > 0.5 * h {
            return bad(format!(
                "dt = {requested} violates the CFL bound dt ≤ 0.5·h = {}",
                0.5 * h
            ));
        }
        let substeps = (self.cadence / requested).ceil().max(1.0) as usize;
        let dt = self.cadence / substeps as f64;
        let initial = self.initial.materialize(&grid, self.alpha, pack)?;
        if !initial.is_finite() {
            return Err(Error::NonFinite { t: 0.0 });
        }
        let support_radius = support_radius(&grid, &initial);
        if support_radius + self.t_end >= grid.r_max() {
            return bad(format!(
                "support radius {support_radius:.3} + t_end {} reaches r_max {}; enlarge the grid or shorten the run",
                self.t_end,
                grid.r_max()
            ));
        }
        Ok(Prepared {
            config: self.clone(),
            grid,
            initial,
            dt,
            substeps,
            support_radius,
        })
    }
}

/// RK4 stepper for (u, v, q) with q̇ = α‖v‖², so that q accumulates the
/// dissipated energy to the same order as the state.
pub struct Integrator<'a> {
    grid: &'a RadialGrid,
    alpha: f64,
    nl: Nonlinearity,
    k: [FieldPair; 4],
    stage: FieldPair,
}

impl<'a> Integrator<'a> {
    pub fn new(grid: &'a RadialGrid, alpha: f64, nl: Nonlinearity) -> Self {
        let n = grid.len();
        Integrator {
            grid,
            alpha,
            nl,
            k: std::array::from_fn(|_| FieldPair::zeros(n)),
            stage: FieldPair::zeros(n),
        }
    }

    fn rhs(&self, s: &FieldPair, out: &mut FieldPair) -> f64 {
        let dim = self.grid.dim();
        out.u.copy_from_slice(&s.udot);
        self.grid.laplacian_into(&s.u, &mut out.udot);
        for i in 0..s.len() {
            out.udot[i] += -self.alpha * s.udot[i] + self.nl.force(dim, s.u[i]);
        }
        self.alpha * self.grid.inner(&s.udot, &s.udot)
    }

    /// Advance `state` by `dt`; returns the energy dissipated over the step.
    pub fn step(&mut self, state: &mut FieldPair, dt: f64) -> f64 {
        let n = state.len();
        let mut kq = [0.0; 4];
        let coef = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let mut out = std::mem::replace(&mut self.k[s], FieldPair::zeros(0));
            if s == 0 {
                kq[s] = self.rhs(state, &mut out);
            } else {
                for i in 0..n {
                    self.stage.u[i] = state.u[i] + coef[s] * dt * self.k[s - 1].u[i];
                    self.stage.udot[i] = state.udot[i] + coef[s] * dt * self.k[s - 1].udot[i];
                }
                let stage = std::mem::replace(&mut self.stage, FieldPair::zeros(0));
                kq[s] = self.rhs(&stage, &mut out);
                self.stage = stage;
            }
            self.k[s] = out;
        }
        for i in 0..n {
            state.u[i] +=
                dt / 6.0 * (self.k[0].u[i] + 2.0 * self.k[1].u[i] + 2.0 * self.k[2].u[i] + self.k[3].u[i]);
            state.udot[i] += dt / 6.0
                * (self.k[0].udot[i] + 2.0 * self.k[1].udot[i] + 2.0 * self.k[2].udot[i] + self.k[3].udot[i]);
        }
        dt / 6.0 * (kq[0] + 2.0 * kq[1] + 2.0 * kq[2] + kq[3])
    }
}

/// One RK4 step; allocating convenience wrapper around [`Integrator`].
pub fn step(grid: &RadialGrid, alpha: f64, nl: Nonlinearity, state: &FieldPair, dt: f64) -> FieldPair {
    let mut s = state.clone();
    Integrator::new(grid, alpha, nl).step(&mut s, dt);
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub energy: f64,
    pub e_norm: f64,
    /// α∫₀ᵗ∫u_t² accumulated by the integrator.
    pub dissipated: f64,
    /// ∫u_t² r^{D−1}dr
    pub kinetic: f64,
    pub sup_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    BlowupCandidate,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// States at each sample, when requested.
    pub states: Vec<FieldPair>,
    /// Final state, or the last finite one when the run aborted.
    pub last: FieldPair,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

/// Called at t = 0 and after every cadence interval.
pub trait Observer {
    fn observe(&mut self, grid: &RadialGrid, sample: &Sample, state: &FieldPair);
}

impl Observer for () {
    fn observe(&mut self, _: &RadialGrid, _: &Sample, _: &FieldPair) {}
}

impl<F: FnMut(&RadialGrid, &Sample, &FieldPair)> Observer for F {
    fn observe(&mut self, grid: &RadialGrid, sample: &Sample, state: &FieldPair) {
        self(grid, sample, state)
    }
}

fn sample(grid: &RadialGrid, t: f64, state: &FieldPair, dissipated: f64) -> Sample {
    Sample {
        t,
        energy: energy(grid, state),
        e_norm: e_norm(grid, state),
        dissipated,
        kinetic: grid.inner(&state.udot, &state.udot),
        sup_norm: state.sup_norm(),
    }
}

impl Prepared {
    pub fn run(&self, keep_states: bool, observer: &mut dyn Observer) -> Trajectory {
        let cfg = &self.config;
        let grid = &self.grid;
        let mut state = self.initial.clone();
        let mut integ = Integrator::new(grid, cfg.alpha, cfg.nonlinearity);
        let first = sample(grid, 0.0, &state, 0.0);
        let limit = BLOWUP_FACTOR * first.e_norm;
        observer.observe(grid, &first, &state);
        let mut samples = vec![first];
        let mut states = if keep_states { vec![state.clone()] } else { vec![] };
        let intervals = (cfg.t_end / cfg.cadence - 1e-9).ceil() as usize;
        let mut dissipated = 0.0;
        let mut status = RunStatus::Completed;
        let mut last_good = state.clone();
        'outer: for k in 1..=intervals {
            for _ in 0..self.substeps {
                dissipated += integ.step(&mut state, self.dt);
            }
            if !state.is_finite() {
                status = RunStatus::NonFinite;
                break 'outer;
            }
            let s = sample(grid, k as f64 * cfg.cadence, &state, dissipated);
            observer.observe(grid, &s, &state);
            samples.push(s);
            if keep_states {
                states.push(state.clone());
            }
            last_good.clone_from(&state);
            if first.e_norm > 0.0 && s.e_norm > limit {
                status = RunStatus::BlowupCandidate;
                break;
            }
        }
        Trajectory {
            samples,
            states,
            last: last_good,
            status,
        }
    }
}

/// (1/|window|)∫∫ u_t² r^{D−1} dr dt over [t0, t1], optionally restricted to
/// r ≤ radius. The restricted form needs stored states.
pub fn kinetic_time_average(
    grid: &RadialGrid,
    traj: &Trajectory,
    t0: f64,
    t1: f64,
    radius: Option<f64>,
) -> Result<f64> {
    if !(t1 > t0) {
        return Err(Error::EmptyInterval { lo: t0, hi: t1 });
    }
    let values: Vec<(f64, f64)> = match radius {
        None => traj.samples.iter().map(|s| (s.t, s.kinetic)).collect(),
        Some(rad) => {
            if traj.states.len() != traj.samples.len() {
                return Err(Error::Config("restricted averages need stored states".into()));
            }
            traj.samples
                .iter()
                .zip(&traj.states)
                .map(|(s, st)| {
                    let k: f64 = grid
                        .nodes()
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| **r <= rad)
                        .map(|(i, _)| grid.weights()[i] * st.udot[i] * st.udot[i])
                        .sum();
                    (s.t, k)
                })
                .collect()
        }
    };
    let eps = 1e-9 * (t1 - t0);
    let inside: Vec<&(f64, f64)> = values
        .iter()
        .filter(|(t, _)| *t >= t0 - eps && *t <= t1 + eps)
        .collect();
    if inside.len() < 2 || inside[0].0 > t0 + eps || inside[inside.len() - 1].0 < t1 - eps {
        return Err(Error::Config(format!("trajectory does not cover [{t0}, {t1}]")));
    }
    let integral: f64 = inside
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(integral / (t1 - t0))
}

/// ‖u‖²_{E(ρ, ∞)}
pub fn exterior_energy(grid: &RadialGrid, state: &FieldPair, rho: f64) -> Result<f64> {
    energy_norm_sq(grid, state, rho, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::energy_norm;

    fn config(initial: InitialData, alpha: f64, t_end: f64) -> RunConfig {
        RunConfig {
            alpha,
            dt: None,
            t_end,
            grid: GridSpec::uniform(6, 800, 200.0),
            initial,
            cadence: 0.1,
            nonlinearity: Nonlinearity::Focusing,
        }
    }

    fn w() -> InitialData {
        InitialData::Multibubble {
            iotas: vec![1],
            lambdas: vec![1.0],
            amplitude: 1.0,
        }
    }

    #[test]
    fn rate_solves_characteristic_equation() {
        for (a, k) in [(0.0, 0.5), (1.0, 0.53), (3.0, 2.0)] {
            let m = damped_rate(a, k);
            assert!((m * m + a * m - k * k).abs() < 1e-14);
            assert!(m > 0.0);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let cfg = config(
            InitialData::Gaussian {
                amplitude: 0.0,
                center: 5.0,
                width: 1.0,
                velocity: 0.0,
            },
            1.0,
            1.0,
        );
        let traj = cfg.prepare(None).unwrap().run(false, &mut ());
        assert_eq!(traj.status, RunStatus::Completed);
        assert!(traj.last.u.iter().chain(&traj.last.udot).all(|v| *v == 0.0));
    }

    #[test]
    fn ground_state_is_nearly_stationary() {
        let prep = config(w(), 1.0, 2.0).prepare(None).unwrap();
        let traj = prep.run(false, &mut ());
        // the wall jump W(r_max) travels inward at unit speed; look well inside
        let drift = energy_norm(&prep.grid, &traj.last.sub(&prep.initial), 0.0, 100.0).unwrap();
        assert!(drift < 5e-3 * e_norm(&prep.grid, &prep.initial), "{drift}");
    }

    #[test]
    fn cfl_and_support_are_enforced() {
        let mut cfg = config(w(), 0.0, 1.0);
        cfg.dt = Some(1.0);
        assert!(matches!(cfg.prepare(None), Err(Error::Config(_))));
        let cfg = config(w(), 0.0, 150.0);
        assert!(matches!(cfg.prepare(None), Err(Error::Config(_))));
        let cfg = config(
            InitialData::UnstableSeed {
                iotas: vec![1],
                lambdas: vec![1.0],
                epsilon: 1e-4,
                bubble: 0,
            },
            1.0,
            1.0,
        );
        assert!(matches!(cfg.prepare(None), Err(Error::Config(_))));
    }

    #[test]
    fn energy_budget_closes() {
        let cfg = config(
            InitialData::Gaussian {
                amplitude: 0.3,
                center: 10.0,
                width: 2.0,
                velocity: 0.1,
            },
            0.7,
            5.0,
        );
        let traj = cfg.prepare(None).unwrap().run(false, &mut ());
        let e0 = traj.samples[0].energy;
        for s in &traj.samples {
            let gap = (s.energy - e0 + s.dissipated).abs();
            assert!(gap < 1e-7 * e0.abs(), "{gap} {e0}");
        }
    }

    #[test]
    fn exterior_energy_of_ground_state() {
        let grid = GridSpec::uniform(6, 4000, 1000.0).build().unwrap();
        let f = FieldPair::static_field(grid.sample(|r| crate::bubbles::ground_state(6, r)));
        let total = exterior_energy(&grid, &f, 0.0).unwrap();
        assert!((total - e_norm(&grid, &f).powi(2)).abs() < 1e-12 * total);
        assert!(exterior_energy(&grid, &f, 100.0).unwrap() < 1e-4 * total);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"alpha":1,"t_end":1,"grid":{"dim":6,"n":100,"r_max":50},
            "initial":{"kind":"multibubble","iotas":[1],"lambdas":[1]},"bogus":1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }
}
