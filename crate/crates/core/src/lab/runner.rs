//! Executes scenarios: integrates, records the enabled diagnostics, writes
//! tables, checkpoints, plots and the manifest, and decides the exit status.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolve::{Observer, RunStatus, Sample};
use crate::grid::{energy_norm_sq, FieldPair, RadialGrid};
use crate::lab::output::{fmt_float, Artifact, ArtifactWriter, Checkpoint, Table};
use crate::lab::plots::render_plots;
use crate::lab::scenario::{Scenario, SCHEMA_VERSION};
use crate::modulation::{TrackSettings, Tracker};
use crate::spectral::{default_spectral_grid, least_squares_slope, SpectralPack};
use crate::trapping::{etilde_rate, etilde_rate_short, trap_check, z_functional, GroundStateLevels};
use crate::virial::{truncated_q, CutoffSchedule, Multiplier, ResidualSummary, VirialRecorder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

/// Environment variable holding the number of parallel workers.
pub const WORKERS_ENV: &str = "CRITWAVE_WORKERS";

/// Energy budget tolerance relative to |E(0)|.
pub const BUDGET_TOLERANCE: f64 = 1e-3;
/// Allowed energy increase per unit time relative to max(1, |E(0)|) when α > 0.
pub const MONOTONE_TOLERANCE: f64 = 1e-6;

/// Exit status for an error raised before or during a run.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::EmptyInterval { .. }
        | Error::LengthMismatch { .. }
        | Error::DegenerateGrid(_)
        | Error::UnsupportedDimension { .. }
        | Error::UnderResolved { .. }
        | Error::QProperty { .. } => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where spectral packs are cached; computed afresh when `None`.
    pub cache_dir: Option<PathBuf>,
    /// Overrides the scenario's output directory.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub name: String,
    pub status: RunStatus,
    pub exit_code: i32,
    pub t_final: f64,
    pub samples: usize,
    pub dt: f64,
    pub support_radius: f64,
    pub scenario: Scenario,
    pub checks: Vec<Check>,
    pub virial: Vec<(String, ResidualSummary)>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub dir: PathBuf,
    pub status: RunStatus,
    pub exit_code: i32,
    pub checks: Vec<Check>,
}

struct Recorder<'a> {
    scenario: &'a Scenario,
    energies: Table,
    e0: Option<f64>,
    virial: Vec<VirialRecorder>,
    exterior: Table,
    trapping: Table,
    levels: Option<GroundStateLevels>,
    tracker: Option<Tracker<'a>>,
    checkpoints: Vec<(f64, FieldPair)>,
    next_checkpoint: f64,
    decay_norms: Vec<f64>,
}

impl<'a> Recorder<'a> {
    fn new(scenario: &'a Scenario, grid: &RadialGrid, pack: Option<&'a SpectralPack>) -> Self {
        let diag = &scenario.diagnostics;
        let virial = diag
            .virial
            .as_ref()
            .map(|v| {
                let sched = CutoffSchedule {
                    rho0: v.rho,
                    rate: v.rho_rate,
                };
                Multiplier::ALL
                    .iter()
                    .map(|m| VirialRecorder::new(sched, *m, scenario.alpha, scenario.nonlinearity))
                    .collect()
            })
            .unwrap_or_default();
        let tracker = match (diag.modulation, pack) {
            (true, Some(p)) => {
                let mut settings = TrackSettings::default();
                if let Some(m) = diag.max_bubbles {
                    settings.max_bubbles = m;
                }
                settings.refine = diag
                    .refine
                    .as_ref()
                    .map(|r| (truncated_q(grid.dim(), r.c, r.big_r), r.big_l));
                Some(Tracker::new(p, settings))
            }
            _ => None,
        };
        Recorder {
            scenario,
            energies: Table::new([
                "t",
                "energy",
                "e_norm",
                "dissipated",
                "kinetic",
                "sup_norm",
                "budget_defect",
                "decay_norm",
            ]),
            e0: None,
            virial,
            exterior: Table::new(["t", "rho", "exterior"]),
            trapping: Table::new([
                "t",
                "energy",
                "grad_sq",
                "k",
                "j",
                "z",
                "etilde",
                "etilde_rate",
                "etilde_rate_short",
                "inside_trap",
            ]),
            levels: diag.trapping.then(|| GroundStateLevels::on(grid)),
            tracker,
            checkpoints: vec![],
            next_checkpoint: diag.checkpoint_every.unwrap_or(f64::INFINITY),
            decay_norms: vec![],
        }
    }
}

impl Observer for Recorder<'_> {
    fn observe(&mut self, grid: &RadialGrid, s: &Sample, state: &FieldPair) {
        let e0 = *self.e0.get_or_insert(s.energy);
        let decay = s.kinetic.sqrt() + grid.dirichlet(&state.u).sqrt();
        self.decay_norms.push(decay);
        self.energies.push_floats(&[
            s.t,
            s.energy,
            s.e_norm,
            s.dissipated,
            s.kinetic,
            s.sup_norm,
            s.energy - e0 + s.dissipated,
            decay,
        ]);
        for v in &mut self.virial {
            v.record(grid, s.t, state);
        }
        if let Some(ext) = &self.scenario.diagnostics.exterior_energy {
            let rho = (ext.rho0 + ext.rate * s.t).max(0.0);
            let value = energy_norm_sq(grid, state, rho, f64::INFINITY).unwrap_or(0.0);
            self.exterior.push_floats(&[s.t, rho, value]);
        }
        if let Some(levels) = &self.levels {
            let a = self.scenario.alpha;
            let rep = trap_check(grid, state, a, levels);
            self.trapping.push(vec![
                fmt_float(s.t),
                fmt_float(rep.e_value),
                fmt_float(rep.grad_sq),
                fmt_float(rep.k_value),
                fmt_float(rep.j_value),
                fmt_float(z_functional(grid, state, a)),
                fmt_float(rep.etilde_value),
                fmt_float(etilde_rate(grid, state, a)),
                fmt_float(etilde_rate_short(grid, state, a)),
                (rep.inside_trap as u8).to_string(),
            ]);
        }
        if let Some(tr) = &mut self.tracker {
            tr.process(grid, s.t, state);
        }
        if s.t + 1e-9 >= self.next_checkpoint {
            self.checkpoints.push((s.t, state.clone()));
            self.next_checkpoint += self
                .scenario
                .diagnostics
                .checkpoint_every
                .unwrap_or(f64::INFINITY);
        }
    }
}

fn virial_table(recs: &[VirialRecorder]) -> Table {
    let mut header = vec!["t".to_string(), "rho".to_string()];
    for r in recs {
        let n = r.multiplier.name();
        header.extend([format!("v_{n}"), format!("rhs_{n}"), format!("residual_{n}")]);
    }
    let mut table = Table::new(header);
    let Some(first) = recs.first() else {
        return table;
    };
    let residuals: Vec<Vec<(f64, f64)>> = recs.iter().map(|r| r.residuals()).collect();
    for (k, &t) in first.times.iter().enumerate() {
        let mut row = vec![fmt_float(t), fmt_float(first.schedule.at(t).rho)];
        for (r, res) in recs.iter().zip(&residuals) {
            row.push(fmt_float(r.values[k]));
            row.push(fmt_float(r.rhs[k]));
            // residuals exist for samples 2..n−2
            let cell = if k >= 2 && k - 2 < res.len() {
                fmt_float(res[k - 2].1)
            } else {
                String::new()
            };
            row.push(cell);
        }
        table.push(row);
    }
    table
}

fn load_pack(dim: usize, opts: &RunOptions) -> Result<SpectralPack> {
    let spec = default_spectral_grid(dim, 2048);
    match &opts.cache_dir {
        Some(dir) => SpectralPack::load_or_compute(dir, spec),
        None => SpectralPack::compute(spec),
    }
}

/// Run one scenario file end to end.
pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<RunReport> {
    let scenario = Scenario::load(path)?;
    let dir = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| scenario.output_dir(path));
    run_loaded(&scenario, &dir, opts)
}

pub fn run_loaded(scenario: &Scenario, dir: &Path, opts: &RunOptions) -> Result<RunReport> {
    scenario.validate()?;
    let cfg = scenario.run_config();
    let dim = cfg.dim();
    let needs_pack = cfg.initial.needs_spectrum() || scenario.diagnostics.modulation;
    let pack = if needs_pack {
        Some(load_pack(dim, opts)?)
    } else {
        None
    };
    let prepared = cfg.prepare(pack.as_ref())?;
    let grid = &prepared.grid;

    let mut rec = Recorder::new(scenario, grid, pack.as_ref());
    let traj = prepared.run(false, &mut rec);
    let last_t = traj.samples.last().map(|s| s.t).unwrap_or(0.0);

    let mut out = ArtifactWriter::new(dir)?;
    out.table("energies.csv", &rec.energies)?;
    let mut virial_summary = vec![];
    if !rec.virial.is_empty() {
        out.table("virial.csv", &virial_table(&rec.virial))?;
        for v in &rec.virial {
            virial_summary.push((v.multiplier.name().to_string(), v.summary()));
        }
    }
    if scenario.diagnostics.exterior_energy.is_some() {
        out.table("exterior.csv", &rec.exterior)?;
    }
    if rec.levels.is_some() {
        out.table("trapping.csv", &rec.trapping)?;
    }
    let track = rec.tracker.take().map(|t| t.track);
    if let Some(track) = &track {
        let mut buf = vec![];
        track.write_csv(&mut buf)?;
        out.write("modulation.csv", &buf)?;
        let mut ev = Table::new(["t", "bubbles", "reason"]);
        for e in &track.events {
            ev.push(vec![fmt_float(e.t), e.bubbles.to_string(), e.reason.clone()]);
        }
        out.table("modulation_events.csv", &ev)?;
    }
    for (t, st) in &rec.checkpoints {
        out.json(
            &format!("checkpoints/t{t:.4}.json"),
            &Checkpoint::new(*t, *grid.spec(), st),
        )?;
    }
    out.json(
        "checkpoints/last.json",
        &Checkpoint::new(last_t, *grid.spec(), &traj.last),
    )?;

    // checks
    let mut checks = vec![];
    let samples = &traj.samples;
    let e0 = samples[0].energy;
    let defect = samples
        .iter()
        .map(|s| (s.energy - e0 + s.dissipated).abs())
        .fold(0.0, f64::max);
    let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
    checks.push(Check::at_most(
        "energy_budget",
        defect / scale,
        BUDGET_TOLERANCE,
        "max |E(t) − E(0) + α∫∫u_t²| / |E(0)|",
    ));
    if scenario.alpha > 0.0 {
        let rise = samples
            .windows(2)
            .map(|w| (w[1].energy - w[0].energy) / (w[1].t - w[0].t))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::at_most(
            "energy_monotone",
            rise / e0.abs().max(1.0),
            MONOTONE_TOLERANCE,
            "largest energy increase per unit time",
        ));
    }
    let ex = &scenario.expect;
    if let Some(limit) = ex.max_d {
        let worst = track
            .as_ref()
            .map(|tr| {
                let n_rows = tr.rows.len();
                let fitted = tr.fits().count();
                if fitted < n_rows {
                    f64::INFINITY
                } else {
                    tr.fits().map(|(_, f)| f.d_value).fold(0.0, f64::max)
                }
            })
            .unwrap_or(f64::INFINITY);
        checks.push(Check::at_most(
            "max_d",
            worst,
            limit,
            "sup_t d(t); ∞ when a fit failed or tracking is off",
        ));
    }
    if let Some(limit) = ex.final_decay_ratio {
        let first = rec.decay_norms.first().copied().unwrap_or(0.0);
        let last = rec.decay_norms.last().copied().unwrap_or(0.0);
        let ratio = if first > 0.0 { last / first } else { 0.0 };
        checks.push(Check::at_most(
            "final_decay_ratio",
            ratio,
            limit,
            "(‖u̇‖ + ‖∇u‖)(t_end) / (‖u̇‖ + ‖∇u‖)(0)",
        ));
    }
    if ex.interaction_sign {
        let mut check = Check {
            name: "interaction_sign".into(),
            value: f64::NAN,
            limit: 0.0,
            passed: false,
            note: "slope of β₁ times ι₁ι₂ must be positive".into(),
        };
        if let Some(tr) = &track {
            let pts: Vec<(f64, f64)> = tr
                .fits()
                .filter_map(|(t, f)| f.beta.as_ref().map(|b| (t, b[0])))
                .collect();
            let sign = tr
                .fits()
                .next()
                .filter(|(_, f)| f.iotas.len() >= 2)
                .map(|(_, f)| (f.iotas[0] * f.iotas[1]) as f64);
            if let (Some(sign), true) = (sign, pts.len() >= 3) {
                let slope = least_squares_slope(&pts).0;
                check.value = sign * slope;
                check.passed = sign * slope > 0.0;
            }
        }
        checks.push(check);
    }

    let exit_code = match traj.status {
        RunStatus::BlowupCandidate => EXIT_BLOWUP,
        RunStatus::NonFinite => EXIT_NUMERICAL,
        RunStatus::Completed if checks.iter().all(|c| c.passed) => EXIT_OK,
        RunStatus::Completed => EXIT_NUMERICAL,
    };

    for (name, svg) in render_plots(dir)? {
        out.write(&format!("plots/{name}"), svg.as_bytes())?;
    }
    let mut artifacts = out.artifacts.clone();
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        name: scenario.name.clone(),
        status: traj.status,
        exit_code,
        t_final: last_t,
        samples: samples.len(),
        dt: prepared.dt,
        support_radius: prepared.support_radius,
        scenario: scenario.clone(),
        checks: checks.clone(),
        virial: virial_summary,
        artifacts,
    };
    out.json("manifest.json", &manifest)?;
    Ok(RunReport {
        name: scenario.name.clone(),
        dir: dir.to_path_buf(),
        status: traj.status,
        exit_code,
        checks,
    })
}

/// Run several scenario files on `workers` threads; results keep input order.
pub fn run_batch(paths: &[PathBuf], opts: &RunOptions, workers: usize) -> Vec<Result<RunReport>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport>>>> = Mutex::new((0..paths.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, paths.len().max(1)) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= paths.len() {
                    break;
                }
                let r = run_scenario(&paths[k], opts);
                results.lock().expect("worker panicked")[k] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every index is claimed once"))
        .collect()
}

/// Worst exit code over a batch.
pub fn batch_exit_code(results: &[Result<RunReport>]) -> i32 {
    results
        .iter()
        .map(|r| match r {
            Ok(rep) => rep.exit_code,
            Err(e) => exit_code_for(e),
        })
        .max()
        .unwrap_or(EXIT_OK)
}
