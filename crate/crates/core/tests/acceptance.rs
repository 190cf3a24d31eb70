//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a criterion outside `KNOWN_FAILURES` fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use critwave::bubbles::{
    bracket_grid, interaction_bracket, multibubble, predicted_bracket, stationarity_residual, BubbleFamily,
};
use critwave::evolve::{damped_rate, InitialData, RunConfig, Sample};
use critwave::grid::{e_norm, FieldPair, GridSpec, RadialGrid, Window};
use critwave::lab::reports::{constants_report, spectral_report};
use critwave::lab::runner::{run_loaded, RunOptions};
use critwave::lab::Scenario;
use critwave::modulation::{detect_scales, fit_modulation, refine_scales};
use critwave::propagator::{measure_decay, FreePropagator};
use critwave::spectral::{least_squares_slope, SpectralPack};
use critwave::trapping::{etilde, etilde_rate, nehari_k, trap_check, GroundStateLevels};
use critwave::virial::{CutoffSchedule, Multiplier, Nonlinearity, VirialRecorder};

/// Criteria that fail for reasons recorded in the project notes.
const KNOWN_FAILURES: [usize; 2] = [1, 9];

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn constants() -> Outcome {
    let start = Instant::now();
    let mut notes = vec![];
    let mut ok = true;
    let six = constants_report(6).expect("D = 6 table");
    for name in [
        "|LW|^2 tabulated closed form",
        "C_D = (D-2)/(2D) (D(D-2))^(D/2)",
        "<uL LW, LW> = 0",
    ] {
        let row = six.row(name).expect("row present");
        ok &= row.passed;
        notes.push(format!("D6 {name}: {:.6} (err {:.1e})", row.measured, row.error));
    }
    for dim in [5, 7] {
        let row = constants_report(dim)
            .expect("table")
            .row("<uL LW, LW> = 0")
            .cloned()
            .expect("row");
        ok &= row.passed;
        notes.push(format!("D{dim} pairing {:.1e}", row.error));
    }
    let four = constants_report(4).expect("D = 4 table");
    let row = four.row("<uL LW, LW> = 32").expect("row");
    ok &= row.passed;
    notes.push(format!("D4 pairing {:.6}", row.measured));
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 10.0;
    notes.push(format!("{secs:.1} s"));
    outcome(ok, notes.join("; "))
}

fn stationarity() -> Outcome {
    let win = Window::new(0.0, 100.0).unwrap();
    let rel = |n: usize| {
        let g = GridSpec::stretched(6, n, 200.0, 1.0).build().unwrap();
        let (res, fw) = stationarity_residual(&g, win);
        res / fw
    };
    let (coarse, fine) = (rel(4096), rel(8192));
    let ratio = coarse / fine;
    outcome(
        coarse <= 1e-4 && ratio >= 3.5,
        format!("relative residual {coarse:.3e} at N = 4096, halving gain {ratio:.2}"),
    )
}

fn run(
    cfg: &RunConfig,
    pack: Option<&SpectralPack>,
    keep: bool,
) -> (RadialGrid, Vec<Sample>, Vec<FieldPair>) {
    let p = cfg.prepare(pack).unwrap();
    let traj = p.run(keep, &mut ());
    (p.grid.clone(), traj.samples, traj.states)
}

fn trapped_config(t_end: f64) -> RunConfig {
    RunConfig {
        alpha: 1.0,
        dt: None,
        t_end,
        grid: GridSpec::uniform(6, 4096, 200.0),
        initial: InitialData::Multibubble {
            iotas: vec![1],
            lambdas: vec![1.0],
            amplitude: 0.5,
        },
        cadence: 0.1,
        nonlinearity: Nonlinearity::Focusing,
    }
}

fn energy_identity() -> Outcome {
    let mut cfg = trapped_config(20.0);
    cfg.initial = InitialData::Gaussian {
        amplitude: 0.3,
        center: 2.0,
        width: 1.5,
        velocity: 0.2,
    };
    let grid = cfg.grid.build().unwrap();
    let data = cfg.initial.materialize(&grid, 1.0, None).unwrap();
    let trapped = trap_check(&grid, &data, 1.0, &GroundStateLevels::on(&grid)).inside_trap;
    let (_, samples, _) = run(&cfg, None, false);
    let e0 = samples[0].energy;
    let worst = samples
        .iter()
        .map(|s| (s.energy - e0 + s.dissipated).abs())
        .fold(0.0, f64::max);
    let rel = worst / e0.abs();
    outcome(
        trapped && rel <= 1e-3,
        format!("trapped {trapped}, max |dE + a int u_t^2| / |E0| = {rel:.2e}"),
    )
}

fn virial_levels(
    nl: Nonlinearity,
    init: &InitialData,
    n: usize,
    r_max: f64,
    schedule: CutoffSchedule,
) -> f64 {
    let cfg = RunConfig {
        alpha: 1.0,
        dt: None,
        t_end: 4.0,
        grid: GridSpec::uniform(6, n, r_max),
        initial: init.clone(),
        cadence: 0.02,
        nonlinearity: nl,
    };
    let p = cfg.prepare(None).unwrap();
    let mut recs: Vec<VirialRecorder> = Multiplier::ALL
        .iter()
        .map(|&m| VirialRecorder::new(schedule, m, 1.0, nl))
        .collect();
    let mut obs = |g: &RadialGrid, s: &Sample, st: &FieldPair| {
        for r in recs.iter_mut() {
            r.record(g, s.t, st);
        }
    };
    p.run(false, &mut obs);
    recs.iter().map(|r| r.summary().relative).fold(0.0, f64::max)
}

fn virial() -> Outcome {
    let linear = InitialData::Gaussian {
        amplitude: 1.0,
        center: 5.0,
        width: 1.5,
        velocity: 0.0,
    };
    let trapped = InitialData::Multibubble {
        iotas: vec![1],
        lambdas: vec![1.0],
        amplitude: 0.5,
    };
    let cases = [
        (
            "linear",
            Nonlinearity::Linear,
            linear,
            40.0,
            CutoffSchedule::fixed(6.0),
        ),
        (
            "trapped",
            Nonlinearity::Focusing,
            trapped,
            200.0,
            CutoffSchedule { rho0: 6.0, rate: 0.5 },
        ),
    ];
    let mut ok = true;
    let mut notes = vec![];
    for (name, nl, init, r_max, sched) in cases {
        let coarse = virial_levels(nl, &init, 3200, r_max, sched);
        let fine = virial_levels(nl, &init, 6400, r_max, sched);
        ok &= coarse <= 1e-2 && coarse / fine >= 3.5;
        notes.push(format!(
            "{name}: {coarse:.2e} -> {fine:.2e} ({:.2}x)",
            coarse / fine
        ));
    }
    outcome(ok, notes.join("; "))
}

fn spectral() -> Outcome {
    let s = spectral_report(6, None).unwrap();
    let failed: Vec<&str> = s
        .report
        .rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name.as_str())
        .collect();
    outcome(
        s.report.passed(),
        format!(
            "counts {:?}, kappa {:?}, <Y,LW> {:.1e}, pairing {:.1e}{}",
            s.counts.iter().map(|c| c.1).collect::<Vec<_>>(),
            s.kappas.iter().map(|k| k.1).collect::<Vec<_>>(),
            s.y_lambda_w,
            s.pairing_defect,
            if failed.is_empty() {
                String::new()
            } else {
                format!(", failed {failed:?}")
            }
        ),
    )
}

fn interaction() -> Outcome {
    let start = Instant::now();
    let errs: Vec<f64> = [16.0, 32.0, 64.0]
        .iter()
        .map(|&inv| {
            let fam = BubbleFamily::new(6, vec![1, 1], vec![1.0, inv]).unwrap();
            let g = bracket_grid(&fam).build().unwrap();
            let measured = interaction_bracket(&g, &fam, 0);
            let predicted = predicted_bracket(&fam, 0);
            ((measured - predicted) / predicted).abs()
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    outcome(
        monotone && errs[2] <= 0.1 && secs < 60.0,
        format!("relative errors {errs:.3?} for mu = 1/16, 1/32, 1/64; {secs:.2} s"),
    )
}

fn round_trip(pack: &SpectralPack) -> Outcome {
    let mut ok = true;
    let mut notes = vec![];
    let g = GridSpec::stretched(6, 8192, 1.0e5, 1.0).build().unwrap();
    for (iotas, lambdas) in [
        (vec![1], vec![1.7]),
        (vec![1, 1], vec![1.0, 40.0]),
        (vec![1, -1], vec![0.8, 25.0]),
        (vec![1, -1, 1], vec![1.0, 20.0, 400.0]),
    ] {
        let fam = BubbleFamily::new(6, iotas, lambdas).unwrap();
        let state = multibubble(&g, &fam);
        let (s, l) = detect_scales(&g, &state, 4);
        let l = refine_scales(&g, &state, &s, &l);
        let fit = fit_modulation(&g, &state, &s, &l, pack).unwrap();
        let lam_err = fit
            .lambdas
            .iter()
            .zip(&fam.lambdas)
            .map(|(a, b)| (a / b - 1.0).abs())
            .fold(0.0, f64::max);
        let d_err = (fit.d_value - fam.separation().sqrt()).abs();
        ok &= s == fam.iotas && lam_err <= 1e-8 && d_err <= 1e-6;
        notes.push(format!("M={} dl {lam_err:.1e} dd {d_err:.1e}", fam.len()));
    }
    let eps = 1e-3;
    for fam in [
        BubbleFamily::single(6, 1.3),
        BubbleFamily::new(6, vec![1, 1], vec![1.0, 40.0]).unwrap(),
    ] {
        let base = multibubble(&g, &fam);
        for j in 0..fam.len() {
            let y = pack.y_l2(&g, fam.lambdas[j]);
            let raw = FieldPair {
                u: y.clone(),
                udot: y.iter().map(|v| 0.5 * v).collect(),
            };
            let pert = raw.scaled(eps / e_norm(&g, &raw));
            let state = base.axpy(1.0, &pert);
            let fit = fit_modulation(&g, &state, &fam.iotas, &fam.lambdas, pack).unwrap();
            let forms = pack.alpha_forms(&g, fam.lambdas[j]);
            let (op, om) = (forms.plus(&g, &pert), forms.minus(&g, &pert));
            let dev = ((fit.a_plus[j] - op) / op)
                .abs()
                .max(((fit.a_minus[j] - om) / om).abs());
            ok &= dev <= 0.05;
            if fam.len() == 1 {
                ok &= (eps / 10.0..=10.0 * eps).contains(&fit.d_value);
                notes.push(format!("eps: d {:.2e}", fit.d_value));
            }
            notes.push(format!("a+- vs oracle {dev:.1e}"));
        }
    }
    outcome(ok, notes.join("; "))
}

fn instability(pack: &SpectralPack) -> Outcome {
    let mu = damped_rate(1.0, pack.kappa);
    let horizon = 1.0 / mu;
    let cfg = |eps: f64| RunConfig {
        alpha: 1.0,
        dt: None,
        t_end: (horizon * 10.0).ceil() / 10.0,
        grid: GridSpec::stretched(6, 2048, 200.0, 2.0),
        initial: InitialData::UnstableSeed {
            iotas: vec![1],
            lambdas: vec![1.0],
            epsilon: eps,
            bubble: 0,
        },
        cadence: 0.1,
        nonlinearity: Nonlinearity::Focusing,
    };
    // the unseeded run carries the discretization drift of W; the difference
    // is the linear response to the seed
    let series = |eps: f64| -> (Vec<f64>, Vec<f64>) {
        let (grid, samples, states) = run(&cfg(eps), Some(pack), true);
        let a = states
            .iter()
            .map(|s| fit_modulation(&grid, s, &[1], &[1.0], pack).unwrap().a_plus[0])
            .collect();
        (samples.iter().map(|s| s.t).collect(), a)
    };
    let (t, seeded) = series(1e-4);
    let (_, reference) = series(0.0);
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(seeded.iter().zip(&reference))
        .filter(|(t, _)| **t <= horizon + 1e-9)
        .map(|(t, (a, b))| (*t, (a - b).ln()))
        .collect();
    let rate = least_squares_slope(&pts).0;
    let rel = (rate / mu - 1.0).abs();
    outcome(
        rel <= 0.1,
        format!("measured rate {rate:.5}, mu+ {mu:.5}, deviation {rel:.2e}"),
    )
}

fn trap_decay() -> Outcome {
    let cfg = trapped_config(40.0);
    let (grid, samples, states) = run(&cfg, None, true);
    let size = |s: &FieldPair| grid.norm(&s.udot) + grid.dirichlet(&s.u).sqrt();
    let ratio = size(states.last().unwrap()) / size(&states[0]);
    let k_min = states
        .iter()
        .map(|s| nehari_k(&grid, &s.u))
        .fold(f64::INFINITY, f64::min);
    let et: Vec<f64> = states.iter().map(|s| etilde(&grid, s, 1.0)).collect();
    let dt = samples[1].t - samples[0].t;
    let rise = et
        .windows(2)
        .map(|w| (w[1] - w[0]) / dt)
        .fold(f64::NEG_INFINITY, f64::max);
    // fourth-order difference against the rate formula, relative to |Ẽ(0)|
    let rate_res = (2..et.len() - 2)
        .map(|k| {
            let fd = (et[k - 2] - 8.0 * et[k - 1] + 8.0 * et[k + 1] - et[k + 2]) / (12.0 * dt);
            (fd - etilde_rate(&grid, &states[k], 1.0)).abs()
        })
        .fold(0.0, f64::max)
        / et[0].abs();
    let ok = ratio <= 0.1 && k_min >= 0.0 && rise <= 1e-3 && rate_res <= 1e-3;
    outcome(
        ok,
        format!(
            "decay ratio {ratio:.3} at t = 40, min K {k_min:.3e}, max dE~/dt {rise:.2e}, rate residual {rate_res:.2e}"
        ),
    )
}

fn linear_decay() -> Outcome {
    let start = Instant::now();
    let g = GridSpec::uniform(6, 300, 100.0).build().unwrap();
    let prop = FreePropagator::new(&g);
    let data = g.sample(|r| (-r * r / 4.0).exp());
    let fit = measure_decay(&prop, 1.0, 1.0, f64::INFINITY, &data);
    let rel = (fit.slope / fit.predicted - 1.0).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        rel <= 0.15 && secs < 30.0,
        format!(
            "slope {:.3} vs {:.1} ({:.1}%), {secs:.2} s",
            fit.slope,
            fit.predicted,
            100.0 * rel
        ),
    )
}

fn csv_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            out.insert(
                p.strip_prefix(dir).unwrap().to_path_buf(),
                std::fs::read(&p).unwrap(),
            );
        }
    }
    out
}

fn determinism() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let tmp = tempfile::tempdir().unwrap();
    let opts = RunOptions::default();
    let mut ok = !paths.is_empty();
    let mut notes = vec![];
    for path in &paths {
        let sc = Scenario::load(path).unwrap();
        let a = tmp.path().join(format!("{}-a", sc.name));
        let b = tmp.path().join(format!("{}-b", sc.name));
        run_loaded(&sc, &a, &opts).unwrap();
        run_loaded(&sc, &b, &opts).unwrap();
        let (ca, cb) = (csv_bytes(&a), csv_bytes(&b));
        let same = !ca.is_empty() && ca == cb;
        ok &= same;
        notes.push(format!(
            "{} ({} csv) {}",
            sc.name,
            ca.len(),
            if same { "identical" } else { "DIFFER" }
        ));
    }
    outcome(ok, notes.join("; "))
}

fn main() {
    let pack = SpectralPack::for_dim(6).unwrap();
    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("constants", Box::new(constants)),
        ("stationarity", Box::new(stationarity)),
        ("energy identity", Box::new(energy_identity)),
        ("virial identities", Box::new(virial)),
        ("spectral", Box::new(spectral)),
        ("interaction law", Box::new(interaction)),
        ("modulation round trip", Box::new(|| round_trip(&pack))),
        ("instability rate", Box::new(|| instability(&pack))),
        ("trap decay", Box::new(trap_decay)),
        ("linear decay exponent", Box::new(linear_decay)),
        ("determinism", Box::new(determinism)),
    ];
    let mut unexpected = vec![];
    for (k, (name, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        let o = check();
        let known = KNOWN_FAILURES.contains(&id);
        println!(
            "{} {:>2} {:<22} {}{}",
            if o.passed { "PASS" } else { "FAIL" },
            id,
            name,
            o.detail,
            if !o.passed && known { " [known]" } else { "" }
        );
        if !o.passed && !known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
