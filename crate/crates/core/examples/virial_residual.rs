//! Localized virial identities along a run: residual of dV/dt against the
//! right-hand side for every multiplier, with a static and a moving cutoff.

use critwave::evolve::{InitialData, RunConfig, Sample};
use critwave::grid::{FieldPair, GridSpec, RadialGrid};
use critwave::virial::{CutoffSchedule, Multiplier, Nonlinearity, VirialRecorder};

fn main() -> critwave::Result<()> {
    for sched in [
        CutoffSchedule::fixed(6.0),
        CutoffSchedule { rho0: 6.0, rate: 0.5 },
    ] {
        for n in [1600, 3200] {
            let cfg = RunConfig {
                alpha: 1.0,
                dt: None,
                t_end: 4.0,
                grid: GridSpec::uniform(6, n, 200.0),
                initial: InitialData::Multibubble {
                    iotas: vec![1],
                    lambdas: vec![1.0],
                    amplitude: 0.5,
                },
                cadence: 0.02,
                nonlinearity: Nonlinearity::Focusing,
            };
            let mut recs: Vec<VirialRecorder> = Multiplier::ALL
                .iter()
                .map(|&m| VirialRecorder::new(sched, m, cfg.alpha, cfg.nonlinearity))
                .collect();
            let mut obs = |g: &RadialGrid, s: &Sample, st: &FieldPair| {
                recs.iter_mut().for_each(|r| r.record(g, s.t, st))
            };
            cfg.prepare(None)?.run(false, &mut obs);
            print!("rho = {} + {} t, N = {n}:", sched.rho0, sched.rate);
            for r in &recs {
                print!("  {} {:.2e}", r.multiplier.name(), r.summary().relative);
            }
            println!();
        }
    }
    Ok(())
}
