//! A damped run from (0.5 W, 0): energy, the dissipation budget and decay.

use critwave::evolve::{InitialData, RunConfig};
use critwave::grid::GridSpec;
use critwave::virial::Nonlinearity;

fn main() -> critwave::Result<()> {
    let cfg = RunConfig {
        alpha: 1.0,
        dt: None,
        t_end: 20.0,
        grid: GridSpec::uniform(6, 4096, 400.0),
        initial: InitialData::Multibubble {
            iotas: vec![1],
            lambdas: vec![1.0],
            amplitude: 0.5,
        },
        cadence: 1.0,
        nonlinearity: Nonlinearity::Focusing,
    };
    let run = cfg.prepare(None)?;
    println!(
        "dt {:.3e} ({} substeps per sample), support radius {:.1}",
        run.dt, run.substeps, run.support_radius
    );
    let traj = run.run(false, &mut ());
    let e0 = traj.samples[0].energy;
    println!(
        "{:>6} {:>14} {:>14} {:>12} {:>10}",
        "t", "E", "dissipated", "budget", "|u|_E"
    );
    for s in &traj.samples {
        println!(
            "{:6.1} {:14.8} {:14.8} {:12.2e} {:10.5}",
            s.t,
            s.energy,
            s.dissipated,
            (s.energy - e0 + s.dissipated) / e0.abs(),
            s.e_norm
        );
    }
    println!("status {:?}", traj.status);
    Ok(())
}
