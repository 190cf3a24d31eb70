//! Below the ground state: the trap check, Nehari K, and the modified energy Ẽ
//! with its rate along a run.

use critwave::evolve::{InitialData, RunConfig};
use critwave::grid::GridSpec;
use critwave::trapping::{etilde, etilde_rate, etilde_rate_short, trap_check, GroundStateLevels};
use critwave::virial::Nonlinearity;

fn main() -> critwave::Result<()> {
    let cfg = RunConfig {
        alpha: 1.0,
        dt: None,
        t_end: 10.0,
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
    let grid = &run.grid;
    let levels = GroundStateLevels::on(grid);
    println!("E(W) = {:.6}, |grad W|^2 = {:.6}", levels.energy, levels.grad_sq);
    for amp in [0.5, 0.99, 1.0, 1.01] {
        let rep = trap_check(grid, &run.initial.scaled(amp / 0.5), 1.0, &levels);
        println!(
            "  {amp} W: inside {} K {:.4} J {:.4}",
            rep.inside_trap, rep.k_value, rep.j_value
        );
    }
    let traj = run.run(true, &mut ());
    println!(
        "{:>5} {:>12} {:>12} {:>14} {:>10}",
        "t", "E~", "rate", "short rate", "K"
    );
    for (s, st) in traj.samples.iter().zip(&traj.states) {
        let rep = trap_check(grid, st, 1.0, &levels);
        println!(
            "{:5.1} {:12.6} {:12.6} {:14.6} {:10.5}",
            s.t,
            etilde(grid, st, 1.0),
            etilde_rate(grid, st, 1.0),
            etilde_rate_short(grid, st, 1.0),
            rep.k_value
        );
    }
    Ok(())
}
