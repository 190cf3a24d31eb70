//! The damped free evolution in the grid eigenbasis: low-frequency L¹→L^∞
//! decay and the exponential envelope of high frequencies.

use critwave::grid::GridSpec;
use critwave::propagator::{envelope_decay, measure_decay, FreePropagator};

fn main() -> critwave::Result<()> {
    let grid = GridSpec::uniform(6, 300, 100.0).build()?;
    let prop = FreePropagator::new(&grid);
    let data = grid.sample(|r| (-r * r / 4.0).exp());
    for alpha in [0.5, 1.0, 2.0] {
        for (q, p) in [(1.0, f64::INFINITY), (1.0, 2.0), (2.0, f64::INFINITY)] {
            let fit = measure_decay(&prop, alpha, q, p, &data);
            println!(
                "alpha {alpha}: L^{q} -> L^{p} slope {:.3} (predicted {:.2}, fit residual {:.1e})",
                fit.slope, fit.predicted, fit.residual
            );
        }
        let bump = grid.sample(|r| (-(r - 20.0).powi(2)).exp() * (6.0 * r).cos());
        let env = envelope_decay(&prop, alpha, &bump, 0.0, 20.0);
        println!(
            "alpha {alpha}: high-frequency envelope rate {:.3} (predicted {:.2})",
            env.slope, env.predicted
        );
    }
    Ok(())
}
