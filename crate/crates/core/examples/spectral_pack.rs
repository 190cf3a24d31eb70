//! The negative mode of the linearized operator, the Z profile and the
//! damped growth rate.

use critwave::evolve::damped_rate;
use critwave::lab::reports::spectral_report;

fn main() -> critwave::Result<()> {
    let dim: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    let s = spectral_report(dim, None)?;
    print!("{}", s.report);
    println!("kappa by resolution: {:?}", s.kappas);
    println!("Z = {:?}", s.pack.z);
    println!(
        "<Z, LW> = {:.6e}, <Z, Y> = {:.3e}",
        s.z_pairings.0, s.z_pairings.1
    );
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        println!("alpha = {alpha}: mu+ = {:.6}", damped_rate(alpha, s.pack.kappa));
    }
    Ok(())
}
