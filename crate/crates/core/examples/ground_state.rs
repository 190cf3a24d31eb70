//! Ground-state constants against quadrature, and the two-bubble interaction law.
//!
//!     cargo run --release --example ground_state -- 6

use critwave::bubbles::{
    bracket_grid, bubble_constants, interaction_bracket, predicted_bracket, BubbleFamily,
};
use critwave::lab::reports::constants_report;

fn main() -> critwave::Result<()> {
    let dim: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(6);
    print!("{}", constants_report(dim)?);

    let c = bubble_constants(dim);
    if let (Some(w), Some(p)) = (c.omega_sq, c.omega_sq_closed_form) {
        println!("\nomega^2 = C_D/|LW|^2 = {w:.6} (with the closed form for |LW|^2: {p:.6})");
    }

    println!("\n<LW_1 | f_i> for two positive bubbles at ratio mu:");
    for inv in [8.0, 16.0, 32.0, 64.0, 128.0] {
        let fam = BubbleFamily::new(dim, vec![1, 1], vec![1.0, inv])?;
        let grid = bracket_grid(&fam).build()?;
        let m = interaction_bracket(&grid, &fam, 0);
        let p = predicted_bracket(&fam, 0);
        println!(
            "  mu = 1/{inv:<4} quadrature {m:>12.6} leading order {p:>12.6} rel err {:.3e}",
            ((m - p) / p).abs()
        );
    }
    Ok(())
}
