//! Static modulation of a perturbed two-bubble state, then tracking of a
//! two-bubble run: scales, proximity d and the unstable components.

use critwave::bubbles::{multibubble, BubbleFamily};
use critwave::evolve::{InitialData, RunConfig};
use critwave::grid::{e_norm, FieldPair, GridSpec};
use critwave::modulation::{detect_scales, fit_modulation, refine_scales, TrackSettings, Tracker};
use critwave::spectral::SpectralPack;
use critwave::virial::Nonlinearity;

fn main() -> critwave::Result<()> {
    let pack = SpectralPack::for_dim(6)?;
    let grid = GridSpec::stretched(6, 4096, 5000.0, 1.0).build()?;
    let fam = BubbleFamily::new(6, vec![1, -1], vec![1.0, 30.0])?;
    let y = pack.y_l2(&grid, 1.0);
    let bump = FieldPair::static_field(grid.sample(|r| (-(r - 3.0).powi(2)).exp()));
    let raw = FieldPair::static_field(y).axpy(1.0, &bump);
    let state = multibubble(&grid, &fam).axpy(1e-3 / e_norm(&grid, &raw), &raw);

    let (iotas, rough) = detect_scales(&grid, &state, 4);
    let sharp = refine_scales(&grid, &state, &iotas, &rough);
    let fit = fit_modulation(&grid, &state, &iotas, &sharp, &pack)?;
    println!("detected {iotas:?} {rough:.4?} -> refined {sharp:.6?}");
    println!(
        "fit lambda {:.8?} in {} iterations, |g|_E {:.3e}, d {:.4e}, a- {:?}, a+ {:?}",
        fit.lambdas, fit.iterations, fit.g_norm, fit.d_value, fit.a_minus, fit.a_plus
    );

    let cfg = RunConfig {
        alpha: 1.0,
        dt: None,
        t_end: 4.0,
        grid: GridSpec::stretched(6, 1024, 2000.0, 1.0),
        initial: InitialData::Multibubble {
            iotas: vec![1, 1],
            lambdas: vec![1.0, 16.0],
            amplitude: 1.0,
        },
        cadence: 0.5,
        nonlinearity: Nonlinearity::Focusing,
    };
    let mut tracker = Tracker::new(
        &pack,
        TrackSettings {
            max_bubbles: 2,
            ..TrackSettings::default()
        },
    );
    cfg.prepare(Some(&pack))?.run(false, &mut tracker);
    let track = tracker.track;
    for row in &track.rows {
        match &row.fit {
            Some(f) => println!(
                "t {:4.1}  lambda {:.5?}  d {:.4e}  a+ {:?}",
                row.t, f.lambdas, f.d_value, f.a_plus
            ),
            None => println!("t {:4.1}  {}", row.t, row.status),
        }
    }
    Ok(())
}
