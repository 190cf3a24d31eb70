use proptest::prelude::*;

use critwave::bubbles::{lambda_w, multibubble, BubbleFamily};
use critwave::evolve::damped_rate;
use critwave::grid::{energy_norm_sq, FieldPair, GridSpec, RadialGrid};
use critwave::lab::output::fmt_float;
use critwave::trapping::{etilde, etilde_expanded};
use critwave::virial::{truncated_q, virial_ops};

fn grid_strategy() -> impl Strategy<Value = RadialGrid> {
    (
        3usize..=8,
        64usize..256,
        5.0f64..80.0,
        prop::option::of(0.3f64..4.0),
    )
        .prop_map(|(dim, n, r_max, a)| {
            match a {
                Some(a) => GridSpec::stretched(dim, n, r_max, a),
                None => GridSpec::uniform(dim, n, r_max),
            }
            .build()
            .unwrap()
        })
}

fn smooth(grid: &RadialGrid, c: [f64; 3]) -> Vec<f64> {
    let scale = grid.r_max() / 8.0;
    grid.sample(|r| {
        let x = r / scale;
        (c[0] + c[1] * x + c[2] * x * x) * (-x * x).exp()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_is_symmetric(grid in grid_strategy(), a in any::<[i8; 3]>(), b in any::<[i8; 3]>()) {
        let fa = smooth(&grid, a.map(f64::from));
        let fb = smooth(&grid, b.map(f64::from));
        let lhs = grid.inner(&grid.laplacian(&fa), &fb);
        let rhs = grid.inner(&fa, &grid.laplacian(&fb));
        let scale = grid.dirichlet(&fa).sqrt() * grid.dirichlet(&fb).sqrt() + 1e-300;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
        // −⟨Δu, u⟩ is the Dirichlet form
        let d = -grid.inner(&grid.laplacian(&fa), &fa);
        prop_assert!((d - grid.dirichlet(&fa)).abs() <= 1e-10 * (grid.dirichlet(&fa) + 1e-300));
    }

    #[test]
    fn etilde_forms_agree(c in any::<[i8; 3]>(), v in any::<[i8; 3]>(), alpha in 0.0f64..3.0) {
        let grid = GridSpec::stretched(6, 256, 30.0, 1.0).build().unwrap();
        let f = FieldPair::new(
            smooth(&grid, c.map(|x| f64::from(x) / 200.0)),
            smooth(&grid, v.map(|x| f64::from(x) / 200.0)),
        ).unwrap();
        let a = etilde(&grid, &f, alpha);
        let b = etilde_expanded(&grid, &f, alpha);
        prop_assert!((a - b).abs() <= 1e-9 * (a.abs() + b.abs() + 1e-12));
    }

    #[test]
    fn localized_energy_is_monotone_in_the_window(grid in grid_strategy(), c in any::<[i8; 3]>(), t in 0.05f64..0.95) {
        let u = smooth(&grid, c.map(f64::from));
        let f = FieldPair::new(u.clone(), u).unwrap();
        let cut = t * grid.r_max();
        let inner = energy_norm_sq(&grid, &f, 0.0, cut).unwrap();
        let outer = energy_norm_sq(&grid, &f, cut, f64::INFINITY).unwrap();
        let all = energy_norm_sq(&grid, &f, 0.0, f64::INFINITY).unwrap();
        prop_assert!(inner >= 0.0 && outer >= 0.0);
        prop_assert!((inner + outer - all).abs() <= 1e-12 * (all + 1e-300));
    }

    #[test]
    fn virial_operator_difference(lambda in 0.2f64..5.0, c in 0.3f64..3.0, big_r in 2.0f64..20.0, shift in 0.5f64..8.0) {
        let grid = GridSpec::uniform(6, 300, 40.0).build().unwrap();
        let q = truncated_q(6, c, big_r);
        let g = grid.sample(|r| (-(r - shift).powi(2)).exp());
        let (a, ua) = virial_ops(&q, lambda, &grid, &g);
        for (i, &r) in grid.nodes().iter().enumerate() {
            let expect = -q.lap(r / lambda) * g[i] / (6.0 * lambda);
            prop_assert!((a[i] - ua[i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn damped_rate_is_the_positive_root(alpha in 0.0f64..5.0, kappa in 0.01f64..5.0) {
        let mu = damped_rate(alpha, kappa);
        prop_assert!(mu > 0.0);
        prop_assert!((mu * mu + alpha * mu - kappa * kappa).abs() <= 1e-12 * kappa * kappa.max(1.0));
    }

    #[test]
    fn bubble_scaling(dim in 3usize..=8, lambda in 0.05f64..20.0, r in 0.0f64..100.0) {
        // W_λ(r) = λ^{−(D−2)/2} W(r/λ)
        let e = (dim as f64 - 2.0) / 2.0;
        let direct = lambda_w(dim, lambda, r);
        let scaled = lambda.powf(-e) * lambda_w(dim, 1.0, r / lambda);
        prop_assert!((direct - scaled).abs() <= 1e-13 * direct.abs().max(1e-300));
    }

    #[test]
    fn multibubble_is_additive(l1 in 0.5f64..2.0, ratio in 4.0f64..50.0, s in prop::bool::ANY) {
        let grid = GridSpec::stretched(6, 256, 500.0, 1.0).build().unwrap();
        let sign = if s { 1 } else { -1 };
        let fam = BubbleFamily::new(6, vec![1, sign], vec![l1, l1 * ratio]).unwrap();
        let both = multibubble(&grid, &fam);
        let a = multibubble(&grid, &BubbleFamily::single(6, l1));
        let b = multibubble(&grid, &BubbleFamily::single(6, l1 * ratio)).scaled(sign as f64);
        for i in 0..grid.len() {
            prop_assert!((both.u[i] - a.u[i] - b.u[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn csv_floats_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let text = fmt_float(v);
        let back: f64 = text.parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }
}
