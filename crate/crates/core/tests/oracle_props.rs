use cbi_core::levy::{LevyMeasureSpec, RadialLaw};
use cbi_core::oracle;
use cbi_core::params::AdmissibleParams;
use proptest::prelude::*;

fn params(c: f64, beta: f64, b: f64, alpha: f64, rate: f64) -> AdmissibleParams {
    AdmissibleParams::new(vec![c], vec![beta], vec![vec![b]])
        .with_mu(0, LevyMeasureSpec::per_coordinate_stable(0, alpha, true))
        .with_nu(LevyMeasureSpec::compound_poisson(rate, vec![1.0], RadialLaw::Exponential { mean: 0.5 }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transforms_are_completely_monotone_on_a_grid(
        c in 0.0f64..1.5,
        beta in 0.0f64..1.5,
        b in -2.0f64..0.5,
        alpha in 1.1f64..1.9,
        rate in 0.0f64..2.0,
        x0 in 0.0f64..2.0,
        t in 0.1f64..2.0,
    ) {
        let p = params(c, beta, b, alpha, rate);
        let vals: Vec<f64> = (0..=8)
            .map(|k| oracle::laplace_cbi_1d(&p, x0, t, 0.25 * k as f64, 1e-10).unwrap())
            .collect();
        prop_assert!((vals[0] - 1.0).abs() < 1e-12);
        for w in vals.windows(2) {
            prop_assert!(w[1] > 0.0 && w[1] <= w[0] + 1e-12, "{vals:?}");
        }
        for w in vals.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9, "{vals:?}");
        }
    }

    #[test]
    fn closed_form_lies_in_unit_interval(
        c in 0.01f64..2.0, beta in 0.0f64..2.0, b in -2.0f64..2.0, x0 in 0.0f64..3.0, t in 0.01f64..3.0, l in 0.0f64..10.0,
    ) {
        let v = oracle::laplace_cir(c, beta, b, x0, t, l).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        let v2 = oracle::laplace_cir(c, beta, b, x0, t, l + 0.5).unwrap();
        prop_assert!(v2 <= v);
    }
}
