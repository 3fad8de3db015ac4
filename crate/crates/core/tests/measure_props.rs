use cbi_core::levy::{self, LevyMeasureSpec, RadialLaw, Region};
use cbi_core::params::AdmissibleParams;
use cbi_core::rng::{PathKey, Source};
use proptest::prelude::*;

fn measure(dim: usize) -> impl Strategy<Value = LevyMeasureSpec> {
    let atoms = prop::collection::vec((0.1f64..3.0, prop::collection::vec(0.0f64..2.0, dim)), 1..4).prop_map(
        |v| {
            LevyMeasureSpec::atoms(v.into_iter().map(|(m, mut z)| {
                if z.iter().all(|x| *x == 0.0) {
                    z[0] = 0.5;
                }
                (m, z)
            }))
        },
    );
    let stable = (0..dim, 0.2f64..1.9, any::<bool>())
        .prop_map(|(c, a, t)| LevyMeasureSpec::per_coordinate_stable(c, a, t));
    let cp = (0.1f64..3.0, 0.1f64..2.0)
        .prop_map(move |(r, m)| LevyMeasureSpec::compound_poisson(r, vec![1.0; dim], RadialLaw::Exponential { mean: m }));
    prop_oneof![atoms, stable, cp]
}

fn params(dim: usize) -> impl Strategy<Value = AdmissibleParams> {
    (
        prop::collection::vec(0.0f64..2.0, dim),
        prop::collection::vec(0.0f64..2.0, dim),
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), dim),
        prop::collection::vec(measure(dim), dim),
    )
        .prop_map(move |(c, beta, mut b, mu)| {
            for (i, row) in b.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    if i != j {
                        *v = v.abs();
                    }
                }
            }
            let mut p = AdmissibleParams::new(c, beta, b);
            for (j, m) in mu.into_iter().enumerate() {
                p = p.with_mu(j, m);
            }
            p
        })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn validate_is_deterministic(p in (1usize..=3).prop_flat_map(params)) {
        let a = p.validate().unwrap();
        let b = p.validate().unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn effective_drift_is_essentially_nonnegative(p in (1usize..=3).prop_flat_map(params)) {
        if p.validate().unwrap().ok {
            let bt = p.effective_drift().unwrap();
            for (i, row) in bt.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if i != j {
                        prop_assert!(*v >= 0.0, "entry ({i},{j}) = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn moments_scale_linearly(m in measure(2), factor in 0.1f64..10.0, p in prop::sample::select(vec![0.5, 1.0, 2.0])) {
        for region in [Region::Ball(1.0), Region::Outside(1.0), Region::Shell { lo: 0.2, hi: 1.0 }] {
            let base = m.moment(p, region).unwrap();
            let scaled = m.scaled(factor).moment(p, region).unwrap();
            match (base.value(), scaled.value()) {
                (Some(a), Some(b)) => prop_assert!(close(a * factor, b, 1e-9), "{a} * {factor} vs {b}"),
                (None, None) => {}
                other => prop_assert!(false, "finiteness changed under scaling: {other:?}"),
            }
        }
    }

    #[test]
    fn moments_add_over_sums(a in measure(2), b in measure(2), p in prop::sample::select(vec![1.0, 2.0])) {
        let sum = LevyMeasureSpec::sum([a.clone(), b.clone()]);
        for region in [Region::Ball(1.0), Region::Outside(1.0)] {
            let lhs = sum.moment(p, region).unwrap();
            let rhs = a.moment(p, region).unwrap().add(b.moment(p, region).unwrap());
            match (lhs.value(), rhs.value()) {
                (Some(x), Some(y)) => prop_assert!(close(x, y, 1e-9), "{x} vs {y}"),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }

    #[test]
    fn symbol_is_nonnegative_and_vanishes_at_zero(
        p in params(2),
        x in prop::collection::vec(0.0f64..3.0, 2),
        lambda in prop::collection::vec(-50.0f64..50.0, 2),
    ) {
        prop_assert!(levy::symbol_re(&p, &x, &lambda).unwrap() >= 0.0);
        prop_assert_eq!(levy::symbol_re(&p, &x, &[0.0, 0.0]).unwrap(), 0.0);
    }
}

#[test]
fn sampled_counts_match_intensity() {
    let spec = LevyMeasureSpec::sum([
        LevyMeasureSpec::atoms([(1.5, vec![0.3, 0.0]), (0.5, vec![0.0, 2.0])]),
        LevyMeasureSpec::per_coordinate_stable(1, 1.2, false),
    ]);
    let region = Region::Outside(0.1);
    let mass = spec.mass(region).unwrap().value().unwrap();
    let (scale, dt, n) = (1.7, 0.05, 20_000u64);
    let total: usize = (0..n)
        .map(|i| {
            let mut rng = PathKey::new(99, i).stream(0, Source::Auxiliary(1));
            let batch = levy::sample_jumps(&spec, 2, region, scale, dt, &mut rng).unwrap();
            assert!(batch.sizes.iter().all(|z| z.iter().map(|v| v * v).sum::<f64>().sqrt() > 0.1));
            batch.sizes.len()
        })
        .sum();
    let expected = scale * mass * dt;
    let observed = total as f64 / n as f64;
    assert!((observed - expected).abs() <= 3.0 * expected.sqrt() / (n as f64).sqrt(), "{observed} vs {expected}");
}
