use cbi_core::density::{self, DensityEstimate, Grid};
use proptest::prelude::*;

fn bump(center: f64, width: f64) -> DensityEstimate {
    let grid = Grid::new(vec![-2.0, -2.0], vec![2.0, 2.0], vec![128, 128]).unwrap();
    DensityEstimate::from_fn(grid, move |x| {
        let r2 = ((x[0] - center) / width).powi(2) + (x[1] / width).powi(2);
        if r2 < 1.0 {
            1.0 - r2
        } else {
            0.0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn modulus_grows_with_lambda(
        alpha in prop::collection::vec(0.6f64..2.0, 2),
        l1 in 0.01f64..0.2,
        dl in 0.0f64..0.2,
        width in 0.3f64..1.5,
    ) {
        let f = bump(0.0, width);
        let a = density::anisotropy_from_alphas(&alpha).unwrap();
        let hs = density::resolvable_h_grid(&density::dyadic_h_grid(6), &f.grid);
        let lo = density::besov_norm(&f, l1, &a, &hs).unwrap();
        let hi = density::besov_norm(&f, l1 + dl, &a, &hs).unwrap();
        for (c0, c1) in lo.modulus.iter().zip(&hi.modulus) {
            for (m0, m1) in c0.iter().zip(c1) {
                prop_assert!(m1 >= m0);
            }
        }
        prop_assert!(hi.norm_value >= lo.norm_value);
    }

    #[test]
    fn uniform_indices_are_isotropic(alpha in 0.05f64..2.0, d in 1usize..=6) {
        let a = density::anisotropy_from_alphas(&vec![alpha; d]).unwrap();
        for ak in &a.a {
            prop_assert!((ak - 1.0).abs() < 1e-12);
        }
        prop_assert!((a.mean_alpha - alpha).abs() < 1e-12);
    }

    #[test]
    fn rho_is_monotone_on_the_index_set(
        alpha in prop::collection::vec(0.3f64..2.0, 3),
        x in prop::collection::vec(0.0f64..5.0, 3),
        k in 0usize..3,
        bump in 0.0f64..3.0,
    ) {
        let index = [0, 2];
        let mut y = x.clone();
        y[k] += bump;
        prop_assert!(density::rho(&index, &alpha, &y) >= density::rho(&index, &alpha, &x));
    }
}

#[test]
fn kde_norm_is_translation_invariant() {
    let mut rng_state = 12345u64;
    let mut next = || {
        // xorshift for a fixed sample
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        (rng_state >> 11) as f64 / (1u64 << 53) as f64
    };
    let pts: Vec<Vec<f64>> = (0..4000).map(|_| vec![next() + next() - 1.0, next() - 0.5 + next() * next()]).collect();
    let shifted: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] - 3.7, p[1] - 11.25]).collect();
    let w = vec![1.0; pts.len()];
    let a = density::anisotropy_from_alphas(&[1.5, 1.8]).unwrap();
    let norm = |pts: &[Vec<f64>]| {
        let f = density::weighted_kde(pts, &w, Some(&[0.08, 0.06]), Some(256)).unwrap();
        let hs = density::resolvable_h_grid(&density::dyadic_h_grid(8), &f.grid);
        density::besov_norm(&f, 0.1, &a, &hs).unwrap().norm_value
    };
    let (n0, n1) = (norm(&pts), norm(&shifted));
    assert!((n0 - n1).abs() <= 1e-6 * n0, "{n0} vs {n1}");
}
