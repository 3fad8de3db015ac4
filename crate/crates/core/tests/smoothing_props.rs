use std::path::Path;

use cbi_core::experiment::ExperimentConfig;
use cbi_core::smoothing::{self, CertificateSource, Theorem, TheoremInputs};
use proptest::prelude::*;

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_path(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_coefficients_never_lower_kappa(
        theorem in prop::sample::select(vec![Theorem::General, Theorem::NoDiffusion, Theorem::AxisAligned]),
        gamma0 in 1.05f64..2.0,
        d in 1usize..=3,
        coord in 0usize..3,
        which in 0usize..5,
    ) {
        let tau = match theorem {
            Theorem::General => 0.5,
            _ => (gamma0 - 1.0) / 2.0,
        };
        let ledger = smoothing::ledger_preset(theorem, d, &[gamma0], &[tau]).unwrap();
        let before = smoothing::kappa(&ledger, None).unwrap().kappas();
        let mut frozen = ledger.clone();
        let i = coord % d;
        let c = &mut frozen.coordinates[i];
        let coef = [&mut c.b, &mut c.sigma, &mut c.sigma0, &mut c.sigma1, &mut c.sigma2].into_iter().nth(which).unwrap();
        coef.coupling.clear();
        let after = smoothing::kappa(&frozen, None).unwrap().kappas();
        for (k0, k1) in before.iter().zip(&after) {
            prop_assert!(k1 >= k0, "{before:?} -> {after:?}");
        }
    }
}

#[test]
fn gamma0_two_matches_general_threshold() {
    for i in 100..=200 {
        let a = i as f64 / 100.0;
        let general = smoothing::ledger_preset(Theorem::General, 1, &[2.0], &[0.5]).unwrap();
        let nodiff = smoothing::ledger_preset(Theorem::NoDiffusion, 1, &[2.0], &[0.5]).unwrap();
        let g = smoothing::kappa(&general, Some(&[a])).unwrap().rate_ok();
        let n = smoothing::kappa(&nodiff, Some(&[a])).unwrap().rate_ok();
        assert_eq!(g, n, "alpha={a}");
    }
}

#[test]
fn immigration_route_carries_boundary_flag() {
    let cfg = config("immigration_smoothing.toml");
    let cert = smoothing::certify(&cfg.params).unwrap().unwrap();
    assert_eq!(cert.source, CertificateSource::ImmigrationSymbol);
    assert!(cert.index_set.is_empty());
    let (theorem, inputs) = cfg.theorem_inputs().unwrap().unwrap();
    let r = smoothing::check_theorem(&cfg.params, Some(&cert), theorem, &inputs).unwrap();
    assert!(r.overall && r.boundary_null);

    let other = config("stable_axis.toml");
    let cert = smoothing::certify(&other.params).unwrap().unwrap();
    let r = smoothing::check_theorem(&other.params, Some(&cert), Theorem::AxisAligned, &TheoremInputs::inferred()).unwrap();
    assert!(r.overall && !r.boundary_null);
}

#[test]
fn bundled_theorem_verdicts() {
    for (name, expected) in [
        ("stable_diffusion.toml", true),
        ("stable_pure_jump.toml", false),
        ("stable_axis.toml", true),
        ("immigration_smoothing.toml", true),
        ("cir_jumps.toml", true),
    ] {
        let cfg = config(name);
        let cert = cfg.certificate().unwrap();
        let (theorem, inputs) = cfg.theorem_inputs().unwrap().unwrap();
        let r = smoothing::check_theorem(&cfg.params, cert.as_ref(), theorem, &inputs).unwrap();
        assert_eq!(r.overall, expected, "{name}: {:#?}", r.hypotheses);
    }
    let cfg = config("stable_pure_jump.toml");
    let r = smoothing::check_theorem(&cfg.params, cfg.certificate().unwrap().as_ref(), Theorem::NoDiffusion, &TheoremInputs::inferred())
        .unwrap();
    let threshold = r.hypotheses.iter().find(|h| h.name == "alpha threshold").unwrap();
    assert!(!threshold.pass);
}
