use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;

use stochastic_bidomain::config::{NoiseSpec, Profile, ScenarioConfig};
use stochastic_bidomain::ensemble::{pair_paths, run_ensemble, splitmix64, EnsembleSpec, Pairing};
use stochastic_bidomain::galerkin::{solve_path, GalerkinConfig, GalerkinSystem, InitialData};
use stochastic_bidomain::geometry::{BasisSet, ConductivityField, Domain, Face};
use stochastic_bidomain::membrane::MembraneModel;
use stochastic_bidomain::noise::NoiseModel;
use stochastic_bidomain::scenario::{Perturbation, Scenario};
use stochastic_bidomain::verify::{
    energy_report, moment_report, monodomain_compare, pair_difference, run_ladder, stability_suite,
    translation_statistic, translation_suite, weak_residual,
};
use stochastic_bidomain::Error;

fn quiet_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.noise = NoiseSpec::off();
    cfg.initial.profile = Profile::Rest;
    cfg.time.t_end = 0.05;
    cfg.verify.ladder = vec![4, 8];
    cfg.ensemble.paths = 8;
    cfg
}

fn single_mode(k: f64, eps: f64) -> GalerkinSystem {
    let domain = Domain::interval(1.0, [Face::XLow]).unwrap();
    let basis = Arc::new(BasisSet::build(&domain, 1, None).unwrap());
    let cond = ConductivityField::isotropic(1, k, k).unwrap();
    GalerkinSystem::new(basis, &cond, MembraneModel::passive(), NoiseModel::zero(1), NoiseModel::zero(1), eps).unwrap()
}

#[test]
fn stability_constant_matches_linear_closed_form() {
    // K_i = K_e, no membrane, no noise: c decays at kλ/(2+ε), c_i + c_e at
    // kλ/ε, and the intra perturbation starts both at s·δv.
    let (k, eps, t_end) = (1.0, 1.0, 1.0);
    let sys = single_mode(k, eps);
    let sc = Scenario::new(sys, GalerkinConfig::new(1e-3, t_end), InitialData::rest(1)).unwrap();
    let mut spec = EnsembleSpec::new(8, 3);
    spec.pairing = Pairing::CommonIncrements;
    let r = stability_suite(&sc, &[1e-2, 1e-3], &spec).unwrap();

    let lambda = (PI / 2.0).powi(2);
    let integral = |rate: f64| (1.0 - (-2.0 * rate * t_end).exp()) / (2.0 * rate);
    let shape = integral(k * lambda / (2.0 + eps)) + integral(k * lambda / eps);
    let mean_dv2 = pair_paths(&spec)
        .unwrap()
        .iter()
        .map(|p| {
            let (dv, dw) = Perturbation { amplitude: 1.0, decay: 1.0 }.sample(1, splitmix64(p.stream_seed));
            dv[0] * dv[0] / (dv[0] * dv[0] + dw[0] * dw[0])
        })
        .sum::<f64>()
        / spec.paths as f64;
    let exact = 1.0 + 0.5 * mean_dv2 * shape;
    for s in [1e-2, 1e-3] {
        let c = r.row_estimate(s, "stability_constant").unwrap().mean;
        assert_relative_eq!(c, exact, max_relative = 1e-2);
        assert!(c >= 1.0);
    }
    assert!(r.passed);
}

#[test]
fn zero_scale_pairs_are_bit_identical_under_noise() {
    let cfg = ScenarioConfig {
        n: 6,
        ..ScenarioConfig::default()
    };
    let mut cfg = cfg;
    cfg.time.t_end = 0.1;
    let sc = cfg.scenario().unwrap();
    let mut spec = EnsembleSpec::new(4, 1);
    spec.pairing = Pairing::CommonIncrements;
    let r = stability_suite(&sc, &[1e-3, 1e-4], &spec).unwrap();
    assert_eq!(r.row_estimate(0.0, "difference").unwrap().mean, 0.0);
    assert!(r.gate("s=0 pairs not bit-identical").unwrap().passed);
}

#[test]
fn stability_needs_common_increments() {
    let sc = quiet_config().scenario().unwrap();
    let spec = EnsembleSpec::new(4, 1);
    assert!(stability_suite(&sc, &[1e-3], &spec).is_err());
}

#[test]
fn pair_difference_rejects_different_streams() {
    let mut cfg = ScenarioConfig::default();
    cfg.n = 4;
    cfg.time.t_end = 0.01;
    let sc = cfg.scenario().unwrap();
    let (a, b) = (sc.solve(1).unwrap(), sc.solve(2).unwrap());
    assert!(matches!(pair_difference(&a, &b), Err(Error::IncrementMismatch(_))));
    let d = pair_difference(&a, &sc.solve(1).unwrap()).unwrap();
    assert!(d.bit_identical && d.total == 0.0);
}

#[test]
fn monodomain_refuses_non_proportional_media() {
    let cfg = quiet_config();
    let sc = cfg.scenario().unwrap();
    let r = monodomain_compare(&sc, &cfg.conductivity_field().unwrap(), &[1e-1, 1e-2], 0);
    assert!(matches!(r, Err(Error::NotProportional(_))));
}

#[test]
fn residual_mode_must_exist() {
    let sc = quiet_config().scenario().unwrap();
    let rec = solve_path(&sc.system, &sc.config, &sc.initial, 0).unwrap();
    assert!(weak_residual(&sc.system, &rec, sc.n()).is_err());
    assert_eq!(weak_residual(&sc.system, &rec, 0).unwrap().max_abs(), 0.0);
}

#[test]
fn translation_needs_three_deltas() {
    let cfg = quiet_config();
    let sc = cfg.scenario().unwrap();
    let spec = cfg.ensemble_spec();
    let r = translation_suite(&sc, &spec, &[2e-3, 4e-3], (0.25, 0.5));
    assert!(r.is_err());
    let rec = sc.solve(0).unwrap();
    assert_eq!(translation_statistic(&rec, 0, 0), 0.0);
}

#[test]
fn zero_noise_and_zero_data_give_zero_estimates() {
    let cfg = quiet_config();
    let spec = cfg.ensemble_spec();
    let rungs = run_ladder(&cfg.ladder().unwrap(), &spec, 4).unwrap();
    for r in [
        energy_report(&rungs, &spec, 1.25),
        moment_report(&rungs, &spec, 5.0, 1.35).unwrap(),
    ] {
        assert!(r.rows.iter().flat_map(|row| &row.estimates).all(|e| e.mean == 0.0));
        assert!(r.passed);
    }
}

#[test]
fn second_moments_are_the_energy_estimates() {
    let mut cfg = ScenarioConfig::default();
    cfg.verify.ladder = vec![4, 8];
    cfg.time.t_end = 0.05;
    cfg.ensemble.paths = 8;
    let spec = cfg.ensemble_spec();
    let rungs = run_ladder(&cfg.ladder().unwrap(), &spec, 4).unwrap();
    let e = energy_report(&rungs, &spec, 1.25);
    let m = moment_report(&rungs, &spec, 2.0, 1.25).unwrap();
    let pairs = [
        ("sup_v_sq", "sup_v_pow_q"),
        ("sup_w_sq", "sup_w_pow_q"),
        ("int_grad_ui_sq", "grad_ui_l2_pow_q"),
        ("int_grad_ue_sq", "grad_ue_l2_pow_q"),
        ("int_v4", "v_l4_pow_2q"),
    ];
    for n in [4.0, 8.0] {
        for (a, b) in pairs {
            let (x, y) = (e.row_estimate(n, a).unwrap().mean, m.row_estimate(n, b).unwrap().mean);
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }
    assert!(moment_report(&rungs, &spec, 1.5, 1.25).is_err());
}

#[test]
fn ladder_rejects_undersized_ensembles() {
    let cfg = quiet_config();
    let spec = EnsembleSpec::new(2, 0);
    assert!(matches!(
        run_ladder(&cfg.ladder().unwrap(), &spec, 8),
        Err(Error::EnsembleTooSmall { .. })
    ));
}

#[test]
fn ensemble_statistics_do_not_depend_on_worker_count() {
    let mut cfg = ScenarioConfig::default();
    cfg.n = 6;
    cfg.time.t_end = 0.05;
    let sc = cfg.scenario().unwrap();
    let mut spec = EnsembleSpec::new(20, 99);
    spec.workers = Some(1);
    let a = run_ensemble(&spec, &sc).unwrap();
    spec.workers = Some(4);
    let b = run_ensemble(&spec, &sc).unwrap();
    assert_eq!(a, b);
}
