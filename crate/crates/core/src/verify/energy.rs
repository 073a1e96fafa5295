use std::time::Instant;

use crate::ensemble::{run_ensemble, EnsembleSpec, FunctionalStats};
use crate::error::{Error, Result};
use crate::galerkin::PathFunctionals;
use crate::scenario::Scenario;

use super::{Estimate, EstimateReport, Gate, ReportRow};

/// All path functionals of one n.
#[derive(Clone, Debug)]
pub struct LadderRung {
    pub n: usize,
    pub epsilon: f64,
    pub paths: Vec<PathFunctionals>,
}

/// Runs the same ensemble (same seeds) at every level of the ladder.
pub fn run_ladder(ladder: &[Scenario], spec: &EnsembleSpec, minimum_paths: usize) -> Result<Vec<LadderRung>> {
    spec.require(minimum_paths)?;
    if ladder.is_empty() {
        return Err(Error::param("ladder", "need at least one basis size"));
    }
    ladder
        .iter()
        .map(|sc| {
            let run = run_ensemble(spec, sc)?;
            Ok(LadderRung {
                n: sc.n(),
                epsilon: sc.system.epsilon(),
                paths: run.paths.into_iter().map(|p| p.functionals).collect(),
            })
        })
        .collect()
}

fn ladder_report(
    estimate: &str,
    rungs: &[LadderRung],
    spec: &EnsembleSpec,
    growth_factor: f64,
    names: &[&str],
    extract: impl Fn(&PathFunctionals) -> Vec<f64>,
    started: Instant,
) -> EstimateReport {
    let mut report = EstimateReport::new(estimate, spec.paths, spec.master_seed, spec.seeds());
    let mut means: Vec<Vec<f64>> = Vec::new();
    for rung in rungs {
        let values: Vec<Vec<f64>> = rung.paths.iter().map(&extract).collect();
        let estimates: Vec<Estimate> = names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let column: Vec<f64> = values.iter().map(|v| v[k]).collect();
                let s = FunctionalStats::of(&column);
                Estimate {
                    name: name.to_string(),
                    mean: s.mean,
                    std_error: s.std_error,
                }
            })
            .collect();
        means.push(estimates.iter().map(|e| e.mean).collect());
        report.rows.push(ReportRow {
            parameter: "n".into(),
            value: rung.n as f64,
            estimates,
        });
    }
    for (w, pair) in rungs.windows(2).zip(means.windows(2)) {
        for (k, name) in names.iter().enumerate() {
            let (lo, hi) = (pair[0][k], pair[1][k]);
            let ratio = if lo == 0.0 && hi == 0.0 { 1.0 } else { hi / lo };
            report.gates.push(Gate::at_most(
                format!("growth[{name}] n={}->{}", w[0].n, w[1].n),
                ratio,
                growth_factor,
            ));
        }
    }
    report.finish(started)
}

pub const ENERGY_NAMES: [&str; 7] = [
    "sup_v_sq",
    "sup_w_sq",
    "sup_eps_ui_sq",
    "sup_eps_ue_sq",
    "int_grad_ui_sq",
    "int_grad_ue_sq",
    "int_v4",
];

/// E sup‖v‖², E sup‖w‖², E sup ε‖u_j‖², E∫∫|∇u_j|², E∫∫v⁴ per n, with a
/// growth gate between consecutive rungs.
pub fn energy_report(rungs: &[LadderRung], spec: &EnsembleSpec, growth_factor: f64) -> EstimateReport {
    ladder_report(
        "energy",
        rungs,
        spec,
        growth_factor,
        &ENERGY_NAMES,
        |f| {
            vec![
                f.sup_v_sq,
                f.sup_w_sq,
                f.sup_u_scaled_sq[0],
                f.sup_u_scaled_sq[1],
                f.grad_sq[0],
                f.grad_sq[1],
                f.v_l4,
            ]
        },
        Instant::now(),
    )
}

pub fn energy_suite(
    ladder: &[Scenario],
    spec: &EnsembleSpec,
    growth_factor: f64,
    minimum_paths: usize,
) -> Result<EstimateReport> {
    let started = Instant::now();
    let rungs = run_ladder(ladder, spec, minimum_paths)?;
    let mut r = energy_report(&rungs, spec, growth_factor);
    r.runtime_secs = started.elapsed().as_secs_f64();
    Ok(r)
}

pub const MOMENT_NAMES: [&str; 5] = [
    "sup_v_pow_q",
    "sup_w_pow_q",
    "grad_ui_l2_pow_q",
    "grad_ue_l2_pow_q",
    "v_l4_pow_2q",
];

/// E sup‖v‖^q, E sup‖w‖^q, E‖∇u_j‖^q_{L²(Ω_T)}, E‖v‖^{2q}_{L⁴(Ω_T)}.
pub fn moment_report(rungs: &[LadderRung], spec: &EnsembleSpec, q0: f64, growth_factor: f64) -> Result<EstimateReport> {
    if !(q0 >= 2.0) {
        return Err(Error::param("q0", "moment order must be at least 2"));
    }
    let h = q0 / 2.0;
    Ok(ladder_report(
        &format!("moments(q0={q0})"),
        rungs,
        spec,
        growth_factor,
        &MOMENT_NAMES,
        |f| {
            vec![
                f.sup_v_sq.powf(h),
                f.sup_w_sq.powf(h),
                f.grad_sq[0].powf(h),
                f.grad_sq[1].powf(h),
                f.v_l4.powf(h),
            ]
        },
        Instant::now(),
    ))
}

pub fn moment_suite(
    ladder: &[Scenario],
    spec: &EnsembleSpec,
    q0: f64,
    growth_factor: f64,
    minimum_paths: usize,
) -> Result<EstimateReport> {
    if !(q0 >= 2.0) {
        return Err(Error::param("q0", "moment order must be at least 2"));
    }
    let started = Instant::now();
    let rungs = run_ladder(ladder, spec, minimum_paths)?;
    let mut r = moment_report(&rungs, spec, q0, growth_factor)?;
    r.runtime_secs = started.elapsed().as_secs_f64();
    Ok(r)
}
