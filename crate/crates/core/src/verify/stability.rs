use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::{map_paths, pair_paths, splitmix64, EnsembleSpec, FunctionalStats};
use crate::error::{Error, Result};
use crate::galerkin::{solve_path_with_increments, TrajectoryRecord};
use crate::scenario::{Perturbation, Scenario};

use super::{Estimate, EstimateReport, Gate, ReportRow};

/// sup‖Δv‖² + Σ_j ‖Δu_j‖²_{L²(Ω_T)} + sup‖Δw‖² between two paths driven by
/// the same increments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub sup_v_sq: f64,
    pub u_l2_sq: [f64; 2],
    pub sup_w_sq: f64,
    pub total: f64,
    pub bit_identical: bool,
}

pub fn pair_difference(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<PairDifference> {
    let (ia, ib) = match (&a.increments, &b.increments) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(Error::MissingRecord("both paths must retain their increments".into())),
    };
    if !(Arc::ptr_eq(ia, ib) || ia == ib) {
        return Err(Error::IncrementMismatch(format!(
            "paths were driven by different streams (seeds {} and {})",
            ia.seed, ib.seed
        )));
    }
    if a.snapshots.len() != b.snapshots.len() || a.stride != b.stride || a.epsilon != b.epsilon {
        return Err(Error::IncrementMismatch("paths have different time grids or ε".into()));
    }
    let n = a.n();
    let se = a.epsilon.sqrt();
    let h = a.dt * a.stride as f64;
    let mut d = PairDifference {
        sup_v_sq: 0.0,
        u_l2_sq: [0.0; 2],
        sup_w_sq: 0.0,
        total: 0.0,
        bit_identical: true,
    };
    let last = a.snapshots.len() - 1;
    for (m, (sa, sb)) in a.snapshots.iter().zip(&b.snapshots).enumerate() {
        let (x, y) = (sa.as_slice(), sb.as_slice());
        d.bit_identical &= x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
        let sq = |r: std::ops::Range<usize>| x[r.clone()].iter().zip(&y[r]).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        d.sup_v_sq = d.sup_v_sq.max(sq(0..n));
        d.sup_w_sq = d.sup_w_sq.max(sq(3 * n..4 * n));
        if m < last {
            d.u_l2_sq[0] += h * sq(n..2 * n) / (se * se);
            d.u_l2_sq[1] += h * sq(2 * n..3 * n) / (se * se);
        }
    }
    d.total = d.sup_v_sq + d.u_l2_sq[0] + d.u_l2_sq[1] + d.sup_w_sq;
    Ok(d)
}

/// Unit direction (‖δv‖² + ‖δw‖² = 1) of the initial perturbation of a pair.
fn direction(n: usize, stream_seed: u64) -> (Vec<f64>, Vec<f64>) {
    let (dv, dw) = Perturbation {
        amplitude: 1.0,
        decay: 1.0,
    }
    .sample(n, splitmix64(stream_seed));
    let norm = dv.iter().chain(&dw).map(|x| x * x).sum::<f64>().sqrt();
    (
        dv.iter().map(|x| x / norm).collect(),
        dw.iter().map(|x| x / norm).collect(),
    )
}

/// For every scale s, pairs (data, data + s·δ) share one increment stream;
/// Ĉ(s) = E[difference]/s². Gates: s = 0 is bit-exact and max Ĉ/min Ĉ ≤ 2.
pub fn stability_suite(scenario: &Scenario, scales: &[f64], spec: &EnsembleSpec) -> Result<EstimateReport> {
    let started = Instant::now();
    let pairs = pair_paths(spec)?;
    if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::param("scales", "perturbation sizes must be positive"));
    }
    let mut cfg = scenario.config.clone();
    cfg.keep_increments = true;
    let n = scenario.n();
    let all_scales: Vec<f64> = std::iter::once(0.0).chain(scales.iter().copied()).collect();

    let per_pair = map_paths(spec, |index, _| {
        let seed = pairs[index].stream_seed;
        let inc = scenario.increments(seed)?;
        let base = scenario.initial_for(seed);
        let (dv, dw) = direction(n, seed);
        let reference = solve_path_with_increments(&scenario.system, &cfg, &base, inc.clone())?;
        all_scales
            .iter()
            .map(|&s| {
                let mut init = base.clone();
                init.ui0.iter_mut().zip(&dv).for_each(|(u, d)| *u += s * d);
                init.w0.iter_mut().zip(&dw).for_each(|(w, d)| *w += s * d);
                let rec = solve_path_with_increments(&scenario.system, &cfg, &init, inc.clone())?;
                pair_difference(&reference, &rec)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut report = EstimateReport::new("stability", spec.paths, spec.master_seed, spec.seeds());
    let mut constants = Vec::new();
    for (j, &s) in all_scales.iter().enumerate() {
        let diffs: Vec<f64> = per_pair.iter().map(|p| p[j].total).collect();
        let st = FunctionalStats::of(&diffs);
        let mut estimates = vec![Estimate {
            name: "difference".into(),
            mean: st.mean,
            std_error: st.std_error,
        }];
        if s > 0.0 {
            let c = st.mean / (s * s);
            constants.push(c);
            estimates.push(Estimate {
                name: "stability_constant".into(),
                mean: c,
                std_error: st.std_error / (s * s),
            });
        } else {
            let broken = per_pair.iter().filter(|p| !p[j].bit_identical).count();
            report.gates.push(Gate::at_most("s=0 pairs not bit-identical", broken as f64, 0.0));
            report.gates.push(Gate::at_most("s=0 difference", st.max, 0.0));
        }
        report.rows.push(ReportRow {
            parameter: "s".into(),
            value: s,
            estimates,
        });
    }
    if constants.len() >= 2 {
        let hi = constants.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = constants.iter().copied().fold(f64::INFINITY, f64::min);
        report.gates.push(Gate::at_most("stability constant spread", hi / lo, 2.0));
    }
    Ok(report.finish(started))
}
