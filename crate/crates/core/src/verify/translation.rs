use std::time::Instant;

use crate::ensemble::{map_paths, splitmix64, EnsembleSpec, FunctionalStats};

const BOOTSTRAP_STREAM: u64 = 0xB0B5_7A4B;
use crate::error::{Error, Result};
use crate::galerkin::TrajectoryRecord;
use crate::scenario::Scenario;

use super::stats::loglog_slope;
use super::{Estimate, EstimateReport, Gate, ReportRow};

/// sup_{τ ≤ δ} ∫₀^{T−τ} ‖u(t+τ) − u(t)‖² dt for u = v (`block` 0) or w
/// (`block` 3), with τ running over snapshot multiples and a left-point
/// rule in t.
pub fn translation_statistic(rec: &TrajectoryRecord, block: usize, delta_snapshots: usize) -> f64 {
    let n = rec.n();
    let h = rec.dt * rec.stride as f64;
    let snaps = &rec.snapshots;
    let range = block * n..(block + 1) * n;
    (1..=delta_snapshots)
        .map(|k| {
            (0..snaps.len().saturating_sub(k))
                .map(|m| {
                    let a = &snaps[m + k].as_slice()[range.clone()];
                    let b = &snaps[m].as_slice()[range.clone()];
                    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                * h
        })
        .fold(0.0, f64::max)
}

/// Fits log E[statistic] against log δ for v and w and gates
/// slope ≥ threshold − bootstrap half-width.
pub fn translation_suite(
    scenario: &Scenario,
    spec: &EnsembleSpec,
    deltas: &[f64],
    thresholds: (f64, f64),
) -> Result<EstimateReport> {
    let started = Instant::now();
    if deltas.len() < 3 {
        return Err(Error::param("deltas", "need at least three values to fit a slope"));
    }
    let cfg = &scenario.config;
    let h = cfg.dt * cfg.snapshot_stride as f64;
    let mut lags = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let k = (d / h).round();
        if !(d > 0.0) || (k * h - d).abs() > 1e-9 * d {
            return Err(Error::param("deltas", format!("δ = {d} is not a positive multiple of the snapshot interval {h}")));
        }
        if d > cfg.t_end / 4.0 {
            return Err(Error::param("deltas", format!("δ = {d} exceeds T/4")));
        }
        lags.push(k as usize);
    }
    let samples = map_paths(spec, |_, seed| {
        let rec = scenario.solve(seed)?;
        Ok((
            lags.iter().map(|&k| translation_statistic(&rec, 0, k)).collect::<Vec<f64>>(),
            lags.iter().map(|&k| translation_statistic(&rec, 3, k)).collect::<Vec<f64>>(),
        ))
    })?;
    let (v_samples, w_samples): (Vec<Vec<f64>>, Vec<Vec<f64>>) = samples.into_iter().unzip();

    let mut report = EstimateReport::new("translation", spec.paths, spec.master_seed, spec.seeds());
    for (j, &d) in deltas.iter().enumerate() {
        let est = |name: &str, s: &[Vec<f64>]| {
            let st = FunctionalStats::of(&s.iter().map(|p| p[j]).collect::<Vec<_>>());
            Estimate {
                name: name.into(),
                mean: st.mean,
                std_error: st.std_error,
            }
        };
        report.rows.push(ReportRow {
            parameter: "delta".into(),
            value: d,
            estimates: vec![est("v", &v_samples), est("w", &w_samples)],
        });
    }
    let boot_seed = splitmix64(spec.master_seed ^ BOOTSTRAP_STREAM);
    for (name, s, threshold) in [("v", &v_samples, thresholds.0), ("w", &w_samples, thresholds.1)] {
        let fit = loglog_slope(name, deltas, s, boot_seed)?;
        report.gates.push(Gate::at_least(
            format!("slope[{name}]"),
            fit.slope,
            threshold - fit.half_width,
        ));
        report.slopes.push(fit);
    }
    Ok(report.finish(started))
}
