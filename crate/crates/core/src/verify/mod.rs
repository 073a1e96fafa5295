//! Monte Carlo checks of the a priori estimates, pathwise stability, the
//! monodomain limit and the weak form.

mod energy;
mod monodomain;
mod residual;
mod stability;
pub mod stats;
mod translation;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use energy::{energy_report, energy_suite, moment_report, moment_suite, run_ladder, LadderRung};
pub use monodomain::{monodomain_compare, monodomain_stiffness, MonodomainSystem};
pub use residual::{weak_residual, ResidualSeries};
pub use stability::{pair_difference, stability_suite, PairDifference};
pub use stats::SlopeFit;
pub use translation::{translation_statistic, translation_suite};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
}

/// Estimates at one ladder point (one n, δ, s or ε).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub value: f64,
    pub estimates: Vec<Estimate>,
}

/// A one-sided pass/fail comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    /// "<=" or ">=".
    pub relation: String,
    pub threshold: f64,
    pub passed: bool,
}

impl Gate {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: "<=".into(),
            threshold,
            passed: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            relation: ">=".into(),
            threshold,
            passed: value >= threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: String,
    pub rows: Vec<ReportRow>,
    pub slopes: Vec<SlopeFit>,
    pub gates: Vec<Gate>,
    pub paths: usize,
    pub master_seed: u64,
    pub seeds: Vec<u64>,
    pub runtime_secs: f64,
    pub passed: bool,
}

impl EstimateReport {
    pub(crate) fn new(estimate: &str, paths: usize, master_seed: u64, seeds: Vec<u64>) -> Self {
        Self {
            estimate: estimate.into(),
            rows: Vec::new(),
            slopes: Vec::new(),
            gates: Vec::new(),
            paths,
            master_seed,
            seeds,
            runtime_secs: 0.0,
            passed: false,
        }
    }

    pub(crate) fn finish(mut self, started: std::time::Instant) -> Self {
        self.passed = self.gates.iter().all(|g| g.passed);
        self.runtime_secs = started.elapsed().as_secs_f64();
        self
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn row_estimate(&self, value: f64, name: &str) -> Option<&Estimate> {
        self.rows
            .iter()
            .find(|r| r.value == value)
            .and_then(|r| r.estimates.iter().find(|e| e.name == name))
    }

    /// One line per estimate: parameter, value, name, mean, std_error.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "value", "estimate", "mean", "std_error"])?;
        for row in &self.rows {
            for e in &row.estimates {
                w.write_record([
                    row.parameter.clone(),
                    row.value.to_string(),
                    e.name.clone(),
                    e.mean.to_string(),
                    e.std_error.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self.gates.iter().filter(|g| !g.passed).map(|g| g.name.as_str()).collect();
        if failed.is_empty() {
            format!("{}: PASS ({} gates, {:.1}s)", self.estimate, self.gates.len(), self.runtime_secs)
        } else {
            format!("{}: FAIL ({})", self.estimate, failed.join(", "))
        }
    }
}
