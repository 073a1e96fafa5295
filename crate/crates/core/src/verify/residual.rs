use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{GalerkinSystem, TrajectoryRecord, Workspace};
use crate::geometry::Medium;

/// Residuals of the two weak-form identities tested with e_ℓ:
///
/// ```text
/// ⟨v + εu_i⟩(t) − ⟨v + εu_i⟩(0) + ∫(K_i u_i + ⟨I⟩) ds − ∫⟨η(v)dW⟩
/// ⟨v − εu_e⟩(t) − ⟨v − εu_e⟩(0) − ∫(K_e u_e − ⟨I⟩) ds − ∫⟨η(v)dW⟩
/// ```
///
/// Time integrals use the trapezoid rule on the snapshots, the stochastic
/// integral the recorded increments at left points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub mode: usize,
    pub times: Vec<f64>,
    pub intra: Vec<f64>,
    pub extra: Vec<f64>,
}

impl ResidualSeries {
    pub fn max_abs(&self) -> f64 {
        self.intra.iter().chain(&self.extra).fold(0.0, |m, r| m.max(r.abs()))
    }
}

pub fn weak_residual(system: &GalerkinSystem, rec: &TrajectoryRecord, mode: usize) -> Result<ResidualSeries> {
    let n = system.n();
    if mode >= n {
        return Err(Error::param("mode", format!("test function {mode} is beyond the basis size {n}")));
    }
    let inc = rec
        .increments
        .as_ref()
        .ok_or_else(|| Error::MissingRecord("the trajectory did not keep its increments".into()))?;
    if rec.stride != 1 {
        return Err(Error::MissingRecord("the residual needs a snapshot at every step".into()));
    }
    if rec.n() != n || rec.epsilon != system.epsilon() {
        return Err(Error::DimensionMismatch {
            what: "trajectory",
            expected: n,
            found: rec.n(),
        });
    }
    let eps = system.epsilon();
    let se = eps.sqrt();
    let ki = system.stiffness(Medium::Intra).row(mode).into_owned();
    let ke = system.stiffness(Medium::Extra).row(mode).into_owned();
    let eta = system.eta();
    let mut ws = Workspace::new(system.basis());
    let mut prof = vec![0.0; n];
    let mut scratch = Vec::new();

    // integrands and noise term at every snapshot
    let mut drift_i = Vec::with_capacity(rec.snapshots.len());
    let mut drift_e = Vec::with_capacity(rec.snapshots.len());
    let mut noise = Vec::with_capacity(rec.snapshots.len());
    for (m, s) in rec.snapshots.iter().enumerate() {
        system.membrane_eval(s.c(), s.a(), &mut ws);
        let ion = ws.ion_projection()[mode];
        let ui_dot: f64 = ki.iter().zip(s.ci_s()).map(|(k, x)| k * x / se).sum();
        let ue_dot: f64 = ke.iter().zip(s.ce_s()).map(|(k, x)| k * x / se).sum();
        drift_i.push(-ui_dot - ion);
        drift_e.push(ue_dot - ion);
        if m < rec.steps {
            eta.spatial_profile_into(ws.v_samples(), system.basis(), &mut scratch, &mut prof);
            let xi: f64 = (1..=n).zip(inc.step_v(m)).map(|(k, d)| eta.gamma(k) * d).sum();
            noise.push(prof[mode] * xi);
        }
    }

    let s0 = &rec.snapshots[0];
    let xi0 = s0.c()[mode] + se * s0.ci_s()[mode];
    let xe0 = s0.c()[mode] - se * s0.ce_s()[mode];
    let h = rec.dt;
    let (mut int_i, mut int_e, mut int_w) = (0.0, 0.0, 0.0);
    let mut series = ResidualSeries {
        mode,
        times: vec![s0.t],
        intra: vec![0.0],
        extra: vec![0.0],
    };
    for m in 1..rec.snapshots.len() {
        int_i += 0.5 * h * (drift_i[m - 1] + drift_i[m]);
        int_e += 0.5 * h * (drift_e[m - 1] + drift_e[m]);
        int_w += noise[m - 1];
        let s = &rec.snapshots[m];
        let xi = s.c()[mode] + se * s.ci_s()[mode];
        let xe = s.c()[mode] - se * s.ce_s()[mode];
        series.times.push(s.t);
        series.intra.push(xi - xi0 - int_i - int_w);
        series.extra.push(xe - xe0 - int_e - int_w);
    }
    Ok(series)
}
