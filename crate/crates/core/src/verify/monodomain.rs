use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::galerkin::{solve_path_with_increments, GalerkinConfig, GalerkinSystem, InitialData, Workspace};
use crate::geometry::{BasisSet, ConductivityField};
use crate::noise::WienerIncrements;
use crate::scenario::Scenario;

use super::{Estimate, EstimateReport, Gate, ReportRow};

/// Stiffness of M = M_i/(1+λ) for M_i = λM_e, together with λ.
pub fn monodomain_stiffness(basis: &BasisSet, conductivity: &ConductivityField) -> Result<(DMatrix<f64>, f64)> {
    let lambda = conductivity.proportionality().ok_or_else(|| {
        Error::NotProportional(format!(
            "longitudinal ratio {} differs from transverse ratio {}",
            conductivity.sigma_l_i / conductivity.sigma_l_e,
            conductivity.sigma_t_i / conductivity.sigma_t_e
        ))
    })?;
    let k_i = crate::geometry::assemble_stiffness(basis, conductivity, crate::geometry::Medium::Intra)?;
    Ok((k_i / (1.0 + lambda), lambda))
}

/// dv = [−K_M c − ⟨I⟩]dt + ⟨η(v)⟩dW^v, dw = ⟨H⟩dt + ⟨σ(v)⟩dW^w, with the
/// stiffness backward and everything else forward.
#[derive(Clone, Debug)]
pub struct MonodomainSystem {
    system: Arc<GalerkinSystem>,
    k_m: DMatrix<f64>,
    lambda: f64,
}

impl MonodomainSystem {
    /// Borrows membrane, noise and basis from a bidomain system.
    pub fn from_bidomain(system: Arc<GalerkinSystem>, conductivity: &ConductivityField) -> Result<Self> {
        let (k_m, lambda) = monodomain_stiffness(system.basis(), conductivity)?;
        Ok(Self { system, k_m, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.k_m
    }

    /// v coefficients at every step, including t = 0.
    pub fn solve(&self, config: &GalerkinConfig, v0: &[f64], w0: &[f64], inc: &WienerIncrements) -> Result<Vec<Vec<f64>>> {
        let steps = config.validate()?;
        let n = self.system.n();
        if inc.n != n || inc.steps != steps || inc.dt != config.dt {
            return Err(Error::IncrementMismatch("monodomain run and stream disagree".into()));
        }
        let dt = config.dt;
        let lu = (DMatrix::identity(n, n) + &self.k_m * dt).lu();
        let mut c = v0.to_vec();
        let mut a = w0.to_vec();
        let mut ws = Workspace::new(self.system.basis());
        let basis = self.system.basis();
        let (eta, sigma) = (self.system.eta(), self.system.sigma());
        let mut prof_eta = vec![0.0; n];
        let mut prof_sigma = vec![0.0; n];
        let mut scratch = Vec::new();
        let mut out = Vec::with_capacity(steps + 1);
        out.push(c.clone());
        for step in 0..steps {
            self.system.membrane_eval(&c, &a, &mut ws);
            eta.spatial_profile_into(ws.v_samples(), basis, &mut scratch, &mut prof_eta);
            sigma.spatial_profile_into(ws.v_samples(), basis, &mut scratch, &mut prof_sigma);
            let xi_v: f64 = (1..=n).zip(inc.step_v(step)).map(|(k, d)| eta.gamma(k) * d).sum();
            let xi_w: f64 = (1..=n).zip(inc.step_w(step)).map(|(k, d)| sigma.gamma(k) * d).sum();
            let rhs = DVector::from_iterator(
                n,
                (0..n).map(|l| c[l] - dt * ws.ion_projection()[l] + prof_eta[l] * xi_v),
            );
            let next = lu
                .solve(&rhs)
                .ok_or_else(|| Error::LinearSolve("I + dt·K_M is singular".into()))?;
            for l in 0..n {
                a[l] += dt * ws.gating_projection()[l] + prof_sigma[l] * xi_w;
            }
            c.copy_from_slice(next.as_slice());
            if !c.iter().chain(&a).all(|x| x.is_finite()) {
                return Err(Error::BlowUp {
                    step: step + 1,
                    time: (step + 1) as f64 * dt,
                    norm: f64::INFINITY,
                    threshold: config.blowup_threshold,
                    energy: f64::INFINITY,
                });
            }
            out.push(c.clone());
        }
        Ok(out)
    }
}

/// ‖v_bi − v_mono‖_{L²(Ω_T)} for each ε on one shared increment stream;
/// the gate asks for strict decrease as ε decreases.
pub fn monodomain_compare(
    scenario: &Scenario,
    conductivity: &ConductivityField,
    epsilons: &[f64],
    seed: u64,
) -> Result<EstimateReport> {
    let started = Instant::now();
    if epsilons.is_empty() || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::param("epsilons", "need positive values"));
    }
    let mono = MonodomainSystem::from_bidomain(scenario.system.clone(), conductivity)?;
    let mut cfg = scenario.config.clone();
    cfg.snapshot_stride = 1;
    cfg.keep_increments = false;
    let inc = scenario.increments(seed)?;
    let init: InitialData = scenario.initial_for(seed);
    let v_mono = mono.solve(&cfg, &init.v0(), &init.w0, &inc)?;

    let mut eps_sorted = epsilons.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    let mut report = EstimateReport::new("monodomain", 1, seed, vec![seed]);
    let mut diffs = Vec::new();
    for &eps in &eps_sorted {
        let sys = scenario.system.with_epsilon(eps)?;
        let rec = solve_path_with_increments(&sys, &cfg, &init, inc.clone())?;
        let n = sys.n();
        let sq: f64 = rec.snapshots[..rec.snapshots.len() - 1]
            .iter()
            .zip(&v_mono)
            .map(|(s, m)| s.c()[..n].iter().zip(m).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
            .sum::<f64>()
            * cfg.dt;
        let d = sq.sqrt();
        diffs.push(d);
        report.rows.push(ReportRow {
            parameter: "epsilon".into(),
            value: eps,
            estimates: vec![Estimate {
                name: "v_difference_l2".into(),
                mean: d,
                std_error: 0.0,
            }],
        });
    }
    for (w, e) in diffs.windows(2).zip(eps_sorted.windows(2)) {
        let ratio = if w[0] == 0.0 && w[1] == 0.0 { 0.0 } else { w[1] / w[0] };
        let mut gate = Gate::at_most(format!("decrease eps={}->{}", e[0], e[1]), ratio, 1.0);
        gate.relation = "<".into();
        gate.passed = ratio < 1.0;
        report.gates.push(gate);
    }
    report.rows.iter_mut().for_each(|r| r.parameter = format!("epsilon (lambda={})", mono.lambda()));
    Ok(report.finish(started))
}
