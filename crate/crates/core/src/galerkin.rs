//! The finite-dimensional SDE dC = F(C)dt + G(C)dW for the ε-regularised
//! bidomain system, in the scaled variables C = (c, √ε·c_i, √ε·c_e, a).
//!
//! With A_i = −K_i c_i − ⟨I⟩, A_e = K_e c_e − ⟨I⟩ and A_H = ⟨H⟩ the drift blocks are
//!
//! ```text
//! F_c  = (A_i + A_e) / (2+ε)
//! F_i  = ((1+ε)A_i − A_e) / (√ε(2+ε))
//! F_e  = (A_i − (1+ε)A_e) / (√ε(2+ε))
//! F_a  = A_H
//! ```
//!
//! and the noise blocks are (2G, √εG, −√εG, ζ) with
//! G_{ℓk} = ⟨η_k(v), e_ℓ⟩/(2+ε) and ζ_{ℓk} = ⟨σ_k(v), e_ℓ⟩.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{assemble_stiffness, BasisSet, ConductivityField, Medium};
use crate::membrane::MembraneModel;
use crate::noise::{NoiseKind, NoiseModel, WienerIncrements};

pub const DEFAULT_BLOWUP_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// C ← C + F(C)dt + G(C)ΔW.
    EulerMaruyama,
    /// Stiffness terms backward, membrane and noise forward.
    #[default]
    SemiImplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub stepper: Stepper,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    /// Keep the Wiener increments in the trajectory record.
    #[serde(default = "default_true")]
    pub keep_increments: bool,
}

fn default_stride() -> usize {
    1
}

fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_THRESHOLD
}

fn default_true() -> bool {
    true
}

impl GalerkinConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            stepper: Stepper::default(),
            snapshot_stride: 1,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
            keep_increments: true,
        }
    }

    pub fn with_stepper(mut self, stepper: Stepper) -> Self {
        self.stepper = stepper;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.snapshot_stride = stride;
        self
    }

    /// Number of steps; `t_end` must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "time step must be positive"));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::param("t_end", "horizon must be at least one time step"));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::param("t_end", "horizon must be a multiple of dt"));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        let steps = self.steps()?;
        if self.snapshot_stride == 0 || steps % self.snapshot_stride != 0 {
            return Err(Error::param(
                "snapshot_stride",
                format!("must divide the step count {steps}"),
            ));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::param("blowup_threshold", "must be positive"));
        }
        Ok(steps)
    }
}

/// Unscaled initial coefficients; v₀ = u_{i,0} − u_{e,0}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub ui0: Vec<f64>,
    pub ue0: Vec<f64>,
    pub w0: Vec<f64>,
}

impl InitialData {
    pub fn rest(n: usize) -> Self {
        Self {
            ui0: vec![0.0; n],
            ue0: vec![0.0; n],
            w0: vec![0.0; n],
        }
    }

    /// u_i = v, u_e = 0.
    pub fn from_v(v0: Vec<f64>, w0: Vec<f64>) -> Self {
        let n = v0.len();
        Self {
            ui0: v0,
            ue0: vec![0.0; n],
            w0,
        }
    }

    pub fn n(&self) -> usize {
        self.ui0.len()
    }

    pub fn v0(&self) -> Vec<f64> {
        self.ui0.iter().zip(&self.ue0).map(|(a, b)| a - b).collect()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (what, v) in [("ui0", &self.ui0), ("ue0", &self.ue0), ("w0", &self.w0)] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "initial coefficients",
                    expected: n,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(what, "initial coefficients must be finite"));
            }
        }
        Ok(())
    }
}

/// C = (c, √ε c_i, √ε c_e, a) at time t.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub t: f64,
    n: usize,
    data: Vec<f64>,
}

impl GalerkinState {
    pub fn zeros(n: usize) -> Self {
        Self {
            t: 0.0,
            n,
            data: vec![0.0; 4 * n],
        }
    }

    pub fn from_vector(data: Vec<f64>, t: f64) -> Result<Self> {
        if data.is_empty() || !data.len().is_multiple_of(4) {
            return Err(Error::DimensionMismatch {
                what: "scaled state",
                expected: 4 * (data.len() / 4).max(1),
                found: data.len(),
            });
        }
        Ok(Self {
            t,
            n: data.len() / 4,
            data,
        })
    }

    /// Scales unscaled coefficients (u_i, u_e, w) into C with c = u_i − u_e.
    pub fn from_initial(init: &InitialData, epsilon: f64) -> Result<Self> {
        let n = init.n();
        init.validate(n)?;
        let se = epsilon.sqrt();
        let mut data = init.v0();
        data.extend(init.ui0.iter().map(|x| se * x));
        data.extend(init.ue0.iter().map(|x| se * x));
        data.extend_from_slice(&init.w0);
        Ok(Self { t: 0.0, n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn c(&self) -> &[f64] {
        &self.data[..self.n]
    }

    pub fn ci_s(&self) -> &[f64] {
        &self.data[self.n..2 * self.n]
    }

    pub fn ce_s(&self) -> &[f64] {
        &self.data[2 * self.n..3 * self.n]
    }

    pub fn a(&self) -> &[f64] {
        &self.data[3 * self.n..]
    }

    /// Unscaled u_i coefficients.
    pub fn ui(&self, epsilon: f64) -> Vec<f64> {
        let se = epsilon.sqrt();
        self.ci_s().iter().map(|x| x / se).collect()
    }

    pub fn ue(&self, epsilon: f64) -> Vec<f64> {
        let se = epsilon.sqrt();
        self.ce_s().iter().map(|x| x / se).collect()
    }

    /// |C|² = ‖v‖² + ε‖u_i‖² + ε‖u_e‖² + ‖w‖².
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// max_ℓ |c_ℓ − (ci_s − ce_s)_ℓ/√ε|.
    pub fn consistency_defect(&self, epsilon: f64) -> f64 {
        let se = epsilon.sqrt();
        self.c()
            .iter()
            .zip(self.ci_s().iter().zip(self.ce_s()))
            .map(|(c, (i, e))| (c - (i - e) / se).abs())
            .fold(0.0, f64::max)
    }

    pub fn distance_sq(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

/// Noise blocks of G(C): the n×n matrices G and ζ; the scaled state sees
/// (2G, √εG, −√εG, ζ).
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionBlocks {
    pub g: DMatrix<f64>,
    pub zeta: DMatrix<f64>,
    epsilon: f64,
}

impl DiffusionBlocks {
    pub fn c_block(&self) -> DMatrix<f64> {
        &self.g * 2.0
    }

    pub fn ci_block(&self) -> DMatrix<f64> {
        &self.g * self.epsilon.sqrt()
    }

    pub fn ce_block(&self) -> DMatrix<f64> {
        &self.g * -self.epsilon.sqrt()
    }

    /// G(C)ΔW as a 4n vector.
    pub fn apply(&self, dw_v: &[f64], dw_w: &[f64]) -> Vec<f64> {
        let gv = &self.g * DVector::from_column_slice(dw_v);
        let zw = &self.zeta * DVector::from_column_slice(dw_w);
        let se = self.epsilon.sqrt();
        let mut out = Vec::with_capacity(4 * gv.len());
        out.extend(gv.iter().map(|x| 2.0 * x));
        out.extend(gv.iter().map(|x| se * x));
        out.extend(gv.iter().map(|x| -se * x));
        out.extend(zw.iter());
        out
    }

    /// |G(C)|² = (4 + 2ε)|G|² + |ζ|².
    pub fn frobenius_sq(&self) -> f64 {
        (4.0 + 2.0 * self.epsilon) * self.g.norm_squared() + self.zeta.norm_squared()
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self {
            g: &self.g - &other.g,
            zeta: &self.zeta - &other.zeta,
            epsilon: self.epsilon,
        }
    }
}

/// Drift, membrane and noise operators of one Galerkin level.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    basis: Arc<BasisSet>,
    k_i: DMatrix<f64>,
    k_e: DMatrix<f64>,
    membrane: MembraneModel,
    eta: NoiseModel,
    sigma: NoiseModel,
    epsilon: f64,
    additive_profiles: [Option<Vec<f64>>; 2],
}

/// Per-step membrane by-products: ∫v⁴ and ∫(wH − vI).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MembraneEval {
    pub v_l4: f64,
    pub source: f64,
}

/// Reusable quadrature-point buffers.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    v: Vec<f64>,
    w: Vec<f64>,
    ion: Vec<f64>,
    gate: Vec<f64>,
    scratch: Vec<f64>,
    p_i: Vec<f64>,
    p_h: Vec<f64>,
    prof_eta: Vec<f64>,
    prof_sigma: Vec<f64>,
}

impl Workspace {
    pub fn new(basis: &BasisSet) -> Self {
        let nq = basis.quadrature().len();
        let n = basis.n();
        Self {
            v: vec![0.0; nq],
            w: vec![0.0; nq],
            ion: vec![0.0; nq],
            gate: vec![0.0; nq],
            scratch: Vec::with_capacity(nq),
            p_i: vec![0.0; n],
            p_h: vec![0.0; n],
            prof_eta: vec![0.0; n],
            prof_sigma: vec![0.0; n],
        }
    }

    /// v at the quadrature points from the last membrane evaluation.
    pub fn v_samples(&self) -> &[f64] {
        &self.v
    }

    /// ⟨I(v,w), e_ℓ⟩ from the last membrane evaluation.
    pub fn ion_projection(&self) -> &[f64] {
        &self.p_i
    }

    /// ⟨H(v,w), e_ℓ⟩ from the last membrane evaluation.
    pub fn gating_projection(&self) -> &[f64] {
        &self.p_h
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// ℐ_F^M = −Σ_j U_jᵀK_jU_j with U_j the unscaled u_j difference.
    pub diffusion_pairing: f64,
    /// ℐ_F^I + ℐ_F^H: the membrane part of (F(C₁) − F(C₂))·(C₁ − C₂).
    pub membrane_pairing: f64,
    /// |G(C₁) − G(C₂)|² / |C₁ − C₂|², zero when C₁ = C₂.
    pub noise_quotient: f64,
    pub distance_sq: f64,
    /// 2(F(C₁) − F(C₂))·(C₁ − C₂) + |G(C₁) − G(C₂)|².
    pub lhs: f64,
    pub k_r: f64,
    /// K_r|C₁ − C₂|² − lhs.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub pairing: f64,
    pub noise_sq: f64,
    pub k: f64,
    /// K(1 + |C|²) − (2F(C)·C + |G(C)|²).
    pub margin: f64,
}

impl GalerkinSystem {
    pub fn new(
        basis: Arc<BasisSet>,
        conductivity: &ConductivityField,
        membrane: MembraneModel,
        eta: NoiseModel,
        sigma: NoiseModel,
        epsilon: f64,
    ) -> Result<Self> {
        let k_i = assemble_stiffness(&basis, conductivity, Medium::Intra)?;
        let k_e = assemble_stiffness(&basis, conductivity, Medium::Extra)?;
        Self::from_parts(basis, k_i, k_e, membrane, eta, sigma, epsilon)
    }

    pub fn from_parts(
        basis: Arc<BasisSet>,
        k_i: DMatrix<f64>,
        k_e: DMatrix<f64>,
        membrane: MembraneModel,
        eta: NoiseModel,
        sigma: NoiseModel,
        epsilon: f64,
    ) -> Result<Self> {
        let n = basis.n();
        for k in [&k_i, &k_e] {
            if k.nrows() != n || k.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what: "stiffness matrix",
                    expected: n,
                    found: k.nrows(),
                });
            }
        }
        for noise in [&eta, &sigma] {
            noise.validate()?;
            if noise.truncation != n {
                return Err(Error::DimensionMismatch {
                    what: "noise truncation",
                    expected: n,
                    found: noise.truncation,
                });
            }
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        let mut system = Self {
            basis,
            k_i,
            k_e,
            membrane,
            eta,
            sigma,
            epsilon,
            additive_profiles: [None, None],
        };
        let nq = system.basis.quadrature().len();
        let zero_v = vec![0.0; nq];
        for (slot, noise) in [&system.eta, &system.sigma].into_iter().enumerate() {
            if noise.kind() == NoiseKind::Additive {
                let mut p = vec![0.0; n];
                noise.spatial_profile_into(&zero_v, &system.basis, &mut Vec::new(), &mut p);
                system.additive_profiles[slot] = Some(p);
            }
        }
        Ok(system)
    }

    /// Same operators at a different ε.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn basis(&self) -> &Arc<BasisSet> {
        &self.basis
    }

    pub fn stiffness(&self, medium: Medium) -> &DMatrix<f64> {
        match medium {
            Medium::Intra => &self.k_i,
            Medium::Extra => &self.k_e,
        }
    }

    pub fn membrane(&self) -> &MembraneModel {
        &self.membrane
    }

    pub fn eta(&self) -> &NoiseModel {
        &self.eta
    }

    pub fn sigma(&self) -> &NoiseModel {
        &self.sigma
    }

    fn check_state(&self, state: &GalerkinState) -> Result<()> {
        if state.n() != self.n() {
            return Err(Error::DimensionMismatch {
                what: "scaled state",
                expected: 4 * self.n(),
                found: 4 * state.n(),
            });
        }
        Ok(())
    }

    /// Fills ws.p_i = ⟨I(v,w), e_ℓ⟩ and ws.p_h = ⟨H(v,w), e_ℓ⟩, leaving v at
    /// the quadrature points in ws.v.
    pub fn membrane_eval(&self, c: &[f64], a: &[f64], ws: &mut Workspace) -> MembraneEval {
        self.basis.synthesize_into(c, &mut ws.v);
        if self.membrane.is_passive() {
            ws.p_i.iter_mut().for_each(|x| *x = 0.0);
            ws.p_h.iter_mut().for_each(|x| *x = 0.0);
            let v4: Vec<f64> = ws.v.iter().map(|x| x.powi(4)).collect();
            return MembraneEval {
                v_l4: self.basis.quadrature().integrate(&v4),
                source: 0.0,
            };
        }
        self.basis.synthesize_into(a, &mut ws.w);
        let weights = self.basis.quadrature().weights();
        let mut eval = MembraneEval::default();
        for (q, &wq) in weights.iter().enumerate() {
            let (v, w) = (ws.v[q], ws.w[q]);
            let i = self.membrane.ion_current(v, w);
            let h = self.membrane.gating_rhs(v, w);
            ws.ion[q] = i;
            ws.gate[q] = h;
            eval.v_l4 += wq * v.powi(4);
            eval.source += wq * (w * h - v * i);
        }
        self.basis.project_samples_into(&ws.ion, &mut ws.p_i);
        self.basis.project_samples_into(&ws.gate, &mut ws.p_h);
        eval
    }

    fn blocks_into(&self, a_i: &[f64], a_e: &[f64], a_h: &[f64], out: &mut [f64]) {
        let n = self.n();
        let eps = self.epsilon;
        let d = 2.0 + eps;
        let sd = eps.sqrt() * d;
        for l in 0..n {
            out[l] = (a_i[l] + a_e[l]) / d;
            out[n + l] = ((1.0 + eps) * a_i[l] - a_e[l]) / sd;
            out[2 * n + l] = (a_i[l] - (1.0 + eps) * a_e[l]) / sd;
            out[3 * n + l] = a_h[l];
        }
    }

    /// F(C), with the membrane inner products evaluated by quadrature.
    pub fn assemble_drift(&self, state: &GalerkinState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let mut ws = Workspace::new(&self.basis);
        self.membrane_eval(state.c(), state.a(), &mut ws);
        let se = self.epsilon.sqrt();
        let ki = &self.k_i * DVector::from_column_slice(state.ci_s());
        let ke = &self.k_e * DVector::from_column_slice(state.ce_s());
        let a_i: Vec<f64> = ki.iter().zip(&ws.p_i).map(|(k, p)| -k / se - p).collect();
        let a_e: Vec<f64> = ke.iter().zip(&ws.p_i).map(|(k, p)| k / se - p).collect();
        let mut out = vec![0.0; 4 * self.n()];
        self.blocks_into(&a_i, &a_e, &ws.p_h, &mut out);
        Ok(out)
    }

    /// The stiffness part of F(C) (membrane off).
    pub fn linear_drift(&self, state: &GalerkinState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let se = self.epsilon.sqrt();
        let ki = &self.k_i * DVector::from_column_slice(state.ci_s());
        let ke = &self.k_e * DVector::from_column_slice(state.ce_s());
        let a_i: Vec<f64> = ki.iter().map(|k| -k / se).collect();
        let a_e: Vec<f64> = ke.iter().map(|k| k / se).collect();
        let mut out = vec![0.0; 4 * self.n()];
        self.blocks_into(&a_i, &a_e, &vec![0.0; self.n()], &mut out);
        Ok(out)
    }

    /// The membrane part of F(C), using ws.p_i and ws.p_h.
    fn nonlinear_drift_into(&self, ws: &Workspace, out: &mut [f64]) {
        let minus_pi: Vec<f64> = ws.p_i.iter().map(|p| -p).collect();
        self.blocks_into(&minus_pi, &minus_pi, &ws.p_h, out);
    }

    fn profiles_into(&self, ws: &mut Workspace) {
        let Workspace {
            v,
            scratch,
            prof_eta,
            prof_sigma,
            ..
        } = ws;
        for (slot, (noise, prof)) in [(&self.eta, prof_eta), (&self.sigma, prof_sigma)]
            .into_iter()
            .enumerate()
        {
            match &self.additive_profiles[slot] {
                Some(p) => prof.copy_from_slice(p),
                None => noise.spatial_profile_into(v, &self.basis, scratch, prof),
            }
        }
    }

    /// G(C).
    pub fn assemble_diffusion(&self, state: &GalerkinState) -> Result<DiffusionBlocks> {
        self.check_state(state)?;
        let mut ws = Workspace::new(&self.basis);
        self.basis.synthesize_into(state.c(), &mut ws.v);
        self.profiles_into(&mut ws);
        let n = self.n();
        let d = 2.0 + self.epsilon;
        let ge = self.eta.gammas();
        let gs = self.sigma.gammas();
        Ok(DiffusionBlocks {
            g: DMatrix::from_fn(n, n, |l, k| ge[k] * ws.prof_eta[l] / d),
            zeta: DMatrix::from_fn(n, n, |l, k| gs[k] * ws.prof_sigma[l]),
            epsilon: self.epsilon,
        })
    }

    /// Adds G(C)ΔW to `out` using the profiles in ws; G_{ℓk} = γ_k p_ℓ/(2+ε)
    /// so G ΔW = p·(γ·ΔW)/(2+ε).
    fn add_noise(&self, ws: &Workspace, dw_v: &[f64], dw_w: &[f64], out: &mut [f64]) {
        let n = self.n();
        let xi_v: f64 = (1..=n).zip(dw_v).map(|(k, dw)| self.eta.gamma(k) * dw).sum();
        let xi_w: f64 = (1..=n).zip(dw_w).map(|(k, dw)| self.sigma.gamma(k) * dw).sum();
        let se = self.epsilon.sqrt();
        let d = 2.0 + self.epsilon;
        for l in 0..n {
            let q = ws.prof_eta[l] * xi_v / d;
            out[l] += 2.0 * q;
            out[n + l] += se * q;
            out[2 * n + l] -= se * q;
            out[3 * n + l] += ws.prof_sigma[l] * xi_w;
        }
    }

    /// K_G = 2C_η/(2+ε) + C_σ, bounding |G(C)|² ≤ K_G(|Ω| + ‖v‖²) and
    /// |G(C₁) − G(C₂)|² ≤ K_G‖v₁ − v₂‖².
    pub fn noise_constant(&self) -> f64 {
        2.0 * self.eta.c_beta() / (2.0 + self.epsilon) + self.sigma.c_beta()
    }

    /// K_r = 2K_HI + K_G.
    pub fn monotonicity_constant(&self) -> f64 {
        2.0 * self.membrane.constants().one_sided_lipschitz + self.noise_constant()
    }

    /// K = max(2C₂ + K_G, (2C₃ + K_G)|Ω|).
    pub fn coercivity_constant(&self) -> f64 {
        let c = self.membrane.constants();
        let kg = self.noise_constant();
        let measure = self.basis.domain().measure();
        (2.0 * c.dissipation_c2 + kg).max((2.0 * c.dissipation_c3 + kg) * measure)
    }

    /// Splits 2(F(C₁) − F(C₂))·(C₁ − C₂) + |G(C₁) − G(C₂)|² into its parts.
    /// Both states should be consistent (c = (ci_s − ce_s)/√ε).
    pub fn check_monotonicity(&self, c1: &GalerkinState, c2: &GalerkinState) -> Result<MonotonicityReport> {
        self.check_state(c1)?;
        self.check_state(c2)?;
        let n = self.n();
        let diff: Vec<f64> = c1.as_slice().iter().zip(c2.as_slice()).map(|(a, b)| a - b).collect();
        let dist = diff.iter().map(|x| x * x).sum::<f64>();
        let k_r = self.monotonicity_constant();
        if dist == 0.0 {
            return Ok(MonotonicityReport {
                diffusion_pairing: 0.0,
                membrane_pairing: 0.0,
                noise_quotient: 0.0,
                distance_sq: 0.0,
                lhs: 0.0,
                k_r,
                margin: 0.0,
            });
        }
        let se = self.epsilon.sqrt();
        let ui = DVector::from_iterator(n, diff[n..2 * n].iter().map(|x| x / se));
        let ue = DVector::from_iterator(n, diff[2 * n..3 * n].iter().map(|x| x / se));
        let diffusion_pairing = -(ui.dot(&(&self.k_i * &ui)) + ue.dot(&(&self.k_e * &ue)));

        let mut ws = Workspace::new(&self.basis);
        let mut f1 = vec![0.0; 4 * n];
        let mut f2 = vec![0.0; 4 * n];
        self.membrane_eval(c1.c(), c1.a(), &mut ws);
        self.nonlinear_drift_into(&ws, &mut f1);
        self.membrane_eval(c2.c(), c2.a(), &mut ws);
        self.nonlinear_drift_into(&ws, &mut f2);
        let membrane_pairing: f64 = f1.iter().zip(&f2).zip(&diff).map(|((a, b), d)| (a - b) * d).sum();

        let noise = self
            .assemble_diffusion(c1)?
            .difference(&self.assemble_diffusion(c2)?)
            .frobenius_sq();
        let lhs = 2.0 * (diffusion_pairing + membrane_pairing) + noise;
        Ok(MonotonicityReport {
            diffusion_pairing,
            membrane_pairing,
            noise_quotient: noise / dist,
            distance_sq: dist,
            lhs,
            k_r,
            margin: k_r * dist - lhs,
        })
    }

    pub fn check_coercivity(&self, state: &GalerkinState) -> Result<CoercivityReport> {
        let f = self.assemble_drift(state)?;
        let pairing: f64 = f.iter().zip(state.as_slice()).map(|(a, b)| a * b).sum();
        let noise_sq = self.assemble_diffusion(state)?.frobenius_sq();
        let k = self.coercivity_constant();
        Ok(CoercivityReport {
            pairing,
            noise_sq,
            k,
            margin: k * (1.0 + state.norm_sq()) - (2.0 * pairing + noise_sq),
        })
    }
}

/// One Euler–Maruyama step C + F dt + G ΔW.
pub fn em_step(
    state: &GalerkinState,
    drift: &[f64],
    diffusion: &DiffusionBlocks,
    dw_v: &[f64],
    dw_w: &[f64],
    dt: f64,
) -> Result<GalerkinState> {
    let n = state.n();
    if drift.len() != 4 * n {
        return Err(Error::DimensionMismatch {
            what: "drift",
            expected: 4 * n,
            found: drift.len(),
        });
    }
    if dw_v.len() != n || dw_w.len() != n || diffusion.g.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "increments",
            expected: n,
            found: dw_v.len().min(dw_w.len()),
        });
    }
    let noise = diffusion.apply(dw_v, dw_w);
    let data = state
        .as_slice()
        .iter()
        .zip(drift)
        .zip(&noise)
        .map(|((c, f), g)| c + f * dt + g)
        .collect();
    Ok(GalerkinState {
        t: state.t + dt,
        n,
        data,
    })
}

/// Time-integrated and sup-in-time functionals of one path, accumulated at
/// every step (left-point rule for integrals).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    pub sup_v_sq: f64,
    pub sup_w_sq: f64,
    /// sup_t ε‖u_i‖², sup_t ε‖u_e‖².
    pub sup_u_scaled_sq: [f64; 2],
    /// ∫∫|∇u_j|² dx dt.
    pub grad_sq: [f64; 2],
    /// ∫ u_jᵀK_ju_j dt.
    pub stiffness_form: [f64; 2],
    /// ∫ ‖u_j‖² dt.
    pub l2_sq: [f64; 2],
    /// ∫∫ v⁴ dx dt.
    pub v_l4: f64,
    /// ∫∫ (wH − vI) dx dt.
    pub membrane_source: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub max_consistency_defect: f64,
}

impl PathFunctionals {
    /// E(T) + 2∫Σ u_jᵀK_ju_j − 2∫∫(wH − vI) − E(0); O(dt) for noise-free runs.
    pub fn energy_identity_residual(&self) -> f64 {
        self.final_energy + 2.0 * (self.stiffness_form[0] + self.stiffness_form[1])
            - 2.0 * self.membrane_source
            - self.initial_energy
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub epsilon: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub snapshots: Vec<GalerkinState>,
    pub increments: Option<Arc<WienerIncrements>>,
    pub functionals: PathFunctionals,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &GalerkinState {
        self.snapshots.last().expect("a record holds at least the initial state")
    }

    pub fn n(&self) -> usize {
        self.final_state().n()
    }
}

/// Samples increments from `seed` and integrates one path.
pub fn solve_path(
    system: &GalerkinSystem,
    config: &GalerkinConfig,
    initial: &InitialData,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let steps = config.validate()?;
    let inc = WienerIncrements::sample(system.n(), steps, config.dt, seed)?;
    solve_path_with_increments(system, config, initial, Arc::new(inc))
}

/// Integrates one path on a given increment stream.
pub fn solve_path_with_increments(
    system: &GalerkinSystem,
    config: &GalerkinConfig,
    initial: &InitialData,
    increments: Arc<WienerIncrements>,
) -> Result<TrajectoryRecord> {
    let steps = config.validate()?;
    let n = system.n();
    initial.validate(n)?;
    if increments.n != n || increments.steps != steps || increments.dt != config.dt {
        return Err(Error::IncrementMismatch(format!(
            "stream has n = {}, {} steps of {}; run needs n = {n}, {steps} steps of {}",
            increments.n, increments.steps, increments.dt, config.dt
        )));
    }
    let dt = config.dt;
    let eps = system.epsilon;
    let se = eps.sqrt();
    let mut state = GalerkinState::from_initial(initial, eps)?;
    let implicit = match config.stepper {
        Stepper::SemiImplicit => Some(ImplicitSolver::new(system, dt)?),
        Stepper::EulerMaruyama => None,
    };

    let mut ws = Workspace::new(&system.basis);
    let mut fun = PathFunctionals {
        initial_energy: state.norm_sq(),
        ..Default::default()
    };
    let mut snapshots = Vec::with_capacity(steps / config.snapshot_stride + 1);
    snapshots.push(state.clone());
    let mut next = vec![0.0; 4 * n];
    let mut lin = vec![0.0; 4 * n];
    let stiff = [&system.k_i, &system.k_e];

    track_sups(&mut fun, &state, eps);
    for step in 0..steps {
        let eval = system.membrane_eval(state.c(), state.a(), &mut ws);
        fun.v_l4 += dt * eval.v_l4;
        fun.membrane_source += dt * eval.source;
        for (j, blk) in [state.ci_s(), state.ce_s()].into_iter().enumerate() {
            let u = DVector::from_iterator(n, blk.iter().map(|x| x / se));
            fun.grad_sq[j] += dt * system.basis.dirichlet_energy(u.as_slice());
            fun.stiffness_form[j] += dt * u.dot(&(stiff[j] * &u));
            fun.l2_sq[j] += dt * u.norm_squared();
        }

        system.nonlinear_drift_into(&ws, &mut next);
        next.iter_mut().for_each(|f| *f *= dt);
        system.profiles_into(&mut ws);
        system.add_noise(&ws, increments.step_v(step), increments.step_w(step), &mut next);
        for (x, c) in next.iter_mut().zip(state.as_slice()) {
            *x += c;
        }
        match &implicit {
            Some(solver) => solver.solve(&mut next, dt)?,
            None => {
                let lin_drift = system.linear_drift(&state)?;
                lin.copy_from_slice(&lin_drift);
                next.iter_mut().zip(&lin).for_each(|(x, f)| *x += dt * f);
            }
        }
        state.data.copy_from_slice(&next);
        state.t = (step + 1) as f64 * dt;

        let norm_sq = state.norm_sq();
        let norm = norm_sq.sqrt();
        if !norm.is_finite() || norm > config.blowup_threshold {
            return Err(Error::BlowUp {
                step: step + 1,
                time: state.t,
                norm,
                threshold: config.blowup_threshold,
                energy: norm_sq,
            });
        }
        track_sups(&mut fun, &state, eps);
        if (step + 1) % config.snapshot_stride == 0 {
            snapshots.push(state.clone());
        }
    }
    fun.final_energy = state.norm_sq();

    Ok(TrajectoryRecord {
        epsilon: eps,
        dt,
        steps,
        stride: config.snapshot_stride,
        snapshots,
        increments: config.keep_increments.then_some(increments),
        functionals: fun,
    })
}

fn track_sups(fun: &mut PathFunctionals, state: &GalerkinState, eps: f64) {
    let sq = |x: &[f64]| x.iter().map(|y| y * y).sum::<f64>();
    fun.sup_v_sq = fun.sup_v_sq.max(sq(state.c()));
    fun.sup_w_sq = fun.sup_w_sq.max(sq(state.a()));
    fun.sup_u_scaled_sq[0] = fun.sup_u_scaled_sq[0].max(sq(state.ci_s()));
    fun.sup_u_scaled_sq[1] = fun.sup_u_scaled_sq[1].max(sq(state.ce_s()));
    fun.max_consistency_defect = fun.max_consistency_defect.max(state.consistency_defect(eps));
}

/// Backward solve of the stiffness part. Only S = (ci_s, ce_s) enters the
/// linear drift, through S' ↦ B S' on the S rows and A_c S' on the c row, so
/// (I − dt·A)C' = R reduces to (I − dt·B)S' = R_S, c' = R_c + dt·A_c S',
/// a' = R_a.
struct ImplicitSolver {
    lu: LU<f64, Dyn, Dyn>,
    c_row: DMatrix<f64>,
    n: usize,
}

impl ImplicitSolver {
    fn new(system: &GalerkinSystem, dt: f64) -> Result<Self> {
        let n = system.n();
        let eps = system.epsilon;
        let d = 2.0 + eps;
        let s = 1.0 / (eps * d);
        let mut m = DMatrix::<f64>::identity(2 * n, 2 * n);
        for l in 0..n {
            for k in 0..n {
                let (ki, ke) = (system.k_i[(l, k)], system.k_e[(l, k)]);
                m[(l, k)] += dt * s * (1.0 + eps) * ki;
                m[(l, n + k)] += dt * s * ke;
                m[(n + l, k)] += dt * s * ki;
                m[(n + l, n + k)] += dt * s * (1.0 + eps) * ke;
            }
        }
        let sd = 1.0 / (eps.sqrt() * d);
        let mut c_row = DMatrix::zeros(n, 2 * n);
        for l in 0..n {
            for k in 0..n {
                c_row[(l, k)] = -sd * system.k_i[(l, k)];
                c_row[(l, n + k)] = sd * system.k_e[(l, k)];
            }
        }
        let lu = m.lu();
        let diag = lu.u().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x.abs()), hi.max(x.abs())));
        if !(lo > 0.0) || !(hi / lo).is_finite() || hi / lo > 1e14 {
            return Err(Error::LinearSolve(format!(
                "I + dt·L is singular or ill-conditioned at dt = {dt}, ε = {eps}: pivot ratio {:.3e}",
                hi / lo
            )));
        }
        Ok(Self { lu, c_row, n })
    }

    fn solve(&self, r: &mut [f64], dt: f64) -> Result<()> {
        let n = self.n;
        let rhs = DVector::from_column_slice(&r[n..3 * n]);
        let s = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolve("LU back-substitution failed".into()))?;
        let cs = &self.c_row * &s;
        for l in 0..n {
            r[l] += dt * cs[l];
        }
        r[n..3 * n].copy_from_slice(s.as_slice());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ConductivityKind, Domain, Face, FiberField};
    use crate::membrane::FhnParams;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn anisotropic_system(n: usize, eps: f64, eta: NoiseModel, sigma: NoiseModel) -> GalerkinSystem {
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow]).unwrap();
        let basis = Arc::new(BasisSet::build(&domain, n, None).unwrap());
        let cond = ConductivityField::new(
            2,
            ConductivityKind::Axisymmetric {
                fiber: FiberField::Rotating { angle: 0.3, rate: 1.0 },
            },
            3.0,
            0.3,
            2.0,
            1.0,
        )
        .unwrap();
        GalerkinSystem::new(basis, &cond, MembraneModel::default(), eta, sigma, eps).unwrap()
    }

    fn default_system(n: usize) -> GalerkinSystem {
        anisotropic_system(
            n,
            1.0 / n as f64,
            NoiseModel::affine(0.2, 0.5, 0.5, n).unwrap(),
            NoiseModel::additive(0.1, n).unwrap(),
        )
    }

    fn random_consistent(n: usize, eps: f64, radius: f64, rng: &mut ChaCha8Rng) -> GalerkinState {
        let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let init = InitialData {
            ui0: draw(),
            ue0: draw(),
            w0: draw(),
        };
        let mut s = GalerkinState::from_initial(&init, eps).unwrap();
        let scale = radius * rng.random_range(0.0..1.0f64) / s.norm_sq().sqrt();
        s.as_mut_slice().iter_mut().for_each(|x| *x *= scale);
        s
    }

    #[test]
    fn rest_state_has_zero_drift() {
        let sys = default_system(6);
        let f = sys.assemble_drift(&GalerkinState::zeros(6)).unwrap();
        assert!(f.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn drift_block_identity() {
        let sys = default_system(8);
        let se = sys.epsilon().sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = random_consistent(8, sys.epsilon(), 3.0, &mut rng);
            let f = sys.assemble_drift(&s).unwrap();
            let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for l in 0..8 {
                let lhs = (f[8 + l] - f[16 + l]) / se;
                assert!((lhs - f[l]).abs() <= 1e-12 * scale, "{lhs} vs {}", f[l]);
            }
        }
    }

    #[test]
    fn linear_drift_matches_hand_assembly() {
        let n = 5;
        let basis = Arc::new(BasisSet::build(&Domain::unit_interval(), n, None).unwrap());
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(basis.eigenvalues()));
        let sys = GalerkinSystem::from_parts(
            basis,
            lam.clone(),
            lam.clone(),
            MembraneModel::passive(),
            NoiseModel::zero(n),
            NoiseModel::zero(n),
            1.0,
        )
        .unwrap();
        let ci = DVector::from_vec(vec![0.3, -1.0, 0.2, 0.7, 0.1]);
        let ce = DVector::from_vec(vec![-0.4, 0.5, 0.0, 0.2, 1.0]);
        let init = InitialData {
            ui0: ci.as_slice().to_vec(),
            ue0: ce.as_slice().to_vec(),
            w0: vec![0.5; n],
        };
        let state = GalerkinState::from_initial(&init, 1.0).unwrap();
        let f = sys.assemble_drift(&state).unwrap();
        // (A_i + A_e)/3 with A_i = −Λc_i, A_e = Λc_e
        let want_c = -(&lam * (&ci - &ce)) / 3.0;
        let want_i = (-(&lam * &ci) * 2.0 - &lam * &ce) / 3.0;
        let want_e = (-(&lam * &ci) - &lam * &ce * 2.0) / 3.0;
        for l in 0..n {
            assert_abs_diff_eq!(f[l], want_c[l], epsilon = 1e-12);
            assert_abs_diff_eq!(f[n + l], want_i[l], epsilon = 1e-12);
            assert_abs_diff_eq!(f[2 * n + l], want_e[l], epsilon = 1e-12);
            assert_eq!(f[3 * n + l], 0.0);
        }
    }

    #[test]
    fn diffusion_blocks() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zero = anisotropic_system(n, 0.1, NoiseModel::zero(n), NoiseModel::zero(n));
        let s = random_consistent(n, 0.1, 2.0, &mut rng);
        let g = zero.assemble_diffusion(&s).unwrap();
        assert_eq!(g.frobenius_sq(), 0.0);

        let sys = default_system(n);
        let g = sys.assemble_diffusion(&s).unwrap();
        assert_eq!(g.ci_block(), -g.ce_block());

        let add = anisotropic_system(n, 0.1, NoiseModel::additive(0.3, n).unwrap(), NoiseModel::additive(0.2, n).unwrap());
        let s2 = random_consistent(n, 0.1, 2.0, &mut rng);
        assert_eq!(add.assemble_diffusion(&s).unwrap(), add.assemble_diffusion(&s2).unwrap());
    }

    #[test]
    fn fast_noise_path_matches_blocks() {
        let n = 6;
        let sys = default_system(n);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_consistent(n, sys.epsilon(), 2.0, &mut rng);
        let dw_v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        let dw_w: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        let want = sys.assemble_diffusion(&s).unwrap().apply(&dw_v, &dw_w);
        let mut ws = Workspace::new(sys.basis());
        sys.basis().synthesize_into(s.c(), &mut ws.v);
        sys.profiles_into(&mut ws);
        let mut got = vec![0.0; 4 * n];
        sys.add_noise(&ws, &dw_v, &dw_w, &mut got);
        for (a, b) in got.iter().zip(&want) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn em_step_with_nothing_to_do() {
        let n = 3;
        let s = GalerkinState::from_vector((0..12).map(|i| i as f64).collect(), 0.5).unwrap();
        let g = DiffusionBlocks {
            g: DMatrix::zeros(n, n),
            zeta: DMatrix::zeros(n, n),
            epsilon: 0.1,
        };
        let next = em_step(&s, &[0.0; 12], &g, &[0.3; 3], &[0.1; 3], 0.01).unwrap();
        assert_eq!(next.as_slice(), s.as_slice());
        assert!(em_step(&s, &[0.0; 8], &g, &[0.3; 3], &[0.1; 3], 0.01).is_err());
    }

    #[test]
    fn one_em_step_preserves_consistency() {
        let n = 8;
        let sys = default_system(n);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_consistent(n, sys.epsilon(), 2.0, &mut rng);
        let f = sys.assemble_drift(&s).unwrap();
        let g = sys.assemble_diffusion(&s).unwrap();
        let inc = WienerIncrements::sample(n, 1, 1e-4, 9).unwrap();
        let next = em_step(&s, &f, &g, inc.step_v(0), inc.step_w(0), 1e-4).unwrap();
        assert!(next.consistency_defect(sys.epsilon()) < 1e-13);
    }

    #[test]
    fn decoupled_gating_decays_exponentially() {
        let n = 4;
        let params = FhnParams {
            kappa: 0.0,
            ..FhnParams::default()
        };
        let basis = Arc::new(BasisSet::build(&Domain::unit_interval(), n, None).unwrap());
        let cond = ConductivityField::isotropic(1, 1.0, 1.0).unwrap();
        let membrane = MembraneModel::fitzhugh_nagumo(params).unwrap();
        let sys = GalerkinSystem::new(basis, &cond, membrane, NoiseModel::zero(n), NoiseModel::zero(n), 0.25).unwrap();
        let init = InitialData {
            ui0: vec![0.0; n],
            ue0: vec![0.0; n],
            w0: vec![1.0, -0.5, 0.25, 0.1],
        };
        let config = GalerkinConfig::new(1e-3, 1.0).with_stepper(Stepper::EulerMaruyama);
        let rec = solve_path(&sys, &config, &init, 0).unwrap();
        let decay = (-params.eps * params.gamma).exp();
        for (a, a0) in rec.final_state().a().iter().zip(&init.w0) {
            assert!((a - a0 * decay).abs() <= 1e-3 * (a0 * decay).abs());
        }
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let n = 6;
        let sys = anisotropic_system(n, 0.2, NoiseModel::zero(n), NoiseModel::zero(n));
        for stepper in [Stepper::EulerMaruyama, Stepper::SemiImplicit] {
            let config = GalerkinConfig::new(1e-3, 0.05).with_stepper(stepper);
            let rec = solve_path(&sys, &config, &InitialData::rest(n), 11).unwrap();
            assert!(rec.snapshots.iter().all(|s| s.norm_sq() == 0.0));
            assert_eq!(rec.snapshots.len(), 51);
        }
    }

    #[test]
    fn same_seed_same_path() {
        let n = 6;
        let sys = default_system(n);
        let config = GalerkinConfig::new(1e-3, 0.1);
        let init = InitialData::from_v(vec![0.5, 0.2, 0.0, 0.1, 0.0, 0.0], vec![0.0; n]);
        let a = solve_path(&sys, &config, &init, 77).unwrap();
        let b = solve_path(&sys, &config, &init, 77).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.functionals, b.functionals);
        let c = solve_path(&sys, &config, &init, 78).unwrap();
        assert_ne!(a.final_state(), c.final_state());
    }

    #[test]
    fn deterministic_runs_converge_first_order() {
        let n = 8;
        let sys = anisotropic_system(n, 0.125, NoiseModel::zero(n), NoiseModel::zero(n));
        let init = InitialData::from_v(vec![1.0, 0.5, -0.3, 0.2, 0.0, 0.1, 0.0, 0.0], vec![0.1; n]);
        let run = |dt: f64| solve_path(&sys, &GalerkinConfig::new(dt, 0.5), &init, 0).unwrap();
        let (a, b, c) = (run(4e-3), run(2e-3), run(1e-3));
        let d1 = a.final_state().distance_sq(b.final_state()).sqrt();
        let d2 = b.final_state().distance_sq(c.final_state()).sqrt();
        let ratio = d2 / d1;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn energy_identity_residual_is_first_order() {
        let n = 8;
        let sys = anisotropic_system(n, 0.125, NoiseModel::zero(n), NoiseModel::zero(n));
        let init = InitialData::from_v(vec![1.0, 0.5, -0.3, 0.2, 0.0, 0.1, 0.0, 0.0], vec![0.1; n]);
        let res = |dt: f64| {
            solve_path(&sys, &GalerkinConfig::new(dt, 0.5), &init, 0)
                .unwrap()
                .functionals
                .energy_identity_residual()
        };
        let (r1, r2) = (res(2e-3), res(1e-3));
        assert!(r1.abs() < 0.05, "{r1}");
        assert!((r2 / r1).abs() < 0.6, "{r1} {r2}");
    }

    #[test]
    fn semi_implicit_passive_energy_never_increases() {
        let n = 10;
        let domain = Domain::rectangle(1.0, 1.0, [Face::XLow, Face::YHigh]).unwrap();
        let basis = Arc::new(BasisSet::build(&domain, n, None).unwrap());
        let cond = ConductivityField::new(2, ConductivityKind::Constant, 5.0, 0.5, 1.0, 2.0).unwrap();
        let sys = GalerkinSystem::new(basis, &cond, MembraneModel::passive(), NoiseModel::zero(n), NoiseModel::zero(n), 0.01)
            .unwrap();
        let init = InitialData {
            ui0: (0..n).map(|i| 1.0 / (1 + i) as f64).collect(),
            ue0: (0..n).map(|i| (i as f64).cos()).collect(),
            w0: vec![0.0; n],
        };
        for dt in [1e-3, 0.1, 10.0] {
            let rec = solve_path(&sys, &GalerkinConfig::new(dt, 20.0 * dt), &init, 0).unwrap();
            for w in rec.snapshots.windows(2) {
                assert!(w[1].norm_sq() <= w[0].norm_sq() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn explicit_stepper_trips_the_blowup_guard() {
        let n = 12;
        let sys = anisotropic_system(n, 1e-3, NoiseModel::zero(n), NoiseModel::zero(n));
        let init = InitialData::from_v((0..n).map(|i| 0.1 / (1 + i) as f64).collect(), vec![0.0; n]);
        let config = GalerkinConfig::new(1e-2, 1.0).with_stepper(Stepper::EulerMaruyama);
        match solve_path(&sys, &config, &init, 0) {
            Err(Error::BlowUp { step, norm, .. }) => assert!(step > 0 && !(norm <= 1e6)),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn consistency_over_many_steps() {
        let n = 8;
        let sys = default_system(n);
        let init = InitialData::from_v(vec![1.0, 0.5, -0.3, 0.2, 0.0, 0.1, 0.0, 0.0], vec![0.0; n]);
        let rec = solve_path(&sys, &GalerkinConfig::new(1e-3, 2.0).with_stride(100), &init, 5).unwrap();
        assert!(rec.functionals.max_consistency_defect <= 1e-10);
        assert_eq!(rec.snapshots.len(), 21);
    }

    #[test]
    fn config_rejects_bad_horizons() {
        assert!(GalerkinConfig::new(0.0, 1.0).validate().is_err());
        assert!(GalerkinConfig::new(0.1, 0.05).validate().is_err());
        assert!(GalerkinConfig::new(0.3, 1.0).validate().is_err());
        assert!(GalerkinConfig::new(0.1, 1.0).with_stride(3).validate().is_err());
        assert_eq!(GalerkinConfig::new(0.1, 1.0).with_stride(5).validate().unwrap(), 10);
    }

    #[test]
    fn increment_shape_is_checked() {
        let sys = default_system(4);
        let inc = Arc::new(WienerIncrements::sample(4, 10, 1e-3, 0).unwrap());
        let config = GalerkinConfig::new(1e-3, 0.02);
        assert!(matches!(
            solve_path_with_increments(&sys, &config, &InitialData::rest(4), inc),
            Err(Error::IncrementMismatch(_))
        ));
    }

    #[test]
    fn monotonicity_decomposition() {
        let n = 8;
        let sys = default_system(n);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = random_consistent(n, sys.epsilon(), 5.0, &mut rng);
        let same = sys.check_monotonicity(&s, &s).unwrap();
        assert_eq!((same.lhs, same.diffusion_pairing, same.noise_quotient), (0.0, 0.0, 0.0));
        for _ in 0..200 {
            let a = random_consistent(n, sys.epsilon(), 10.0, &mut rng);
            let b = random_consistent(n, sys.epsilon(), 10.0, &mut rng);
            let r = sys.check_monotonicity(&a, &b).unwrap();
            assert!(r.diffusion_pairing <= 0.0);
            assert!(r.margin >= 0.0, "{r:?}");
        }
    }

    #[test]
    fn stiffness_pairing_equals_linear_drift_pairing() {
        let n = 8;
        let sys = default_system(n);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_consistent(n, sys.epsilon(), 3.0, &mut rng);
        let b = random_consistent(n, sys.epsilon(), 3.0, &mut rng);
        let fa = sys.linear_drift(&a).unwrap();
        let fb = sys.linear_drift(&b).unwrap();
        let pairing: f64 = fa
            .iter()
            .zip(&fb)
            .zip(a.as_slice().iter().zip(b.as_slice()))
            .map(|((x, y), (p, q))| (x - y) * (p - q))
            .sum();
        let r = sys.check_monotonicity(&a, &b).unwrap();
        assert_abs_diff_eq!(pairing, r.diffusion_pairing, epsilon = 1e-9 * pairing.abs());
    }

    #[test]
    fn passive_noiseless_pairs_are_dissipative() {
        let n = 8;
        let domain = Domain::unit_interval();
        let basis = Arc::new(BasisSet::build(&domain, n, None).unwrap());
        let cond = ConductivityField::isotropic(1, 2.0, 1.0).unwrap();
        let sys = GalerkinSystem::new(basis, &cond, MembraneModel::passive(), NoiseModel::zero(n), NoiseModel::zero(n), 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let mut a = random_consistent(n, 0.1, 4.0, &mut rng);
            let mut b = random_consistent(n, 0.1, 4.0, &mut rng);
            a.as_mut_slice()[3 * n..].iter_mut().for_each(|x| *x = 0.0);
            b.as_mut_slice()[3 * n..].iter_mut().for_each(|x| *x = 0.0);
            let r = sys.check_monotonicity(&a, &b).unwrap();
            assert!(r.lhs <= 0.0);
            assert_eq!(r.membrane_pairing, 0.0);
        }
    }

    #[test]
    fn coercivity_margins() {
        let n = 8;
        let sys = default_system(n);
        let zero = sys.check_coercivity(&GalerkinState::zeros(n)).unwrap();
        assert!(zero.margin >= 0.0);
        assert_abs_diff_eq!(zero.margin, sys.coercivity_constant() - zero.noise_sq, epsilon = 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let s = random_consistent(n, sys.epsilon(), 10.0, &mut rng);
            assert!(sys.check_coercivity(&s).unwrap().margin >= 0.0);
        }
        // along a ray the margin grows at least like K|C|²
        let dir = random_consistent(n, sys.epsilon(), 1.0, &mut rng);
        let unit = 1.0 / dir.norm_sq().sqrt();
        let mut prev = 0.0;
        for r in [1.0, 2.0, 4.0, 8.0, 16.0] {
            let s = GalerkinState::from_vector(dir.as_slice().iter().map(|x| x * unit * r).collect(), 0.0).unwrap();
            let m = sys.check_coercivity(&s).unwrap().margin;
            assert!(m >= prev);
            prev = m;
        }
    }
}
