//! JSON scenario configuration.
//!
//! Every section has defaults, so `{}` is a complete configuration. Unknown
//! keys are rejected. [`ScenarioConfig::parse`] reports a schema error with
//! the path of the offending key, or every invariant violation at once.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Pairing};
use crate::error::{Error, Result};
use crate::galerkin::{GalerkinConfig, GalerkinSystem, InitialData, Stepper, DEFAULT_BLOWUP_THRESHOLD};
use crate::geometry::{BasisSet, ConductivityField, ConductivityKind, Domain, Face, FiberField};
use crate::membrane::{FhnParams, MembraneKind, MembraneModel};
use crate::noise::NoiseModel;
use crate::scenario::{Perturbation, Scenario};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigViolation {
    pub path: String,
    pub message: String,
}

impl ConfigViolation {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSpec {
    pub lengths: Vec<f64>,
    pub dirichlet_faces: Vec<Face>,
}

impl Default for DomainSpec {
    fn default() -> Self {
        Self {
            lengths: vec![1.0, 1.0],
            dirichlet_faces: vec![Face::XLow],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonPolicy {
    /// ε = 1/n.
    #[default]
    Tied,
    Fixed { value: f64 },
}

impl EpsilonPolicy {
    pub fn epsilon(&self, n: usize) -> f64 {
        match *self {
            EpsilonPolicy::Tied => 1.0 / n as f64,
            EpsilonPolicy::Fixed { value } => value,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConductivitySpec {
    pub kind: ConductivityKind,
    pub sigma_l_i: f64,
    pub sigma_t_i: f64,
    pub sigma_l_e: f64,
    pub sigma_t_e: f64,
}

impl Default for ConductivitySpec {
    fn default() -> Self {
        Self {
            kind: ConductivityKind::Axisymmetric {
                fiber: FiberField::Rotating {
                    angle: 0.0,
                    rate: PI / 3.0,
                },
            },
            sigma_l_i: 1.0,
            sigma_t_i: 0.2,
            sigma_l_e: 0.8,
            sigma_t_e: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MembraneSpec {
    pub kind: MembraneKind,
    pub params: FhnParams,
}

impl Default for MembraneSpec {
    fn default() -> Self {
        Self {
            kind: MembraneKind::FitzhughNagumo,
            params: FhnParams::default(),
        }
    }
}

/// β_k(v) = (strength/k)(offset + slope·v); the truncation follows n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSpec {
    pub strength: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slope: f64,
}

impl AmplitudeSpec {
    pub fn off() -> Self {
        Self {
            strength: 0.0,
            offset: 0.0,
            slope: 0.0,
        }
    }

    pub fn model(&self, n: usize) -> NoiseModel {
        NoiseModel {
            strength: self.strength,
            offset: self.offset,
            slope: self.slope,
            truncation: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// η, driving the potentials.
    pub v: AmplitudeSpec,
    /// σ, driving the gating variable.
    pub w: AmplitudeSpec,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            v: AmplitudeSpec {
                strength: 0.5,
                offset: 0.2,
                slope: 0.5,
            },
            w: AmplitudeSpec {
                strength: 0.1,
                offset: 1.0,
                slope: 0.0,
            },
        }
    }
}

impl NoiseSpec {
    pub fn off() -> Self {
        Self {
            v: AmplitudeSpec::off(),
            w: AmplitudeSpec::off(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// u_i = v, u_e = 0.
    #[default]
    Intra,
    /// u_i = 0, u_e = −v.
    Extra,
    /// u_i = v/2, u_e = −v/2.
    Symmetric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Rest,
    /// v₀(x) = amplitude·exp(−|x − center|²/(2 width²)), projected onto the basis.
    GaussianBump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
        #[serde(default)]
        split: Split,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSpec {
    pub profile: Profile,
    /// Constant w₀, projected onto the basis.
    pub w0: f64,
    pub perturbation: Option<Perturbation>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            profile: Profile::GaussianBump {
                amplitude: 1.0,
                center: vec![0.5, 0.5],
                width: 0.15,
                split: Split::Intra,
            },
            w0: 0.0,
            perturbation: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_end: f64,
    pub stepper: Stepper,
    pub snapshot_stride: usize,
    pub blowup_threshold: f64,
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            stepper: Stepper::SemiImplicit,
            snapshot_stride: 1,
            blowup_threshold: DEFAULT_BLOWUP_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub master_seed: u64,
    pub pairing: Pairing,
    pub workers: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            paths: 64,
            master_seed: 20_240_601,
            pairing: Pairing::Independent,
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub ladder: Vec<usize>,
    pub energy_growth: f64,
    pub moment_growth: f64,
    pub q0: f64,
    pub minimum_paths: usize,
    /// δ as multiples of dt.
    pub translation_steps: Vec<usize>,
    pub translation_thresholds: (f64, f64),
    pub stability_scales: Vec<f64>,
    pub stability_pairs: usize,
    pub monodomain_epsilons: Vec<f64>,
    pub residual_mode: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            ladder: vec![8, 16, 32],
            energy_growth: 1.25,
            moment_growth: 1.35,
            q0: 5.0,
            minimum_paths: 8,
            translation_steps: vec![2, 4, 8, 16],
            translation_thresholds: (0.25, 0.5),
            stability_scales: vec![1e-2, 1e-3, 1e-4],
            stability_pairs: 32,
            monodomain_epsilons: vec![1e-1, 1e-2, 1e-3],
            residual_mode: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    /// Write the binary increment stream of `simulate`.
    pub dump_increments: bool,
    /// Write every coefficient of every snapshot from `simulate`.
    pub full_coefficients: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            dump_increments: false,
            full_coefficients: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub version: u32,
    pub domain: DomainSpec,
    pub n: usize,
    /// Gauss points per axis; derived from the basis when absent.
    pub quad_order: Option<usize>,
    pub epsilon: EpsilonPolicy,
    pub conductivity: ConductivitySpec,
    pub membrane: MembraneSpec,
    pub noise: NoiseSpec,
    pub initial: InitialSpec,
    pub time: TimeSpec,
    pub ensemble: EnsembleConfig,
    pub verify: VerifySpec,
    pub output: OutputSpec,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            domain: DomainSpec::default(),
            n: 16,
            quad_order: None,
            epsilon: EpsilonPolicy::Tied,
            conductivity: ConductivitySpec::default(),
            membrane: MembraneSpec::default(),
            noise: NoiseSpec::default(),
            initial: InitialSpec::default(),
            time: TimeSpec::default(),
            ensemble: EnsembleConfig::default(),
            verify: VerifySpec::default(),
            output: OutputSpec::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(vec![ConfigViolation::new(path, e.into_inner().to_string())])
        })?;
        let violations = config.violations();
        if violations.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(violations))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every invariant violation, each with the path of its key.
    pub fn violations(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        let mut check = |ok: bool, path: &str, msg: &str| {
            if !ok {
                out.push(ConfigViolation::new(path, msg));
            }
        };
        check(self.version == CONFIG_VERSION, "version", "unsupported config version");
        let dim = self.domain.lengths.len();
        check(dim == 1 || dim == 2, "domain.lengths", "need one or two side lengths");
        check(
            self.domain.lengths.iter().all(|l| l.is_finite() && *l > 0.0),
            "domain.lengths",
            "side lengths must be positive",
        );
        check(
            !self.domain.dirichlet_faces.is_empty(),
            "domain.dirichlet_faces",
            "the Dirichlet part of the boundary must be nonempty",
        );
        check(
            self.domain.dirichlet_faces.iter().all(|f| f.axis() < dim),
            "domain.dirichlet_faces",
            "face does not exist in this dimension",
        );
        check(self.n >= 1, "n", "need at least one mode");
        check(self.quad_order != Some(0), "quad_order", "must be positive");
        if let EpsilonPolicy::Fixed { value } = self.epsilon {
            check(value.is_finite() && value > 0.0, "epsilon.value", "ε must be positive");
        }
        if let Err(e) = self.conductivity_field() {
            check(false, "conductivity", &e.to_string());
        }
        if self.membrane.kind == MembraneKind::FitzhughNagumo {
            if let Err(e) = MembraneModel::fitzhugh_nagumo(self.membrane.params) {
                check(false, "membrane.params", &e.to_string());
            }
        }
        for (key, a) in [("noise.v", &self.noise.v), ("noise.w", &self.noise.w)] {
            check(
                a.strength.is_finite() && a.strength >= 0.0,
                &format!("{key}.strength"),
                "must be finite and nonnegative",
            );
            check(
                a.offset.is_finite() && a.slope.is_finite(),
                key,
                "offset and slope must be finite",
            );
        }
        if let Profile::GaussianBump {
            amplitude,
            center,
            width,
            ..
        } = &self.initial.profile
        {
            check(amplitude.is_finite(), "initial.profile.amplitude", "must be finite");
            check(center.len() == dim, "initial.profile.center", "must have one entry per axis");
            check(width.is_finite() && *width > 0.0, "initial.profile.width", "must be positive");
        }
        check(self.initial.w0.is_finite(), "initial.w0", "must be finite");
        if let Some(p) = &self.initial.perturbation {
            if let Err(e) = p.validate() {
                check(false, "initial.perturbation", &e.to_string());
            }
        }
        if let Err(e) = self.galerkin_config().validate() {
            check(false, "time", &e.to_string());
        }
        check(self.ensemble.paths >= 1, "ensemble.paths", "need at least one path");
        check(self.ensemble.workers != Some(0), "ensemble.workers", "need at least one worker");
        let v = &self.verify;
        check(!v.ladder.is_empty() && v.ladder.iter().all(|n| *n >= 1), "verify.ladder", "need positive basis sizes");
        check(v.energy_growth > 0.0, "verify.energy_growth", "must be positive");
        check(v.moment_growth > 0.0, "verify.moment_growth", "must be positive");
        check(v.q0 >= 2.0, "verify.q0", "moment order must be at least 2");
        check(v.translation_steps.len() >= 3, "verify.translation_steps", "need at least three lags");
        check(v.translation_steps.iter().all(|k| *k >= 1), "verify.translation_steps", "lags must be positive");
        check(
            v.stability_scales.iter().all(|s| s.is_finite() && *s > 0.0),
            "verify.stability_scales",
            "must be positive",
        );
        check(v.stability_pairs >= 1, "verify.stability_pairs", "need at least one pair");
        check(
            !v.monodomain_epsilons.is_empty() && v.monodomain_epsilons.iter().all(|e| e.is_finite() && *e > 0.0),
            "verify.monodomain_epsilons",
            "need positive values",
        );
        check(v.residual_mode < self.n, "verify.residual_mode", "must be below n");
        out
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.domain.lengths.clone(), self.domain.dirichlet_faces.iter().copied())
    }

    pub fn conductivity_field(&self) -> Result<ConductivityField> {
        let c = &self.conductivity;
        ConductivityField::new(
            self.domain.lengths.len(),
            c.kind,
            c.sigma_l_i,
            c.sigma_t_i,
            c.sigma_l_e,
            c.sigma_t_e,
        )
    }

    pub fn membrane_model(&self) -> Result<MembraneModel> {
        match self.membrane.kind {
            MembraneKind::FitzhughNagumo => MembraneModel::fitzhugh_nagumo(self.membrane.params),
            MembraneKind::Passive => Ok(MembraneModel::passive()),
        }
    }

    pub fn galerkin_config(&self) -> GalerkinConfig {
        GalerkinConfig {
            dt: self.time.dt,
            t_end: self.time.t_end,
            stepper: self.time.stepper,
            snapshot_stride: self.time.snapshot_stride,
            blowup_threshold: self.time.blowup_threshold,
            keep_increments: true,
        }
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            paths: self.ensemble.paths,
            master_seed: self.ensemble.master_seed,
            pairing: self.ensemble.pairing,
            workers: self.ensemble.workers,
            functionals: crate::ensemble::Functional::ALL.to_vec(),
        }
    }

    pub fn initial_data(&self, basis: &BasisSet) -> InitialData {
        let n = basis.n();
        let w0 = if self.initial.w0 == 0.0 {
            vec![0.0; n]
        } else {
            basis.project(|_| self.initial.w0)
        };
        match &self.initial.profile {
            Profile::Rest => InitialData {
                w0,
                ..InitialData::rest(n)
            },
            Profile::GaussianBump {
                amplitude,
                center,
                width,
                split,
            } => {
                let v = basis.project(|x| {
                    let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                    amplitude * (-r2 / (2.0 * width * width)).exp()
                });
                let (ui0, ue0) = match split {
                    Split::Intra => (v, vec![0.0; n]),
                    Split::Extra => (vec![0.0; n], v.iter().map(|x| -x).collect()),
                    Split::Symmetric => (v.iter().map(|x| 0.5 * x).collect(), v.iter().map(|x| -0.5 * x).collect()),
                };
                InitialData { ui0, ue0, w0 }
            }
        }
    }

    /// The scenario at the configured n.
    pub fn scenario(&self) -> Result<Scenario> {
        self.scenario_at(self.n)
    }

    /// The scenario at basis size `n`, everything else unchanged.
    pub fn scenario_at(&self, n: usize) -> Result<Scenario> {
        let violations = self.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let basis = Arc::new(BasisSet::build(&self.domain()?, n, self.quad_order)?);
        let system = GalerkinSystem::new(
            basis.clone(),
            &self.conductivity_field()?,
            self.membrane_model()?,
            self.noise.v.model(n),
            self.noise.w.model(n),
            self.epsilon.epsilon(n),
        )?;
        let initial = self.initial_data(&basis);
        let sc = Scenario::new(system, self.galerkin_config(), initial)?;
        match self.initial.perturbation {
            Some(p) => sc.with_perturbation(p),
            None => Ok(sc),
        }
    }

    pub fn ladder(&self) -> Result<Vec<Scenario>> {
        self.verify.ladder.iter().map(|&n| self.scenario_at(n)).collect()
    }
}
