//! A solvable scenario: operators, time grid and the law of the initial data.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{solve_path_with_increments, GalerkinConfig, GalerkinSystem, InitialData, TrajectoryRecord};
use crate::noise::WienerIncrements;

/// ChaCha stream used for random initial data, disjoint from the noise streams.
pub const STREAM_INITIAL: u64 = 3;

/// Random perturbation of the initial data: coefficient ℓ of v₀ and w₀ gets
/// amplitude·Z/(1+ℓ)^decay with Z standard normal; the v part goes to u_i.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1.0
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::param("perturbation.amplitude", "must be finite and nonnegative"));
        }
        if !self.decay.is_finite() {
            return Err(Error::param("perturbation.decay", "must be finite"));
        }
        Ok(())
    }

    pub fn sample(&self, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_INITIAL);
        let mut draw = |l: usize| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            self.amplitude * z / (1.0 + l as f64).powf(self.decay)
        };
        let dv: Vec<f64> = (0..n).map(&mut draw).collect();
        let dw: Vec<f64> = (0..n).map(&mut draw).collect();
        (dv, dw)
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub system: Arc<GalerkinSystem>,
    pub config: GalerkinConfig,
    pub initial: InitialData,
    pub perturbation: Option<Perturbation>,
}

impl Scenario {
    pub fn new(system: GalerkinSystem, config: GalerkinConfig, initial: InitialData) -> Result<Self> {
        config.validate()?;
        initial.validate(system.n())?;
        Ok(Self {
            system: Arc::new(system),
            config,
            initial,
            perturbation: None,
        })
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Result<Self> {
        perturbation.validate()?;
        self.perturbation = Some(perturbation);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn steps(&self) -> usize {
        self.config.validate().expect("validated at construction")
    }

    /// Initial data of the path with this seed.
    pub fn initial_for(&self, seed: u64) -> InitialData {
        let mut init = self.initial.clone();
        if let Some(p) = &self.perturbation {
            let (dv, dw) = p.sample(self.n(), seed);
            init.ui0.iter_mut().zip(&dv).for_each(|(u, d)| *u += d);
            init.w0.iter_mut().zip(&dw).for_each(|(w, d)| *w += d);
        }
        init
    }

    pub fn increments(&self, seed: u64) -> Result<Arc<WienerIncrements>> {
        Ok(Arc::new(WienerIncrements::sample(
            self.n(),
            self.steps(),
            self.config.dt,
            seed,
        )?))
    }

    pub fn solve(&self, seed: u64) -> Result<TrajectoryRecord> {
        let inc = self.increments(seed)?;
        solve_path_with_increments(&self.system, &self.config, &self.initial_for(seed), inc)
    }
}
