//! Seeded Monte Carlo over independent or paired paths.
//!
//! Path `i` of a run with master seed `m` uses the seed
//! `splitmix64(m + (i + 1)·0x9E3779B97F4A7C15)`. The map i ↦ seed is
//! injective for a fixed master seed because splitmix64's finalizer is a
//! bijection. Paths run on a rayon pool; results are always collected and
//! merged in path-index order, so statistics do not depend on scheduling.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::galerkin::PathFunctionals;
use crate::scenario::Scenario;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Statistics are merged from blocks of this many paths.
const MERGE_BLOCK: usize = 8;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn path_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed.wrapping_add((index as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    #[default]
    Independent,
    CommonIncrements,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    SupVSq,
    SupWSq,
    SupUiScaledSq,
    SupUeScaledSq,
    GradUiSq,
    GradUeSq,
    VL4,
    MembraneSource,
    FinalEnergy,
    EnergyResidual,
    ConsistencyDefect,
}

impl Functional {
    pub const ALL: [Functional; 11] = [
        Functional::SupVSq,
        Functional::SupWSq,
        Functional::SupUiScaledSq,
        Functional::SupUeScaledSq,
        Functional::GradUiSq,
        Functional::GradUeSq,
        Functional::VL4,
        Functional::MembraneSource,
        Functional::FinalEnergy,
        Functional::EnergyResidual,
        Functional::ConsistencyDefect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Functional::SupVSq => "sup_v_sq",
            Functional::SupWSq => "sup_w_sq",
            Functional::SupUiScaledSq => "sup_eps_ui_sq",
            Functional::SupUeScaledSq => "sup_eps_ue_sq",
            Functional::GradUiSq => "grad_ui_sq",
            Functional::GradUeSq => "grad_ue_sq",
            Functional::VL4 => "v_l4",
            Functional::MembraneSource => "membrane_source",
            Functional::FinalEnergy => "final_energy",
            Functional::EnergyResidual => "energy_residual",
            Functional::ConsistencyDefect => "consistency_defect",
        }
    }

    pub fn value(self, f: &PathFunctionals) -> f64 {
        match self {
            Functional::SupVSq => f.sup_v_sq,
            Functional::SupWSq => f.sup_w_sq,
            Functional::SupUiScaledSq => f.sup_u_scaled_sq[0],
            Functional::SupUeScaledSq => f.sup_u_scaled_sq[1],
            Functional::GradUiSq => f.grad_sq[0],
            Functional::GradUeSq => f.grad_sq[1],
            Functional::VL4 => f.v_l4,
            Functional::MembraneSource => f.membrane_source,
            Functional::FinalEnergy => f.final_energy,
            Functional::EnergyResidual => f.energy_identity_residual(),
            Functional::ConsistencyDefect => f.max_consistency_defect,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub paths: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub pairing: Pairing,
    /// Worker threads; `None` uses rayon's global pool.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "all_functionals")]
    pub functionals: Vec<Functional>,
}

fn all_functionals() -> Vec<Functional> {
    Functional::ALL.to_vec()
}

impl EnsembleSpec {
    pub fn new(paths: usize, master_seed: u64) -> Self {
        Self {
            paths,
            master_seed,
            pairing: Pairing::Independent,
            workers: None,
            functionals: all_functionals(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::param("ensemble.paths", "need at least one path"));
        }
        if self.workers == Some(0) {
            return Err(Error::param("ensemble.workers", "need at least one worker"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.paths).map(|i| path_seed(self.master_seed, i)).collect()
    }

    pub fn require(&self, minimum: usize) -> Result<()> {
        if self.paths < minimum {
            return Err(Error::EnsembleTooSmall {
                paths: self.paths,
                minimum,
            });
        }
        Ok(())
    }
}

/// Both members of a pair consume the increments generated from `stream_seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPair {
    pub index: usize,
    pub stream_seed: u64,
}

pub fn pair_paths(spec: &EnsembleSpec) -> Result<Vec<PathPair>> {
    spec.validate()?;
    if spec.pairing != Pairing::CommonIncrements {
        return Err(Error::param("ensemble.pairing", "pairs need common-increments pairing"));
    }
    Ok(spec
        .seeds()
        .into_iter()
        .enumerate()
        .map(|(index, stream_seed)| PathPair { index, stream_seed })
        .collect())
}

/// Runs `job(index, seed)` for every path and returns results in index
/// order. The first failing index aborts the run with its seed attached.
pub fn map_paths<T, F>(spec: &EnsembleSpec, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync + Send,
{
    spec.validate()?;
    let seeds = spec.seeds();
    let run = || -> Vec<Result<T>> {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| job(i, seed))
            .collect()
    };
    let results = match spec.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::param("ensemble.workers", e.to_string()))?
            .install(run),
        None => run(),
    };
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::PathFailed {
                index,
                seed: seeds[index],
                source: Box::new(e),
            })
        })
        .collect()
}

/// Welford accumulator with Chan's pairwise merge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> FunctionalStats {
        let variance = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        FunctionalStats {
            mean: self.mean,
            variance,
            std_error: (variance / self.count.max(1) as f64).sqrt(),
            min: self.min,
            max: self.max,
            count: self.count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalStats {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    pub count: u64,
}

impl FunctionalStats {
    /// Stats of a sample merged block-wise in index order.
    pub fn of(values: &[f64]) -> Self {
        let mut total = Accumulator::default();
        for block in values.chunks(MERGE_BLOCK) {
            let mut acc = Accumulator::default();
            block.iter().for_each(|x| acc.push(*x));
            total.merge(&acc);
        }
        total.finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub paths: usize,
    pub master_seed: u64,
    pub entries: Vec<(String, FunctionalStats)>,
}

impl EnsembleStats {
    pub fn from_columns(spec: &EnsembleSpec, columns: Vec<(String, Vec<f64>)>) -> Self {
        Self {
            paths: spec.paths,
            master_seed: spec.master_seed,
            entries: columns
                .into_iter()
                .map(|(name, values)| (name, FunctionalStats::of(&values)))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&FunctionalStats> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub index: usize,
    pub seed: u64,
    pub functionals: PathFunctionals,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub paths: Vec<PathOutcome>,
}

/// JSON manifest of a run: seeds and per-path status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub master_seed: u64,
    pub paths: usize,
    pub pairing: Pairing,
    pub seed_derivation: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub status: String,
}

impl EnsembleRun {
    pub fn manifest(&self, spec: &EnsembleSpec) -> EnsembleManifest {
        EnsembleManifest {
            master_seed: spec.master_seed,
            paths: spec.paths,
            pairing: spec.pairing,
            seed_derivation: "splitmix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15)".into(),
            entries: self
                .paths
                .iter()
                .map(|p| ManifestEntry {
                    index: p.index,
                    seed: p.seed,
                    status: "ok".into(),
                })
                .collect(),
        }
    }
}

/// Solves every path of `scenario` and summarizes the requested functionals.
pub fn run_ensemble(spec: &EnsembleSpec, scenario: &Scenario) -> Result<EnsembleRun> {
    let mut config = scenario.config.clone();
    config.keep_increments = false;
    let lean = Scenario {
        config,
        ..scenario.clone()
    };
    let paths = map_paths(spec, |index, seed| {
        let rec = lean.solve(seed)?;
        Ok(PathOutcome {
            index,
            seed,
            functionals: rec.functionals,
        })
    })?;
    let columns = spec
        .functionals
        .iter()
        .map(|f| {
            let values = paths.iter().map(|p| f.value(&p.functionals)).collect();
            (f.name().to_string(), values)
        })
        .collect();
    Ok(EnsembleRun {
        stats: EnsembleStats::from_columns(spec, columns),
        paths,
    })
}
