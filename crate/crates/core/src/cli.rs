//! Subcommand dispatch and artifact writing for the `bidomain` binary.
//!
//! Every artifact carries provenance: JSON reports embed a `provenance`
//! object, CSV files get a `<file>.json` sidecar that also documents the
//! columns. Both hold the full configuration and the master seed, so a run
//! can be replayed from the artifact alone. All quantities are dimensionless.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::ensemble::{path_seed, run_ensemble, Pairing};
use crate::error::{Error, Result};
use crate::galerkin::TrajectoryRecord;
use crate::membrane::CERTIFICATE_RANGE;
use crate::verify::{energy_suite, moment_suite, monodomain_compare, stability_suite, translation_suite, EstimateReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Ensemble,
    VerifyEnergy,
    VerifyMoments,
    VerifyTranslation,
    VerifyStability,
    VerifyMonodomain,
    CheckStructure,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Ensemble,
        Command::VerifyEnergy,
        Command::VerifyMoments,
        Command::VerifyTranslation,
        Command::VerifyStability,
        Command::VerifyMonodomain,
        Command::CheckStructure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::VerifyEnergy => "verify-energy",
            Command::VerifyMoments => "verify-moments",
            Command::VerifyTranslation => "verify-translation",
            Command::VerifyStability => "verify-stability",
            Command::VerifyMonodomain => "verify-monodomain",
            Command::CheckStructure => "check-structure",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownSubcommand(s.to_string()))
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Sets both the ensemble size and the number of stability pairs.
    pub paths: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            config.ensemble.master_seed = seed;
        }
        if let Some(out) = &self.out {
            config.output.dir = out.to_string_lossy().into_owned();
        }
        if let Some(paths) = self.paths {
            config.ensemble.paths = paths;
            config.verify.stability_pairs = paths;
        }
    }
}

/// Reads and validates a configuration; `None` gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::parse(&fs::read_to_string(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub master_seed: u64,
    pub config: &'a ScenarioConfig,
}

#[derive(Serialize)]
struct ColumnDoc {
    name: &'static str,
    description: &'static str,
}

#[derive(Serialize)]
struct CsvSidecar<'a> {
    provenance: &'a Provenance<'a>,
    columns: Vec<ColumnDoc>,
}

#[derive(Serialize)]
struct JsonArtifact<'a, T: Serialize> {
    provenance: &'a Provenance<'a>,
    #[serde(flatten)]
    body: T,
}

/// What a dispatched command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub command: Command,
    pub passed: bool,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

struct Writer<'a> {
    dir: PathBuf,
    provenance: Provenance<'a>,
    artifacts: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(command: Command, config: &'a ScenarioConfig) -> Result<Self> {
        let dir = PathBuf::from(&config.output.dir);
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            provenance: Provenance {
                tool: "bidomain",
                version: env!("CARGO_PKG_VERSION"),
                command: command.name(),
                master_seed: config.ensemble.master_seed,
                config,
            },
            artifacts: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, body: T) -> Result<()> {
        let path = self.path(name);
        let artifact = JsonArtifact {
            provenance: &self.provenance,
            body,
        };
        fs::write(&path, serde_json::to_string_pretty(&artifact)?)?;
        self.artifacts.push(path);
        Ok(())
    }

    fn csv_sidecar(&mut self, csv: &Path, columns: &[(&'static str, &'static str)]) -> Result<()> {
        let mut name = csv.as_os_str().to_owned();
        name.push(".json");
        let sidecar = PathBuf::from(name);
        let doc = CsvSidecar {
            provenance: &self.provenance,
            columns: columns
                .iter()
                .map(|&(name, description)| ColumnDoc { name, description })
                .collect(),
        };
        fs::write(&sidecar, serde_json::to_string_pretty(&doc)?)?;
        self.artifacts.push(csv.to_path_buf());
        self.artifacts.push(sidecar);
        Ok(())
    }

    fn report(&mut self, stem: &str, report: &EstimateReport) -> Result<()> {
        let csv = self.path(&format!("{stem}.csv"));
        report.write_csv(&csv)?;
        self.csv_sidecar(&csv, REPORT_COLUMNS)?;
        self.json(&format!("{stem}.json"), report)
    }
}

const REPORT_COLUMNS: &[(&str, &str)] = &[
    ("parameter", "ladder parameter: n, delta, s or epsilon"),
    ("value", "value of the ladder parameter"),
    ("estimate", "name of the estimated quantity"),
    ("mean", "Monte Carlo mean"),
    ("std_error", "standard error of the mean"),
];

const ENERGY_COLUMNS: &[(&str, &str)] = &[
    ("t", "time"),
    ("v_l2_sq", "|v|^2 in L2"),
    ("w_l2_sq", "|w|^2 in L2"),
    ("eps_ui_l2_sq", "eps |u_i|^2 in L2"),
    ("eps_ue_l2_sq", "eps |u_e|^2 in L2"),
    ("energy", "sum of the four previous columns"),
    ("consistency_defect", "max_l |c_l - (sqrt(eps) c_i,l - sqrt(eps) c_e,l)/sqrt(eps)|"),
];

const STATS_COLUMNS: &[(&str, &str)] = &[
    ("functional", "path functional"),
    ("mean", "Monte Carlo mean"),
    ("variance", "unbiased sample variance"),
    ("std_error", "standard error of the mean"),
    ("min", "smallest path value"),
    ("max", "largest path value"),
    ("count", "number of paths"),
];

fn write_energy_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ENERGY_COLUMNS.iter().map(|c| c.0))?;
    let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    for s in &rec.snapshots {
        let parts = [sq(s.c()), sq(s.a()), sq(s.ci_s()), sq(s.ce_s())];
        let row = [s.t]
            .into_iter()
            .chain(parts)
            .chain([parts.iter().sum(), s.consistency_defect(rec.epsilon)]);
        w.write_record(row.map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_coefficients_csv(path: &Path, rec: &TrajectoryRecord) -> Result<()> {
    let n = rec.n();
    let mut w = csv::Writer::from_path(path)?;
    let header = std::iter::once("t".to_string()).chain(
        ["c", "ci_s", "ce_s", "a"]
            .iter()
            .flat_map(|b| (0..n).map(move |l| format!("{b}_{l}"))),
    );
    w.write_record(header)?;
    for s in &rec.snapshots {
        w.write_record(std::iter::once(s.t).chain(s.as_slice().iter().copied()).map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(config: &ScenarioConfig, out: &mut Writer) -> Result<String> {
    let scenario = config.scenario()?;
    // the same path as index 0 of an ensemble with this master seed
    let seed = path_seed(config.ensemble.master_seed, 0);
    let rec = scenario.solve(seed)?;
    let energy = out.path("energy.csv");
    write_energy_csv(&energy, &rec)?;
    out.csv_sidecar(&energy, ENERGY_COLUMNS)?;
    if config.output.full_coefficients {
        let coef = out.path("coefficients.csv");
        write_coefficients_csv(&coef, &rec)?;
        out.csv_sidecar(&coef, &[("t", "time"), ("<block>_<l>", "coefficient l of block c, ci_s, ce_s or a")])?;
    }
    if config.output.dump_increments {
        if let Some(inc) = &rec.increments {
            let bin = out.path("increments.bin");
            inc.write_binary(&bin)?;
            out.artifacts.push(bin.clone());
            out.artifacts.push(bin.with_extension("bin.json"));
        }
    }
    out.json("functionals.json", serde_json::json!({ "seed": seed, "functionals": rec.functionals }))?;
    Ok(format!(
        "simulate: {} steps, final energy {:.6e}, max consistency defect {:.2e}",
        rec.steps, rec.functionals.final_energy, rec.functionals.max_consistency_defect
    ))
}

fn ensemble(config: &ScenarioConfig, out: &mut Writer) -> Result<String> {
    let scenario = config.scenario()?;
    let spec = config.ensemble_spec();
    let run = run_ensemble(&spec, &scenario)?;
    let path = out.path("ensemble.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(STATS_COLUMNS.iter().map(|c| c.0))?;
    for (name, s) in &run.stats.entries {
        w.write_record([
            name.clone(),
            s.mean.to_string(),
            s.variance.to_string(),
            s.std_error.to_string(),
            s.min.to_string(),
            s.max.to_string(),
            s.count.to_string(),
        ])?;
    }
    w.flush()?;
    out.csv_sidecar(&path, STATS_COLUMNS)?;
    out.json("manifest.json", run.manifest(&spec))?;
    out.json("paths.json", serde_json::json!({ "paths": run.paths }))?;
    Ok(format!("ensemble: {} paths, master seed {}", spec.paths, spec.master_seed))
}

fn check_structure(config: &ScenarioConfig, out: &mut Writer) -> Result<(bool, String)> {
    let membrane = config.membrane_model()?;
    let structural = membrane.check_structural_bounds((-CERTIFICATE_RANGE, CERTIFICATE_RANGE), 10_000)?;
    let dissipation = membrane.check_dissipation(CERTIFICATE_RANGE, 100)?;
    let passed = structural.all_nonnegative && dissipation.nonnegative;
    out.json(
        "structure.json",
        serde_json::json!({ "passed": passed, "structural": structural, "dissipation": dissipation }),
    )?;
    let worst = structural.margins.iter().map(|m| m.min_margin).fold(f64::INFINITY, f64::min);
    Ok((
        passed,
        format!(
            "check-structure: {} (min margin {worst:.3e}, min dissipation residual {:.3e})",
            if passed { "PASS" } else { "FAIL" },
            dissipation.min_residual
        ),
    ))
}

/// Runs `command` on `config`, writing artifacts under `config.output.dir`.
/// `passed` is false when any gate of a verification fails.
pub fn dispatch(command: Command, config: &ScenarioConfig) -> Result<Outcome> {
    let mut out = Writer::new(command, config)?;
    let v = &config.verify;
    let (passed, summary) = match command {
        Command::Simulate => (true, simulate(config, &mut out)?),
        Command::Ensemble => (true, ensemble(config, &mut out)?),
        Command::CheckStructure => check_structure(config, &mut out)?,
        Command::VerifyEnergy => {
            let r = energy_suite(&config.ladder()?, &config.ensemble_spec(), v.energy_growth, v.minimum_paths)?;
            out.report("energy", &r)?;
            (r.passed, r.summary())
        }
        Command::VerifyMoments => {
            let r = moment_suite(&config.ladder()?, &config.ensemble_spec(), v.q0, v.moment_growth, v.minimum_paths)?;
            out.report("moments", &r)?;
            (r.passed, r.summary())
        }
        Command::VerifyTranslation => {
            let deltas: Vec<f64> = v.translation_steps.iter().map(|&k| k as f64 * config.time.dt).collect();
            let r = translation_suite(
                &config.scenario()?,
                &config.ensemble_spec(),
                &deltas,
                v.translation_thresholds,
            )?;
            out.report("translation", &r)?;
            (r.passed, r.summary())
        }
        Command::VerifyStability => {
            let mut spec = config.ensemble_spec();
            spec.paths = v.stability_pairs;
            spec.pairing = Pairing::CommonIncrements;
            let r = stability_suite(&config.scenario()?, &v.stability_scales, &spec)?;
            out.report("stability", &r)?;
            (r.passed, r.summary())
        }
        Command::VerifyMonodomain => {
            let seed = path_seed(config.ensemble.master_seed, 0);
            let r = monodomain_compare(
                &config.scenario()?,
                &config.conductivity_field()?,
                &v.monodomain_epsilons,
                seed,
            )?;
            out.report("monodomain", &r)?;
            (r.passed, r.summary())
        }
    };
    Ok(Outcome {
        command,
        passed,
        artifacts: out.artifacts,
        summary,
    })
}
