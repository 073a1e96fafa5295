//! Monte Carlo energy and q0 = 5 moment estimates over the n ladder.
//!
//! `cargo run --release --example ensemble_energy [paths]`

use stochastic_bidomain::config::ScenarioConfig;
use stochastic_bidomain::ensemble::run_ensemble;
use stochastic_bidomain::verify::{energy_report, moment_report, run_ladder};

fn main() -> stochastic_bidomain::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.ensemble.paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let spec = cfg.ensemble_spec();

    let run = run_ensemble(&spec, &cfg.scenario()?)?;
    for (name, s) in &run.stats.entries {
        println!("{name:<20} {:.5e} +/- {:.1e}", s.mean, s.std_error);
    }

    let rungs = run_ladder(&cfg.ladder()?, &spec, cfg.verify.minimum_paths)?;
    for report in [
        energy_report(&rungs, &spec, cfg.verify.energy_growth),
        moment_report(&rungs, &spec, cfg.verify.q0, cfg.verify.moment_growth)?,
    ] {
        for row in &report.rows {
            let cells: Vec<String> = row.estimates.iter().map(|e| format!("{:.3e}", e.mean)).collect();
            println!("n = {:>2}: {}", row.value, cells.join(" "));
        }
        for g in &report.gates {
            println!("  {:<36} {:.3} {} {}", g.name, g.value, g.relation, g.threshold);
        }
        println!("{}", report.summary());
    }
    Ok(())
}
