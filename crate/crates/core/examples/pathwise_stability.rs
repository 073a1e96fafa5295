//! Paired solves on common increments: a zero perturbation gives identical
//! paths, small ones give differences proportional to s².

use stochastic_bidomain::config::ScenarioConfig;
use stochastic_bidomain::ensemble::{EnsembleSpec, Pairing};
use stochastic_bidomain::verify::stability_suite;

fn main() -> stochastic_bidomain::Result<()> {
    let cfg = ScenarioConfig::default();
    let mut spec = EnsembleSpec::new(16, cfg.ensemble.master_seed);
    spec.pairing = Pairing::CommonIncrements;
    let r = stability_suite(&cfg.scenario()?, &[1e-2, 1e-3, 1e-4], &spec)?;
    for row in &r.rows {
        for e in &row.estimates {
            println!("s = {:.0e}  {:<18} {:.4e}", row.value, e.name, e.mean);
        }
    }
    println!("{}", r.summary());
    Ok(())
}
