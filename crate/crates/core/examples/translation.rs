//! Time-translation statistic of v and w and its log-log slope in delta.

use stochastic_bidomain::config::ScenarioConfig;
use stochastic_bidomain::verify::translation_suite;

fn main() -> stochastic_bidomain::Result<()> {
    let cfg = ScenarioConfig::default();
    let mut spec = cfg.ensemble_spec();
    spec.paths = 32;
    let deltas: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|k| k * cfg.time.dt).collect();
    let r = translation_suite(&cfg.scenario()?, &spec, &deltas, cfg.verify.translation_thresholds)?;
    for row in &r.rows {
        println!("delta = {:.0e}: {:?}", row.value, row.estimates.iter().map(|e| e.mean).collect::<Vec<_>>());
    }
    for s in &r.slopes {
        println!("{} slope {:.3} in [{:.3}, {:.3}]", s.name, s.slope, s.ci_low, s.ci_high);
    }
    println!("{}", r.summary());
    Ok(())
}
