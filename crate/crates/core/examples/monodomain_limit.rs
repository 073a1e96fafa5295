//! With M_i = 2 M_e the bidomain solution approaches the monodomain one as
//! eps goes to zero on a shared increment stream.

use stochastic_bidomain::config::{EpsilonPolicy, ScenarioConfig};
use stochastic_bidomain::geometry::ConductivityKind;
use stochastic_bidomain::verify::{monodomain_compare, MonodomainSystem};

fn main() -> stochastic_bidomain::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.conductivity.kind = ConductivityKind::Constant;
    cfg.conductivity.sigma_l_i = 1.0;
    cfg.conductivity.sigma_t_i = 0.2;
    cfg.conductivity.sigma_l_e = 0.5;
    cfg.conductivity.sigma_t_e = 0.1;
    cfg.epsilon = EpsilonPolicy::Fixed { value: 0.1 };
    let cond = cfg.conductivity_field()?;
    let scenario = cfg.scenario()?;

    let mono = MonodomainSystem::from_bidomain(scenario.system.clone(), &cond)?;
    println!("lambda = {}", mono.lambda());

    let r = monodomain_compare(&scenario, &cond, &[1e-1, 1e-2, 1e-3, 1e-4], 11)?;
    for row in &r.rows {
        println!("eps = {:.0e}  |v_bi - v_mono| = {:.4e}", row.value, row.estimates[0].mean);
    }
    println!("{}", r.summary());
    Ok(())
}
