//! One path of the default scenario: energy along the trajectory and the
//! consistency between c and the scaled potentials.

use stochastic_bidomain::config::ScenarioConfig;

fn main() -> stochastic_bidomain::Result<()> {
    let cfg = ScenarioConfig::default();
    let scenario = cfg.scenario()?;
    let rec = scenario.solve(7)?;
    println!("n = {}, eps = {}, {} steps", rec.n(), rec.epsilon, rec.steps);
    for s in rec.snapshots.iter().step_by(100) {
        let v2: f64 = s.c().iter().map(|x| x * x).sum();
        let w2: f64 = s.a().iter().map(|x| x * x).sum();
        println!("t = {:.2}  |v|^2 = {v2:.5}  |w|^2 = {w2:.5}", s.t);
    }
    let f = &rec.functionals;
    println!("sup |v|^2 = {:.5}, int |grad u_i|^2 = {:.5}", f.sup_v_sq, f.grad_sq[0]);
    println!("max consistency defect {:.2e}", f.max_consistency_defect);
    println!("energy balance with noise terms {:.3e}", f.energy_identity_residual());
    Ok(())
}
