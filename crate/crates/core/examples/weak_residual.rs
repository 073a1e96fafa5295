//! Weak-form residual of a deterministic run at dt and dt/2.

use stochastic_bidomain::config::{NoiseSpec, ScenarioConfig};
use stochastic_bidomain::galerkin::{solve_path, GalerkinConfig};
use stochastic_bidomain::verify::weak_residual;

fn main() -> stochastic_bidomain::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.noise = NoiseSpec::off();
    let sc = cfg.scenario()?;
    let mut previous = None;
    for dt in [2e-3, 1e-3, 5e-4, 2.5e-4] {
        let rec = solve_path(&sc.system, &GalerkinConfig::new(dt, cfg.time.t_end), &sc.initial, 0)?;
        let r = weak_residual(&sc.system, &rec, 0)?.max_abs();
        match previous {
            Some(p) => println!("dt = {dt:.2e}  max residual {r:.4e}  ratio {:.3}", r / p),
            None => println!("dt = {dt:.2e}  max residual {r:.4e}"),
        }
        previous = Some(r);
    }
    Ok(())
}
