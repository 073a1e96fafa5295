//! Parses a JSON scenario and runs a subcommand through the library, the
//! same path the `bidomain` binary takes.

use stochastic_bidomain::cli::{dispatch, Command, Overrides};
use stochastic_bidomain::config::ScenarioConfig;

const SCENARIO: &str = r#"{
  "n": 8,
  "domain": { "lengths": [1.0], "dirichlet_faces": ["x_low"] },
  "conductivity": { "kind": { "type": "constant" } },
  "initial": { "profile": { "type": "gaussian_bump", "amplitude": 1.0, "center": [0.5], "width": 0.1 } },
  "time": { "dt": 1e-3, "t_end": 0.5 },
  "ensemble": { "paths": 16 }
}"#;

fn main() -> stochastic_bidomain::Result<()> {
    let mut cfg = ScenarioConfig::parse(SCENARIO)?;
    Overrides {
        seed: Some(1),
        out: Some(std::env::temp_dir().join("bidomain-example")),
        paths: None,
    }
    .apply(&mut cfg);

    if let Err(e) = ScenarioConfig::parse(r#"{ "domain": { "dirichlet_faces": [] } }"#) {
        println!("rejected: {e}");
    }

    for cmd in [Command::CheckStructure, Command::Simulate, Command::Ensemble] {
        let out = dispatch(cmd, &cfg)?;
        println!("{}", out.summary);
        for a in &out.artifacts {
            println!("  {}", a.display());
        }
    }
    Ok(())
}
