//! Structural certificates of the FitzHugh–Nagumo membrane model.

use stochastic_bidomain::membrane::{FhnParams, MembraneModel, CERTIFICATE_RANGE};

fn main() -> stochastic_bidomain::Result<()> {
    let m = MembraneModel::fitzhugh_nagumo(FhnParams::default())?;
    println!("{:?}", m.params);
    println!("{:#?}", m.constants());

    let s = m.check_structural_bounds((-CERTIFICATE_RANGE, CERTIFICATE_RANGE), 10_000)?;
    for margin in &s.margins {
        println!("{:<28} min margin {:>11.4e} at v = {:+.3}", margin.name, margin.min_margin, margin.at_v);
    }
    let d = m.check_dissipation(CERTIFICATE_RANGE, 100)?;
    println!(
        "dissipation residual >= {:.4e} at (v, w) = ({:+.2}, {:+.2}) over {} points",
        d.min_residual, d.at.0, d.at.1, d.samples
    );

    for v in [-1.0, 0.0, 0.1, 0.5, 1.0] {
        println!("I({v:+.1}, 0) = {:+.4}   H({v:+.1}, 0) = {:+.4}", m.ion_current(v, 0.0), m.gating_rhs(v, 0.0));
    }
    Ok(())
}
