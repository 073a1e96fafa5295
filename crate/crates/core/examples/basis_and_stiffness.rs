//! Builds the Laplacian eigenbasis on the unit square with a Dirichlet face
//! and assembles both stiffness matrices for rotating fibers.

use stochastic_bidomain::geometry::{
    assemble_stiffness, BasisSet, ConductivityField, ConductivityKind, Domain, Face, FiberField, Medium,
};

fn main() -> stochastic_bidomain::Result<()> {
    let domain = Domain::rectangle(1.0, 1.0, [Face::XLow])?;
    let basis = BasisSet::build(&domain, 12, None)?;
    println!("{} modes, {} quadrature points", basis.n(), basis.quadrature().len());
    for (mode, lambda) in basis.modes().iter().zip(basis.eigenvalues()).take(5) {
        println!("  {mode:?}  lambda = {lambda:.4}");
    }

    // mass matrix should be the identity
    let mass = basis.mass_matrix();
    let defect = (mass - nalgebra::DMatrix::identity(basis.n(), basis.n())).abs().max();
    println!("max |M - I| = {defect:.2e}");

    let cond = ConductivityField::new(
        2,
        ConductivityKind::Axisymmetric {
            fiber: FiberField::Rotating {
                angle: 0.0,
                rate: std::f64::consts::FRAC_PI_3,
            },
        },
        1.0,
        0.2,
        0.8,
        0.4,
    )?;
    let report = cond.check(&basis)?;
    println!("ellipticity m = {:.3}, M = {:.3}", report.m, report.big_m);

    let k_i = assemble_stiffness(&basis, &cond, Medium::Intra)?;
    let k_e = assemble_stiffness(&basis, &cond, Medium::Extra)?;
    let eig = k_i.clone().symmetric_eigen().eigenvalues;
    println!(
        "K_i eigenvalues in [{:.3}, {:.3}], trace K_e = {:.3}",
        eig.min(),
        eig.max(),
        k_e.trace()
    );
    Ok(())
}
