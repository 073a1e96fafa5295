//! Samples truncated Wiener increments, checks their variance, and writes
//! the binary dump with its JSON manifest.

use stochastic_bidomain::geometry::{BasisSet, Domain, Face};
use stochastic_bidomain::noise::{NoiseModel, WienerIncrements};

fn main() -> stochastic_bidomain::Result<()> {
    let (n, steps, dt) = (8, 20_000, 1e-3);
    let inc = WienerIncrements::sample(n, steps, dt, 42)?;
    let var: f64 = inc.dw_v().iter().map(|x| x * x).sum::<f64>() / (n * steps) as f64;
    println!("sample variance of dW = {var:.4e} (dt = {dt:.1e})");
    let w_end = *inc.cumulative_v(0).last().unwrap();
    println!("W_1(T) = {w_end:+.4}");

    let path = std::env::temp_dir().join("increments.bin");
    inc.write_binary(&path)?;
    let back = WienerIncrements::read_binary(&path)?;
    println!("round trip identical: {}", back == inc);

    let domain = Domain::rectangle(1.0, 1.0, [Face::XLow])?;
    let basis = BasisSet::build(&domain, n, None)?;
    let noise = NoiseModel::affine(0.5, 0.2, 0.5, n)?;
    println!("C_beta = {:.4}, kind {:?}", noise.c_beta(), noise.kind());
    let v = basis.project(|x| (-(x[0] - 0.5).powi(2) / 0.02).exp());
    println!("|G(v)|_HS^2 = {:.4e}", noise.hs_norm_sq(&v, &basis)?);
    Ok(())
}
