//! Derived medium quantities from lab-style primaries and from (d_b, L/z_b).
use switchsim::MediumParams;

fn main() -> switchsim::Result<()> {
    // gamma, Omega, g, C6, L, c in arbitrary consistent units
    let lab = MediumParams::from_primaries(2.0, 3.0, 40.0, 900.0, 12.0, 50.0)?;
    println!("lab:   Gamma_EIT = {:.4}  z_b = {:.4}  d_b = {:.4}  d = {:.4}", lab.gamma_eit, lab.z_b, lab.d_b, lab.d);
    let c = lab.canonical();
    println!("canon: L/z_b = {:.4}  Omega/gamma = {:.4}", c.l_over_zb(), c.omega_over_gamma());

    let p = MediumParams::from_dimensionless(10.0, 4.0, 1.0)?;
    for w in [0.0, 0.5, 2.0] {
        println!(
            "omega = {w}: EIT transmission {:.4}, blockaded chi {:.4}",
            p.eit_transmission(w).norm(),
            p.chi_blockaded(w)
        );
    }
    Ok(())
}
