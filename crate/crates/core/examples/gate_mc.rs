//! Gate-photon ensemble statistics: Monte Carlo against the exact expectation
//! and the exponential law.
use switchsim::gate_stats::{self, GateEnsembleParams};

fn main() -> switchsim::Result<()> {
    println!("{:>5} {:>6} {:>9} {:>9} {:>9} {:>9}", "p_sc", "alpha2", "mc", "stderr", "exact", "exp law");
    for p_sc in [0.05, 0.3] {
        for a2 in [1.0, 4.0, 8.0] {
            let params = GateEnsembleParams::new(a2, 0.5, p_sc, 1.0)?;
            let mc = gate_stats::mc_efficiency(&params, 200_000, 7)?;
            let exact = gate_stats::exact_efficiency(&params)?;
            println!(
                "{p_sc:>5} {a2:>6} {:>9.5} {:>9.1e} {exact:>9.5} {:>9.5}",
                mc.eta,
                mc.stderr,
                (-p_sc * a2).exp()
            );
        }
    }
    Ok(())
}
