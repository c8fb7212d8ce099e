//! Coherence between an excitation near the entrance face and one at the face,
//! numerically and from the near-boundary formula, plus the photon budget.
use num_complex::Complex64;
use switchsim::decoherence::{self, PhiEvaluator, SpectralWeights};
use switchsim::MediumParams;

fn main() -> switchsim::Result<()> {
    let p = MediumParams::from_dimensionless(10.0, 4.0, 1.0)?;
    let ev = PhiEvaluator::new(&p, &SpectralWeights::static_limit());
    println!("{:>5} {:>5} {:>10} {:>10}", "x", "n", "numeric", "formula");
    for x in [0.3, 0.6, 0.8] {
        let decay = (Complex64::new(1.0, 0.0) + ev.phi(x, 0.0)?).norm();
        for n in [1u32, 10, 100] {
            let formula = decoherence::rho_boundary_analytic(&p, x, 0.0, n);
            println!("{x:>5} {n:>5} {:>10.4} {formula:>10.4}", decay.powi(n as i32));
        }
    }
    for x in [0.5, 0.7, 0.9] {
        println!("photon budget at x = {x}: {:.1}", decoherence::photon_budget(&p, x)?);
    }
    Ok(())
}
