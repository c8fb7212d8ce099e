//! Direct space-time integration of the field equations with one fixed
//! excitation, checked against the frequency-domain kernel.
use switchsim::kernel::PulseEnvelope;
use switchsim::oracle::{self, OracleOptions};
use switchsim::MediumParams;

fn main() -> switchsim::Result<()> {
    let p = MediumParams::from_dimensionless(2.0, 4.0, 1.0)?;
    let pulse = PulseEnvelope::gaussian(4.0)?;
    let opts = OracleOptions {
        probes: vec![0.0, 1.0, 2.0, 3.0, 4.0],
        ..OracleOptions::resolved_for(&p)
    };
    for x0 in [None, Some(1.0), Some(3.0)] {
        let run = oracle::integrate_fixed_excitation(&p, x0, &pulse, 60.0, &opts)?;
        let reference = oracle::spectral_reference(&p, &run, &pulse, 8)?;
        println!(
            "excitation {:?}: transmitted {:.4}, absorbed {:.4}, flux residual {:.1e}, spectral L2 error {:.1e}",
            x0,
            run.flux.transmitted,
            run.flux.absorbed,
            run.flux.residual(),
            oracle::probe_error(&run, &reference)
        );
    }
    Ok(())
}
