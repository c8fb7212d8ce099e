//! Static and frequency-resolved propagation kernels, and a time-domain
//! response at the medium exit for a Gaussian probe pulse.
use switchsim::kernel::{self, FrequencyGrid, FrequencyKernel, PulseEnvelope};
use switchsim::MediumParams;

fn main() -> switchsim::Result<()> {
    let p = MediumParams::from_dimensionless(5.0, 4.0, 1.0)?;
    let l = p.length_l;
    println!("static kernel at z = L:");
    for x in [0.0, 1.0, 2.0, 3.0, 4.0] {
        let k = kernel::static_kernel(&p, l, x);
        println!("  x = {x}: |E1/E0| = {:.3e}", k.norm());
    }
    let fk = FrequencyKernel::new(&p, 0.3);
    println!("omega = 0.3, x = 2: free {:.4}  total {:.4}", fk.free(l), fk.total(l, 2.0));

    let pulse = PulseEnvelope::gaussian(20.0)?;
    let grid = FrequencyGrid::for_pulse(&pulse)?;
    let kernels = kernel::frequency_kernels(&p, &grid);
    let free = kernel::spectral_response(&p, None, l, &pulse, &grid, &kernels);
    let blocked = kernel::spectral_response(&p, Some(2.0), l, &pulse, &grid, &kernels);
    let energy = |v: &[num_complex::Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.time_step();
    println!("exit photon number: free {:.4}, with excitation at 2 z_b {:.3e}", energy(&free), energy(&blocked));
    Ok(())
}
