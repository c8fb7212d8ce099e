//! Optimal gate envelope for one target photon, its stored spin-wave mode and
//! the probability that the target scatters off that mode.
use switchsim::decoherence::{self, DensityMatrixGrid, PhiMatrix, SpectralWeights};
use switchsim::storage::{self, OptimizeOptions, StorageControl};
use switchsim::{MediumParams, SpatialGrid};

fn main() -> switchsim::Result<()> {
    for d_b in [1.0, 10.0] {
        let p = MediumParams::from_dimensionless(d_b, 4.0, 1.0)?;
        let grid = SpatialGrid::uniform(p.length_l, 24)?;
        let phi = PhiMatrix::build(&p, &SpectralWeights::static_limit(), &grid)?;
        let unit = DensityMatrixGrid::unit(&grid);
        let ctrl = StorageControl::default_for(&p, 1.0)?;
        let ideal = storage::optimize_switch(&p, &unit, &ctrl, OptimizeOptions::default())?;
        let rho = decoherence::rho_fock(&unit, &phi, 1)?;
        let opt = storage::optimize_switch(&p, &rho, &ctrl, OptimizeOptions::default())?;
        let p_sc = storage::p_scatter(&p, &grid, &opt.mode.density())?;
        println!(
            "d_b = {d_b}: eta without target {:.4}, with one target photon {:.4}, p_sc {:.4}, {} iterations",
            ideal.eta,
            opt.eta,
            p_sc,
            opt.trace.len()
        );
    }
    Ok(())
}
