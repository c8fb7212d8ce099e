//! Decoherence of a stored excitation by n scattered photons and by a
//! coherent target, with the width of the surviving coherence.
use switchsim::decoherence::{self, DensityMatrixGrid, PhiMatrix, PointwiseFock, SpectralWeights};
use switchsim::{MediumParams, SpatialGrid};

fn main() -> switchsim::Result<()> {
    let p = MediumParams::from_dimensionless(10.0, 4.0, 1.0)?;
    let grid = SpatialGrid::uniform(p.length_l, 8)?;
    let phi = PhiMatrix::build(&p, &SpectralWeights::static_limit(), &grid)?;
    let unit = DensityMatrixGrid::unit(&grid);
    let mid = grid.len() / 2;
    for n in [1, 10, 100] {
        let rho = decoherence::rho_fock(&unit, &phi, n)?;
        let row: Vec<String> = (0..grid.len()).step_by(4).map(|j| format!("{:.3}", rho.at(mid, j).norm())).collect();
        println!("n = {n:>3}: |rho(L/2, y)| = {}", row.join(" "));
    }
    let coh = decoherence::rho_coherent(&phi.rho1(), 2.0)?;
    println!("alpha = 2: |rho(L/2, L/2 + 1)| = {:.4}", coh.at(mid, mid + 8).norm());

    let map = PointwiseFock {
        evaluator: decoherence::PhiEvaluator::new(&p, &SpectralWeights::static_limit()),
        n: 20,
    };
    let width = decoherence::diagonal_width(&map, 0.5, &decoherence::default_anchors(&p, 5)?)?;
    println!("half-coherence width after 20 photons: {width:.4} z_b");
    Ok(())
}
