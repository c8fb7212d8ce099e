//! Gate-photon storage, backward retrieval, scattering probability and the
//! power-iteration optimisation of the switch fidelity.
//!
//! With s = Ω_g²(T−t)/γ the storage map only depends on the rescaled envelope
//! g(s) = √γ h_g(T − γs/Ω_g²)/Ω_g, so everything here works on an s-grid and
//! the optimum is independent of Ω_g once the s-span is fixed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::bessel_i0_scaled;
use crate::decoherence::DensityMatrixGrid;
use crate::error::{Error, Result};
use crate::medium::{MediumParams, SpatialGrid};
use crate::quadrature::{gauss_legendre, integrate, integrate_to_infinity, QuadOptions};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Square control pulse of Rabi frequency Ω_g and duration T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageControl {
    pub omega_g: f64,
    pub duration: f64,
}

/// Default dimensionless storage window Ω_g²T/γ.
pub const DEFAULT_SPAN: f64 = 20.0;

impl StorageControl {
    pub fn new(omega_g: f64, duration: f64) -> Result<Self> {
        for (name, v) in [("omega_g", omega_g), ("T", duration)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self { omega_g, duration })
    }

    /// Control whose window Ω_g²T/γ equals `span`.
    pub fn with_span(p: &MediumParams, omega_g: f64, span: f64) -> Result<Self> {
        Self::new(omega_g, span * p.gamma / (omega_g * omega_g))
    }

    pub fn default_for(p: &MediumParams, omega_g: f64) -> Result<Self> {
        Self::with_span(p, omega_g, DEFAULT_SPAN)
    }

    pub fn span(&self, p: &MediumParams) -> f64 {
        self.omega_g * self.omega_g * self.duration / p.gamma
    }
}

/// Piecewise-constant gate envelope on equal cells covering [0, duration].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEnvelope {
    pub duration: f64,
    pub values: Vec<Complex64>,
}

impl GateEnvelope {
    pub fn new(duration: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) || values.is_empty() {
            return Err(Error::Usage("gate envelope needs a positive duration and at least one cell".into()));
        }
        Ok(Self { duration, values })
    }

    /// Constant envelope with unit norm.
    pub fn flat(duration: f64, cells: usize) -> Result<Self> {
        let v = Complex64::new(1.0 / duration.sqrt(), 0.0);
        Self::new(duration, vec![v; cells.max(1)])
    }

    pub fn cell_width(&self) -> f64 {
        self.duration / self.values.len() as f64
    }

    /// Cell midpoints.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.cell_width();
        (0..self.values.len()).map(|k| (k as f64 + 0.5) * dt).collect()
    }

    /// ∫|h_g|² dt.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_width()
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self {
            duration: self.duration,
            values: self.values.iter().map(|v| v * a).collect(),
        }
    }
}

/// Stored spin-wave amplitude C(z) on a spatial grid.
#[derive(Debug, Clone)]
pub struct SpinWaveMode {
    pub grid: SpatialGrid,
    pub amplitude: Vec<Complex64>,
    pub envelope: GateEnvelope,
}

impl SpinWaveMode {
    /// ∫|C|² dz, the storage efficiency.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitude.iter().zip(&self.grid.weights).map(|(c, w)| c.norm_sqr() * w).sum()
    }

    /// Normalised excitation density |C|²/∫|C|².
    pub fn density(&self) -> Vec<f64> {
        let n = self.norm_sqr();
        self.amplitude.iter().map(|c| if n > 0.0 { c.norm_sqr() / n } else { 0.0 }).collect()
    }
}

/// e^{−a−s} I₀(2√(as)) without overflow.
fn storage_integrand(a: f64, s: f64) -> f64 {
    let (ra, rs) = (a.sqrt(), s.sqrt());
    (-(ra - rs).powi(2)).exp() * bessel_i0_scaled(2.0 * ra * rs)
}

/// (d/2L)e^{−d(z+z′)/2L} I₀((d/L)√(zz′)).
pub fn retrieval_kernel(p: &MediumParams, z: f64, zp: f64) -> f64 {
    let k = p.d / p.length_l;
    0.5 * k * (-0.5 * k * (z.sqrt() - zp.sqrt()).powi(2)).exp() * bessel_i0_scaled(k * (z * zp).sqrt())
}

/// Storage matrix A with C(z_i) = Σ_k A_ik h_k for piecewise-constant h.
/// Each cell integral is done with 8-point Gauss–Legendre in s.
fn storage_matrix(p: &MediumParams, ctrl: &StorageControl, grid: &SpatialGrid, cells: usize, env_duration: f64) -> Vec<f64> {
    let (gx, gw) = gauss_legendre(8);
    let rate = ctrl.omega_g * ctrl.omega_g / p.gamma;
    let dt = env_duration / cells as f64;
    let pref = -(p.d / (p.gamma * p.length_l)).sqrt() * p.gamma / ctrl.omega_g;
    let mut a = vec![0.0; grid.len() * cells];
    a.par_chunks_mut(cells).zip(&grid.points).for_each(|(row, &z)| {
        let az = z * p.d / p.length_l;
        for (k, v) in row.iter_mut().enumerate() {
            let s_hi = rate * (ctrl.duration - k as f64 * dt);
            let s_lo = rate * (ctrl.duration - (k + 1) as f64 * dt);
            let (mid, half) = (0.5 * (s_hi + s_lo), 0.5 * (s_hi - s_lo));
            let sum: f64 = gx.iter().zip(&gw).map(|(x, w)| w * storage_integrand(az, mid + half * x)).sum();
            *v = pref * sum * half;
        }
    });
    a
}

/// C(z) = −√(d/γL) ∫₀ᵀ dt Ω_g e^{−zd/L − Ω_g²(T−t)/γ} I₀(2√(zdΩ_g²(T−t)/Lγ)) h_g(t).
pub fn storage_map(p: &MediumParams, ctrl: &StorageControl, h_g: &GateEnvelope, grid: &SpatialGrid) -> Result<SpinWaveMode> {
    if h_g.duration > ctrl.duration * (1.0 + 1e-12) {
        return Err(Error::Usage(format!(
            "gate envelope lasts {} but the control pulse only {}",
            h_g.duration, ctrl.duration
        )));
    }
    grid.validate(p.length_l)?;
    let cells = h_g.values.len();
    let a = storage_matrix(p, ctrl, grid, cells, h_g.duration);
    let amplitude = a
        .chunks(cells)
        .map(|row| row.iter().zip(&h_g.values).map(|(a, h)| h * *a).sum())
        .collect();
    Ok(SpinWaveMode {
        grid: grid.clone(),
        amplitude,
        envelope: h_g.clone(),
    })
}

/// η = ∫∫ K(z,z′) ρ̃(z,z′) C*(z)C(z′) dz dz′.
pub fn retrieval_efficiency(p: &MediumParams, rho: &DensityMatrixGrid, mode: &SpinWaveMode) -> Result<f64> {
    if !rho.rescaled {
        return Err(Error::Usage("retrieval efficiency needs the rescaled density matrix".into()));
    }
    if !rho.grid.matches(&mode.grid) {
        return Err(Error::Usage("density matrix and spin wave live on different grids".into()));
    }
    let g = &mode.grid;
    let n = g.len();
    let total: Complex64 = (0..n)
        .into_par_iter()
        .map(|i| {
            let ci = mode.amplitude[i].conj() * g.weights[i];
            let mut s = ZERO;
            for j in 0..n {
                s += rho.at(i, j) * mode.amplitude[j] * (g.weights[j] * retrieval_kernel(p, g.points[i], g.points[j]));
            }
            ci * s
        })
        .sum();
    if total.im.abs() > 1e-8 * total.re.abs().max(1.0) {
        return Err(Error::Numerical(format!("retrieval efficiency has imaginary part {:.3e}", total.im)));
    }
    Ok(total.re)
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Time cells of the gate envelope.
    pub cells: usize,
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            cells: 256,
            rel_tol: 1e-9,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchOptimum {
    pub mode: SpinWaveMode,
    pub envelope: GateEnvelope,
    pub eta: f64,
    /// Rayleigh quotient after every iteration.
    pub trace: Vec<f64>,
}

/// The Hermitian form H = B†MB whose top eigenvalue is the optimal η, with
/// B = diag(√w)·A/√Δt and M_ij = √(w_i w_j) K_ij ρ̃_ij.
#[derive(Debug, Clone)]
pub struct SwitchOperator {
    pub rows: usize,
    pub cells: usize,
    /// B, row-major (rows × cells).
    pub b: Vec<f64>,
    /// M, row-major (rows × rows).
    pub m: Vec<Complex64>,
    a: Vec<f64>,
    cell_width: f64,
}

impl SwitchOperator {
    pub fn new(p: &MediumParams, rho: &DensityMatrixGrid, ctrl: &StorageControl, cells: usize) -> Result<Self> {
        if !rho.rescaled {
            return Err(Error::Usage("optimisation needs the rescaled density matrix".into()));
        }
        let grid = &rho.grid;
        grid.validate(p.length_l)?;
        let n = grid.len();
        let a = storage_matrix(p, ctrl, grid, cells, ctrl.duration);
        let dt = ctrl.duration / cells as f64;
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(idx, v)| v * grid.weights[idx / cells].sqrt() / dt.sqrt())
            .collect();
        let mut m = vec![ZERO; n * n];
        m.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                let w = (grid.weights[i] * grid.weights[j]).sqrt();
                *v = rho.at(i, j) * (w * retrieval_kernel(p, grid.points[i], grid.points[j]));
            }
        });
        Ok(Self {
            rows: n,
            cells,
            b,
            m,
            a,
            cell_width: dt,
        })
    }

    /// H v.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let (n, c) = (self.rows, self.cells);
        let bv: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|i| self.b[i * c..(i + 1) * c].iter().zip(v).map(|(b, x)| x * *b).sum())
            .collect();
        let mbv: Vec<Complex64> = (0..n)
            .into_par_iter()
            .map(|i| self.m[i * n..(i + 1) * n].iter().zip(&bv).map(|(m, x)| m * x).sum())
            .collect();
        (0..c)
            .into_par_iter()
            .map(|k| (0..n).map(|i| mbv[i] * self.b[i * c + k]).sum())
            .collect()
    }

    /// Dense H, row-major (cells × cells).
    pub fn dense(&self) -> Vec<Complex64> {
        let c = self.cells;
        let mut out = vec![ZERO; c * c];
        for k in 0..c {
            let mut e = vec![ZERO; c];
            e[k] = Complex64::new(1.0, 0.0);
            for (l, v) in self.apply(&e).into_iter().enumerate() {
                out[l * c + k] = v;
            }
        }
        out
    }
}

/// Power iteration on the composed storage–decoherence–retrieval form.
/// The Rayleigh quotient is asserted to be nondecreasing at every step.
pub fn optimize_switch(
    p: &MediumParams,
    rho: &DensityMatrixGrid,
    ctrl: &StorageControl,
    opts: OptimizeOptions,
) -> Result<SwitchOptimum> {
    let op = SwitchOperator::new(p, rho, ctrl, opts.cells)?;
    let c = opts.cells;
    let mut v = vec![Complex64::new(1.0 / (c as f64).sqrt(), 0.0); c];
    let mut trace = Vec::new();
    let mut eta_prev = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let w = op.apply(&v);
        let eta: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        trace.push(eta);
        if eta < eta_prev - 1e-12 * eta_prev.abs().max(1e-300) {
            return Err(Error::Numerical(format!(
                "power iteration lost monotonicity: {eta} after {eta_prev}"
            )));
        }
        let norm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            converged = true;
            break;
        }
        let done = (eta - eta_prev).abs() <= opts.rel_tol * eta.abs();
        eta_prev = eta;
        if done {
            converged = true;
            break;
        }
        v = w.into_iter().map(|x| x / norm).collect();
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: opts.max_iterations,
            message: "switch optimisation did not reach the relative tolerance".into(),
            trace,
        });
    }
    let eta = *trace.last().expect("at least one iteration");
    let scale = 1.0 / op.cell_width.sqrt();
    // fix the global phase so the largest cell is real and positive
    let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or(ZERO);
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex64::new(1.0, 0.0) };
    let envelope = GateEnvelope::new(ctrl.duration, v.iter().map(|x| x * phase * scale).collect())?;
    let amplitude = op
        .a
        .chunks(c)
        .map(|row| row.iter().zip(&envelope.values).map(|(a, h)| h * *a).sum())
        .collect();
    Ok(SwitchOptimum {
        mode: SpinWaveMode {
            grid: rho.grid.clone(),
            amplitude,
            envelope: envelope.clone(),
        },
        envelope,
        eta,
        trace,
    })
}

/// ∫_{−u₀}^{∞} du/(1+u¹²).
pub fn blockade_path_fraction(u0: f64) -> Result<f64> {
    let half = (PI / 12.0) / (PI / 12.0).sin();
    let f = |u: f64| 1.0 / (1.0 + u.powi(12));
    let opts = QuadOptions::rel(1e-13);
    if u0 >= 0.0 {
        Ok(half + integrate(f, 0.0, u0, &[1.0], opts)?.value)
    } else {
        Ok(integrate_to_infinity(f, -u0, &[1.0], opts)?.value)
    }
}

/// 1 − p_sc = exp(−2d_b z_b¹¹ ∫dz′ ρ(z′) ∫_{−z′}^∞ dx/(z_b¹² + x¹²)); returns p_sc.
/// `density` lives on `grid` and must integrate to at most 1.
pub fn p_scatter(p: &MediumParams, grid: &SpatialGrid, density: &[f64]) -> Result<f64> {
    if density.len() != grid.len() {
        return Err(Error::Usage("density and grid differ in length".into()));
    }
    if let Some(v) = density.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Usage(format!("excitation density must be nonnegative, got {v}")));
    }
    let mass: f64 = density.iter().zip(&grid.weights).map(|(r, w)| r * w).sum();
    if mass > 1.0 + 1e-9 {
        return Err(Error::Usage(format!("excitation density integrates to {mass} > 1")));
    }
    let mut exponent = 0.0;
    for ((&r, &w), &z) in density.iter().zip(&grid.weights).zip(&grid.points) {
        if r > 0.0 {
            exponent += r * w * blockade_path_fraction(z / p.z_b)?;
        }
    }
    Ok(1.0 - (-2.0 * p.d_b * exponent).exp())
}

/// p_sc for a point excitation at x.
pub fn p_scatter_point(p: &MediumParams, x: f64) -> Result<f64> {
    Ok(1.0 - (-2.0 * p.d_b * blockade_path_fraction(x / p.z_b)?).exp())
}
