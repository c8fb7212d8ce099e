//! Spin-wave density matrix after scattering target photons off the stored
//! excitation.
//!
//! The completed scattering integral
//! ∫Φ(x,y) = i∫₀ᴸdz [V(z−x) − V(z−y)] ∫dω W(ω) ẽ*_x(z,ω) ẽ_y(z,ω)
//! fixes the one-photon map ρ̃₁ = 1 + ∫Φ, and everything else follows from
//! elementwise powers and exponentials of ρ̃₁.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FrequencyKernel, PulseEnvelope};
use crate::medium::{MediumParams, SpatialGrid};
use crate::quadrature::{gauss_legendre, integrate, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Normalised pulse power spectrum W(ω) = |h̃(ω)|²/2π on quadrature nodes.
/// The static limit is the single node ω = 0 with weight 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralWeights {
    pub omegas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpectralWeights {
    pub fn static_limit() -> Self {
        Self {
            omegas: vec![0.0],
            weights: vec![1.0],
        }
    }

    /// Composite Gauss–Legendre nodes over ±half_span (default ±16/T_p).
    pub fn from_pulse(pulse: &PulseEnvelope, half_span: Option<f64>, panels: usize) -> Self {
        let span = half_span.unwrap_or(16.0 / pulse.duration);
        let (omegas, weights, _) = pulse.spectral_weights(span, panels, 8);
        Self { omegas, weights }
    }

    pub fn is_static(&self) -> bool {
        self.omegas == [0.0]
    }
}

/// Composite 8-point Gauss–Legendre nodes on [0, L] with panels no wider than
/// min(z_b/4, z_b/d_b). Against adaptive quadrature this is accurate to ~1e−11
/// for d_b ∈ [1, 50].
pub fn z_nodes(p: &MediumParams) -> (Vec<f64>, Vec<f64>) {
    z_nodes_with(p, (p.z_b / 4.0).min(p.z_b / p.d_b))
}

/// Composite 8-point Gauss–Legendre nodes on [0, L] with panels no wider than `width`.
pub fn z_nodes_with(p: &MediumParams, width: f64) -> (Vec<f64>, Vec<f64>) {
    let panels = (p.length_l / width).ceil().max(1.0) as usize;
    let h = p.length_l / panels as f64;
    let (gx, gw) = gauss_legendre(8);
    let mut z = Vec::with_capacity(panels * 8);
    let mut w = Vec::with_capacity(panels * 8);
    for j in 0..panels {
        let mid = (j as f64 + 0.5) * h;
        for (x, wt) in gx.iter().zip(&gw) {
            z.push(mid + 0.5 * h * x);
            w.push(0.5 * h * wt);
        }
    }
    (z, w)
}

/// Evaluates ∫Φ(x,y) as a fixed quadrature sum over z nodes and spectral nodes.
#[derive(Debug, Clone)]
pub struct PhiEvaluator {
    params: MediumParams,
    kernels: Vec<FrequencyKernel>,
    spectral: Vec<f64>,
    z: Vec<f64>,
    wz: Vec<f64>,
}

impl PhiEvaluator {
    pub fn new(p: &MediumParams, weights: &SpectralWeights) -> Self {
        let (z, wz) = z_nodes(p);
        Self {
            params: *p,
            kernels: weights.omegas.iter().map(|&w| FrequencyKernel::new(p, w)).collect(),
            spectral: weights.weights.clone(),
            z,
            wz,
        }
    }

    pub fn params(&self) -> &MediumParams {
        &self.params
    }

    /// Split re/im columns P = √w_z·[VK, −K] and Q = √w_z·[K, VK] for one
    /// spectral node, so that ∫ΔV K*_x K_y = Σ conj(P_x)·Q_y.
    fn columns(&self, k: &FrequencyKernel, x: f64) -> Columns {
        let n = self.z.len();
        let mut c = Columns {
            pr: vec![0.0; 2 * n],
            pi: vec![0.0; 2 * n],
            qr: vec![0.0; 2 * n],
            qi: vec![0.0; 2 * n],
        };
        for (i, (&z, &w)) in self.z.iter().zip(&self.wz).enumerate() {
            let s = w.sqrt();
            let kk = k.total(z, x) * s;
            let vk = k.weighted(z, x) * s;
            (c.pr[i], c.pi[i], c.pr[n + i], c.pi[n + i]) = (vk.re, vk.im, -kk.re, -kk.im);
            (c.qr[i], c.qi[i], c.qr[n + i], c.qi[n + i]) = (kk.re, kk.im, vk.re, vk.im);
        }
        c
    }

    pub fn phi(&self, x: f64, y: f64) -> Result<Complex64> {
        check_position(&self.params, x)?;
        check_position(&self.params, y)?;
        if x == y {
            return Ok(ZERO);
        }
        let mut acc = ZERO;
        for (k, &wk) in self.kernels.iter().zip(&self.spectral) {
            acc += self.columns(k, x).dot(&self.columns(k, y)) * wk;
        }
        Ok(I * acc)
    }

    /// ∫Φ for every pair of grid points.
    pub fn matrix(&self, grid: &SpatialGrid) -> Result<PhiMatrix> {
        grid.validate(self.params.length_l)?;
        let n = grid.len();
        let mut values = vec![ZERO; n * n];
        for (k, &wk) in self.kernels.iter().zip(&self.spectral) {
            let cols: Vec<Columns> = grid.points.par_iter().map(|&x| self.columns(k, x)).collect();
            let rows: Vec<Vec<Complex64>> = (0..n)
                .into_par_iter()
                .map(|i| (i + 1..n).map(|j| cols[i].dot(&cols[j]) * wk).collect())
                .collect();
            for (i, row) in rows.into_iter().enumerate() {
                for (off, v) in row.into_iter().enumerate() {
                    values[i * n + i + 1 + off] += I * v;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                values[i * n + j] = values[j * n + i].conj();
            }
        }
        Ok(PhiMatrix { grid: grid.clone(), values })
    }
}

struct Columns {
    pr: Vec<f64>,
    pi: Vec<f64>,
    qr: Vec<f64>,
    qi: Vec<f64>,
}

impl Columns {
    /// Σ conj(P_self)·Q_other.
    fn dot(&self, other: &Columns) -> Complex64 {
        let (mut re, mut im) = ([0.0; 4], [0.0; 4]);
        let chunks = self.pr.len() / 4 * 4;
        for c in (0..chunks).step_by(4) {
            for l in 0..4 {
                let i = c + l;
                re[l] += self.pr[i] * other.qr[i] + self.pi[i] * other.qi[i];
                im[l] += self.pr[i] * other.qi[i] - self.pi[i] * other.qr[i];
            }
        }
        let mut s = Complex64::new(re.iter().sum(), im.iter().sum());
        for i in chunks..self.pr.len() {
            s += Complex64::new(self.pr[i], -self.pi[i]) * Complex64::new(other.qr[i], other.qi[i]);
        }
        s
    }
}

fn check_position(p: &MediumParams, x: f64) -> Result<()> {
    if !(0.0..=p.length_l).contains(&x) {
        return Err(Error::Domain(format!("position {x} outside [0, L={}]", p.length_l)));
    }
    Ok(())
}

/// ∫₀^∞ Φ(x,y,τ)dτ by adaptive Gauss–Kronrod over z, split at both
/// excitations and one blockade radius either side of each.
pub fn phi_time_integral(p: &MediumParams, weights: &SpectralWeights, x: f64, y: f64, rel_tol: f64) -> Result<Complex64> {
    check_position(p, x)?;
    check_position(p, y)?;
    if weights.omegas.len() != weights.weights.len() {
        return Err(Error::Usage("spectral nodes and weights differ in length".into()));
    }
    if x == y {
        return Ok(ZERO);
    }
    let kernels: Vec<FrequencyKernel> = weights.omegas.iter().map(|&w| FrequencyKernel::new(p, w)).collect();
    let f = |z: f64| {
        let mut s = ZERO;
        for (k, &wk) in kernels.iter().zip(&weights.weights) {
            s += (k.weighted(z, x).conj() * k.total(z, y) - k.total(z, x).conj() * k.weighted(z, y)) * wk;
        }
        I * s
    };
    let zb = p.z_b;
    let pts = [x - zb, x, x + zb, y - zb, y, y + zb];
    let opts = QuadOptions {
        rel_tol,
        abs_tol: 1e-13,
        max_intervals: 20_000,
    };
    Ok(integrate(f, 0.0, p.length_l, &pts, opts)?.value)
}

/// Large-d_b limit of the static integral: 2z_b⁶/(2z_b⁶ + i(x⁶−y⁶)) − 1.
pub fn closed_form_phi(p: &MediumParams, x: f64, y: f64) -> Complex64 {
    let b = 2.0 * p.z_b.powi(6);
    b / (b + I * (x.powi(6) - y.powi(6))) - 1.0
}

/// [1 − (x⁶−y⁶)²/8z_b¹²]ⁿ.
pub fn rho_boundary_analytic(p: &MediumParams, x: f64, y: f64, n: u32) -> f64 {
    let d = x.powi(6) - y.powi(6);
    (1.0 - d * d / (8.0 * p.z_b.powi(12))).powi(n as i32)
}

/// Photons needed to decohere a point at x from the boundary: 8(z_b/x)¹².
pub fn photon_budget(p: &MediumParams, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::Domain("photon budget diverges at x = 0".into()));
    }
    Ok(8.0 * (p.z_b / x).powi(12))
}

/// ∫Φ on a spatial grid, row-major.
#[derive(Debug, Clone)]
pub struct PhiMatrix {
    pub grid: SpatialGrid,
    pub values: Vec<Complex64>,
}

impl PhiMatrix {
    pub fn build(p: &MediumParams, weights: &SpectralWeights, grid: &SpatialGrid) -> Result<Self> {
        PhiEvaluator::new(p, weights).matrix(grid)
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid.len() + j]
    }

    /// ρ̃₁ = 1 + ∫Φ.
    pub fn rho1(&self) -> DensityMatrixGrid {
        DensityMatrixGrid {
            grid: self.grid.clone(),
            rho: self.values.iter().map(|v| ONE + v).collect(),
            illumination: Illumination::Fock { n: 1 },
            rescaled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Illumination {
    Fock { n: u64 },
    Coherent { alpha: f64 },
}

/// ρ (or ρ̃ = ρ/ρ₀ when `rescaled`) on a spatial grid, row-major over (x, y).
#[derive(Debug, Clone)]
pub struct DensityMatrixGrid {
    pub grid: SpatialGrid,
    pub rho: Vec<Complex64>,
    pub illumination: Illumination,
    pub rescaled: bool,
}

impl DensityMatrixGrid {
    /// ρ̃₀ ≡ 1.
    pub fn unit(grid: &SpatialGrid) -> Self {
        Self {
            grid: grid.clone(),
            rho: vec![ONE; grid.len() * grid.len()],
            illumination: Illumination::Fock { n: 0 },
            rescaled: true,
        }
    }

    /// ρ₀(x,y) = C*(x)C(y).
    pub fn pure(grid: &SpatialGrid, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::Usage(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        let rho = amplitudes.iter().flat_map(|a| amplitudes.iter().map(move |b| a.conj() * b)).collect();
        Ok(Self {
            grid: grid.clone(),
            rho,
            illumination: Illumination::Fock { n: 0 },
            rescaled: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.rho[i * self.dim() + j]
    }

    /// Hermiticity, real nonnegative diagonal and, for rescaled matrices,
    /// unit diagonal and |ρ̃| ≤ 1.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let n = self.dim();
        for i in 0..n {
            let d = self.at(i, i);
            if d.im.abs() > tol || d.re < -tol {
                return Err(Error::Numerical(format!("diagonal entry {i} is {d}")));
            }
            if self.rescaled && (d - ONE).norm() > tol {
                return Err(Error::Numerical(format!("rescaled diagonal entry {i} is {d}")));
            }
            for j in 0..n {
                let a = self.at(i, j);
                if (a - self.at(j, i).conj()).norm() > tol {
                    return Err(Error::Numerical(format!("not Hermitian at ({i},{j})")));
                }
                if self.rescaled && a.norm() > 1.0 + 1e-9 {
                    return Err(Error::Numerical(format!("|ρ̃({i},{j})| = {} exceeds 1", a.norm())));
                }
            }
        }
        Ok(())
    }

    /// Long-form rows (x/z_b, y/z_b, |ρ|, Re ρ, Im ρ).
    pub fn heatmap_rows(&self, z_b: f64) -> Vec<[f64; 5]> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let v = self.at(i, j);
                out.push([self.grid.points[i] / z_b, self.grid.points[j] / z_b, v.norm(), v.re, v.im]);
            }
        }
        out
    }
}

fn power(z: Complex64, n: u64) -> Complex64 {
    if n == 0 {
        return ONE;
    }
    let (r, t) = z.to_polar();
    Complex64::from_polar(r.powf(n as f64), t * n as f64)
}

/// ρ after n more photons: ρ ∘ (1 + ∫Φ)ⁿ. Works for ρ₀ as well as for an already
/// rescaled ρ̃; photons arriving one after another compose multiplicatively.
pub fn rho_fock(rho0: &DensityMatrixGrid, phi: &PhiMatrix, n: i64) -> Result<DensityMatrixGrid> {
    if n < 0 {
        return Err(Error::Usage(format!("photon number must be ≥ 0, got {n}")));
    }
    if !rho0.grid.matches(&phi.grid) {
        return Err(Error::Usage("density matrix and Φ live on different grids".into()));
    }
    let prior = match rho0.illumination {
        Illumination::Fock { n } => n,
        Illumination::Coherent { .. } => {
            return Err(Error::Usage("Fock evolution of a coherent-state matrix is not defined here".into()))
        }
    };
    let rho = rho0
        .rho
        .par_iter()
        .zip(&phi.values)
        .map(|(r, f)| r * power(ONE + f, n as u64))
        .collect();
    Ok(DensityMatrixGrid {
        grid: rho0.grid.clone(),
        rho,
        illumination: Illumination::Fock { n: prior + n as u64 },
        rescaled: rho0.rescaled,
    })
}

/// ρ̃_α = exp[α²(ρ̃₁ − 1)].
pub fn rho_coherent(rho1: &DensityMatrixGrid, alpha: f64) -> Result<DensityMatrixGrid> {
    if !rho1.rescaled || rho1.illumination != (Illumination::Fock { n: 1 }) {
        return Err(Error::Usage("rho_coherent needs the rescaled one-photon matrix".into()));
    }
    let a2 = alpha * alpha;
    Ok(DensityMatrixGrid {
        grid: rho1.grid.clone(),
        rho: rho1.rho.iter().map(|r| ((r - ONE) * a2).exp()).collect(),
        illumination: Illumination::Coherent { alpha },
        rescaled: true,
    })
}

/// Anything that yields |ρ̃(x, y)| at arbitrary points.
pub trait CoherenceMap: Sync {
    fn coherence(&self, x: f64, y: f64) -> Result<f64>;
    fn extent(&self) -> (f64, f64);
}

impl CoherenceMap for DensityMatrixGrid {
    /// Bilinear interpolation of |ρ̃| between grid points.
    fn coherence(&self, x: f64, y: f64) -> Result<f64> {
        let pts = &self.grid.points;
        let locate = |v: f64| -> Result<(usize, f64)> {
            let (lo, hi) = (pts[0], pts[pts.len() - 1]);
            if !(lo..=hi).contains(&v) {
                return Err(Error::Domain(format!("{v} outside the grid [{lo}, {hi}]")));
            }
            let i = pts.partition_point(|&p| p <= v).clamp(1, pts.len() - 1) - 1;
            Ok((i, (v - pts[i]) / (pts[i + 1] - pts[i])))
        };
        let (i, fx) = locate(x)?;
        let (j, fy) = locate(y)?;
        let a = |i: usize, j: usize| self.at(i, j).norm();
        Ok((1.0 - fx) * ((1.0 - fy) * a(i, j) + fy * a(i, j + 1)) + fx * ((1.0 - fy) * a(i + 1, j) + fy * a(i + 1, j + 1)))
    }

    fn extent(&self) -> (f64, f64) {
        (self.grid.points[0], self.grid.points[self.grid.len() - 1])
    }
}

/// |1 + ∫Φ(x,y)|ⁿ evaluated directly at each requested point.
#[derive(Debug, Clone)]
pub struct PointwiseFock {
    pub evaluator: PhiEvaluator,
    pub n: u32,
}

impl CoherenceMap for PointwiseFock {
    fn coherence(&self, x: f64, y: f64) -> Result<f64> {
        Ok((ONE + self.evaluator.phi(x, y)?).norm().powi(self.n as i32))
    }

    fn extent(&self) -> (f64, f64) {
        (0.0, self.evaluator.params().length_l)
    }
}

/// `count` anchor points evenly spaced over [2z_b, L − z_b].
pub fn default_anchors(p: &MediumParams, count: usize) -> Result<Vec<f64>> {
    let (a, b) = (2.0 * p.z_b, p.length_l - p.z_b);
    if b < a || count == 0 {
        return Err(Error::Config(format!("no anchor interval for L = {} z_b", p.l_over_zb())));
    }
    if count == 1 {
        return Ok(vec![0.5 * (a + b)]);
    }
    Ok((0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect())
}

/// Mean transverse half-width w at which |ρ̃(x₀+w/√2, x₀−w/√2)| first drops
/// below `threshold`, over the anchors x₀.
pub fn diagonal_width<M: CoherenceMap>(map: &M, threshold: f64, anchors: &[f64]) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Usage(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if anchors.is_empty() {
        return Err(Error::Usage("no anchor points".into()));
    }
    let (lo, hi) = map.extent();
    let widths: Vec<f64> = anchors
        .par_iter()
        .map(|&x0| {
            let w_max = std::f64::consts::SQRT_2 * (x0 - lo).min(hi - x0);
            let f = |w: f64| -> Result<f64> {
                let s = w / std::f64::consts::SQRT_2;
                Ok(map.coherence(x0 + s, x0 - s)? - threshold)
            };
            let mut a = (w_max * 1e-4).min(1e-4);
            if f(a)? <= 0.0 {
                return Err(Error::Diagnostic(format!("already decohered at w = {a} around x₀ = {x0}")));
            }
            loop {
                let b = (a * 1.05).min(w_max);
                if f(b)? <= 0.0 {
                    let (mut l, mut r) = (a, b);
                    while r - l > 1e-10 * r {
                        let m = 0.5 * (l + r);
                        if f(m)? > 0.0 {
                            l = m;
                        } else {
                            r = m;
                        }
                    }
                    return Ok(0.5 * (l + r));
                }
                if b >= w_max {
                    return Err(Error::Diagnostic(format!(
                        "no crossing of {threshold} within the grid around x₀ = {x0}"
                    )));
                }
                a = b;
            }
        })
        .collect::<Result<_>>()?;
    Ok(widths.iter().sum::<f64>() / widths.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon(d_b: f64, l: f64) -> MediumParams {
        MediumParams::from_dimensionless(d_b, l, 1.0).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let p = canon(10.0, 4.0);
        let v = closed_form_phi(&p, 0.0, 1.0);
        assert!((v - Complex64::new(-0.2, 0.4)).norm() < 1e-15);
        assert!(((ONE + v).norm() - 2.0 / 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(closed_form_phi(&p, 0.4, 0.4), ZERO);
        // small Δ: |1 + value| ≈ 1 − Δ²/8
        let (x, y): (f64, f64) = (0.5, 0.3);
        let d: f64 = x.powi(6) - y.powi(6);
        let m = (ONE + closed_form_phi(&p, x, y)).norm();
        assert!((m - (1.0 - d * d / 8.0)).abs() < d.powi(4));
    }

    #[test]
    fn boundary_formula_arithmetic() {
        let p = canon(10.0, 4.0);
        assert_eq!(rho_boundary_analytic(&p, 0.6, 0.6, 7), 1.0);
        assert!((rho_boundary_analytic(&p, 1.0, 0.0, 10) - 0.875f64.powi(10)).abs() < 1e-15);
        assert!((rho_boundary_analytic(&p, 1.0, 0.0, 100) - 1.58e-6).abs() < 1e-8);
        assert_eq!(photon_budget(&p, 1.0).unwrap(), 8.0);
        assert_eq!(photon_budget(&p, 0.5).unwrap(), 32768.0);
        assert!((photon_budget(&p, 2.0).unwrap() - 8.0 / 4096.0).abs() < 1e-15);
        assert!(matches!(photon_budget(&p, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn grid_route_matches_adaptive_route() {
        let p = canon(10.0, 4.0);
        let w = SpectralWeights::static_limit();
        let ev = PhiEvaluator::new(&p, &w);
        for &(x, y) in &[(0.0, 1.0), (0.3, 0.8), (2.0, 2.05), (3.9, 0.2)] {
            let a = ev.phi(x, y).unwrap();
            let b = phi_time_integral(&p, &w, x, y, 1e-11).unwrap();
            assert!((a - b).norm() < 1e-9, "({x},{y}): {a} vs {b}");
        }
        // independent evaluation of the same integrand (x = 0, y = z_b, d_b = 10)
        let v = ev.phi(0.0, 1.0).unwrap();
        assert!((v - Complex64::new(-0.1431, 0.3015)).norm() < 2e-4, "{v}");
    }

    #[test]
    fn swap_conjugates_and_diagonal_vanishes() {
        let p = canon(5.0, 3.0);
        let w = SpectralWeights::static_limit();
        let a = phi_time_integral(&p, &w, 0.4, 1.7, 1e-10).unwrap();
        let b = phi_time_integral(&p, &w, 1.7, 0.4, 1e-10).unwrap();
        assert_eq!(a, b.conj());
        assert_eq!(phi_time_integral(&p, &w, 1.1, 1.1, 1e-10).unwrap(), ZERO);
        assert!((ONE + a).norm() <= 1.0 + 1e-9);
    }

    #[test]
    fn matrix_invariants_and_evolution() {
        let p = canon(4.0, 3.0);
        let grid = SpatialGrid::uniform(3.0, 8).unwrap();
        let phi = PhiMatrix::build(&p, &SpectralWeights::static_limit(), &grid).unwrap();
        let rho1 = phi.rho1();
        rho1.check_invariants(1e-12).unwrap();
        let unit = DensityMatrixGrid::unit(&grid);
        assert_eq!(rho_fock(&unit, &phi, 0).unwrap().rho, unit.rho);
        assert!(matches!(rho_fock(&unit, &phi, -1), Err(Error::Usage(_))));

        let r3 = rho_fock(&unit, &phi, 3).unwrap();
        let mut seq = unit.clone();
        for _ in 0..3 {
            seq = rho_fock(&seq, &phi, 1).unwrap();
        }
        assert_eq!(seq.illumination, Illumination::Fock { n: 3 });
        for (a, b) in r3.rho.iter().zip(&seq.rho) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, r1) in r3.rho.iter().zip(&rho1.rho) {
            assert!((a - r1.powi(3)).norm() < 1e-12);
        }
        let mut prev = rho1.clone();
        for n in 2..6 {
            let next = rho_fock(&unit, &phi, n).unwrap();
            next.check_invariants(1e-12).unwrap();
            for (a, b) in next.rho.iter().zip(&prev.rho) {
                assert!(a.norm() <= b.norm() + 1e-9);
            }
            prev = next;
        }

        // physical ρ: diagonal preserved exactly
        let amps: Vec<Complex64> = grid.points.iter().map(|&x| Complex64::from_polar(1.0 + x, 0.3 * x)).collect();
        let rho0 = DensityMatrixGrid::pure(&grid, &amps).unwrap();
        let rho5 = rho_fock(&rho0, &phi, 5).unwrap();
        rho5.check_invariants(1e-10).unwrap();
        for i in 0..grid.len() {
            assert_eq!(rho5.at(i, i), rho0.at(i, i));
        }
    }

    #[test]
    fn coherent_state_resummation() {
        let p = canon(4.0, 3.0);
        let grid = SpatialGrid::uniform(3.0, 6).unwrap();
        let phi = PhiMatrix::build(&p, &SpectralWeights::static_limit(), &grid).unwrap();
        let rho1 = phi.rho1();
        let alpha: f64 = 1.5;
        let rc = rho_coherent(&rho1, alpha).unwrap();
        let a2 = alpha * alpha;
        let mut sum = vec![ZERO; rho1.rho.len()];
        let mut weight = (-a2).exp();
        for n in 0..80 {
            for (s, r) in sum.iter_mut().zip(&rho1.rho) {
                *s += r.powi(n) * weight;
            }
            weight *= a2 / (n + 1) as f64;
        }
        for (a, b) in rc.rho.iter().zip(&sum) {
            assert!((a - b).norm() < 1e-8);
        }
        let zero = rho_coherent(&rho1, 0.0).unwrap();
        assert!(zero.rho.iter().all(|v| *v == ONE));
        for i in 0..grid.len() {
            assert_eq!(rc.at(i, i), ONE);
        }
    }

    #[test]
    fn coherent_arithmetic_example() {
        let grid = SpatialGrid::uniform(1.0, 1).unwrap();
        let rho1 = DensityMatrixGrid {
            grid: grid.clone(),
            rho: vec![ONE, Complex64::new(0.875, 0.0), Complex64::new(0.875, 0.0), ONE],
            illumination: Illumination::Fock { n: 1 },
            rescaled: true,
        };
        let rc = rho_coherent(&rho1, 1.0).unwrap();
        assert!((rc.at(0, 1).re - (-0.125f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn width_of_unit_matrix_is_a_diagnostic() {
        let grid = SpatialGrid::uniform(5.0, 4).unwrap();
        let unit = DensityMatrixGrid::unit(&grid);
        let p = canon(10.0, 5.0);
        let anchors = default_anchors(&p, 3).unwrap();
        assert!(matches!(diagonal_width(&unit, 0.5, &anchors), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn width_shrinks_with_blockade_depth() {
        let anchors = [3.0];
        let w = |d_b: f64| {
            let p = canon(d_b, 5.0);
            let map = PointwiseFock {
                evaluator: PhiEvaluator::new(&p, &SpectralWeights::static_limit()),
                n: 20,
            };
            diagonal_width(&map, 0.5, &anchors).unwrap()
        };
        assert!(w(20.0) < w(5.0));
    }
}
