//! Spectral scattering kernels ẽ₀(z,ω), ẽ₁(z,x,ω), their static limit and
//! their time-domain transforms.
//!
//! ẽ₀ + ẽ₁ maps the input field Ẽ(0,ω) onto the spin coherence S̃(z,ω) when a
//! single Rydberg excitation sits at x. Fourier convention:
//! X̃(ω) = ∫dt e^{iωt} X(t).

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::medium::MediumParams;
use crate::quadrature::{integrate, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Antiderivative of q/(u⁶ + q) in closed form.
///
/// The six roots p_k of u⁶ = −q give q/(u⁶+q) = −(1/6)Σ p_k/(u − p_k). For the
/// values of q used here (Im q > 0) no root is real, so the principal
/// logarithm is continuous along the real axis.
#[derive(Debug, Clone, Copy)]
pub struct PathIntegral {
    q: Complex64,
    roots: [Complex64; 6],
}

impl PathIntegral {
    pub fn new(q: Complex64) -> Self {
        let base = (-q).powf(1.0 / 6.0);
        let mut roots = [Complex64::new(0.0, 0.0); 6];
        for (k, r) in roots.iter_mut().enumerate() {
            *r = base * Complex64::from_polar(1.0, PI * k as f64 / 3.0);
        }
        Self { q, roots }
    }

    /// q/(u⁶ + q); equals 1 at u = 0.
    pub fn integrand(&self, u: f64) -> Complex64 {
        self.q / (u.powi(6) + self.q)
    }

    pub fn antiderivative(&self, u: f64) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for p in &self.roots {
            s += p * (u - p).ln();
        }
        -s / 6.0
    }

    /// ∫_{u0}^{u1} q/(u⁶+q) du.
    pub fn between(&self, u0: f64, u1: f64) -> Complex64 {
        self.antiderivative(u1) - self.antiderivative(u0)
    }
}

/// All kernel ingredients at one frequency. Building it once amortises the
/// root finding over many (z, x) evaluations.
#[derive(Debug, Clone, Copy)]
pub struct FrequencyKernel {
    pub omega: f64,
    prefactor: Complex64,
    chi0: Complex64,
    chi_v: Complex64,
    c6: f64,
    path: PathIntegral,
}

impl FrequencyKernel {
    pub fn new(p: &MediumParams, omega: f64) -> Self {
        let w = Complex64::new(omega, p.gamma);
        let o2 = p.omega_ctrl * p.omega_ctrl;
        let q = p.interaction_response(omega) * p.c6;
        Self {
            omega,
            prefactor: -p.coupling_g * p.omega_ctrl / (o2 - omega * w),
            chi0: p.chi_eit(omega),
            chi_v: p.chi_blockaded(omega),
            c6: p.c6,
            path: PathIntegral::new(q),
        }
    }

    /// ẽ₀(z, ω).
    pub fn free(&self, z: f64) -> Complex64 {
        self.prefactor * (I * self.chi0 * z).exp()
    }

    /// ∫₀ᶻ U/(1+U) dz′ for an excitation at x.
    pub fn path_integral(&self, z: f64, x: f64) -> Complex64 {
        self.path.between(-x, z - x)
    }

    fn attenuated(&self, z: f64, x: f64) -> Complex64 {
        self.free(z) * (-I * self.chi_v * self.path_integral(z, x)).exp()
    }

    /// ẽ₀ + ẽ₁ for an excitation at x.
    pub fn total(&self, z: f64, x: f64) -> Complex64 {
        let u6 = (z - x).powi(6);
        self.attenuated(z, x) * (u6 / (u6 + self.path.q))
    }

    /// V(z−x)·[ẽ₀ + ẽ₁], finite at z = x.
    pub fn weighted(&self, z: f64, x: f64) -> Complex64 {
        let u6 = (z - x).powi(6);
        self.attenuated(z, x) * (self.c6 / (u6 + self.path.q))
    }

    /// ẽ₁(z, x, ω).
    pub fn scattered(&self, z: f64, x: f64) -> Complex64 {
        self.total(z, x) - self.free(z)
    }
}

/// ẽ₀(z,ω) = −GΩ/(Ω²−ω(ω+iγ))·exp[iχ₀(ω)z].
pub fn e0_freq(p: &MediumParams, z: f64, omega: f64) -> Complex64 {
    FrequencyKernel::new(p, omega).free(z)
}

/// ẽ₁(z,x,ω) = (exp[−iχ_V ∫₀ᶻ U/(1+U)]/(1+U(z−x,ω)) − 1)·ẽ₀(z,ω).
pub fn e1_freq(p: &MediumParams, z: f64, zprime: f64, omega: f64) -> Complex64 {
    FrequencyKernel::new(p, omega).scattered(z, zprime)
}

/// Static (ω → 0) kernel:
/// i(G/Ω)(z−x)⁶/(z_b⁶ − i(z−x)⁶)·exp[−(G²/cγ)∫₀ᶻ z_b⁶/(z_b⁶ − i(z′−x)⁶) dz′].
pub fn static_kernel(p: &MediumParams, z: f64, x: f64) -> Complex64 {
    let zb6 = p.z_b.powi(6);
    let u6 = (z - x).powi(6);
    // z_b⁶/(z_b⁶ − iu⁶) = q/(u⁶ + q) with q = i z_b⁶
    let path = PathIntegral::new(I * zb6).between(-x, z - x);
    let rate = p.coupling_g * p.coupling_g / (p.speed_c * p.gamma);
    I * (p.coupling_g / p.omega_ctrl) * u6 / (zb6 - I * u6) * (-rate * path).exp()
}

/// ∫₀ᶻ U/(1+U) dz′ by adaptive Gauss–Kronrod, split at the excitation and
/// one blockade radius either side of it.
pub fn path_integral_quadrature(p: &MediumParams, z: f64, x: f64, omega: f64, rel_tol: f64) -> Result<Complex64> {
    let path = PathIntegral::new(p.interaction_response(omega) * p.c6);
    let pts = [x - p.z_b, x, x + p.z_b];
    Ok(integrate(|s| path.integrand(s - x), 0.0, z, &pts, QuadOptions::rel(rel_tol))?.value)
}

/// Uniform angular-frequency grid in FFT layout: ω_k = (k − N/2)Δω,
/// k = 0..N. It contains ω = 0 and is symmetric apart from the single
/// Nyquist node −NΔω/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omegas: Vec<f64>,
    pub spacing: f64,
}

impl FrequencyGrid {
    pub fn new(points: usize, spacing: f64) -> Result<Self> {
        if points < 2 || points % 2 != 0 {
            return Err(Error::Config(format!("frequency grid needs an even number of points ≥ 2, got {points}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Config(format!("frequency spacing must be > 0, got {spacing}")));
        }
        let half = (points / 2) as f64;
        let omegas = (0..points).map(|k| (k as f64 - half) * spacing).collect();
        Ok(Self { omegas, spacing })
    }

    /// `points` nodes spanning ±half_span.
    pub fn spanning(points: usize, half_span: f64) -> Result<Self> {
        Self::new(points, 2.0 * half_span / points as f64)
    }

    /// Grid for a pulse: 2¹² points spanning ±16/T_p.
    pub fn for_pulse(pulse: &PulseEnvelope) -> Result<Self> {
        Self::spanning(1 << 12, 16.0 / pulse.duration)
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.spacing * self.len() as f64
    }

    /// Step of the conjugate time grid, 2π/(NΔω).
    pub fn time_step(&self) -> f64 {
        2.0 * PI / self.span()
    }

    /// Length of the periodic time window, 2π/Δω.
    pub fn time_window(&self) -> f64 {
        2.0 * PI / self.spacing
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.time_step();
        (0..self.len()).map(|n| n as f64 * dt).collect()
    }

    /// Band-limit and window checks for a pulse.
    pub fn check_pulse(&self, pulse: &PulseEnvelope) -> Result<()> {
        if self.span() < 8.0 * pulse.bandwidth() {
            return Err(Error::Config(format!(
                "frequency span {} is below 8x the pulse bandwidth {}",
                self.span(),
                pulse.bandwidth()
            )));
        }
        if self.time_window() < 2.0 * pulse.support() {
            return Err(Error::Config(format!(
                "time window {} cannot hold the pulse support {}",
                self.time_window(),
                pulse.support()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    Square,
    Gaussian,
}

/// Normalised envelope h(t) with ∫|h|² dt = 1.
///
/// Square: h = 1/√T on [0, T]. Gaussian: intensity FWHM T, centred at 4T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEnvelope {
    pub shape: PulseShape,
    pub duration: f64,
}

impl PulseEnvelope {
    pub fn new(shape: PulseShape, duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Config(format!("pulse duration must be > 0, got {duration}")));
        }
        Ok(Self { shape, duration })
    }

    pub fn square(duration: f64) -> Result<Self> {
        Self::new(PulseShape::Square, duration)
    }

    pub fn gaussian(duration: f64) -> Result<Self> {
        Self::new(PulseShape::Gaussian, duration)
    }

    /// Square pulse of duration 50√d/Γ_EIT.
    pub fn default_for(p: &MediumParams) -> Result<Self> {
        Self::square(50.0 * p.d.sqrt() / p.gamma_eit)
    }

    fn sigma(&self) -> f64 {
        // |h|² ∝ exp(−(t−t_c)²/σ²) has FWHM 2σ√ln2
        self.duration / (2.0 * std::f64::consts::LN_2.sqrt())
    }

    fn centre(&self) -> f64 {
        match self.shape {
            PulseShape::Square => 0.5 * self.duration,
            PulseShape::Gaussian => 4.0 * self.duration,
        }
    }

    /// Time interval outside which h vanishes (or is below 1e−10 of its peak).
    pub fn support(&self) -> f64 {
        match self.shape {
            PulseShape::Square => self.duration,
            PulseShape::Gaussian => 8.0 * self.duration,
        }
    }

    /// Nominal bandwidth: 1/T (square) or 1/σ (Gaussian).
    pub fn bandwidth(&self) -> f64 {
        match self.shape {
            PulseShape::Square => 1.0 / self.duration,
            PulseShape::Gaussian => 1.0 / self.sigma(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Square => {
                if (0.0..=self.duration).contains(&t) {
                    1.0 / self.duration.sqrt()
                } else {
                    0.0
                }
            }
            PulseShape::Gaussian => {
                let s = self.sigma();
                let d = t - self.centre();
                (PI * s * s).powf(-0.25) * (-0.5 * d * d / (s * s)).exp()
            }
        }
    }

    pub fn samples(&self, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.value(k as f64 * dt)).collect()
    }

    /// h̃(ω) = ∫dt e^{iωt} h(t).
    pub fn spectrum(&self, omega: f64) -> Complex64 {
        let phase = Complex64::from_polar(1.0, omega * self.centre());
        match self.shape {
            PulseShape::Square => {
                let half = 0.5 * omega * self.duration;
                let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
                phase * self.duration.sqrt() * sinc
            }
            PulseShape::Gaussian => {
                let s = self.sigma();
                phase * (PI * s * s).powf(-0.25) * (2.0 * PI).sqrt() * s * (-0.5 * s * s * omega * omega).exp()
            }
        }
    }

    /// Spectral weights W(ω) = |h̃(ω)|²/2π on composite Gauss–Legendre panels over
    /// ±half_span, renormalised to unit sum. Returns (ω, weight, captured mass
    /// before renormalisation).
    pub fn spectral_weights(&self, half_span: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let (gx, gw) = crate::quadrature::gauss_legendre(order);
        let h = 2.0 * half_span / panels as f64;
        let mut omegas = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for j in 0..panels {
            let mid = -half_span + (j as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                let om = mid + 0.5 * h * x;
                omegas.push(om);
                weights.push(0.5 * h * w * self.spectrum(om).norm_sqr() / (2.0 * PI));
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        (omegas, weights, total)
    }
}

/// Time-domain kernels on the conjugate grid t_n = nΔt, n = 0..N.
#[derive(Debug, Clone)]
pub struct TimeKernels {
    pub times: Vec<f64>,
    /// e₀(z, t), row-major over (z, t).
    pub e0: Vec<Complex64>,
    /// e₀ + e₁ over (x, z, t).
    pub total: Vec<Complex64>,
}

/// ẽ₀ over (z, ω) and ẽ₁ over (x, z, ω), row-major.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub params: MediumParams,
    pub z: Vec<f64>,
    pub excitations: Vec<f64>,
    pub grid: FrequencyGrid,
    pub e0: Vec<Complex64>,
    pub e1: Vec<Complex64>,
    pub time: Option<TimeKernels>,
}

impl KernelTable {
    /// Tabulates both kernels, parallel over (x, ω) columns.
    pub fn tabulate(p: &MediumParams, z: &[f64], excitations: &[f64], grid: &FrequencyGrid) -> Result<Self> {
        for &v in z.iter().chain(excitations) {
            if !(0.0..=p.length_l).contains(&v) {
                return Err(Error::Domain(format!("position {v} outside [0, L={}]", p.length_l)));
            }
        }
        let (nz, nx, nw) = (z.len(), excitations.len(), grid.len());
        let kernels: Vec<FrequencyKernel> = grid.omegas.par_iter().map(|&w| FrequencyKernel::new(p, w)).collect();
        let mut e0 = vec![Complex64::new(0.0, 0.0); nz * nw];
        e0.par_chunks_mut(nw).zip(z).for_each(|(row, &zz)| {
            for (v, k) in row.iter_mut().zip(&kernels) {
                *v = k.free(zz);
            }
        });
        let mut e1 = vec![Complex64::new(0.0, 0.0); nx * nz * nw];
        e1.par_chunks_mut(nw).enumerate().for_each(|(row, out)| {
            let (ix, iz) = (row / nz, row % nz);
            for (v, k) in out.iter_mut().zip(&kernels) {
                *v = k.scattered(z[iz], excitations[ix]);
            }
        });
        Ok(Self {
            params: *p,
            z: z.to_vec(),
            excitations: excitations.to_vec(),
            grid: grid.clone(),
            e0,
            e1,
            time: None,
        })
    }

    pub fn e0_at(&self, iz: usize, iw: usize) -> Complex64 {
        self.e0[iz * self.grid.len() + iw]
    }

    pub fn e1_at(&self, ix: usize, iz: usize, iw: usize) -> Complex64 {
        self.e1[(ix * self.z.len() + iz) * self.grid.len() + iw]
    }

    /// SHA-256 of the parameters and grids, hex encoded.
    pub fn cache_key(p: &MediumParams, z: &[f64], excitations: &[f64], grid: &FrequencyGrid) -> String {
        let mut h = Sha256::new();
        h.update(CACHE_MAGIC);
        h.update(CACHE_VERSION.to_le_bytes());
        for v in [p.gamma, p.omega_ctrl, p.coupling_g, p.c6, p.length_l, p.speed_c, grid.spacing] {
            h.update(v.to_le_bytes());
        }
        for arr in [z, excitations, &grid.omegas] {
            h.update((arr.len() as u64).to_le_bytes());
            for v in arr {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn key(&self) -> String {
        Self::cache_key(&self.params, &self.z, &self.excitations, &self.grid)
    }

    /// Writes the frequency-domain arrays (header, then row-major little-endian
    /// f64 pairs).
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&hex::decode(self.key()).expect("hex from our own encoder"));
        let p = &self.params;
        for v in [p.gamma, p.omega_ctrl, p.coupling_g, p.c6, p.length_l, p.speed_c, self.grid.spacing] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for n in [self.z.len(), self.excitations.len(), self.grid.len()] {
            buf.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for v in self.z.iter().chain(&self.excitations).chain(&self.grid.omegas) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for c in self.e0.iter().chain(&self.e1) {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(4)? != CACHE_MAGIC {
            return Err(Error::Config(format!("{}: not a kernel cache file", path.display())));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CACHE_VERSION {
            return Err(Error::Config(format!("{}: cache version {version}, expected {CACHE_VERSION}", path.display())));
        }
        let stored_key = hex::encode(r.take(32)?);
        let vals: Vec<f64> = (0..7).map(|_| r.f64()).collect::<Result<_>>()?;
        let p = MediumParams::from_primaries(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5])?;
        let spacing = vals[6];
        let (nz, nx, nw) = (r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
        let z: Vec<f64> = (0..nz).map(|_| r.f64()).collect::<Result<_>>()?;
        let excitations: Vec<f64> = (0..nx).map(|_| r.f64()).collect::<Result<_>>()?;
        let omegas: Vec<f64> = (0..nw).map(|_| r.f64()).collect::<Result<_>>()?;
        let e0: Vec<Complex64> = (0..nz * nw).map(|_| r.c64()).collect::<Result<_>>()?;
        let e1: Vec<Complex64> = (0..nx * nz * nw).map(|_| r.c64()).collect::<Result<_>>()?;
        let table = Self {
            params: p,
            z,
            excitations,
            grid: FrequencyGrid { omegas, spacing },
            e0,
            e1,
            time: None,
        };
        if table.key() != stored_key {
            return Err(Error::Config(format!("{}: cache key mismatch", path.display())));
        }
        Ok(table)
    }

    /// Loads the table from `dir` if a matching cache file exists, otherwise
    /// tabulates and stores it.
    pub fn load_or_tabulate(
        dir: &Path,
        p: &MediumParams,
        z: &[f64],
        excitations: &[f64],
        grid: &FrequencyGrid,
    ) -> Result<Self> {
        let path = Self::cache_path(dir, p, z, excitations, grid);
        if path.exists() {
            return Self::read_cache(&path);
        }
        let table = Self::tabulate(p, z, excitations, grid)?;
        fs::create_dir_all(dir)?;
        table.write_cache(&path)?;
        Ok(table)
    }

    pub fn cache_path(dir: &Path, p: &MediumParams, z: &[f64], excitations: &[f64], grid: &FrequencyGrid) -> PathBuf {
        dir.join(format!("kernel-{}.bin", Self::cache_key(p, z, excitations, grid)))
    }
}

const CACHE_MAGIC: &[u8; 4] = b"SWKT";
const CACHE_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Config("kernel cache file is truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn c64(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }
}

/// In-place inverse transform of one spectral column:
/// x(t_n) = (1/2π) Σ_k x̃(ω_k) e^{−iω_k t_n} Δω.
pub fn inverse_transform(column: &mut [Complex64], spacing: f64, planner: &mut FftPlanner<f64>) {
    let n = column.len();
    planner.plan_fft_forward(n).process(column);
    let scale = spacing / (2.0 * PI);
    for (k, v) in column.iter_mut().enumerate() {
        // ω_k = (k − N/2)Δω turns the shift into (−1)^n
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *v *= scale * sign;
    }
}

/// Relative Parseval residual between a spectral column and its time transform.
pub fn parseval_residual(spectral: &[Complex64], time: &[Complex64], grid: &FrequencyGrid) -> f64 {
    let ef: f64 = spectral.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.spacing / (2.0 * PI);
    let et: f64 = time.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.time_step();
    if ef == 0.0 {
        et
    } else {
        (ef - et).abs() / ef
    }
}

/// Time-domain kernels e₀(z,t) and e₀+e₁ (x,z,t) from a tabulated spectral table.
pub fn kernel_time_domain(table: &KernelTable, pulse: &PulseEnvelope) -> Result<KernelTable> {
    let grid = &table.grid;
    grid.check_pulse(pulse)?;
    let nw = grid.len();
    let nz = table.z.len();
    let transform = |src: Vec<Complex64>| -> Result<Vec<Complex64>> {
        let mut out = src.clone();
        out.par_chunks_mut(nw).zip(src.par_chunks(nw)).try_for_each(|(col, orig)| {
            let mut planner = FftPlanner::new();
            inverse_transform(col, grid.spacing, &mut planner);
            let r = parseval_residual(orig, col, grid);
            if r > 1e-8 {
                return Err(Error::Numerical(format!("Parseval residual {r:.3e} exceeds 1e-8")));
            }
            Ok(())
        })?;
        Ok(out)
    };
    let e0 = transform(table.e0.clone())?;
    let total_freq: Vec<Complex64> = table
        .e1
        .iter()
        .enumerate()
        .map(|(i, v)| v + table.e0[(i / nw % nz) * nw + i % nw])
        .collect();
    let total = transform(total_freq)?;
    let mut out = table.clone();
    out.time = Some(TimeKernels {
        times: grid.times(),
        e0,
        total,
    });
    Ok(out)
}

/// S(z, t_n) = ∫dt′ [e₀+e₁](z, x, t−t′) E(0,t′) with E(0,t) = h(t)/√c, evaluated
/// spectrally on the grid's conjugate time axis. `x = None` drops the excitation.
pub fn spectral_response(
    p: &MediumParams,
    x: Option<f64>,
    z: f64,
    pulse: &PulseEnvelope,
    grid: &FrequencyGrid,
    kernels: &[FrequencyKernel],
) -> Vec<Complex64> {
    let mut col: Vec<Complex64> = grid
        .omegas
        .iter()
        .zip(kernels)
        .map(|(&w, k)| {
            let e = match x {
                Some(x) => k.total(z, x),
                None => k.free(z),
            };
            e * pulse.spectrum(w) / p.speed_c.sqrt()
        })
        .collect();
    let mut planner = FftPlanner::new();
    inverse_transform(&mut col, grid.spacing, &mut planner);
    col
}

/// One [`FrequencyKernel`] per grid node.
pub fn frequency_kernels(p: &MediumParams, grid: &FrequencyGrid) -> Vec<FrequencyKernel> {
    grid.omegas.par_iter().map(|&w| FrequencyKernel::new(p, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canon(d_b: f64, l: f64) -> MediumParams {
        MediumParams::from_dimensionless(d_b, l, 1.0).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn closed_form_path_matches_quadrature() {
        let p = canon(10.0, 4.0);
        for &w in &[0.0, 0.3, -0.7, 2.5, 40.0] {
            let k = FrequencyKernel::new(&p, w);
            for &(z, x) in &[(0.3, 0.7), (1.5, 0.7), (4.0, 0.0), (4.0, 4.0), (2.0, 2.0), (3.9, 0.1)] {
                let a = k.path_integral(z, x);
                let b = path_integral_quadrature(&p, z, x, w, 1e-11).unwrap();
                assert!(close(a, b, 1e-9), "ω={w} z={z} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn free_kernel_values() {
        let p = canon(4.0, 4.0);
        let dark = -p.coupling_g / p.omega_ctrl;
        for z in [0.0, 1.0, 4.0] {
            assert!((e0_freq(&p, z, 0.0) - dark).norm() < 1e-15);
        }
        let w = 0.5 * p.gamma_eit;
        assert!(e0_freq(&p, p.length_l, w).norm() < dark.abs());
        let direct = -p.coupling_g * p.omega_ctrl / (p.omega_ctrl.powi(2) - w * Complex64::new(w, p.gamma));
        assert!(close(e0_freq(&p, 0.0, w), direct, 1e-15));
    }

    #[test]
    fn blockade_at_the_excitation() {
        let p = canon(10.0, 4.0);
        for x in [0.0, 1.3, 4.0] {
            let sum = e0_freq(&p, x, 0.0) + e1_freq(&p, x, x, 0.0);
            assert!(sum.norm() < 1e-15);
            assert_eq!(static_kernel(&p, x, x).norm(), 0.0);
            // U/(1+U) = 1 at coincidence
            let k = FrequencyKernel::new(&p, 0.2);
            assert!((k.path.integrand(0.0) - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn far_ahead_of_the_excitation_is_pure_eit() {
        let p = canon(10.0, 40.0);
        let e1 = e1_freq(&p, 5.0, 30.0, 0.0);
        assert!(e1.norm() < 1e-3 * p.coupling_g / p.omega_ctrl, "{e1}");
    }

    #[test]
    fn half_line_path_integral() {
        // ∫₀^∞ du/(1+u¹²) = (π/12)/sin(π/12)
        let p = canon(3.0, 1.0);
        let half = (PI / 12.0) / (PI / 12.0).sin();
        let a = FrequencyKernel::new(&p, 0.0).path_integral(1e4, 0.0);
        // Re of ∫ 1/(1−iu⁶) = ∫ 1/(1+u¹²)
        assert!((a.re - half).abs() < 1e-8, "{a}");
        let atten = (-p.d_b * a).exp().norm();
        assert!((atten - (-p.d_b * half).exp()).abs() < 1e-10);
    }

    #[test]
    fn static_kernel_is_the_zero_frequency_limit() {
        for d_b in [1.0, 10.0] {
            let p = canon(d_b, 4.0);
            let k = FrequencyKernel::new(&p, 0.0);
            for &(z, x) in &[(0.5, 0.0), (2.0, 1.0), (3.7, 2.2), (1.0, 3.0)] {
                let a = static_kernel(&p, z, x);
                let b = e0_freq(&p, z, 0.0) + e1_freq(&p, z, x, 0.0);
                assert!((a - b).norm() < 1e-10);
                assert!(close(k.total(z, x), a, 1e-12));
            }
        }
    }

    #[test]
    fn static_kernel_general_units_match_canonical() {
        let p = MediumParams::from_primaries(2.0, 3.0, 5.0, 7.0, 1.5, 4.0).unwrap();
        let c = p.canonical();
        let scale = p.coupling_g / p.omega_ctrl / (c.coupling_g / c.omega_ctrl);
        for &(z, x) in &[(0.4, 0.1), (1.2, 0.6)] {
            let a = static_kernel(&p, z, x);
            let b = static_kernel(&c, z / p.z_b, x / p.z_b) * scale;
            assert!(close(a, b, 1e-10), "{a} vs {b}");
        }
    }

    #[test]
    fn static_kernel_grows_monotonically_away_from_excitation() {
        for d_b in [1.0, 3.0, 10.0] {
            let p = canon(d_b, 8.0);
            let x = 4.0;
            let mut prev = 0.0;
            for k in 0..=300 {
                let z = x - 3.0 * k as f64 / 300.0;
                let m = static_kernel(&p, z, x).norm();
                assert!(m >= prev - 1e-6, "d_b={d_b} z={z}");
                prev = m;
            }
        }
    }

    #[test]
    fn free_kernel_conjugation_symmetry() {
        let p = canon(5.0, 4.0);
        for &w in &[0.1, 0.9, 3.0] {
            assert!(close(e0_freq(&p, 2.5, w), e0_freq(&p, 2.5, -w).conj(), 1e-12));
        }
        // the blockaded kernel is complex already at ω = 0, so it cannot be
        // conjugation symmetric
        assert!(static_kernel(&p, 0.0, 1.0).im.abs() > 1e-3);
    }

    #[test]
    fn pulse_normalisation() {
        let opts = QuadOptions::rel(1e-12);
        for pulse in [PulseEnvelope::square(3.0).unwrap(), PulseEnvelope::gaussian(2.0).unwrap()] {
            let pts = [pulse.duration, pulse.centre()];
            let n = integrate(|t| pulse.value(t).powi(2), 0.0, pulse.support(), &pts, opts).unwrap().value;
            assert!((n - 1.0).abs() < 1e-8, "{n}");
        }
        let g = PulseEnvelope::gaussian(2.0).unwrap();
        let f = |w: f64| g.spectrum(w).norm_sqr() / PI;
        let s = crate::quadrature::integrate_to_infinity(f, 0.0, &[], opts).unwrap().value;
        assert!((s - 1.0).abs() < 1e-9, "{s}");
        let sq = PulseEnvelope::square(3.0).unwrap();
        assert!((sq.spectrum(0.0).re - 3f64.sqrt()).abs() < 1e-15);
        assert!(sq.spectrum(2.0 * PI / 3.0).norm() < 1e-15);
        let (_, _, captured) = sq.spectral_weights(400.0, 4000, 8);
        assert!((captured - 1.0).abs() < 2.0 / (PI * 3.0 * 400.0) * 1.1);
    }

    #[test]
    fn transform_pairs() {
        let grid = FrequencyGrid::new(256, 0.25).unwrap();
        let mut planner = FftPlanner::new();
        let mut col = vec![Complex64::new(1.0, 0.0); 256];
        inverse_transform(&mut col, grid.spacing, &mut planner);
        assert!((col[0].norm() - 1.0 / grid.time_step()).abs() < 1e-9);
        assert!(col[1..].iter().all(|c| c.norm() < 1e-12));

        // e^{−ω²σ²/2} ↔ e^{−t²/(2σ²)}/(σ√2π)
        let sigma = 0.8;
        let mut col: Vec<Complex64> =
            grid.omegas.iter().map(|w| Complex64::new((-0.5 * w * w * sigma * sigma).exp(), 0.0)).collect();
        let orig = col.clone();
        inverse_transform(&mut col, grid.spacing, &mut planner);
        for (n, c) in col.iter().enumerate().take(20) {
            let t = n as f64 * grid.time_step();
            let want = (-0.5 * t * t / (sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt());
            assert!((c.re - want).abs() < 1e-10 && c.im.abs() < 1e-10);
        }
        assert!(parseval_residual(&orig, &col, &grid) < 1e-12);
    }

    #[test]
    fn band_limit_is_enforced() {
        let pulse = PulseEnvelope::square(10.0).unwrap();
        let narrow = FrequencyGrid::spanning(64, 0.2).unwrap();
        assert!(matches!(narrow.check_pulse(&pulse), Err(Error::Config(_))));
        assert!(FrequencyGrid::for_pulse(&pulse).unwrap().check_pulse(&pulse).is_ok());
    }

    #[test]
    fn time_domain_table_and_cache_round_trip() {
        let p = canon(2.0, 2.0);
        let pulse = PulseEnvelope::gaussian(20.0).unwrap();
        let grid = FrequencyGrid::spanning(512, 16.0 / pulse.duration).unwrap();
        let z = [0.0, 0.5, 1.0, 2.0];
        let x = [0.5, 1.5];
        let table = KernelTable::tabulate(&p, &z, &x, &grid).unwrap();
        let dark = -p.coupling_g / p.omega_ctrl;
        let iw0 = grid.len() / 2;
        assert_eq!(grid.omegas[iw0], 0.0);
        for iz in 0..z.len() {
            assert!((table.e0_at(iz, iw0) - dark).norm() < 1e-14);
        }
        let timed = kernel_time_domain(&table, &pulse).unwrap();
        assert!(timed.time.is_some());

        let dir = tempfile::tempdir().unwrap();
        let a = KernelTable::load_or_tabulate(dir.path(), &p, &z, &x, &grid).unwrap();
        let path = KernelTable::cache_path(dir.path(), &p, &z, &x, &grid);
        assert!(path.exists());
        let b = KernelTable::load_or_tabulate(dir.path(), &p, &z, &x, &grid).unwrap();
        assert_eq!(a.e1, b.e1);
        assert_eq!(a.e0, table.e0);
    }

    #[test]
    fn long_pulse_convolution_reproduces_static_value() {
        // d = 50: convolving the time kernel with a long square pulse gives the
        // static value at the pulse centre
        let p = canon(12.5, 4.0);
        let pulse = PulseEnvelope::default_for(&p).unwrap();
        let grid = FrequencyGrid::spanning(1 << 14, 64.0 / pulse.duration).unwrap();
        let kernels = frequency_kernels(&p, &grid);
        let centre = (0.5 * pulse.duration / grid.time_step()).round() as usize;
        let h = pulse.value(0.5 * pulse.duration);
        for (z, x) in [(2.0, None), (2.0, Some(3.0))] {
            let s = spectral_response(&p, x, z, &pulse, &grid, &kernels);
            let want = match x {
                Some(x) => static_kernel(&p, z, x),
                None => e0_freq(&p, z, 0.0),
            } * h;
            assert!(close(s[centre], want, 0.01), "z={z}: {} vs {want}", s[centre]);
        }
    }
}
