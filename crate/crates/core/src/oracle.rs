//! Direct time-domain integration of the field, polarization and spin-wave
//! amplitudes around one classical excitation.
//!
//! The field is transported along characteristics (Δt = Δz/c, trapezoid for
//! the polarization source). In each cell (P, S) obey a linear system with
//! constant coefficients; it is advanced exactly, with the driving field taken
//! linear over the step. Near the excitation V dt becomes huge, which is why
//! an explicit scheme is not used.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{frequency_kernels, spectral_response, FrequencyGrid, PulseEnvelope};
use crate::medium::MediumParams;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Amplitudes on the spatial grid at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub z: Vec<f64>,
    pub e: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub s: Vec<Complex64>,
}

impl FieldState {
    fn zeros(z: Vec<f64>) -> Self {
        let n = z.len();
        Self {
            t: 0.0,
            z,
            e: vec![Complex64::default(); n],
            p: vec![Complex64::default(); n],
            s: vec![Complex64::default(); n],
        }
    }

    /// ∫(|E|² + |P|² + |S|²) dz (trapezoid).
    pub fn stored(&self) -> f64 {
        let f: Vec<f64> = (0..self.z.len())
            .map(|j| self.e[j].norm_sqr() + self.p[j].norm_sqr() + self.s[j].norm_sqr())
            .collect();
        trapezoid(&f, self.z[1] - self.z[0])
    }

    pub fn is_finite(&self) -> bool {
        [&self.e, &self.p, &self.s].iter().all(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub points_per_zb: usize,
    /// Must equal Δz/c when given.
    pub time_step: Option<f64>,
    /// Positions whose E and S are recorded at every step.
    pub probes: Vec<f64>,
    /// Keep a full snapshot every this many steps (0: none).
    pub snapshot_every: usize,
}

impl OracleOptions {
    /// 16 points per z_b, or per z_b/d_b when the blockade absorption length is shorter.
    pub fn resolved_for(p: &MediumParams) -> Self {
        Self {
            points_per_zb: 16 * p.d_b.ceil().max(1.0) as usize,
            ..Default::default()
        }
    }
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            points_per_zb: 16,
            time_step: None,
            probes: Vec::new(),
            snapshot_every: 0,
        }
    }
}

/// Photon-number bookkeeping, all in units of the injected photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxBalance {
    pub input: f64,
    pub transmitted: f64,
    pub absorbed: f64,
    pub remaining: f64,
}

impl FluxBalance {
    /// |input − transmitted − absorbed − remaining| / input.
    pub fn residual(&self) -> f64 {
        (self.input - self.transmitted - self.absorbed - self.remaining).abs() / self.input
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub excitation: Option<f64>,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Grid positions actually probed (nearest nodes).
    pub probe_z: Vec<f64>,
    /// [probe][step]
    pub probe_e: Vec<Vec<Complex64>>,
    pub probe_s: Vec<Vec<Complex64>>,
    /// E(L, t) at every step.
    pub output: Vec<Complex64>,
    pub snapshots: Vec<FieldState>,
    pub last: FieldState,
    pub flux: FluxBalance,
}

/// Per-cell propagator: Y(t+dt) = M Y + f1 E(t) + f2 (E(t+dt) − E(t)).
#[derive(Debug, Clone, Copy)]
struct CellStep {
    m: [[Complex64; 2]; 2],
    f1: [Complex64; 2],
    f2: [Complex64; 2],
}

type C2 = [[Complex64; 2]; 2];

fn mat_mul<const N: usize>(a: &[[Complex64; N]; N], b: &[[Complex64; N]; N]) -> [[Complex64; N]; N] {
    let mut out = [[Complex64::default(); N]; N];
    for i in 0..N {
        for k in 0..N {
            if a[i][k] == Complex64::default() {
                continue;
            }
            for j in 0..N {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// exp of a small matrix by scaling and squaring with a Taylor core.
fn expm<const N: usize>(z: &[[Complex64; N]; N]) -> [[Complex64; N]; N] {
    let norm = z.iter().map(|r| r.iter().map(|c| c.norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(squarings);
    let mut a = *z;
    a.iter_mut().flatten().for_each(|c| *c *= scale);
    let mut result = [[Complex64::default(); N]; N];
    for (i, row) in result.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    let mut term = result;
    for k in 1..=18 {
        term = mat_mul(&term, &a);
        term.iter_mut().flatten().for_each(|c| *c /= k as f64);
        result.iter_mut().flatten().zip(term.iter().flatten()).for_each(|(r, t)| *r += t);
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}

/// (e^z − 1)/z and (e^z − 1 − z)/z².
fn phi12(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 1e-3 {
        let phi1 = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
        let phi2 = 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0;
        (phi1, phi2)
    } else {
        let e = z.exp();
        ((e - 1.0) / z, (e - 1.0 - z) / (z * z))
    }
}

/// Van Loan route for moderate ‖A dt‖.
fn step_augmented(a: &C2, b: [Complex64; 2], dt: f64) -> CellStep {
    let zero = Complex64::default();
    let mut z = [[zero; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            z[i][j] = a[i][j] * dt;
        }
        z[i][2] = b[i] * dt;
    }
    z[2][3] = Complex64::new(1.0, 0.0);
    let e = expm(&z);
    CellStep {
        m: [[e[0][0], e[0][1]], [e[1][0], e[1][1]]],
        f1: [e[0][2], e[1][2]],
        f2: [e[0][3], e[1][3]],
    }
}

/// Spectral route for large V, where the eigenvalues are far apart.
fn step_eigen(a: &C2, b: [Complex64; 2], dt: f64) -> CellStep {
    let m = (a[0][0] + a[1][1]) / 2.0;
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (m * m - det).sqrt();
    let big = if (m + disc).norm() >= (m - disc).norm() { m + disc } else { m - disc };
    let small = det / big;
    let lam = [big, small];
    let proj = |k: usize| -> C2 {
        let other = lam[1 - k];
        let d = lam[k] - other;
        [
            [(a[0][0] - other) / d, a[0][1] / d],
            [a[1][0] / d, (a[1][1] - other) / d],
        ]
    };
    let mut out = CellStep {
        m: [[Complex64::default(); 2]; 2],
        f1: [Complex64::default(); 2],
        f2: [Complex64::default(); 2],
    };
    for (k, &l) in lam.iter().enumerate() {
        let pk = proj(k);
        let e = (l * dt).exp();
        let (p1, p2) = phi12(l * dt);
        for i in 0..2 {
            let pb = pk[i][0] * b[0] + pk[i][1] * b[1];
            out.f1[i] += dt * p1 * pb;
            out.f2[i] += dt * p2 * pb;
            for j in 0..2 {
                out.m[i][j] += e * pk[i][j];
            }
        }
    }
    out
}

fn cell_step(p: &MediumParams, v: f64, dt: f64) -> CellStep {
    let g = p.coupling_g;
    let b = [-I * g, Complex64::default()];
    if !v.is_finite() || v * dt > 1e12 {
        // infinitely shifted: S decouples and stays zero
        let l = Complex64::new(-p.gamma * dt, 0.0);
        let (p1, p2) = phi12(l);
        let zero = Complex64::default();
        return CellStep {
            m: [[l.exp(), zero], [zero, zero]],
            f1: [dt * p1 * b[0], zero],
            f2: [dt * p2 * b[0], zero],
        };
    }
    let a: C2 = [
        [Complex64::new(-p.gamma, 0.0), -I * p.omega_ctrl],
        [-I * p.omega_ctrl, -I * v],
    ];
    let norm = (p.gamma + p.omega_ctrl).max(p.omega_ctrl + v) * dt;
    if norm <= 40.0 {
        step_augmented(&a, b, dt)
    } else {
        step_eigen(&a, b, dt)
    }
}

fn trapezoid(f: &[f64], h: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    h * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[f.len() - 1]))
}

/// Spatial step and node count for a resolution.
pub fn oracle_grid(p: &MediumParams, points_per_zb: usize) -> Result<(f64, usize)> {
    if points_per_zb == 0 {
        return Err(Error::Config("points_per_zb must be positive".into()));
    }
    let cells = ((p.length_l / p.z_b) * points_per_zb as f64).round().max(1.0) as usize;
    Ok((p.length_l / cells as f64, cells + 1))
}

/// Integrates the field equations with an excitation fixed at `x0`
/// (`None`: no excitation) until `t_end`, injecting E(0,t) = h(t)/√c.
pub fn integrate_fixed_excitation(
    p: &MediumParams,
    x0: Option<f64>,
    pulse: &PulseEnvelope,
    t_end: f64,
    opts: &OracleOptions,
) -> Result<OracleRun> {
    let (dz, nodes) = oracle_grid(p, opts.points_per_zb)?;
    let dt = dz / p.speed_c;
    if let Some(step) = opts.time_step {
        if (step - dt).abs() > 1e-12 * dt {
            return Err(Error::Config(format!(
                "time step {step} breaks the characteristic condition dt = dz/c = {dt}"
            )));
        }
    }
    if let Some(x) = x0 {
        if !(0.0..=p.length_l).contains(&x) {
            return Err(Error::Domain(format!("excitation {x} lies outside [0, {}]", p.length_l)));
        }
    }
    let transit = p.length_l / p.speed_c;
    if !(t_end >= pulse.support() + transit) {
        return Err(Error::Config(format!(
            "t_end = {t_end} shorter than pulse support plus transit time {}",
            pulse.support() + transit
        )));
    }
    let steps = (t_end / dt).ceil() as usize;
    let z: Vec<f64> = (0..nodes).map(|j| j as f64 * dz).collect();
    let cells: Vec<CellStep> = z
        .iter()
        .map(|&zj| {
            let v = match x0 {
                Some(x) if zj == x => f64::INFINITY,
                Some(x) => p.c6 / (zj - x).powi(6),
                None => 0.0,
            };
            cell_step(p, v, dt)
        })
        .collect();
    let probe_idx: Vec<usize> = opts
        .probes
        .iter()
        .map(|&zp| ((zp / dz).round().max(0.0) as usize).min(nodes - 1))
        .collect();

    let sqrt_c = p.speed_c.sqrt();
    let half = 0.5 * p.coupling_g * dt;
    let mut state = FieldState::zeros(z.clone());
    state.e[0] = Complex64::new(pulse.value(0.0) / sqrt_c, 0.0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut probe_e: Vec<Vec<Complex64>> = vec![Vec::with_capacity(steps + 1); probe_idx.len()];
    let mut probe_s: Vec<Vec<Complex64>> = vec![Vec::with_capacity(steps + 1); probe_idx.len()];
    let mut output = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let mut flux_in = Vec::with_capacity(steps + 1);
    let mut flux_out = Vec::with_capacity(steps + 1);
    let mut absorb = Vec::with_capacity(steps + 1);
    let mut p_old = vec![Complex64::default(); nodes];
    let pol_sq = |st: &FieldState| -> f64 {
        let f: Vec<f64> = st.p.iter().map(|c| c.norm_sqr()).collect();
        trapezoid(&f, dz)
    };

    for n in 0..=steps {
        let t = n as f64 * dt;
        state.t = t;
        times.push(t);
        for (k, &j) in probe_idx.iter().enumerate() {
            probe_e[k].push(state.e[j]);
            probe_s[k].push(state.s[j]);
        }
        output.push(state.e[nodes - 1]);
        flux_in.push(p.speed_c * state.e[0].norm_sqr());
        flux_out.push(p.speed_c * state.e[nodes - 1].norm_sqr());
        absorb.push(2.0 * p.gamma * pol_sq(&state));
        if opts.snapshot_every > 0 && n % opts.snapshot_every == 0 {
            snapshots.push(state.clone());
        }
        if n == steps {
            break;
        }

        p_old.copy_from_slice(&state.p);
        let e_boundary = Complex64::new(pulse.value(t + dt) / sqrt_c, 0.0);
        for j in (0..nodes).rev() {
            let c = &cells[j];
            let (pj, sj, ej) = (state.p[j], state.s[j], state.e[j]);
            let mp = c.m[0][0] * pj + c.m[0][1] * sj;
            let ms = c.m[1][0] * pj + c.m[1][1] * sj;
            // P(t+dt) = alpha + beta E(t+dt)
            let alpha = mp + (c.f1[0] - c.f2[0]) * ej;
            let beta = c.f2[0];
            let e_new = if j == 0 {
                e_boundary
            } else {
                (state.e[j - 1] - I * half * (p_old[j - 1] + alpha)) / (1.0 + I * half * beta)
            };
            state.p[j] = alpha + beta * e_new;
            state.s[j] = ms + (c.f1[1] - c.f2[1]) * ej + c.f2[1] * e_new;
            state.e[j] = e_new;
        }
    }
    if !state.is_finite() {
        return Err(Error::Numerical("time integration produced non-finite amplitudes".into()));
    }
    let flux = FluxBalance {
        input: trapezoid(&flux_in, dt),
        transmitted: trapezoid(&flux_out, dt),
        absorbed: trapezoid(&absorb, dt),
        remaining: state.stored(),
    };
    Ok(OracleRun {
        excitation: x0,
        dt,
        times,
        probe_z: probe_idx.iter().map(|&j| z[j]).collect(),
        probe_e,
        probe_s,
        output,
        snapshots,
        last: state,
        flux,
    })
}

/// Independent excitation positions in parallel.
pub fn integrate_many(
    p: &MediumParams,
    x0s: &[Option<f64>],
    pulse: &PulseEnvelope,
    t_end: f64,
    opts: &OracleOptions,
) -> Result<Vec<OracleRun>> {
    x0s.par_iter().map(|&x| integrate_fixed_excitation(p, x, pulse, t_end, opts)).collect()
}

/// S at the run's probes from the spectral kernels, on a frequency grid whose
/// time step equals the run's. The window is `window_factor` times the run
/// length rounded up to a power of two; near-resonant atoms close to the
/// excitation ring for a long time and wrap around in a short window.
pub fn spectral_reference(
    p: &MediumParams,
    run: &OracleRun,
    pulse: &PulseEnvelope,
    window_factor: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let n = run.times.len().next_power_of_two() * window_factor.max(1);
    let grid = FrequencyGrid::new(n, 2.0 * PI / (n as f64 * run.dt))?;
    let kernels = frequency_kernels(p, &grid);
    Ok(run
        .probe_z
        .par_iter()
        .map(|&z| {
            let mut s = spectral_response(p, run.excitation, z, pulse, &grid, &kernels);
            s.truncate(run.times.len());
            s
        })
        .collect())
}

/// Relative L² difference of S over all probes and steps.
pub fn probe_error(run: &OracleRun, reference: &[Vec<Complex64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in run.probe_s.iter().zip(reference) {
        for (x, y) in a.iter().zip(b) {
            num += (x - y).norm_sqr();
            den += y.norm_sqr();
        }
    }
    (num / den).sqrt()
}

/// ‖a − b‖₂ / ‖b‖₂ over the common length.
pub fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let n = a.len().min(b.len());
    let num: f64 = (0..n).map(|k| (a[k] - b[k]).norm_sqr()).sum();
    let den: f64 = b[..n].iter().map(|c| c.norm_sqr()).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::FrequencyKernel;

    fn canon(d_b: f64, l: f64) -> MediumParams {
        MediumParams::from_dimensionless(d_b, l, 1.0).unwrap()
    }

    #[test]
    fn propagator_routes_agree() {
        let p = canon(10.0, 4.0);
        let dt = 0.05;
        for v in [0.0, 3.0, 400.0, 700.0, 2000.0] {
            let a: C2 = [
                [Complex64::new(-p.gamma, 0.0), -I * p.omega_ctrl],
                [-I * p.omega_ctrl, -I * v],
            ];
            let b = [-I * p.coupling_g, Complex64::default()];
            let x = step_augmented(&a, b, dt);
            let y = step_eigen(&a, b, dt);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((x.m[i][j] - y.m[i][j]).norm() < 1e-11, "v={v}");
                }
                assert!((x.f1[i] - y.f1[i]).norm() < 1e-11 && (x.f2[i] - y.f2[i]).norm() < 1e-11, "v={v}");
            }
        }
    }

    #[test]
    fn rejects_bad_configuration() {
        let p = canon(1.0, 4.0);
        let pulse = PulseEnvelope::square(10.0).unwrap();
        let bad = OracleOptions {
            time_step: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(integrate_fixed_excitation(&p, None, &pulse, 40.0, &bad), Err(Error::Config(_))));
        let opts = OracleOptions::default();
        assert!(matches!(integrate_fixed_excitation(&p, None, &pulse, 5.0, &opts), Err(Error::Config(_))));
        assert!(matches!(integrate_fixed_excitation(&p, Some(9.0), &pulse, 40.0, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn transparency_without_excitation() {
        // d = 4, Γ_EIT/√d = 0.5: bandwidth 1/60 is far inside the window
        let p = canon(1.0, 4.0);
        let pulse = PulseEnvelope::gaussian(60.0).unwrap();
        let delay = p.d / p.gamma_eit;
        let run = integrate_fixed_excitation(&p, None, &pulse, 8.0 * 60.0 + 4.0 * delay, &OracleOptions::default()).unwrap();
        let peak_in = pulse.value(4.0 * 60.0) / p.speed_c.sqrt();
        let peak_out = run.output.iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(peak_out / peak_in >= 0.99, "{}", peak_out / peak_in);
        assert!(run.flux.residual() < 0.01, "{:?}", run.flux);
    }

    #[test]
    fn matches_spectral_convolution() {
        let p = canon(1.0, 4.0);
        let pulse = PulseEnvelope::gaussian(2.0).unwrap();
        let opts = OracleOptions {
            probes: (0..=8).map(|k| k as f64 * 0.5).collect(),
            ..OracleOptions::resolved_for(&p)
        };
        let run = integrate_fixed_excitation(&p, Some(1.0), &pulse, 60.0, &opts).unwrap();
        let reference = spectral_reference(&p, &run, &pulse, 8).unwrap();
        assert!(probe_error(&run, &reference) < 0.01);
        assert!(run.flux.residual() < 0.01);
    }

    #[test]
    fn deep_excitation_blocks_transmission() {
        let p = canon(10.0, 4.0);
        let pulse = PulseEnvelope::gaussian(100.0).unwrap();
        let opts = OracleOptions::resolved_for(&p);
        let t_end = 800.0 + 4.0 + 2.0 * p.d / p.gamma_eit;
        let runs = integrate_many(&p, &[None, Some(2.0)], &pulse, t_end, &opts).unwrap();
        let peak = |r: &OracleRun| r.output.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
        let ratio = peak(&runs[1]) / peak(&runs[0]);
        let k = FrequencyKernel::new(&p, 0.0);
        let statik = (k.total(p.length_l, 2.0) / k.free(p.length_l)).norm_sqr();
        assert!((ratio.ln() - statik.ln()).abs() < 0.05 * statik.ln().abs(), "{ratio:e} vs {statik:e}");
        assert!((ratio.ln() / (-4.0 * p.d_b) - 1.0).abs() < 0.05, "{ratio:e}");
    }

    #[test]
    fn dark_state_for_strong_control() {
        let p = MediumParams::from_primaries(1.0, 30.0, 1.0, 1.0, 4.0, 1.0).unwrap();
        let pulse = PulseEnvelope::gaussian(10.0).unwrap();
        let opts = OracleOptions {
            probes: vec![1.0, 3.0],
            points_per_zb: 32,
            ..Default::default()
        };
        let run = integrate_fixed_excitation(&p, None, &pulse, 90.0, &opts).unwrap();
        let ratio = -p.coupling_g / p.omega_ctrl;
        for k in 0..2 {
            let peak = run.probe_e[k].iter().map(|c| c.norm()).fold(0.0, f64::max);
            for (e, s) in run.probe_e[k].iter().zip(&run.probe_s[k]) {
                assert!((s - ratio * e).norm() < 1e-3 * peak.abs() * ratio.abs());
            }
        }
    }
}
