//! Experiment configuration, parameter sweeps and tabular output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};

use crate::decoherence::{rho_coherent, rho_fock, rho_boundary_analytic, DensityMatrixGrid, PhiMatrix, SpectralWeights};
use crate::error::{Error, Result};
use crate::gate_stats::{self, Estimator, GateEnsembleParams, ScatterModel};
use crate::kernel::{kernel_time_domain, FrequencyGrid, KernelTable, PulseEnvelope, PulseShape};
use crate::medium::{MediumConfig, MediumParams, SpatialGrid};
use crate::oracle::{self, OracleOptions};
use crate::storage::{self, OptimizeOptions, StorageControl, SwitchOptimum};

pub const UNITS: &str = "gamma = c = z_b = 1; lengths in z_b, times in 1/gamma";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseKind {
    /// Long-pulse limit: only ω = 0 contributes.
    #[default]
    Static,
    Square,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub shape: PulseKind,
    /// Duration in units of √d/Γ_EIT.
    pub duration_multiplier: f64,
    /// Gauss–Legendre panels for the pulse spectrum when not static.
    pub spectral_panels: usize,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            shape: PulseKind::Static,
            duration_multiplier: 50.0,
            spectral_panels: 8,
        }
    }
}

impl PulseConfig {
    /// The time-domain envelope; a static config maps to a square pulse of the same duration.
    pub fn envelope(&self, p: &MediumParams) -> Result<PulseEnvelope> {
        let t = self.duration_multiplier * p.d.sqrt() / p.gamma_eit;
        let shape = match self.shape {
            PulseKind::Gaussian => PulseShape::Gaussian,
            _ => PulseShape::Square,
        };
        PulseEnvelope::new(shape, t)
    }

    pub fn weights(&self, p: &MediumParams) -> Result<SpectralWeights> {
        match self.shape {
            PulseKind::Static => Ok(SpectralWeights::static_limit()),
            _ => Ok(SpectralWeights::from_pulse(&self.envelope(p)?, None, self.spectral_panels)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub points_per_zb: usize,
    pub frequency_points: usize,
    pub switch_cells: usize,
    /// Oracle resolution; `None` picks 16·max(1, ⌈d_b⌉) per z_b.
    pub oracle_points_per_zb: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points_per_zb: 24,
            frequency_points: 4096,
            switch_cells: 256,
            oracle_points_per_zb: None,
        }
    }
}

fn default_db_pair() -> Vec<f64> {
    vec![1.0, 10.0]
}
fn default_photons() -> Vec<u32> {
    vec![1, 10, 100]
}
fn default_sweep_db() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 10.0, 20.0]
}
fn default_sweep_l() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}
fn default_alpha_db() -> Vec<f64> {
    vec![1.0, 4.0, 10.0]
}
fn default_alpha_sq_sweep() -> Vec<f64> {
    (0..=12).map(|k| 0.5 * k as f64).collect()
}
fn default_alpha_sq_mc() -> Vec<f64> {
    (0..=10).map(f64::from).collect()
}
fn default_one_photon() -> u32 {
    1
}
fn default_d() -> f64 {
    50.0
}
fn default_omega_g() -> f64 {
    1.0
}
fn default_alpha_g_sq() -> f64 {
    0.5
}
fn default_trials() -> u64 {
    1_000_000
}
fn default_eta0() -> f64 {
    1.0
}

/// The task block; exactly one task per config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    /// Time-domain kernels e₀(z,t) and e₀+e₁(z,x,t).
    Kernel {
        #[serde(default)]
        z_over_zb: Vec<f64>,
        #[serde(default)]
        x_over_zb: Vec<f64>,
        #[serde(default)]
        cache_dir: Option<PathBuf>,
    },
    /// Rescaled density matrices after n photons and the boundary cut.
    Rho {
        #[serde(default = "default_db_pair")]
        d_b_values: Vec<f64>,
        #[serde(default = "default_photons")]
        photon_numbers: Vec<u32>,
        #[serde(default)]
        cut_y_over_zb: f64,
    },
    /// One optimised switch.
    Optimize {
        #[serde(default)]
        n_photons: Option<u32>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default = "default_omega_g")]
        omega_g: f64,
        #[serde(default)]
        emit_mode: bool,
        #[serde(default)]
        emit_envelope: bool,
    },
    /// Optimised η against d_b for several medium lengths.
    SweepDb {
        #[serde(default = "default_one_photon")]
        n_photons: u32,
        #[serde(default = "default_sweep_db")]
        d_b_values: Vec<f64>,
        #[serde(default = "default_sweep_l")]
        l_over_zb_values: Vec<f64>,
        #[serde(default)]
        emit_modes: bool,
    },
    /// Optimised η against target amplitude at fixed optical depth.
    SweepAlpha {
        #[serde(default = "default_d")]
        d: f64,
        #[serde(default = "default_alpha_db")]
        d_b_values: Vec<f64>,
        #[serde(default = "default_alpha_sq_sweep")]
        alpha_sq_values: Vec<f64>,
    },
    /// Monte Carlo efficiency for coherent gate and target.
    Mc {
        #[serde(default = "default_alpha_sq_mc")]
        alpha_sq_grid: Vec<f64>,
        #[serde(default = "default_alpha_g_sq")]
        alpha_g_sq: f64,
        #[serde(default)]
        p_sc: Vec<f64>,
        #[serde(default)]
        from_medium: bool,
        #[serde(default = "default_trials")]
        trials: u64,
        #[serde(default = "default_eta0")]
        eta0: f64,
        #[serde(default)]
        model: ScatterModel,
        #[serde(default)]
        estimator: Estimator,
    },
    /// Direct time-domain integration around one excitation.
    Oracle {
        #[serde(default)]
        x0_over_zb: Option<f64>,
        #[serde(default)]
        probes_over_zb: Vec<f64>,
        #[serde(default)]
        t_end: Option<f64>,
        #[serde(default)]
        compare: bool,
    },
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Kernel { .. } => "kernel",
            TaskConfig::Rho { .. } => "rho",
            TaskConfig::Optimize { .. } => "optimize",
            TaskConfig::SweepDb { .. } => "sweep-db",
            TaskConfig::SweepAlpha { .. } => "sweep-alpha",
            TaskConfig::Mc { .. } => "mc",
            TaskConfig::Oracle { .. } => "oracle",
        }
    }

    /// The task with every field at its default.
    pub fn default_for(name: &str) -> Result<Self> {
        let v = serde_json::json!({ "kind": name });
        serde_json::from_value(v).map_err(|e| Error::Config(format!("unknown task {name}: {e}")))
    }
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub medium: MediumConfig,
    #[serde(default)]
    pub pulse: PulseConfig,
    #[serde(default)]
    pub grids: GridConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

/// Sets `a.b.c = value` in a JSON tree, creating objects on the way. The value
/// is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Json, key: &str, value: &str) -> Result<()> {
    let parsed: Json = serde_json::from_str(value).unwrap_or_else(|_| Json::String(value.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key:?}")));
    }
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Error::Config(format!("override {key}: {part} is not an object")));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(part.to_string())
            .or_insert_with(|| Json::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(Error::Config(format!("override {key}: parent is not an object"))),
    }
}

impl ExperimentConfig {
    pub fn from_json(v: Json) -> Result<Self> {
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file (or starts from `{"task": {"kind": task}}`), applies
    /// overrides in order, and validates.
    pub fn load(path: Option<&Path>, task: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut v = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::json!({}),
        };
        if !v.is_object() {
            return Err(Error::Config("config root must be an object".into()));
        }
        if let Some(t) = task {
            let current = v.pointer("/task/kind").and_then(Json::as_str).map(str::to_string);
            match current {
                Some(c) if c != t => {
                    return Err(Error::Config(format!("config task is {c}, command line asks for {t}")))
                }
                Some(_) => {}
                None => apply_override(&mut v, "task.kind", &Json::String(t.into()).to_string())?,
            }
        }
        if v.get("medium").is_none() {
            v["medium"] = serde_json::json!({ "d_b": 10.0, "L_over_zb": 4.0 });
        }
        for (k, val) in overrides {
            apply_override(&mut v, k, val)?;
        }
        Self::from_json(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.resolve()?;
        let g = &self.grids;
        if g.points_per_zb < 2 || g.switch_cells < 2 || g.frequency_points < 16 || g.frequency_points % 2 != 0 {
            return Err(Error::Config(format!("grid settings out of range: {g:?}")));
        }
        if !(self.pulse.duration_multiplier > 0.0) || self.pulse.spectral_panels == 0 {
            return Err(Error::Config("pulse duration multiplier and panels must be positive".into()));
        }
        let positive = |name: &str, xs: &[f64]| -> Result<()> {
            if xs.is_empty() || xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Config(format!("{name} must be a nonempty list of positive numbers")));
            }
            Ok(())
        };
        let nonneg = |name: &str, xs: &[f64]| -> Result<()> {
            if xs.is_empty() || xs.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Config(format!("{name} must be a nonempty list of nonnegative numbers")));
            }
            Ok(())
        };
        match &self.task {
            TaskConfig::Kernel { cache_dir, .. } => {
                if let Some(d) = cache_dir {
                    if !d.is_dir() {
                        return Err(Error::Config(format!("cache_dir {} does not exist", d.display())));
                    }
                }
            }
            TaskConfig::Rho { d_b_values, photon_numbers, .. } => {
                positive("d_b_values", d_b_values)?;
                if photon_numbers.is_empty() {
                    return Err(Error::Config("photon_numbers is empty".into()));
                }
            }
            TaskConfig::Optimize { n_photons, alpha, omega_g, .. } => {
                if n_photons.is_some() && alpha.is_some() {
                    return Err(Error::Config("give n_photons or alpha, not both".into()));
                }
                positive("omega_g", &[*omega_g])?;
                if let Some(a) = alpha {
                    nonneg("alpha", &[*a])?;
                }
            }
            TaskConfig::SweepDb { d_b_values, l_over_zb_values, .. } => {
                positive("d_b_values", d_b_values)?;
                positive("l_over_zb_values", l_over_zb_values)?;
            }
            TaskConfig::SweepAlpha { d, d_b_values, alpha_sq_values } => {
                positive("d", &[*d])?;
                positive("d_b_values", d_b_values)?;
                nonneg("alpha_sq_values", alpha_sq_values)?;
            }
            TaskConfig::Mc { alpha_sq_grid, alpha_g_sq, p_sc, from_medium, trials, eta0, .. } => {
                nonneg("alpha_sq_grid", alpha_sq_grid)?;
                positive("alpha_g_sq", &[*alpha_g_sq])?;
                if p_sc.is_empty() == !from_medium {
                    return Err(Error::Config("give either p_sc values or from_medium".into()));
                }
                if p_sc.iter().any(|p| !(0.0..=1.0).contains(p)) || !(0.0..=1.0).contains(eta0) || *trials == 0 {
                    return Err(Error::Config("p_sc and eta0 must lie in [0, 1], trials > 0".into()));
                }
            }
            TaskConfig::Oracle { .. } => {
                if self.pulse.shape == PulseKind::Static {
                    return Err(Error::Config("the oracle needs a square or gaussian pulse".into()));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn params(&self) -> Result<MediumParams> {
        Ok(self.medium.resolve()?.0)
    }
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Shortest round-trip text, plain notation for moderate magnitudes.
pub fn format_number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e15).contains(&v.abs()) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| Cell::Num(v)).collect());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[k] {
                    Cell::Num(v) => *v,
                    Cell::Text(_) => f64::NAN,
                })
                .collect(),
        )
    }

    /// '#' metadata lines, then an RFC-4180 header and rows.
    pub fn to_csv(&self, meta: &BTreeMap<String, String>) -> Result<String> {
        let mut out = String::new();
        for (k, v) in meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::text)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        out.push_str(&String::from_utf8(bytes).expect("utf-8 input"));
        Ok(out)
    }

    pub fn to_json(&self, meta: &BTreeMap<String, String>) -> Result<String> {
        let v = serde_json::json!({ "metadata": meta, "columns": self.columns, "rows": self.rows });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

pub fn metadata(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("config_sha256".to_string(), cfg.hash()),
        ("task".to_string(), cfg.task.name().to_string()),
        ("units".to_string(), UNITS.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
    ])
}

/// Writes every table as `<name>.csv` (and `<name>.json` when asked).
pub fn write_tables(dir: &Path, tables: &[Table], meta: &BTreeMap<String, String>, json: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        fs::write(&path, t.to_csv(meta)?)?;
        written.push(path);
        if json {
            let path = dir.join(format!("{}.json", t.name));
            fs::write(&path, t.to_json(meta)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn tag(v: f64) -> String {
    format_number(v).replace('.', "p")
}

fn optimize_eta(p: &MediumParams, rho: &DensityMatrixGrid, cells: usize, omega_g: f64) -> Result<SwitchOptimum> {
    let ctrl = StorageControl::default_for(p, omega_g)?;
    storage::optimize_switch(
        p,
        rho,
        &ctrl,
        OptimizeOptions {
            cells,
            ..Default::default()
        },
    )
}

fn mode_table(name: String, opt: &SwitchOptimum, z_b: f64) -> Table {
    let mut t = Table::new(name, &["z_over_zb", "abs_C", "re_C", "im_C"]);
    for (z, c) in opt.mode.grid.points.iter().zip(&opt.mode.amplitude) {
        t.push_nums(&[z / z_b, c.norm(), c.re, c.im]);
    }
    t
}

fn envelope_table(name: String, opt: &SwitchOptimum) -> Table {
    let mut t = Table::new(name, &["t", "abs_h", "re_h", "im_h"]);
    for (time, h) in opt.envelope.times().iter().zip(&opt.envelope.values) {
        t.push_nums(&[*time, h.norm(), h.re, h.im]);
    }
    t
}

/// Time-domain kernels for the configured z and excitation positions.
pub fn run_kernel(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::Kernel { z_over_zb, x_over_zb, cache_dir } = &cfg.task else {
        return Err(Error::Usage("run_kernel needs a kernel task".into()));
    };
    let p = cfg.params()?;
    let pulse = cfg.pulse.envelope(&p)?;
    let z: Vec<f64> = if z_over_zb.is_empty() { vec![p.length_l] } else { z_over_zb.iter().map(|v| v * p.z_b).collect() };
    let x: Vec<f64> = if x_over_zb.is_empty() { vec![0.5 * p.length_l] } else { x_over_zb.iter().map(|v| v * p.z_b).collect() };
    let half_span = 16.0 / pulse.duration;
    let grid = FrequencyGrid::spanning(cfg.grids.frequency_points, half_span)?;
    let table = match cache_dir {
        Some(dir) => KernelTable::load_or_tabulate(dir, &p, &z, &x, &grid)?,
        None => KernelTable::tabulate(&p, &z, &x, &grid)?,
    };
    let tk = kernel_time_domain(&table, &pulse)?;
    let time = tk.time.as_ref().expect("time kernels present");
    let nw = grid.len();
    let mut t = Table::new("kernel", &["kind", "x_over_zb", "z_over_zb", "t", "re", "im"]);
    for (iz, &zz) in z.iter().enumerate() {
        for (n, &tt) in time.times.iter().enumerate() {
            let v = time.e0[iz * nw + n];
            t.push(vec![Cell::Text("free".into()), f64::NAN.into(), (zz / p.z_b).into(), tt.into(), v.re.into(), v.im.into()]);
        }
    }
    for (ix, &xx) in x.iter().enumerate() {
        for (iz, &zz) in z.iter().enumerate() {
            for (n, &tt) in time.times.iter().enumerate() {
                let v = time.total[(ix * z.len() + iz) * nw + n];
                t.push(vec![
                    Cell::Text("total".into()),
                    (xx / p.z_b).into(),
                    (zz / p.z_b).into(),
                    tt.into(),
                    v.re.into(),
                    v.im.into(),
                ]);
            }
        }
    }
    Ok(vec![t])
}

/// Density-matrix heatmaps for each (d_b, n) and the boundary cut with the
/// analytic overlay.
pub fn run_rho(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::Rho { d_b_values, photon_numbers, cut_y_over_zb } = &cfg.task else {
        return Err(Error::Usage("run_rho needs a rho task".into()));
    };
    let base = cfg.params()?;
    let mut tables = Vec::new();
    let mut cut = Table::new("rho_cut", &["d_b", "n", "x_over_zb", "y_over_zb", "abs_numeric", "abs_analytic"]);
    for &d_b in d_b_values {
        let p = MediumParams::from_dimensionless(d_b, base.l_over_zb(), base.omega_over_gamma())?;
        let grid = SpatialGrid::uniform(p.length_l, cfg.grids.points_per_zb)?;
        let phi = PhiMatrix::build(&p, &cfg.pulse.weights(&p)?, &grid)?;
        let unit = DensityMatrixGrid::unit(&grid);
        let jy = nearest(&grid.points, cut_y_over_zb * p.z_b);
        let y = grid.points[jy];
        for &n in photon_numbers {
            let rho = rho_fock(&unit, &phi, n as i64)?;
            rho.check_invariants(1e-9)?;
            let mut t = Table::new(format!("rho_db{}_n{}", tag(d_b), n), &["x_over_zb", "y_over_zb", "abs", "re", "im"]);
            for r in rho.heatmap_rows(p.z_b) {
                t.push_nums(&r);
            }
            tables.push(t);
            for (i, &x) in grid.points.iter().enumerate() {
                let analytic = rho_boundary_analytic(&p, x, y, n);
                cut.push_nums(&[d_b, n as f64, x / p.z_b, y / p.z_b, rho.at(i, jy).norm(), analytic]);
            }
        }
    }
    tables.push(cut);
    Ok(tables)
}

fn nearest(points: &[f64], v: f64) -> usize {
    points
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// One optimisation with optional Fock or coherent illumination.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::Optimize { n_photons, alpha, omega_g, emit_mode, emit_envelope } = &cfg.task else {
        return Err(Error::Usage("run_optimize needs an optimize task".into()));
    };
    let p = cfg.params()?;
    let grid = SpatialGrid::uniform(p.length_l, cfg.grids.points_per_zb)?;
    let unit = DensityMatrixGrid::unit(&grid);
    let rho = match (n_photons, alpha) {
        (None, None) => unit,
        (Some(n), _) => rho_fock(&unit, &PhiMatrix::build(&p, &cfg.pulse.weights(&p)?, &grid)?, *n as i64)?,
        (None, Some(a)) => rho_coherent(&PhiMatrix::build(&p, &cfg.pulse.weights(&p)?, &grid)?.rho1(), *a)?,
    };
    let opt = optimize_eta(&p, &rho, cfg.grids.switch_cells, *omega_g)?;
    let p_sc = storage::p_scatter(&p, &grid, &opt.mode.density())?;
    let mut summary = Table::new(
        "optimize",
        &["d_b", "L_over_zb", "n_photons", "alpha", "eta", "storage_efficiency", "p_sc", "iterations"],
    );
    summary.push_nums(&[
        p.d_b,
        p.l_over_zb(),
        n_photons.map_or(f64::NAN, f64::from),
        alpha.unwrap_or(f64::NAN),
        opt.eta,
        opt.mode.norm_sqr(),
        p_sc,
        opt.trace.len() as f64,
    ]);
    let mut tables = vec![summary];
    if *emit_mode {
        tables.push(mode_table("mode".into(), &opt, p.z_b));
    }
    if *emit_envelope {
        tables.push(envelope_table("envelope".into(), &opt));
    }
    Ok(tables)
}

/// Optimised η over (d_b, L) after `n_photons` target photons; d = d_b·L/z_b is not capped.
pub fn run_sweep_db(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::SweepDb { n_photons, d_b_values, l_over_zb_values, emit_modes } = &cfg.task else {
        return Err(Error::Usage("run_sweep_db needs a sweep-db task".into()));
    };
    let omega = cfg.params()?.omega_over_gamma();
    let points: Vec<(f64, f64)> = l_over_zb_values
        .iter()
        .flat_map(|&l| d_b_values.iter().map(move |&d_b| (d_b, l)))
        .collect();
    let results: Vec<(f64, f64, SwitchOptimum, f64)> = points
        .par_iter()
        .map(|&(d_b, l)| {
            let p = MediumParams::from_dimensionless(d_b, l, omega)?;
            let grid = SpatialGrid::uniform(p.length_l, cfg.grids.points_per_zb)?;
            let unit = DensityMatrixGrid::unit(&grid);
            let rho = if *n_photons == 0 {
                unit
            } else {
                rho_fock(&unit, &PhiMatrix::build(&p, &cfg.pulse.weights(&p)?, &grid)?, *n_photons as i64)?
            };
            let opt = optimize_eta(&p, &rho, cfg.grids.switch_cells, 1.0)?;
            Ok((d_b, l, opt, p.z_b))
        })
        .collect::<Result<_>>()?;
    let mut curve = Table::new("eta_vs_db", &["d_b", "L_over_zb", "n_photons", "eta", "mode_profile"]);
    let mut tables = Vec::new();
    for (d_b, l, opt, z_b) in &results {
        let name = format!("mode_db{}_L{}", tag(*d_b), tag(*l));
        let reference = if *emit_modes {
            tables.push(mode_table(name.clone(), opt, *z_b));
            format!("{name}.csv")
        } else {
            String::new()
        };
        curve.push(vec![(*d_b).into(), (*l).into(), (*n_photons as f64).into(), opt.eta.into(), reference.into()]);
    }
    tables.insert(0, curve);
    Ok(tables)
}

/// η(α) at fixed d for several d_b, with the vacuum floor.
pub fn run_sweep_alpha(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::SweepAlpha { d, d_b_values, alpha_sq_values } = &cfg.task else {
        return Err(Error::Usage("run_sweep_alpha needs a sweep-alpha task".into()));
    };
    let omega = cfg.params()?.omega_over_gamma();
    let mut t = Table::new("eta_vs_alpha", &["d_b", "alpha", "alpha_sq", "eta", "vacuum_floor"]);
    for &d_b in d_b_values {
        let p = MediumParams::from_dimensionless(d_b, d / d_b, omega)?;
        let grid = SpatialGrid::uniform(p.length_l, cfg.grids.points_per_zb)?;
        let rho1 = PhiMatrix::build(&p, &cfg.pulse.weights(&p)?, &grid)?.rho1();
        let eta0 = optimize_eta(&p, &DensityMatrixGrid::unit(&grid), cfg.grids.switch_cells, 1.0)?.eta;
        let etas: Vec<f64> = alpha_sq_values
            .par_iter()
            .map(|&a2| {
                let rho = rho_coherent(&rho1, a2.sqrt())?;
                Ok(optimize_eta(&p, &rho, cfg.grids.switch_cells, 1.0)?.eta)
            })
            .collect::<Result<_>>()?;
        for (&a2, eta) in alpha_sq_values.iter().zip(etas) {
            t.push_nums(&[d_b, a2.sqrt(), a2, eta, gate_stats::vacuum_floor(a2, eta0)]);
        }
    }
    Ok(vec![t])
}

/// Monte Carlo η against α² with the analytic laws.
pub fn run_mc(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::Mc { alpha_sq_grid, alpha_g_sq, p_sc, from_medium, trials, eta0, model, estimator } = &cfg.task else {
        return Err(Error::Usage("run_mc needs an mc task".into()));
    };
    let (p_values, eta0) = if *from_medium {
        let p = cfg.params()?;
        let grid = SpatialGrid::uniform(p.length_l, cfg.grids.points_per_zb)?;
        let opt = optimize_eta(&p, &DensityMatrixGrid::unit(&grid), cfg.grids.switch_cells, 1.0)?;
        (vec![storage::p_scatter(&p, &grid, &opt.mode.density())?], opt.eta)
    } else {
        (p_sc.clone(), *eta0)
    };
    let mut t = Table::new(
        "mc",
        &["p_sc", "alpha_sq", "alpha_sc_sq", "eta_mc", "stderr", "eta_analytic", "eta_linear", "eta_model_exact"],
    );
    for &ps in &p_values {
        for &a2 in alpha_sq_grid {
            let params = GateEnsembleParams::new(a2, *alpha_g_sq, ps, eta0)?;
            let est = gate_stats::mc_efficiency_with(&params, *trials, cfg.seed, *model, *estimator)?;
            let a_sc = gate_stats::alpha_sc_from_alpha(a2, *alpha_g_sq, ps);
            let exact = match model {
                ScatterModel::StillBlocks => gate_stats::exact_efficiency(&params)?,
                ScatterModel::Transparent => f64::NAN,
            };
            t.push_nums(&[
                ps,
                a2,
                a_sc,
                est.eta,
                est.stderr,
                gate_stats::eta_exponential(a_sc, *alpha_g_sq, eta0)?,
                gate_stats::eta_linear_law(&params),
                exact,
            ]);
        }
    }
    Ok(vec![t])
}

/// Both panels; the panel-b part runs only when `mc` is given.
pub fn run_alpha_and_mc(alpha_cfg: &ExperimentConfig, mc: Option<&ExperimentConfig>) -> Result<Vec<Table>> {
    let mut tables = run_sweep_alpha(alpha_cfg)?;
    if let Some(m) = mc {
        tables.extend(run_mc(m)?);
    }
    Ok(tables)
}

/// Oracle traces at the probe positions, and a summary with flux balance.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    let TaskConfig::Oracle { x0_over_zb, probes_over_zb, t_end, compare } = &cfg.task else {
        return Err(Error::Usage("run_oracle needs an oracle task".into()));
    };
    let p = cfg.params()?;
    let pulse = cfg.pulse.envelope(&p)?;
    let mut opts = OracleOptions::resolved_for(&p);
    if let Some(n) = cfg.grids.oracle_points_per_zb {
        opts.points_per_zb = n;
    }
    opts.probes = if probes_over_zb.is_empty() {
        (0..=4).map(|k| 0.25 * k as f64 * p.length_l).collect()
    } else {
        probes_over_zb.iter().map(|v| v * p.z_b).collect()
    };
    let t_end = t_end.unwrap_or(pulse.support() + p.length_l / p.speed_c + 3.0 * p.d / p.gamma_eit + 20.0 / p.gamma);
    let run = oracle::integrate_fixed_excitation(&p, x0_over_zb.map(|x| x * p.z_b), &pulse, t_end, &opts)?;
    let mut traces = Table::new("oracle", &["t", "z", "re_E", "im_E", "re_S", "im_S"]);
    for (k, &z) in run.probe_z.iter().enumerate() {
        for (n, &time) in run.times.iter().enumerate() {
            let (e, s): (Complex64, Complex64) = (run.probe_e[k][n], run.probe_s[k][n]);
            traces.push_nums(&[time, z / p.z_b, e.re, e.im, s.re, s.im]);
        }
    }
    let error = if *compare {
        oracle::probe_error(&run, &oracle::spectral_reference(&p, &run, &pulse, 8)?)
    } else {
        f64::NAN
    };
    let mut summary = Table::new(
        "oracle_summary",
        &["points_per_zb", "dt", "input", "transmitted", "absorbed", "remaining", "flux_residual", "spectral_l2_error"],
    );
    let f = run.flux;
    summary.push_nums(&[
        opts.points_per_zb as f64,
        run.dt,
        f.input,
        f.transmitted,
        f.absorbed,
        f.remaining,
        f.residual(),
        error,
    ]);
    Ok(vec![traces, summary])
}

/// Runs whichever task the config names.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<Table>> {
    match cfg.task {
        TaskConfig::Kernel { .. } => run_kernel(cfg),
        TaskConfig::Rho { .. } => run_rho(cfg),
        TaskConfig::Optimize { .. } => run_optimize(cfg),
        TaskConfig::SweepDb { .. } => run_sweep_db(cfg),
        TaskConfig::SweepAlpha { .. } => run_sweep_alpha(cfg),
        TaskConfig::Mc { .. } => run_mc(cfg),
        TaskConfig::Oracle { .. } => run_oracle(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(v: Json) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(v)
    }

    #[test]
    fn task_defaults_and_overrides() {
        for name in ["kernel", "rho", "optimize", "sweep-db", "sweep-alpha", "mc", "oracle"] {
            assert_eq!(TaskConfig::default_for(name).unwrap().name(), name);
        }
        assert!(TaskConfig::default_for("plot").is_err());
        let mut v = serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}});
        apply_override(&mut v, "task.kind", "\"mc\"").unwrap();
        apply_override(&mut v, "task.p_sc", "[0.01]").unwrap();
        apply_override(&mut v, "medium.d_b", "3").unwrap();
        let c = cfg(v).unwrap();
        assert_eq!(c.medium.d_b, Some(3.0));
        assert!(matches!(c.task, TaskConfig::Mc { ref p_sc, .. } if p_sc == &[0.01]));
        assert_eq!(c.seed, 1);
        let mut v = serde_json::json!({"medium": 1});
        assert!(apply_override(&mut v, "medium.d_b", "1").is_err());
        assert!(apply_override(&mut v, "a..b", "1").is_err());
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad = [
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0, "gamma": 1.0}, "task": {"kind": "rho"}}),
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "optimize", "n_photons": 2, "alpha": 1.0}}),
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "mc"}}),
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "oracle"}}),
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "rho", "d_b_values": [-1.0]}}),
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "rho"}, "extra": 1}),
            serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "kernel", "cache_dir": "/nonexistent/dir"}}),
        ];
        for v in bad {
            assert!(matches!(cfg(v.clone()), Err(Error::Config(_))), "{v}");
        }
    }

    #[test]
    fn csv_layout() {
        let c = cfg(serde_json::json!({"medium": {"d_b": 1.0, "L_over_zb": 4.0}, "task": {"kind": "rho"}})).unwrap();
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![Cell::Num(1e-7), Cell::Text("f,g".into())]);
        t.push_nums(&[0.25, 3.0]);
        let text = t.to_csv(&metadata(&c)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_sha256: "));
        assert!(lines.iter().any(|l| l.contains("units: gamma = c = z_b = 1")));
        let header = lines.iter().position(|l| !l.starts_with('#')).unwrap();
        assert_eq!(lines[header], "a,b");
        assert_eq!(lines[header + 1], "1e-7,\"f,g\"");
        assert_eq!(lines[header + 2], "0.25,3");
        assert_eq!(c.hash(), c.clone().hash());
        assert_eq!(format_number(f64::NAN), "NaN");
    }
}
