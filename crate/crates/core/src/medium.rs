//! Physical parameters of the EIT medium and the pointwise response
//! functions (van der Waals shift, effective potential, susceptibilities).
//!
//! All engines work in the canonical unit system γ = c = z_b = 1, where
//! G² = d_b, C₆ = Γ_EIT = Ω² and lengths are measured in blockade radii.
//! [`MediumParams::canonical`] maps any parameter set onto it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Medium parameters. Primary fields are stored as given; the derived scales
/// are recomputed on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    /// Intermediate-state decay half-width γ.
    pub gamma: f64,
    /// Control Rabi frequency Ω.
    pub omega_ctrl: f64,
    /// Collective coupling G = g√n.
    pub coupling_g: f64,
    /// van der Waals coefficient C₆.
    pub c6: f64,
    /// Medium length L.
    pub length_l: f64,
    /// Target-field propagation speed c.
    pub speed_c: f64,
    /// Γ_EIT = Ω²/γ.
    pub gamma_eit: f64,
    /// Blockade radius (C₆/Γ_EIT)^{1/6}.
    pub z_b: f64,
    /// Half optical depth G²L/(γc).
    pub d: f64,
    /// Half blockaded optical depth G²z_b/(γc).
    pub d_b: f64,
}

impl MediumParams {
    pub fn from_primaries(
        gamma: f64,
        omega_ctrl: f64,
        coupling_g: f64,
        c6: f64,
        length_l: f64,
        speed_c: f64,
    ) -> Result<Self> {
        let fields = [
            ("gamma", gamma),
            ("omega", omega_ctrl),
            ("G", coupling_g),
            ("C6", c6),
            ("L", length_l),
            ("c", speed_c),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let gamma_eit = omega_ctrl * omega_ctrl / gamma;
        let z_b = (c6 / gamma_eit).powf(1.0 / 6.0);
        let depth_rate = coupling_g * coupling_g / (gamma * speed_c);
        Ok(Self {
            gamma,
            omega_ctrl,
            coupling_g,
            c6,
            length_l,
            speed_c,
            gamma_eit,
            z_b,
            d: depth_rate * length_l,
            d_b: depth_rate * z_b,
        })
    }

    /// Canonical parameters from the dimensionless triple (d_b, L/z_b, Ω/γ).
    pub fn from_dimensionless(d_b: f64, l_over_zb: f64, omega_over_gamma: f64) -> Result<Self> {
        for (name, v) in [
            ("d_b", d_b),
            ("L_over_zb", l_over_zb),
            ("omega_over_gamma", omega_over_gamma),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let omega = omega_over_gamma;
        let mut p = Self::from_primaries(1.0, omega, d_b.sqrt(), omega * omega, l_over_zb, 1.0)?;
        // G² rounds; keep the requested values exact
        p.d_b = d_b;
        p.d = d_b * l_over_zb;
        Ok(p)
    }

    /// Same physics expressed with γ = c = z_b = 1.
    pub fn canonical(&self) -> Self {
        let mut p = Self::from_dimensionless(self.d_b, self.l_over_zb(), self.omega_over_gamma())
            .expect("validated parameters stay valid under rescaling");
        // keep d exact: L/z_b · d_b can differ from the stored d in the last ulp
        p.d = self.d;
        p
    }

    pub fn is_canonical(&self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        close(self.gamma, 1.0) && close(self.speed_c, 1.0) && close(self.z_b, 1.0)
    }

    pub fn l_over_zb(&self) -> f64 {
        self.length_l / self.z_b
    }

    pub fn omega_over_gamma(&self) -> f64 {
        self.omega_ctrl / self.gamma
    }

    /// Copy with a different medium length (same density and blockade radius).
    pub fn with_length(&self, length_l: f64) -> Result<Self> {
        Self::from_primaries(
            self.gamma,
            self.omega_ctrl,
            self.coupling_g,
            self.c6,
            length_l,
            self.speed_c,
        )
    }

    /// Relative residuals of the closure relations z_b⁶Γ_EIT = C₆ and d = d_b L/z_b.
    pub fn closure_residuals(&self) -> (f64, f64) {
        let r1 = (self.z_b.powi(6) * self.gamma_eit - self.c6).abs() / self.c6;
        let r2 = (self.d - self.d_b * self.length_l / self.z_b).abs() / self.d;
        (r1, r2)
    }

    /// V(z) = C₆/z⁶.
    pub fn vdw_potential(&self, z: f64) -> Result<f64> {
        if z == 0.0 {
            return Err(Error::Domain("van der Waals potential is singular at z = 0".into()));
        }
        Ok(self.c6 / z.powi(6))
    }

    /// (ω + iγ)/(Ω² − ω(ω + iγ)), the factor turning V into U.
    pub fn interaction_response(&self, omega: f64) -> Complex64 {
        let w = Complex64::new(omega, self.gamma);
        w / (self.omega_ctrl * self.omega_ctrl - omega * w)
    }

    /// U(z, ω) = [(ω+iγ)/(Ω²−ω(ω+iγ))]·V(z).
    pub fn effective_potential(&self, z: f64, omega: f64) -> Result<Complex64> {
        Ok(self.interaction_response(omega) * self.vdw_potential(z)?)
    }

    /// χ₀(ω) = [ω + G²ω/(Ω² − ω(ω+iγ))]/c.
    pub fn chi_eit(&self, omega: f64) -> Complex64 {
        let w = Complex64::new(omega, self.gamma);
        let g2 = self.coupling_g * self.coupling_g;
        (omega + g2 * omega / (self.omega_ctrl * self.omega_ctrl - omega * w)) / self.speed_c
    }

    /// χ_V(ω) = G²Ω²/{c(ω+iγ)[Ω² − ω(ω+iγ)]}. The blockaded medium responds with χ₀ − χ_V.
    pub fn chi_blockaded(&self, omega: f64) -> Complex64 {
        let w = Complex64::new(omega, self.gamma);
        let g2 = self.coupling_g * self.coupling_g;
        let o2 = self.omega_ctrl * self.omega_ctrl;
        g2 * o2 / (self.speed_c * w * (o2 - omega * w))
    }

    /// Amplitude transmission exp[iχ₀(ω)L] of the interaction-free medium.
    pub fn eit_transmission(&self, omega: f64) -> Complex64 {
        (I * self.chi_eit(omega) * self.length_l).exp()
    }
}

/// JSON `"medium"` block. Exactly one of the two forms must be given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_b: Option<f64>,
    #[serde(default, rename = "L_over_zb", skip_serializing_if = "Option::is_none")]
    pub l_over_zb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_over_gamma: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, rename = "G", skip_serializing_if = "Option::is_none")]
    pub coupling_g: Option<f64>,
    #[serde(default, rename = "C6", skip_serializing_if = "Option::is_none")]
    pub c6: Option<f64>,
    #[serde(default, rename = "L", skip_serializing_if = "Option::is_none")]
    pub length_l: Option<f64>,
    #[serde(default, rename = "c", skip_serializing_if = "Option::is_none")]
    pub speed_c: Option<f64>,
}

impl MediumConfig {
    pub fn dimensionless(d_b: f64, l_over_zb: f64) -> Self {
        Self {
            d_b: Some(d_b),
            l_over_zb: Some(l_over_zb),
            ..Default::default()
        }
    }

    /// Validate and normalize to canonical units. Also returns the physical
    /// parameters when the primary form was used.
    pub fn resolve(&self) -> Result<(MediumParams, Option<MediumParams>)> {
        let dimless = [self.d_b, self.l_over_zb, self.omega_over_gamma];
        let prim = [
            self.gamma,
            self.omega,
            self.coupling_g,
            self.c6,
            self.length_l,
            self.speed_c,
        ];
        let has_dimless = dimless.iter().any(Option::is_some);
        let has_prim = prim.iter().any(Option::is_some);
        match (has_dimless, has_prim) {
            (true, true) => Err(Error::Config(
                "medium: give either the dimensionless triple or the primary parameters, not both"
                    .into(),
            )),
            (false, false) => Err(Error::Config("medium: no parameters given".into())),
            (true, false) => {
                let d_b = self.d_b.ok_or_else(|| Error::Config("medium: missing d_b".into()))?;
                let l = self
                    .l_over_zb
                    .ok_or_else(|| Error::Config("medium: missing L_over_zb".into()))?;
                let p = MediumParams::from_dimensionless(d_b, l, self.omega_over_gamma.unwrap_or(1.0))?;
                Ok((p, None))
            }
            (false, true) => {
                let names = ["gamma", "omega", "G", "C6", "L", "c"];
                let mut vals = [0.0; 6];
                for (k, v) in prim.iter().enumerate() {
                    vals[k] = v.ok_or_else(|| Error::Config(format!("medium: missing {}", names[k])))?;
                }
                let phys = MediumParams::from_primaries(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5])?;
                Ok((phys.canonical(), Some(phys)))
            }
        }
    }
}

/// Quadrature grid over [0, L].
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SpatialGrid {
    /// Uniform grid including both end points with trapezoid weights.
    pub fn uniform(length: f64, points_per_zb: usize) -> Result<Self> {
        if !(length > 0.0) || points_per_zb == 0 {
            return Err(Error::Config("grid needs length > 0 and points_per_zb >= 1".into()));
        }
        let intervals = ((length * points_per_zb as f64).round() as usize).max(1);
        let h = length / intervals as f64;
        let points: Vec<f64> = (0..=intervals).map(|k| k as f64 * h).collect();
        let mut weights = vec![h; intervals + 1];
        weights[0] *= 0.5;
        weights[intervals] *= 0.5;
        Ok(Self { points, weights })
    }

    /// Composite Gauss–Legendre grid with panels no wider than `max_panel`.
    pub fn gauss_panels(length: f64, max_panel: f64, order: usize) -> Result<Self> {
        if !(length > 0.0) || !(max_panel > 0.0) || order == 0 {
            return Err(Error::Config("invalid panel grid".into()));
        }
        let panels = (length / max_panel).ceil().max(1.0) as usize;
        let h = length / panels as f64;
        let (x, w) = crate::quadrature::gauss_legendre(order);
        let mut points = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let a = p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                points.push(a + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn validate(&self, length: f64) -> Result<()> {
        if self.points.len() != self.weights.len() || self.points.is_empty() {
            return Err(Error::Usage("grid points/weights mismatch".into()));
        }
        if self.points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Usage("grid points must be strictly increasing".into()));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Usage("grid weights must be positive".into()));
        }
        if (self.length() - length).abs() > 1e-10 * length {
            return Err(Error::Usage(format!(
                "grid weights sum to {} instead of {length}",
                self.length()
            )));
        }
        Ok(())
    }

    /// Same points as another grid (within 1e-12).
    pub fn matches(&self, other: &SpatialGrid) -> bool {
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }
}
