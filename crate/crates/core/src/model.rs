//! Geometry and material data for one nanowire cell.
//!
//! All quantities are SI. The beam bends in-plane, so the bending dimension is
//! the lateral width and the out-of-plane height is the plate depth seen by the
//! side electrodes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.8541878128e-12;

/// Residual strains above this are rejected as unphysical for thin oxide films.
pub const MAX_RESIDUAL_STRAIN: f64 = 0.05;

/// Minimum length / width ratio for Euler-Bernoulli validity.
pub const DEFAULT_MIN_SLENDERNESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    /// Young's modulus (Pa).
    pub youngs_modulus: f64,
    /// Mass density (kg/m³). Only the dynamics use it.
    pub density: f64,
    /// Magnitude of the compressive residual stress (Pa).
    pub residual_stress: f64,
    /// Vacuum permittivity (F/m).
    pub permittivity_vacuum: f64,
}

impl MaterialSpec {
    /// Thermal oxide: 69 GPa, 2200 kg/m³, 270 MPa compressive.
    pub const fn thermal_oxide() -> Self {
        Self {
            youngs_modulus: 69e9,
            density: 2200.0,
            residual_stress: 270e6,
            permittivity_vacuum: EPSILON_0,
        }
    }

    pub fn with_stress(mut self, residual_stress: f64) -> Self {
        self.residual_stress = residual_stress;
        self
    }

    /// Dimensionless residual strain σ/E.
    pub fn residual_strain(&self) -> f64 {
        self.residual_stress / self.youngs_modulus
    }

    pub fn validate(&self) -> Result<()> {
        positive("youngs_modulus", self.youngs_modulus)?;
        positive("density", self.density)?;
        positive("permittivity_vacuum", self.permittivity_vacuum)?;
        if !(self.residual_stress >= 0.0) || !self.residual_stress.is_finite() {
            return Err(invalid("residual_stress", "must be finite and non-negative"));
        }
        let strain = self.residual_strain();
        if strain >= MAX_RESIDUAL_STRAIN {
            return Err(invalid(
                "residual_stress",
                format!("residual strain {strain:.4} exceeds {MAX_RESIDUAL_STRAIN}"),
            ));
        }
        Ok(())
    }
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self::thermal_oxide()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Rectangular,
    Trapezoidal,
}

/// Beam cross-section. The width varies linearly from `width_bottom` at the
/// substrate side to `width_top` over the `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub kind: SectionKind,
    pub width_top: f64,
    pub width_bottom: f64,
    pub height: f64,
}

impl CrossSection {
    pub fn rectangular(width: f64, height: f64) -> Result<Self> {
        let cs = Self {
            kind: SectionKind::Rectangular,
            width_top: width,
            width_bottom: width,
            height,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn trapezoidal(width_top: f64, width_bottom: f64, height: f64) -> Result<Self> {
        let cs = Self {
            kind: SectionKind::Trapezoidal,
            width_top,
            width_bottom,
            height,
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<()> {
        positive("width_top", self.width_top)?;
        positive("width_bottom", self.width_bottom)?;
        positive("height", self.height)?;
        if self.kind == SectionKind::Rectangular && self.width_top != self.width_bottom {
            return Err(invalid(
                "width_bottom",
                "rectangular section needs width_bottom == width_top",
            ));
        }
        Ok(())
    }

    /// Cross-section area (m²).
    pub fn area(&self) -> f64 {
        self.height * (self.width_top + self.width_bottom) / 2.0
    }

    /// Second moment of area for in-plane bending about the vertical axis (m⁴).
    ///
    /// Each horizontal slice of width `w(y)` contributes `w³/12 dy`; with `w`
    /// linear in `y` the integral is `t (wb⁴ - wt⁴) / (48 (wb - wt))`.
    pub fn second_moment_lateral(&self) -> f64 {
        let (wt, wb, t) = (self.width_top, self.width_bottom, self.height);
        // (wb⁴ - wt⁴)/(wb - wt) factored, so wb == wt needs no special case.
        t * (wb * wb + wt * wt) * (wb + wt) / 48.0
    }

    /// Mean width `A / t`, used for aspect ratios.
    pub fn mean_width(&self) -> f64 {
        0.5 * (self.width_top + self.width_bottom)
    }

    pub fn max_width(&self) -> f64 {
        self.width_top.max(self.width_bottom)
    }

    /// Squared radius of gyration `I / A` (m²).
    pub fn gyration_sq(&self) -> f64 {
        self.second_moment_lateral() / self.area()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectrodeLayout {
    /// One full-length electrode on each side.
    TwoFullLength,
    /// Two half-length electrodes on each side.
    FourHalfLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    /// Clamped length L (m).
    pub length: f64,
    pub cross_section: CrossSection,
    /// Rest distance from the straight beam axis to each electrode face (m).
    pub gap: f64,
    pub electrode_layout: ElectrodeLayout,
    /// Air gap at or below which the beam counts as touching (m).
    pub contact_margin: f64,
    /// Fraction of the sidewall that acts as a capacitor plate, in (0, 1].
    pub coverage_efficiency: f64,
}

impl BeamSpec {
    /// Defaults: 100 nm × 430 nm rectangle, 1 µm gap, two electrodes,
    /// 10 nm contact margin.
    pub fn with_length(length: f64) -> Self {
        Self {
            length,
            cross_section: CrossSection {
                kind: SectionKind::Rectangular,
                width_top: 100e-9,
                width_bottom: 100e-9,
                height: 430e-9,
            },
            gap: 1e-6,
            electrode_layout: ElectrodeLayout::TwoFullLength,
            contact_margin: 10e-9,
            coverage_efficiency: 1.0,
        }
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    pub fn with_cross_section(mut self, cs: CrossSection) -> Self {
        self.cross_section = cs;
        self
    }

    pub fn with_layout(mut self, layout: ElectrodeLayout) -> Self {
        self.electrode_layout = layout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(DEFAULT_MIN_SLENDERNESS)
    }

    pub fn validate_with(&self, min_slenderness: f64) -> Result<()> {
        positive("length", self.length)?;
        self.cross_section.validate()?;
        positive("gap", self.gap)?;
        positive("contact_margin", self.contact_margin)?;
        if self.contact_margin >= self.gap {
            return Err(invalid("contact_margin", "must be smaller than gap"));
        }
        if !(self.coverage_efficiency > 0.0 && self.coverage_efficiency <= 1.0) {
            return Err(invalid("coverage_efficiency", "must lie in (0, 1]"));
        }
        let ratio = self.length / self.cross_section.max_width();
        if ratio < min_slenderness {
            return Err(invalid(
                "length",
                format!("length/width = {ratio:.2} below slenderness bound {min_slenderness}"),
            ));
        }
        Ok(())
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}
