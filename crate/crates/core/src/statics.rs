//! Post-buckling energy landscape over the mode basis.
//!
//! The beam energy is bending plus a uniform membrane stretch measured against
//! the residual compressive strain ε₀:
//!
//! ```text
//! U(a)    = (EI/2) aᵀB a + (EAL/2) ε_ax(a)²
//! ε_ax(a) = -ε₀ + aᵀS a / (2L)
//! ```
//!
//! Mode `i` buckles once ε₀ exceeds `ε_cr,i = (I/A) n_i²`, and a pure mode-`i`
//! state then sits at `a_i = sqrt(2L (ε₀ - ε_cr,i) / S_ii)`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{BeamSpec, CrossSection, MaterialSpec};
use crate::modes::{solve_eigenvalues, ModeBasis, DEFAULT_QUADRATURE};
use crate::solver::{damped_newton, NewtonOptions};

/// Default Newton tolerance, relative to the force scale `EI/L²`.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;

/// Stationary points closer than this (m) are merged.
const DEDUP_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct EnergyModel {
    beam: BeamSpec,
    material: MaterialSpec,
    basis: ModeBasis,
    residual_strain: f64,
    ei: f64,
    ea: f64,
    newton_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    StableMinimum,
    Saddle,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Modal amplitudes (m).
    pub amplitudes: Vec<f64>,
    /// Uniform axial strain, negative in compression.
    pub axial_strain: f64,
    /// Total elastic energy (J).
    pub energy: f64,
    pub stability: Stability,
    pub min_gap_left: f64,
    pub min_gap_right: f64,
    /// Norm of ∇U at `amplitudes` (N).
    pub residual: f64,
}

impl Equilibrium {
    pub fn is_stable(&self) -> bool {
        self.stability == Stability::StableMinimum
    }

    /// Mode-0 amplitude; its sign tells the side (positive = left).
    pub fn a0(&self) -> f64 {
        self.amplitudes[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableMode {
    /// Lowest buckled mode that fits in the gap, if any.
    pub mode: Option<usize>,
    /// Free buckling amplitude of every mode in the basis (m).
    pub amplitudes: Vec<f64>,
    pub gap: f64,
    /// Largest admissible amplitude, `gap - contact_margin` (m).
    pub limit: f64,
}

impl ObservableMode {
    pub fn no_admissible_mode(&self) -> bool {
        self.mode.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectRatioReport {
    pub aspect_ratio: f64,
    pub multimode_stable: bool,
    pub stable_states: usize,
}

/// Stress estimate from a measured midspan deflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressEstimate {
    /// Compressive residual stress (Pa).
    pub stress: f64,
    /// Set when the deflection is not smaller than the electrode gap, which
    /// the device geometry cannot produce.
    pub exceeds_gap: bool,
}

/// Critical buckling stress of mode `i`: `σ_cr,i = E (I/A) (u_i/L)²`.
///
/// For a rectangle and mode 0 this is `(π²/3) E (w/L)²`.
pub fn critical_stress(beam: &BeamSpec, material: &MaterialSpec, mode: usize) -> Result<f64> {
    let u = *solve_eigenvalues(mode + 1)?.last().expect("non-empty");
    Ok(material.youngs_modulus * beam.cross_section.gyration_sq() * (u / beam.length).powi(2))
}

/// Length at which mode `i` starts to buckle under `material.residual_stress`.
pub fn critical_length(cs: &CrossSection, material: &MaterialSpec, mode: usize) -> Result<f64> {
    if material.residual_stress <= 0.0 {
        return Err(invalid("residual_stress", "must be positive to buckle"));
    }
    let u = *solve_eigenvalues(mode + 1)?.last().expect("non-empty");
    Ok(u * (cs.gyration_sq() / material.residual_strain()).sqrt())
}

/// Residual stress that produces midspan deflection `d` in the first mode.
///
/// Inverts the mode-0 amplitude relation with `S₀₀ = π²/(2L)`:
/// `σ = E (ε_cr,0 + S₀₀ d² / (2L))`.
pub fn stress_from_deflection(beam: &BeamSpec, youngs_modulus: f64, d: f64) -> Result<StressEstimate> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(invalid("deflection", "must be positive"));
    }
    let l = beam.length;
    let eps_cr = beam.cross_section.gyration_sq() * (2.0 * std::f64::consts::PI / l).powi(2);
    let s00 = std::f64::consts::PI.powi(2) / (2.0 * l);
    Ok(StressEstimate {
        stress: youngs_modulus * (eps_cr + s00 * d * d / (2.0 * l)),
        exceeds_gap: d >= beam.gap,
    })
}

impl EnergyModel {
    pub fn new(beam: BeamSpec, material: MaterialSpec, mode_count: usize) -> Result<Self> {
        Self::with_quadrature(beam, material, mode_count, DEFAULT_QUADRATURE)
    }

    pub fn with_quadrature(
        beam: BeamSpec,
        material: MaterialSpec,
        mode_count: usize,
        intervals: usize,
    ) -> Result<Self> {
        beam.validate()?;
        let basis = ModeBasis::with_quadrature(beam.length, mode_count, intervals)?;
        Self::with_basis(beam, material, basis)
    }

    pub fn with_basis(beam: BeamSpec, material: MaterialSpec, basis: ModeBasis) -> Result<Self> {
        material.validate()?;
        if basis.length() != beam.length {
            return Err(invalid("basis", "basis length differs from beam length"));
        }
        let cs = beam.cross_section;
        Ok(Self {
            residual_strain: material.residual_strain(),
            ei: material.youngs_modulus * cs.second_moment_lateral(),
            ea: material.youngs_modulus * cs.area(),
            beam,
            material,
            basis,
            newton_tol: DEFAULT_NEWTON_TOL,
        })
    }

    pub fn with_newton_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }

    /// Same geometry and basis with a different residual stress.
    pub fn with_stress(&self, residual_stress: f64) -> Result<Self> {
        let material = self.material.with_stress(residual_stress);
        Ok(Self::with_basis(self.beam, material, self.basis.clone())?.with_newton_tol(self.newton_tol))
    }

    pub fn beam(&self) -> &BeamSpec {
        &self.beam
    }

    pub fn material(&self) -> &MaterialSpec {
        &self.material
    }

    pub fn basis(&self) -> &ModeBasis {
        &self.basis
    }

    pub fn mode_count(&self) -> usize {
        self.basis.count()
    }

    pub fn residual_strain(&self) -> f64 {
        self.residual_strain
    }

    pub fn bending_stiffness(&self) -> f64 {
        self.ei
    }

    pub fn axial_stiffness(&self) -> f64 {
        self.ea
    }

    /// Characteristic generalized force `EI/L²` (N).
    pub fn force_scale(&self) -> f64 {
        self.ei / self.beam.length.powi(2)
    }

    pub(crate) fn newton_options(&self) -> NewtonOptions {
        NewtonOptions::scaled(self.force_scale(), self.newton_tol)
    }

    pub fn axial_strain(&self, a: &[f64]) -> f64 {
        let a = DVector::from_column_slice(a);
        -self.residual_strain + a.dot(&(self.basis.gram_slope() * &a)) / (2.0 * self.beam.length)
    }

    pub fn elastic_energy(&self, a: &[f64]) -> f64 {
        let v = DVector::from_column_slice(a);
        let bending = 0.5 * self.ei * v.dot(&(self.basis.gram_curvature() * &v));
        let eps = self.axial_strain(a);
        bending + 0.5 * self.ea * self.beam.length * eps * eps
    }

    /// ∇U = EI·B a + EA·ε_ax·S a.
    pub fn gradient(&self, a: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(a);
        let sa = self.basis.gram_slope() * &v;
        let eps = -self.residual_strain + v.dot(&sa) / (2.0 * self.beam.length);
        self.basis.gram_curvature() * &v * self.ei + sa * (self.ea * eps)
    }

    /// H = EI·B + EA·(ε_ax·S + (S a)(S a)ᵀ / L).
    pub fn hessian(&self, a: &[f64]) -> DMatrix<f64> {
        let v = DVector::from_column_slice(a);
        let s = self.basis.gram_slope();
        let sa = s * &v;
        let l = self.beam.length;
        let eps = -self.residual_strain + v.dot(&sa) / (2.0 * l);
        self.basis.gram_curvature() * self.ei + (s * eps + &sa * sa.transpose() / l) * self.ea
    }

    /// Critical strain `(I/A) n_i²` from the basis wavenumbers.
    pub fn critical_strain(&self, mode: usize) -> f64 {
        self.beam.cross_section.gyration_sq() * self.basis.wavenumber(mode).powi(2)
    }

    pub fn critical_stress(&self, mode: usize) -> f64 {
        self.material.youngs_modulus * self.critical_strain(mode)
    }

    /// Free post-buckling amplitude of a pure mode-`i` state (m); zero at or
    /// below onset.
    pub fn buckling_amplitude(&self, mode: usize) -> f64 {
        let excess = self.residual_strain - self.critical_strain(mode);
        if excess <= 0.0 {
            return 0.0;
        }
        (2.0 * self.beam.length * excess / self.basis.gram_slope()[(mode, mode)]).sqrt()
    }

    pub fn is_buckled(&self) -> bool {
        self.residual_strain > self.critical_strain(0)
    }

    /// Energy barrier `U(0) - U(well)` between the straight state and the
    /// mode-0 well; zero before buckling.
    pub fn energy_barrier(&self) -> f64 {
        let mut a = vec![0.0; self.mode_count()];
        a[0] = self.buckling_amplitude(0);
        self.elastic_energy(&vec![0.0; self.mode_count()]) - self.elastic_energy(&a)
    }

    /// Height of the lowest saddle above the mode-0 well. Stationary points
    /// are pure modes, so once mode 1 buckles its saddle (at a0 = 0) sits
    /// below the straight state and is the cheaper way out.
    pub fn escape_barrier(&self) -> f64 {
        let n = self.mode_count();
        let mut well = vec![0.0; n];
        well[0] = self.buckling_amplitude(0);
        let u_well = self.elastic_energy(&well);
        let mut saddle = self.elastic_energy(&vec![0.0; n]);
        if n > 1 && self.buckling_amplitude(1) > 0.0 {
            let mut a = vec![0.0; n];
            a[1] = self.buckling_amplitude(1);
            saddle = saddle.min(self.elastic_energy(&a));
        }
        saddle - u_well
    }

    /// Minimum air gaps (left, right) over the full beam length.
    pub fn min_gaps(&self, a: &[f64]) -> (f64, f64) {
        let w = self.basis.deflection_samples(a);
        let max_w = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_w = w.iter().copied().fold(f64::INFINITY, f64::min);
        (self.beam.gap - max_w, self.beam.gap + min_w)
    }

    pub fn classify(&self, a: &[f64]) -> Stability {
        classify_matrix(self.hessian(a))
    }

    /// Build the equilibrium record for a stationary point.
    pub fn equilibrium_at(&self, a: &[f64]) -> Equilibrium {
        let (min_gap_left, min_gap_right) = self.min_gaps(a);
        Equilibrium {
            amplitudes: a.to_vec(),
            axial_strain: self.axial_strain(a),
            energy: self.elastic_energy(a),
            stability: self.classify(a),
            min_gap_left,
            min_gap_right,
            residual: self.gradient(a).norm(),
        }
    }

    /// Newton solve of ∇U = 0 from `seed`.
    pub fn solve_equilibrium(&self, seed: &[f64]) -> Result<Equilibrium> {
        let sol = damped_newton(DVector::from_column_slice(seed), self.newton_options(), |v| {
            Some((self.gradient(v.as_slice()), self.hessian(v.as_slice())))
        })?;
        Ok(self.equilibrium_at(sol.x.as_slice()))
    }

    fn seeds(&self) -> Vec<Vec<f64>> {
        let n = self.mode_count();
        let amps: Vec<f64> = (0..n).map(|i| self.buckling_amplitude(i)).collect();
        let mut seeds = vec![vec![0.0; n]];
        for (i, &ai) in amps.iter().enumerate() {
            if ai > 0.0 {
                for sign in [1.0, -1.0] {
                    let mut s = vec![0.0; n];
                    s[i] = sign * ai;
                    seeds.push(s);
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if amps[i] <= 0.0 || amps[j] <= 0.0 {
                    continue;
                }
                for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut s = vec![0.0; n];
                    s[i] = 0.5 * si * amps[i];
                    s[j] = 0.5 * sj * amps[j];
                    seeds.push(s);
                }
            }
        }
        seeds
    }

    /// All stationary points reachable from the standard seed set, sorted by
    /// energy then amplitudes. The straight state is always included.
    pub fn find_equilibria(&self) -> Vec<Equilibrium> {
        let mut found: Vec<Equilibrium> = vec![self.equilibrium_at(&vec![0.0; self.mode_count()])];
        for seed in self.seeds() {
            // Non-converging seeds are skipped.
            let Ok(eq) = self.solve_equilibrium(&seed) else {
                continue;
            };
            let duplicate = found.iter().any(|f| {
                f.amplitudes
                    .iter()
                    .zip(&eq.amplitudes)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    < DEDUP_DISTANCE
            });
            if !duplicate {
                found.push(eq);
            }
        }
        found.sort_by(|x, y| {
            x.energy
                .total_cmp(&y.energy)
                .then_with(|| lex_cmp(&x.amplitudes, &y.amplitudes))
        });
        found
    }

    /// Stable wells, sorted by mode-0 amplitude (right well first).
    pub fn stable_wells(&self) -> Vec<Equilibrium> {
        let mut wells: Vec<Equilibrium> = self
            .find_equilibria()
            .into_iter()
            .filter(Equilibrium::is_stable)
            .collect();
        wells.sort_by(|x, y| x.a0().total_cmp(&y.a0()));
        wells
    }

    /// Lowest buckled mode whose free amplitude fits inside the electrode gap.
    pub fn observable_mode_under_gap(&self) -> Result<ObservableMode> {
        if !self.is_buckled() {
            return Err(invalid("residual_stress", "beam is not buckled"));
        }
        let amplitudes: Vec<f64> = (0..self.mode_count()).map(|i| self.buckling_amplitude(i)).collect();
        let limit = self.beam.gap - self.beam.contact_margin;
        let mode = amplitudes.iter().position(|&a| a > 0.0 && a < limit);
        Ok(ObservableMode {
            mode,
            amplitudes,
            gap: self.beam.gap,
            limit,
        })
    }

    /// Aspect ratio `L / mean width` and whether any stable state mixes modes.
    pub fn aspect_ratio_report(&self) -> Result<AspectRatioReport> {
        let aspect_ratio = self.beam.length / self.beam.cross_section.mean_width();
        let owned;
        let model = if self.mode_count() >= 4 {
            self
        } else {
            owned = EnergyModel::with_quadrature(
                self.beam,
                self.material,
                4,
                self.basis.quadrature().intervals(),
            )?;
            &owned
        };
        let stable: Vec<Equilibrium> = model
            .find_equilibria()
            .into_iter()
            .filter(Equilibrium::is_stable)
            .collect();
        let multimode_stable = stable.iter().any(|eq| {
            let peak = eq.amplitudes.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            peak > 0.0 && eq.amplitudes.iter().filter(|a| a.abs() > 0.01 * peak).count() >= 2
        });
        Ok(AspectRatioReport {
            aspect_ratio,
            multimode_stable,
            stable_states: stable.len(),
        })
    }
}

pub(crate) fn classify_matrix(h: DMatrix<f64>) -> Stability {
    let eig = SymmetricEigen::new(h).eigenvalues;
    let largest = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-6 * largest;
    if eig.iter().all(|&v| v > tol) {
        Stability::StableMinimum
    } else if eig.iter().any(|&v| v < -tol) {
        Stability::Saddle
    } else {
        Stability::Degenerate
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

pub(crate) fn require_buckled(model: &EnergyModel) -> Result<()> {
    if model.is_buckled() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "residual_stress",
            reason: "beam is below its buckling onset".into(),
        })
    }
}
