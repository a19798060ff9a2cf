//! Side electrodes: capacitance, electrostatic modal forces, quasi-static
//! snap continuation and the differential capacitive read.
//!
//! Each electrode is treated as a parallel plate of depth `η·t` facing the
//! beam sidewall, with local gap `g - s·w(x)` where `s = +1` for the left
//! side (positive deflection moves left) and `s = -1` for the right.
//! Fringing is ignored.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, ActuationWaveform, CellState, DynamicsParams, IntegrationOutcome};
use crate::error::{invalid, Error, Result};
use crate::model::ElectrodeLayout;
use crate::solver::damped_newton;
use crate::statics::{classify_matrix, EnergyModel, Equilibrium, Stability};

/// Default upper voltage for the snap continuation (V).
pub const DEFAULT_V_MAX: f64 = 500.0;

/// Bisection resolution of the snap voltage (V).
pub const SNAP_RESOLUTION: f64 = 0.1;

/// Held-voltage release is run in chunks of this many well periods.
const CHUNK_PERIODS: f64 = 5.0;
const RELEASE_CHUNKS: usize = 80;
/// Residual loaded energy, relative to the barrier, that counts as captured.
const CAPTURE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for left, -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub label: String,
    pub side: Side,
    /// Span along the beam `[x_start, x_end]` (m).
    pub span: (f64, f64),
    /// Quadrature node range `[first, last]` covering the span.
    #[serde(skip)]
    nodes: (usize, usize),
}

impl Electrode {
    pub fn nodes(&self) -> (usize, usize) {
        self.nodes
    }

    /// Same span on the other side of the beam.
    pub fn mirrored_label(&self) -> String {
        match self.side {
            Side::Left => self.label.replacen("left", "right", 1),
            Side::Right => self.label.replacen("right", "left", 1),
        }
    }
}

/// Electrodes for the model's layout. Labels are `left`/`right` for the
/// two-electrode layout and `left_start`, `left_end`, `right_start`,
/// `right_end` for the half-length layout (`start` covers `[0, L/2]`).
pub fn electrodes(model: &EnergyModel) -> Vec<Electrode> {
    let l = model.beam().length;
    let q = model.basis().quadrature().intervals();
    let full = |label: &str, side| Electrode {
        label: label.to_string(),
        side,
        span: (0.0, l),
        nodes: (0, q),
    };
    match model.beam().electrode_layout {
        ElectrodeLayout::TwoFullLength => vec![full("left", Side::Left), full("right", Side::Right)],
        ElectrodeLayout::FourHalfLength => {
            let half = |label: &str, side, first: bool| Electrode {
                label: label.to_string(),
                side,
                span: if first { (0.0, 0.5 * l) } else { (0.5 * l, l) },
                nodes: if first { (0, q / 2) } else { (q / 2, q) },
            };
            vec![
                half("left_start", Side::Left, true),
                half("left_end", Side::Left, false),
                half("right_start", Side::Right, true),
                half("right_end", Side::Right, false),
            ]
        }
    }
}

pub fn electrode(model: &EnergyModel, label: &str) -> Result<Electrode> {
    electrodes(model)
        .into_iter()
        .find(|e| e.label == label)
        .ok_or_else(|| Error::UnknownElectrode(label.to_string()))
}

/// First electrode on `side` (the one used for writes).
pub fn primary_electrode(model: &EnergyModel, side: Side) -> Electrode {
    electrodes(model)
        .into_iter()
        .find(|e| e.side == side)
        .expect("every layout has electrodes on both sides")
}

/// One driven electrode; the others float and exert no force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCondition {
    pub electrode: String,
    pub voltage: f64,
}

impl DriveCondition {
    pub fn new(electrode: impl Into<String>, voltage: f64) -> Result<Self> {
        if !(voltage >= 0.0 && voltage.is_finite()) {
            return Err(invalid("voltage", "must be finite and non-negative"));
        }
        Ok(Self {
            electrode: electrode.into(),
            voltage,
        })
    }
}

/// Gap samples along an electrode, failing on contact.
fn gaps(model: &EnergyModel, w: &[f64], e: &Electrode) -> Result<Vec<f64>> {
    let beam = model.beam();
    let s = e.side.sign();
    let nodes = model.basis().quadrature().nodes();
    let (first, last) = e.nodes;
    (first..=last)
        .map(|k| {
            let gap = beam.gap - s * w[k];
            if gap <= beam.contact_margin {
                Err(Error::Contact { gap, x: nodes[k] })
            } else {
                Ok(gap)
            }
        })
        .collect()
}

/// Plate prefactor `η ε₀ t` (F/m per unit of 1/gap·length).
fn plate_factor(model: &EnergyModel) -> f64 {
    let beam = model.beam();
    beam.coverage_efficiency * model.material().permittivity_vacuum * beam.cross_section.height
}

/// C = η ε₀ t ∫_span dx / (g - s w(x)).
pub fn capacitance(model: &EnergyModel, a: &[f64], e: &Electrode) -> Result<f64> {
    let w = model.basis().deflection_samples(a);
    capacitance_from_deflection(model, &w, e)
}

fn capacitance_from_deflection(model: &EnergyModel, w: &[f64], e: &Electrode) -> Result<f64> {
    let g = gaps(model, w, e)?;
    let weights = model.basis().quadrature().sub_weights(e.nodes.0, e.nodes.1);
    Ok(plate_factor(model) * g.iter().zip(&weights).map(|(g, w)| w / g).sum::<f64>())
}

/// Generalized force `F_i = (V²/2) ∂C/∂a_i` and its Jacobian `∂F_i/∂a_j`.
pub fn force_and_jacobian(
    model: &EnergyModel,
    a: &[f64],
    drive: &DriveCondition,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = model.mode_count();
    let e = electrode(model, &drive.electrode)?;
    let w = model.basis().deflection_samples(a);
    let g = gaps(model, &w, &e)?;
    let mut f = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, n);
    if drive.voltage == 0.0 {
        return Ok((f, jac));
    }
    let s = e.side.sign();
    let weights = model.basis().quadrature().sub_weights(e.nodes.0, e.nodes.1);
    let shapes = model.basis().sampled_shapes();
    let pre = 0.5 * drive.voltage * drive.voltage * plate_factor(model);
    for (j, (gap, wt)) in g.iter().zip(&weights).enumerate() {
        let k = e.nodes.0 + j;
        let inv2 = wt / (gap * gap);
        let inv3 = 2.0 * inv2 / gap;
        for i in 0..n {
            let phi_i = shapes[i][k];
            f[i] += s * phi_i * inv2;
            for jj in 0..=i {
                jac[(i, jj)] += phi_i * shapes[jj][k] * inv3;
            }
        }
    }
    for i in 0..n {
        for jj in 0..i {
            jac[(jj, i)] = jac[(i, jj)];
        }
    }
    Ok((f * pre, jac * pre))
}

pub fn generalized_force(model: &EnergyModel, a: &[f64], drive: &DriveCondition) -> Result<DVector<f64>> {
    Ok(force_and_jacobian(model, a, drive)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bit {
    Zero,
    One,
    Indeterminate,
}

impl Bit {
    /// Side the beam rests on for this bit (1 = left).
    pub fn side(self) -> Option<Side> {
        match self {
            Bit::One => Some(Side::Left),
            Bit::Zero => Some(Side::Right),
            Bit::Indeterminate => None,
        }
    }

    pub fn from_digit(d: u8) -> Option<Bit> {
        match d {
            0 => Some(Bit::Zero),
            1 => Some(Bit::One),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bit::Zero => "0",
            Bit::One => "1",
            Bit::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadMargin {
    pub c_left: f64,
    pub c_right: f64,
    /// |c_left - c_right| (F).
    pub delta: f64,
    pub bit: Bit,
}

/// Compare total left and right capacitance. Left-buckled reads as 1.
pub fn read_margin(model: &EnergyModel, a: &[f64]) -> Result<ReadMargin> {
    let w = model.basis().deflection_samples(a);
    let (mut c_left, mut c_right) = (0.0, 0.0);
    for e in electrodes(model) {
        let c = capacitance_from_deflection(model, &w, &e)?;
        match e.side {
            Side::Left => c_left += c,
            Side::Right => c_right += c,
        }
    }
    let delta = (c_left - c_right).abs();
    let bit = if delta < 1e-4 * (c_left + c_right) {
        Bit::Indeterminate
    } else if c_left > c_right {
        Bit::One
    } else {
        Bit::Zero
    };
    Ok(ReadMargin {
        c_left,
        c_right,
        delta,
        bit,
    })
}

/// Newton solve of `∇U(a) = F(a, V)` from `seed`, returning the state and the
/// stability of the effective stiffness `H - ∂F/∂a`.
pub fn loaded_equilibrium(
    model: &EnergyModel,
    drive: &DriveCondition,
    seed: &[f64],
) -> Result<(Vec<f64>, Stability, DMatrix<f64>)> {
    let sol = damped_newton(DVector::from_column_slice(seed), model.newton_options(), |v| {
        let a = v.as_slice();
        let (f, jf) = force_and_jacobian(model, a, drive).ok()?;
        Some((model.gradient(a) - f, model.hessian(a) - jf))
    })?;
    let a = sol.x.as_slice().to_vec();
    let (_, jf) = force_and_jacobian(model, &a, drive)?;
    let k = model.hessian(&a) - jf;
    Ok((a, classify_matrix(k.clone()), k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapOutcome {
    SnapsToOppositeWell,
    PullsInToContact,
    /// Dynamics ended on the starting side.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapResult {
    /// Smallest voltage at which the tracked branch is lost (V).
    pub v_snap: f64,
    /// Largest voltage with a stable tracked state (V).
    pub v_stable: f64,
    pub outcome: SnapOutcome,
    /// Tracked state just below `v_snap`.
    pub last_stable: Vec<f64>,
    pub electrode: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapOptions {
    pub v_max: f64,
    pub v_step: f64,
    pub resolution: f64,
    /// Simulate the release to classify the outcome.
    pub classify_outcome: bool,
}

impl Default for SnapOptions {
    fn default() -> Self {
        Self {
            v_max: DEFAULT_V_MAX,
            v_step: 5.0,
            resolution: SNAP_RESOLUTION,
            classify_outcome: true,
        }
    }
}

/// Tracked state at voltage `v`, or `None` once the branch is lost.
fn track(model: &EnergyModel, label: &str, v: f64, seed: &[f64], side0: f64) -> Option<Vec<f64>> {
    let drive = DriveCondition {
        electrode: label.to_string(),
        voltage: v,
    };
    match loaded_equilibrium(model, &drive, seed) {
        Ok((a, Stability::StableMinimum, _)) if a[0].signum() == side0 => Some(a),
        _ => None,
    }
}

/// Quasi-static DC ramp on `label` starting from the stable well `start`.
pub fn snap_voltage(
    model: &EnergyModel,
    label: &str,
    start: &Equilibrium,
    opts: &SnapOptions,
    params: &DynamicsParams,
) -> Result<SnapResult> {
    let e = electrode(model, label)?;
    if !start.is_stable() {
        return Err(Error::NotStable);
    }
    let side0 = start.a0().signum();
    if side0 == e.side.sign() {
        return Err(invalid(
            "electrode",
            "start well must be on the side away from the driven electrode",
        ));
    }
    // The driven side must be clear at the start.
    gaps(model, &model.basis().deflection_samples(&start.amplitudes), &e)?;

    let mut lo = 0.0;
    let mut a_lo = start.amplitudes.clone();
    let mut hi = None;
    while lo < opts.v_max {
        let v = (lo + opts.v_step).min(opts.v_max);
        match track(model, label, v, &a_lo, side0) {
            Some(a) => {
                lo = v;
                a_lo = a;
            }
            None => {
                hi = Some(v);
                break;
            }
        }
    }
    let mut hi = hi.ok_or(Error::NoSnap { v_max: opts.v_max })?;
    while hi - lo > opts.resolution {
        let mid = 0.5 * (lo + hi);
        match track(model, label, mid, &a_lo, side0) {
            Some(a) => {
                lo = mid;
                a_lo = a;
            }
            None => hi = mid,
        }
    }

    let outcome = if opts.classify_outcome {
        classify_release(model, &e, hi, &a_lo, start, params)?
    } else {
        SnapOutcome::Undetermined
    };
    Ok(SnapResult {
        v_snap: hi,
        v_stable: lo,
        outcome,
        last_stable: a_lo,
        electrode: label.to_string(),
    })
}

/// Release the last stable state with `v` held and watch where it goes.
fn classify_release(
    model: &EnergyModel,
    e: &Electrode,
    v: f64,
    a_lo: &[f64],
    start: &Equilibrium,
    params: &DynamicsParams,
) -> Result<SnapOutcome> {
    let beam = model.beam();
    let limit = beam.gap - beam.contact_margin;
    // A free well that already reaches an electrode cannot be occupied
    // without touching it.
    let (gl, gr) = (start.min_gap_left, start.min_gap_right);
    if gl <= beam.contact_margin || gr <= beam.contact_margin || model.buckling_amplitude(0) >= limit {
        return Ok(SnapOutcome::PullsInToContact);
    }
    let drive = DriveCondition {
        electrode: e.label.clone(),
        voltage: v,
    };
    // Kick along the softest direction of the effective stiffness so a
    // symmetric pitchfork is not held by exact symmetry.
    let mut a = a_lo.to_vec();
    if let Ok((_, jf)) = force_and_jacobian(model, &a, &drive) {
        let k = model.hessian(&a) - jf;
        let eig = SymmetricEigen::new(k);
        let idx = eig.eigenvalues.imin();
        let mut dir = eig.eigenvectors.column(idx).into_owned();
        if dir.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m }) < 0.0 {
            dir = -dir;
        }
        for (ai, di) in a.iter_mut().zip(dir.iter()) {
            *ai += 1e-3 * beam.gap * di;
        }
    }
    let mut cell = CellState::at_rest(model, a)?;
    let wave = ActuationWaveform::dc_step(&e.label, v);
    let period = dynamics::well_period(model)?;
    let mass = dynamics::mass_matrix(model);
    let settled = CAPTURE_FRACTION * model.energy_barrier();
    let opts = dynamics::RunOptions {
        record_states: false,
        ..Default::default()
    };
    let side0 = start.a0().signum();
    for _ in 0..RELEASE_CHUNKS {
        let run = dynamics::integrate_with(model, params, &cell, &wave, CHUNK_PERIODS * period, &opts)?;
        if let IntegrationOutcome::Contact { .. } = run.outcome {
            return Ok(SnapOutcome::PullsInToContact);
        }
        cell = run.final_state;
        let a = &cell.amplitudes;
        if a[0].signum() == side0 {
            continue;
        }
        // Captured once the loaded energy sits just above a stable loaded
        // state on the far side.
        if let Ok((eq, Stability::StableMinimum, _)) = loaded_equilibrium(model, &drive, a) {
            if eq[0].signum() != side0 {
                let excess = cell.kinetic_energy(&mass) + loaded_energy(model, a, &e, v)?
                    - loaded_energy(model, &eq, &e, v)?;
                if excess < settled {
                    return Ok(SnapOutcome::SnapsToOppositeWell);
                }
            }
        }
    }
    Ok(if cell.amplitudes[0].signum() != side0 {
        SnapOutcome::SnapsToOppositeWell
    } else {
        SnapOutcome::Undetermined
    })
}

/// U(a) - (V²/2) C(a): the potential whose minima are the loaded equilibria.
fn loaded_energy(model: &EnergyModel, a: &[f64], e: &Electrode, v: f64) -> Result<f64> {
    Ok(model.elastic_energy(a) - 0.5 * v * v * capacitance(model, a, e)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeamSpec, MaterialSpec};
    use approx::assert_relative_eq;

    fn model(length: f64, modes: usize) -> EnergyModel {
        EnergyModel::new(BeamSpec::with_length(length), MaterialSpec::thermal_oxide(), modes).unwrap()
    }

    /// Midpoint rule of ∫ dx / (g - s w(x)) straight from the mode shapes.
    fn capacitance_oracle(m: &EnergyModel, a: &[f64], side: Side, panels: usize) -> f64 {
        let l = m.beam().length;
        let h = l / panels as f64;
        let s = side.sign();
        let sum: f64 = (0..panels)
            .map(|k| {
                let x = (k as f64 + 0.5) * h;
                let w: f64 = a
                    .iter()
                    .enumerate()
                    .map(|(i, ai)| ai * m.basis().mode_shape(i, x).unwrap())
                    .sum();
                h / (m.beam().gap - s * w)
            })
            .sum();
        plate_factor(m) * sum
    }

    #[test]
    fn straight_beam_capacitance() {
        let m = model(12e-6, 2);
        let left = electrode(&m, "left").unwrap();
        let right = electrode(&m, "right").unwrap();
        let c = capacitance(&m, &[0.0, 0.0], &left).unwrap();
        let want = crate::model::EPSILON_0 * 430e-9 * 12e-6 / 1e-6;
        assert_relative_eq!(c, want, max_relative = 1e-12);
        assert_eq!(c, capacitance(&m, &[0.0, 0.0], &right).unwrap());
    }

    #[test]
    fn buckled_capacitance_matches_fine_quadrature() {
        let m = model(12e-6, 2);
        let a = [m.buckling_amplitude(0), 0.0];
        let near = capacitance(&m, &a, &electrode(&m, "left").unwrap()).unwrap();
        let far = capacitance(&m, &a, &electrode(&m, "right").unwrap()).unwrap();
        assert!(near > far);
        let near_o = capacitance_oracle(&m, &a, Side::Left, 100_000);
        let far_o = capacitance_oracle(&m, &a, Side::Right, 100_000);
        assert_relative_eq!(near, near_o, max_relative = 1e-9);
        assert_relative_eq!(far, far_o, max_relative = 1e-9);
        assert_relative_eq!(near - far, near_o - far_o, max_relative = 1e-7);
    }

    #[test]
    fn contact_is_an_error() {
        let m = model(12e-6, 1);
        let e = electrode(&m, "left").unwrap();
        assert!(matches!(capacitance(&m, &[0.995e-6], &e), Err(Error::Contact { .. })));
    }

    #[test]
    fn zero_voltage_zero_force() {
        let m = model(12e-6, 3);
        let d = DriveCondition::new("left", 0.0).unwrap();
        let f = generalized_force(&m, &[1e-7, 0.0, 0.0], &d).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
        assert!(DriveCondition::new("left", -1.0).is_err());
    }

    #[test]
    fn attraction_sign() {
        let m = model(12e-6, 2);
        let f = generalized_force(&m, &[0.0, 0.0], &DriveCondition::new("left", 50.0).unwrap()).unwrap();
        assert!(f[0] > 0.0);
        let f = generalized_force(&m, &[0.0, 0.0], &DriveCondition::new("right", 50.0).unwrap()).unwrap();
        assert!(f[0] < 0.0);
    }

    #[test]
    fn force_is_capacitance_gradient() {
        let m = model(12e-6, 4);
        let v = 80.0;
        let d = DriveCondition::new("left", v).unwrap();
        let e = electrode(&m, "left").unwrap();
        let a = [-2e-7, 5e-8, -3e-8, 1e-8];
        let f = generalized_force(&m, &a, &d).unwrap();
        let delta = 1e-12;
        for i in 0..4 {
            let mut p = a;
            let mut q = a;
            p[i] += delta;
            q[i] -= delta;
            let fd = 0.5 * v * v * (capacitance(&m, &p, &e).unwrap() - capacitance(&m, &q, &e).unwrap())
                / (2.0 * delta);
            assert_relative_eq!(f[i], fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn read_symmetry() {
        let m = model(12e-6, 2);
        let r0 = read_margin(&m, &[0.0, 0.0]).unwrap();
        assert_eq!(r0.bit, Bit::Indeterminate);
        let d = m.buckling_amplitude(0);
        let left = read_margin(&m, &[d, 0.0]).unwrap();
        let right = read_margin(&m, &[-d, 0.0]).unwrap();
        assert_eq!(left.bit, Bit::One);
        assert_eq!(right.bit, Bit::Zero);
        assert_eq!(left.delta, right.delta);
        assert_eq!(left.c_left, right.c_right);
        assert_eq!(left.c_right, right.c_left);
    }

    #[test]
    fn antisymmetric_state_cancels_on_full_electrodes() {
        let m = model(30e-6, 2);
        let a = [0.0, m.buckling_amplitude(1)];
        let r = read_margin(&m, &a).unwrap();
        assert!(r.delta < 1e-6 * (r.c_left + r.c_right));
        assert_eq!(r.bit, Bit::Indeterminate);

        let split = EnergyModel::new(
            BeamSpec::with_length(30e-6).with_layout(ElectrodeLayout::FourHalfLength),
            MaterialSpec::thermal_oxide(),
            2,
        )
        .unwrap();
        let ls = capacitance(&split, &a, &electrode(&split, "left_start").unwrap()).unwrap();
        let le = capacitance(&split, &a, &electrode(&split, "left_end").unwrap()).unwrap();
        assert!((ls - le).abs() > 1e-3 * ls);
    }

    #[test]
    fn capacitance_grows_toward_electrode() {
        let m = model(12e-6, 1);
        let e = electrode(&m, "left").unwrap();
        let cs: Vec<f64> = (0..20)
            .map(|k| capacitance(&m, &[-0.5e-6 + k as f64 * 0.07e-6], &e).unwrap())
            .collect();
        assert!(cs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn unknown_electrode() {
        let m = model(12e-6, 1);
        assert!(matches!(electrode(&m, "upper_left"), Err(Error::UnknownElectrode(_))));
    }
}
