//! Memory-cell protocol: write, read, wait, and scripted sequences.
//!
//! Bit 1 is the left-buckled well, bit 0 the right. A write drives the first
//! electrode on the target side with a DC pulse, then lets the beam ring
//! down with all electrodes at zero before reading it back.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    self, integrate_until_rest, ActuationWaveform, CellState, DynamicsParams,
    IntegrationOutcome,
};
use crate::error::{invalid, Result};
use crate::estatics::{primary_electrode, read_margin, snap_voltage, Bit, Side, SnapOptions};
use crate::statics::EnergyModel;

/// Ring-down allowance after a pulse, in slowest well periods.
const SETTLE_PERIODS: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteOutcome {
    Written,
    AlreadySet,
    FailedNoSnap,
    FailedContact,
}

/// Read the stored bit. Does not touch the state.
pub fn read_bit(cell: &CellState, model: &EnergyModel) -> Result<Bit> {
    Ok(read_margin(model, &cell.amplitudes)?.bit)
}

/// Snap voltage for writing out of the well opposite `bit` (V). By mirror
/// symmetry it is the same for both bits on symmetric layouts.
pub fn write_threshold(model: &EnergyModel, params: &DynamicsParams, opts: &SnapOptions) -> Result<f64> {
    let start = CellState::at_well(model, Bit::Zero)?;
    let eq = model.equilibrium_at(&start.amplitudes);
    let e = primary_electrode(model, Side::Left);
    let opts = SnapOptions {
        classify_outcome: false,
        ..*opts
    };
    Ok(snap_voltage(model, &e.label, &eq, &opts, params)?.v_snap)
}

/// Default write pulse length: ten time constants of the slowest well mode.
pub fn default_pulse_duration(model: &EnergyModel) -> Result<f64> {
    Ok(10.0 * dynamics::well_period(model)? / (2.0 * std::f64::consts::PI))
}

/// Write `bit` with a DC pulse of `voltage` for `duration` seconds.
pub fn write_bit(
    cell: &CellState,
    model: &EnergyModel,
    params: &DynamicsParams,
    bit: Bit,
    voltage: f64,
    duration: f64,
) -> Result<(CellState, WriteOutcome)> {
    let side = bit
        .side()
        .ok_or_else(|| invalid("bit", "can only write 0 or 1"))?;
    if !(voltage >= 0.0) {
        return Err(invalid("voltage", "must be non-negative"));
    }
    if read_bit(cell, model)? == bit {
        return Ok((cell.clone(), WriteOutcome::AlreadySet));
    }
    if voltage == 0.0 {
        return Ok((cell.clone(), WriteOutcome::FailedNoSnap));
    }
    let electrode = primary_electrode(model, side);
    let start = perturbed(model, cell, params.imperfection, side.sign());
    let wave = ActuationWaveform::dc_pulse(&electrode.label, voltage, duration);
    let horizon = duration + SETTLE_PERIODS * dynamics::well_period(model)?;
    let run = integrate_until_rest(model, params, &start, &wave, horizon)?;
    let outcome = match run.outcome {
        IntegrationOutcome::Contact { .. } => WriteOutcome::FailedContact,
        _ if run.final_state.bit == bit => WriteOutcome::Written,
        _ => WriteOutcome::FailedNoSnap,
    };
    Ok((run.final_state, outcome))
}

/// Offset the state by `size` along the softest stiffness direction, with
/// its largest component carrying `sign` so mirrored writes mirror.
fn perturbed(model: &EnergyModel, cell: &CellState, size: f64, sign: f64) -> CellState {
    if size == 0.0 {
        return cell.clone();
    }
    let eig = SymmetricEigen::new(model.hessian(&cell.amplitudes));
    let idx = eig.eigenvalues.imin();
    let mut dir = eig.eigenvectors.column(idx).into_owned();
    let lead = dir.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if lead * sign < 0.0 {
        dir = -dir;
    }
    let mut out = cell.clone();
    for (a, d) in out.amplitudes.iter_mut().zip(dir.iter()) {
        *a += size * d;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Step {
    /// `voltage`/`duration` of `None` use the sequence defaults.
    Write {
        bit: u8,
        voltage: Option<f64>,
        duration: Option<f64>,
    },
    Read,
    /// Unforced evolution for `duration` seconds.
    Wait { duration: f64 },
}

impl Step {
    pub fn write(bit: u8) -> Self {
        Step::Write {
            bit,
            voltage: None,
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub step: Step,
    pub write: Option<WriteOutcome>,
    pub read: Option<Bit>,
    /// Elastic energy after the step (J).
    pub energy: f64,
    /// Read margin |C_left - C_right| after the step (F), if readable.
    pub margin: Option<f64>,
    pub a0: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub records: Vec<StepRecord>,
    /// Index of the step that ended in contact.
    pub aborted_at: Option<usize>,
    pub final_state: Option<CellState>,
    pub write_voltage: f64,
    pub pulse_duration: f64,
}

impl SequenceReport {
    pub fn reads(&self) -> Vec<Bit> {
        self.records.iter().filter_map(|r| r.read).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceDefaults {
    pub voltage: f64,
    pub duration: f64,
}

/// Run `script` on one cell starting from `initial`.
pub fn run_sequence(
    model: &EnergyModel,
    params: &DynamicsParams,
    initial: &CellState,
    script: &[Step],
    defaults: SequenceDefaults,
) -> Result<SequenceReport> {
    let mut report = SequenceReport {
        records: Vec::with_capacity(script.len()),
        aborted_at: None,
        final_state: Some(initial.clone()),
        write_voltage: defaults.voltage,
        pulse_duration: defaults.duration,
    };
    if script.is_empty() {
        return Ok(report);
    }
    let mut cell = initial.clone();
    for (index, &step) in script.iter().enumerate() {
        let (mut write, mut read) = (None, None);
        match step {
            Step::Write { bit, voltage, duration } => {
                let bit = Bit::from_digit(bit).ok_or_else(|| invalid("bit", "must be 0 or 1"))?;
                let (next, outcome) = write_bit(
                    &cell,
                    model,
                    params,
                    bit,
                    voltage.unwrap_or(defaults.voltage),
                    duration.unwrap_or(defaults.duration),
                )?;
                cell = next;
                write = Some(outcome);
            }
            Step::Read => read = Some(read_bit(&cell, model)?),
            Step::Wait { duration } => {
                let run = dynamics::integrate_with(
                    model,
                    params,
                    &cell,
                    &ActuationWaveform::off(),
                    duration,
                    &dynamics::RunOptions {
                        record_states: false,
                        ..Default::default()
                    },
                )?;
                if let IntegrationOutcome::Contact { .. } = run.outcome {
                    write = Some(WriteOutcome::FailedContact);
                }
                cell = run.final_state;
            }
        }
        let margin = read_margin(model, &cell.amplitudes).ok().map(|r| r.delta);
        report.records.push(StepRecord {
            index,
            step,
            write,
            read,
            energy: model.elastic_energy(&cell.amplitudes),
            margin,
            a0: cell.amplitudes[0],
            time: cell.time,
        });
        if write == Some(WriteOutcome::FailedContact) {
            report.aborted_at = Some(index);
            report.final_state = None;
            return Ok(report);
        }
    }
    report.final_state = Some(cell);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeamSpec, MaterialSpec};

    fn setup() -> (EnergyModel, DynamicsParams, f64, f64) {
        let m = EnergyModel::new(BeamSpec::with_length(12e-6), MaterialSpec::thermal_oxide(), 4).unwrap();
        let p = DynamicsParams::default();
        let v = write_threshold(&m, &p, &SnapOptions::default()).unwrap();
        let d = default_pulse_duration(&m).unwrap();
        (m, p, v, d)
    }

    #[test]
    fn read_convention() {
        let (m, ..) = setup();
        let left = CellState::at_well(&m, Bit::One).unwrap();
        assert!(left.amplitudes[0] > 0.0);
        assert_eq!(read_bit(&left, &m).unwrap(), Bit::One);
        let right = CellState::at_well(&m, Bit::Zero).unwrap();
        assert_eq!(read_bit(&right, &m).unwrap(), Bit::Zero);
        let straight = CellState::at_rest(&m, vec![0.0; 4]).unwrap();
        assert_eq!(read_bit(&straight, &m).unwrap(), Bit::Indeterminate);
    }

    #[test]
    fn write_same_bit_is_noop() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::One).unwrap();
        let (next, o) = write_bit(&c, &m, &p, Bit::One, 1.5 * v, d).unwrap();
        assert_eq!(o, WriteOutcome::AlreadySet);
        assert_eq!(next, c);
    }

    #[test]
    fn zero_voltage_does_not_write() {
        let (m, p, _, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        let (next, o) = write_bit(&c, &m, &p, Bit::One, 0.0, d).unwrap();
        assert_eq!(o, WriteOutcome::FailedNoSnap);
        assert_eq!(next, c);
    }

    #[test]
    fn bad_write_arguments() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        assert!(write_bit(&c, &m, &p, Bit::Indeterminate, v, d).is_err());
        assert!(write_bit(&c, &m, &p, Bit::One, -1.0, d).is_err());
    }

    #[test]
    fn write_round_trip() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        let (c, o) = write_bit(&c, &m, &p, Bit::One, 1.5 * v, d).unwrap();
        assert_eq!(o, WriteOutcome::Written);
        assert_eq!(read_bit(&c, &m).unwrap(), Bit::One);
        let (c, o) = write_bit(&c, &m, &p, Bit::Zero, 1.5 * v, d).unwrap();
        assert_eq!(o, WriteOutcome::Written);
        assert_eq!(read_bit(&c, &m).unwrap(), Bit::Zero);
    }

    #[test]
    fn empty_script() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        let r = run_sequence(&m, &p, &c, &[], SequenceDefaults { voltage: v, duration: d }).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.aborted_at, None);
    }

    #[test]
    fn wait_keeps_bit() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        let script = [Step::write(1), Step::Wait { duration: 1e-3 }, Step::Read];
        let r = run_sequence(&m, &p, &c, &script, SequenceDefaults { voltage: 1.5 * v, duration: d }).unwrap();
        assert_eq!(r.reads(), vec![Bit::One]);
    }

    #[test]
    fn sequence_is_deterministic() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        let script = [Step::write(1), Step::Read];
        let defaults = SequenceDefaults { voltage: 1.5 * v, duration: d };
        let a = run_sequence(&m, &p, &c, &script, defaults).unwrap();
        let b = run_sequence(&m, &p, &c, &script, defaults).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn contact_aborts_sequence() {
        let (m, p, v, d) = setup();
        let c = CellState::at_well(&m, Bit::Zero).unwrap();
        let script = [Step::Read, Step::write(1), Step::Read];
        let r = run_sequence(&m, &p, &c, &script, SequenceDefaults { voltage: 3.0 * v, duration: 5.0 * d }).unwrap();
        assert_eq!(r.aborted_at, Some(1));
        assert_eq!(r.records.len(), 2);
        assert_eq!(r.records[1].write, Some(WriteOutcome::FailedContact));
    }
}
