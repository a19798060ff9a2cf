//! Transient modal dynamics under electrode drive.
//!
//! `M ä + D ȧ + ∇U(a) = F(a, V(t))` with `M = ρ A Mq` and mass-proportional
//! damping `D = (ω₀/Q) M`, where ω₀ is the lowest linearized frequency of the
//! well nearest the initial state.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estatics::{self, read_margin, Bit, Electrode};
use crate::ode::Dopri5;
use crate::statics::{require_buckled, EnergyModel, Equilibrium};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Quality factor of the damping.
    pub quality_factor: f64,
    /// Relative tolerance of the adaptive stepper.
    pub rel_tol: f64,
    /// At rest once the energy above the well bottom drops below this
    /// fraction of the barrier.
    pub rest_fraction: f64,
    /// Record every n-th accepted step.
    pub sample_stride: usize,
    /// Largest step as a fraction of the slowest well period.
    pub max_step_fraction: f64,
    /// Initial offset along the softest well direction applied before a
    /// write pulse (m). Stands in for the fabrication asymmetry that lets a
    /// symmetric drive leave the symmetric branch.
    pub imperfection: f64,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            quality_factor: 100.0,
            rel_tol: 1e-8,
            rest_fraction: 1e-6,
            sample_stride: 16,
            max_step_fraction: 0.05,
            imperfection: 1e-9,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.quality_factor > 0.0) {
            return Err(invalid("quality_factor", "must be positive"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1e-2) {
            return Err(invalid("rel_tol", "must lie in (0, 1e-2)"));
        }
        if self.sample_stride == 0 {
            return Err(invalid("sample_stride", "must be at least 1"));
        }
        if !(self.max_step_fraction > 0.0) {
            return Err(invalid("max_step_fraction", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    /// Held for the whole run.
    DcStep,
    /// Held for `duration`, then zero.
    DcPulse,
    /// `amplitude · sin(2π f t)` for `duration`, then zero.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuationWaveform {
    pub kind: WaveKind,
    /// Peak voltage (V).
    pub amplitude: f64,
    pub duration: f64,
    pub frequency: f64,
    pub electrode: String,
}

impl ActuationWaveform {
    pub fn dc_step(electrode: &str, amplitude: f64) -> Self {
        Self {
            kind: WaveKind::DcStep,
            amplitude,
            duration: f64::INFINITY,
            frequency: 0.0,
            electrode: electrode.to_string(),
        }
    }

    pub fn dc_pulse(electrode: &str, amplitude: f64, duration: f64) -> Self {
        Self {
            kind: WaveKind::DcPulse,
            amplitude,
            duration,
            frequency: 0.0,
            electrode: electrode.to_string(),
        }
    }

    pub fn sine(electrode: &str, amplitude: f64, frequency: f64, duration: f64) -> Self {
        Self {
            kind: WaveKind::Sine,
            amplitude,
            duration,
            frequency,
            electrode: electrode.to_string(),
        }
    }

    /// No drive at all.
    pub fn off() -> Self {
        Self::dc_pulse("", 0.0, f64::MIN_POSITIVE)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("amplitude", "must be finite and non-negative"));
        }
        if !(self.duration > 0.0) {
            return Err(invalid("duration", "must be positive"));
        }
        if self.kind == WaveKind::Sine && !(self.frequency > 0.0) {
            return Err(invalid("frequency", "must be positive for a sine drive"));
        }
        Ok(())
    }

    pub fn voltage(&self, t: f64) -> f64 {
        match self.kind {
            WaveKind::DcStep => self.amplitude,
            WaveKind::DcPulse if t < self.duration => self.amplitude,
            WaveKind::Sine if t < self.duration => {
                self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * t).sin()
            }
            _ => 0.0,
        }
    }

    /// Time after which the voltage is identically zero.
    pub fn end(&self) -> f64 {
        match self.kind {
            WaveKind::DcStep if self.amplitude > 0.0 => f64::INFINITY,
            WaveKind::DcStep => 0.0,
            _ if self.amplitude == 0.0 => 0.0,
            _ => self.duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    /// Modal amplitudes (m).
    pub amplitudes: Vec<f64>,
    /// Modal velocities (m/s).
    pub velocities: Vec<f64>,
    pub bit: Bit,
    /// Simulation time (s).
    pub time: f64,
}

impl CellState {
    /// Resting state at amplitudes `a`, with the bit read from it.
    pub fn at_rest(model: &EnergyModel, amplitudes: Vec<f64>) -> Result<Self> {
        let bit = read_margin(model, &amplitudes)?.bit;
        Ok(Self {
            velocities: vec![0.0; amplitudes.len()],
            amplitudes,
            bit,
            time: 0.0,
        })
    }

    /// Resting in the stable well that stores `bit`.
    pub fn at_well(model: &EnergyModel, bit: Bit) -> Result<Self> {
        let side = bit
            .side()
            .ok_or_else(|| invalid("bit", "cannot place a cell in an indeterminate state"))?;
        require_buckled(model)?;
        let well = model
            .stable_wells()
            .into_iter()
            .find(|w| w.a0().signum() == side.sign())
            .ok_or_else(|| invalid("residual_stress", "beam is not bistable"))?;
        Self::at_rest(model, well.amplitudes)
    }

    pub fn kinetic_energy(&self, mass: &DMatrix<f64>) -> f64 {
        let v = DVector::from_column_slice(&self.velocities);
        0.5 * v.dot(&(mass * &v))
    }
}

/// Modal mass matrix `ρ A Mq` (kg).
pub fn mass_matrix(model: &EnergyModel) -> DMatrix<f64> {
    model.basis().gram_mass() * (model.material().density * model.beam().cross_section.area())
}

/// Lowest natural frequency (Hz) of small oscillations about a stable
/// equilibrium.
pub fn linearized_frequency(model: &EnergyModel, eq: &Equilibrium) -> Result<f64> {
    if !eq.is_stable() {
        return Err(Error::NotStable);
    }
    let lambda = lowest_generalized_eigenvalue(&model.hessian(&eq.amplitudes), &mass_matrix(model))?;
    if lambda <= 0.0 {
        return Err(Error::NotStable);
    }
    Ok(lambda.sqrt() / (2.0 * std::f64::consts::PI))
}

/// Smallest λ of `H v = λ M v` via `L⁻¹ H L⁻ᵀ` with `M = L Lᵀ`.
fn lowest_generalized_eigenvalue(h: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::QuadratureUnderresolved("mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::QuadratureUnderresolved("singular mass factor".into()))?;
    let c = &linv * h * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    Ok(SymmetricEigen::new(c).eigenvalues.min())
}

/// Stable well closest to `a`.
pub fn nearest_well(model: &EnergyModel, a: &[f64]) -> Result<Equilibrium> {
    model
        .stable_wells()
        .into_iter()
        .min_by(|x, y| distance(&x.amplitudes, a).total_cmp(&distance(&y.amplitudes, a)))
        .ok_or(Error::NotStable)
}

/// Period of the slowest oscillation about the nearest well to the origin
/// side (s).
pub fn well_period(model: &EnergyModel) -> Result<f64> {
    let well = nearest_well(model, &vec![0.0; model.mode_count()])?;
    Ok(1.0 / linearized_frequency(model, &well)?)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub voltage: f64,
    /// Kinetic plus elastic energy (J).
    pub energy: f64,
    pub a0: f64,
    pub a1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IntegrationOutcome {
    Completed,
    AtRest,
    Contact { t: f64, gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Modal amplitudes at each sample, `[sample][mode]`.
    pub states: Vec<Vec<f64>>,
    pub final_state: CellState,
    pub outcome: IntegrationOutcome,
    pub steps: usize,
    pub rejected: usize,
    /// Damping reference frequency ω₀ (rad/s).
    pub omega0: f64,
}

/// Knobs for a single integration run beyond `DynamicsParams`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub stop_at_rest: bool,
    /// Override of the largest step (s).
    pub max_step: Option<f64>,
    /// Keep every sampled state (amplitudes) in the trajectory.
    pub record_states: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            stop_at_rest: false,
            max_step: None,
            record_states: true,
        }
    }
}

/// Integrate over `horizon`, stopping early on contact.
pub fn integrate(
    model: &EnergyModel,
    params: &DynamicsParams,
    initial: &CellState,
    wave: &ActuationWaveform,
    horizon: f64,
) -> Result<Trajectory> {
    integrate_with(model, params, initial, wave, horizon, &RunOptions::default())
}

/// As [`integrate`], also stopping once the cell is at rest with the drive off.
pub fn integrate_until_rest(
    model: &EnergyModel,
    params: &DynamicsParams,
    initial: &CellState,
    wave: &ActuationWaveform,
    horizon: f64,
) -> Result<Trajectory> {
    let opts = RunOptions {
        stop_at_rest: true,
        record_states: false,
        ..RunOptions::default()
    };
    integrate_with(model, params, initial, wave, horizon, &opts)
}

pub fn integrate_with(
    model: &EnergyModel,
    params: &DynamicsParams,
    initial: &CellState,
    wave: &ActuationWaveform,
    horizon: f64,
    opts: &RunOptions,
) -> Result<Trajectory> {
    params.validate()?;
    wave.validate()?;
    if !(horizon > 0.0) {
        return Err(invalid("horizon", "must be positive"));
    }
    let n = model.mode_count();
    if initial.amplitudes.len() != n || initial.velocities.len() != n {
        return Err(invalid("initial", "state dimension differs from mode count"));
    }
    let margin = model.beam().contact_margin;
    let (gl, gr) = model.min_gaps(&initial.amplitudes);
    if gl.min(gr) <= margin {
        return Err(Error::Contact {
            gap: gl.min(gr),
            x: f64::NAN,
        });
    }
    let driven = if wave.amplitude > 0.0 {
        Some(ClampedForce::new(model, &estatics::electrode(model, &wave.electrode)?))
    } else {
        None
    };

    let mass = mass_matrix(model);
    let mass_chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::QuadratureUnderresolved("mass matrix not positive definite".into()))?;
    let well = nearest_well(model, &initial.amplitudes)?;
    let omega0 = 2.0 * std::f64::consts::PI * linearized_frequency(model, &well)?;
    let damping = omega0 / params.quality_factor;
    let barrier = model.energy_barrier();
    let rest_energy = if barrier > 0.0 {
        params.rest_fraction * barrier
    } else {
        // Unbuckled beam: compare against the straight-state energy scale.
        params.rest_fraction * model.force_scale() * model.beam().gap
    };
    let u_well = well.energy;

    let period = 2.0 * std::f64::consts::PI / omega0;
    let h_max = opts.max_step.unwrap_or(params.max_step_fraction * period);
    let gap = model.beam().gap;
    let mut atol = vec![params.rel_tol * gap; n];
    atol.extend(std::iter::repeat(params.rel_tol * gap * omega0).take(n));

    // The waveform clock starts at the initial state's time.
    let t0 = initial.time;
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let (a, v) = y.split_at(n);
        let mut rhs = -model.gradient(a);
        if let Some(e) = &driven {
            let volts = wave.voltage(t - t0);
            if volts != 0.0 {
                rhs += e.eval(a, volts);
            }
        }
        let acc = mass_chol.solve(&rhs);
        for i in 0..n {
            dy[i] = v[i];
            dy[n + i] = acc[i] - damping * v[i];
        }
    };
    let mut y0 = initial.amplitudes.clone();
    y0.extend_from_slice(&initial.velocities);
    let mut stepper = Dopri5::new(rhs, t0, y0, 0.01 * h_max, params.rel_tol, atol, h_max);

    let energy = |y: &[f64]| {
        let (a, v) = y.split_at(n);
        let v = DVector::from_column_slice(v);
        0.5 * v.dot(&(&mass * &v)) + model.elastic_energy(a)
    };
    let sample = |t: f64, y: &[f64]| Sample {
        t,
        voltage: wave.voltage(t - t0),
        energy: energy(y),
        a0: y[0],
        a1: if n > 1 { y[1] } else { 0.0 },
    };
    let wave_end = t0 + wave.end();
    let t_end = t0 + horizon;

    let mut samples = vec![sample(t0, &stepper.y)];
    let mut states = if opts.record_states {
        vec![initial.amplitudes.clone()]
    } else {
        Vec::new()
    };
    let mut outcome = IntegrationOutcome::Completed;
    while stepper.t < t_end {
        // Land exactly on the end of the drive.
        let target = if stepper.t < wave_end && wave_end < t_end {
            wave_end
        } else {
            t_end
        };
        if !stepper.step(target) {
            return Err(Error::StepUnderflow { t: stepper.t });
        }
        let y = &stepper.y;
        // Mode shapes have unit peak, so sum |a_i| bounds |w| and spares the
        // full scan while far from the electrodes.
        let bound: f64 = y[..n].iter().map(|a| a.abs()).sum();
        let (gl, gr) = if bound < gap - margin {
            (gap - bound, gap - bound)
        } else {
            model.min_gaps(&y[..n])
        };
        if gl.min(gr) <= margin {
            outcome = IntegrationOutcome::Contact {
                t: stepper.t,
                gap: gl.min(gr),
            };
            samples.push(sample(stepper.t, y));
            if opts.record_states {
                states.push(y[..n].to_vec());
            }
            break;
        }
        if stepper.accepted % params.sample_stride == 0 {
            samples.push(sample(stepper.t, y));
            if opts.record_states {
                states.push(y[..n].to_vec());
            }
        }
        if opts.stop_at_rest && stepper.t >= wave_end {
            // Wells are the global minima of U, so a small total energy above
            // the well bottom pins the state to one of them.
            if energy(y) - u_well < rest_energy {
                outcome = IntegrationOutcome::AtRest;
                break;
            }
        }
    }
    if samples.last().map(|s| s.t) != Some(stepper.t) {
        samples.push(sample(stepper.t, &stepper.y));
        if opts.record_states {
            states.push(stepper.y[..n].to_vec());
        }
    }
    let (a, v) = stepper.y.split_at(n);
    let bit = match outcome {
        IntegrationOutcome::Contact { .. } => Bit::Indeterminate,
        _ => read_margin(model, a).map(|r| r.bit).unwrap_or(Bit::Indeterminate),
    };
    Ok(Trajectory {
        samples,
        states,
        final_state: CellState {
            amplitudes: a.to_vec(),
            velocities: v.to_vec(),
            bit,
            time: stepper.t,
        },
        outcome,
        steps: stepper.accepted,
        rejected: stepper.rejected,
        omega0,
    })
}

/// Electrostatic modal force with gaps floored at half the contact margin, so
/// trial stages that overshoot into contact stay finite.
/// Electrostatic modal force with gaps floored at half the contact margin,
/// so trial stages just past contact stay finite.
struct ClampedForce<'a> {
    shapes: &'a [Vec<f64>],
    first: usize,
    weights: Vec<f64>,
    sign: f64,
    gap: f64,
    floor: f64,
    /// η ε₀ t / 2
    plate: f64,
}

impl<'a> ClampedForce<'a> {
    fn new(model: &'a EnergyModel, e: &Electrode) -> Self {
        let beam = model.beam();
        let (first, last) = e.nodes();
        Self {
            shapes: model.basis().sampled_shapes(),
            first,
            weights: model.basis().quadrature().sub_weights(first, last),
            sign: e.side.sign(),
            gap: beam.gap,
            floor: 0.5 * beam.contact_margin,
            plate: 0.5
                * beam.coverage_efficiency
                * model.material().permittivity_vacuum
                * beam.cross_section.height,
        }
    }

    fn eval(&self, a: &[f64], volts: f64) -> DVector<f64> {
        let n = a.len();
        let mut f = DVector::zeros(n);
        let rows: Vec<&[f64]> = self.shapes.iter().map(|r| &r[self.first..self.first + self.weights.len()]).collect();
        for (j, wt) in self.weights.iter().enumerate() {
            let w: f64 = (0..n).map(|i| a[i] * rows[i][j]).sum();
            let gap = (self.gap - self.sign * w).max(self.floor);
            let c = self.sign * wt / (gap * gap);
            for i in 0..n {
                f[i] += c * rows[i][j];
            }
        }
        f * (self.plate * volts * volts)
    }
}
