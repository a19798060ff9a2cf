//! Simulation of an in-plane bistable buckled-nanowire memory cell.

pub mod cell;
pub mod dynamics;
pub mod error;
pub mod estatics;
pub mod model;
pub mod modes;
pub mod ode;
pub mod quadrature;
pub mod solver;
pub mod statics;

pub use cell::{read_bit, run_sequence, write_bit, SequenceReport, Step, WriteOutcome};
pub use dynamics::{ActuationWaveform, CellState, DynamicsParams, Trajectory};
pub use error::{Error, Result};
pub use estatics::{Bit, Side, SnapOptions, SnapOutcome, SnapResult};
pub use model::{BeamSpec, CrossSection, ElectrodeLayout, MaterialSpec, SectionKind};
pub use modes::{solve_eigenvalues, ModeBasis};
pub use statics::{EnergyModel, Equilibrium, Stability};
