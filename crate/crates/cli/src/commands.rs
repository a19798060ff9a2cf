//! Command implementations. Each returns a data table and a JSON summary;
//! writing them is left to the caller.

use clap::Subcommand;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use nwcell::cell::{self, default_pulse_duration, run_sequence, write_threshold, SequenceDefaults, Step};
use nwcell::estatics::{self, loaded_equilibrium, snap_voltage, DriveCondition, SnapOptions};
use nwcell::statics::{critical_length, stress_from_deflection};
use nwcell::{Bit, CellState, ModeBasis, Stability};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Table;

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Buckling mode shapes sampled along the beam.
    Modes {
        /// Number of modes (defaults to solver.mode_count).
        #[arg(long)]
        count: Option<usize>,
        /// Sample points along x/L, ends included.
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Critical stresses, equilibria, barrier and observable mode.
    Statics,
    /// Midspan deflection against beam length for one or more widths.
    SweepLength {
        /// `start:stop:step` (inclusive) or a comma list, in metres.
        #[arg(long)]
        lengths: String,
        /// Comma list of rectangular widths (m); defaults to the config width.
        #[arg(long)]
        widths: Option<String>,
    },
    /// Elastic energy over the (a0, a1) plane with higher modes at zero.
    Landscape {
        /// Grid points per axis.
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        /// Half-width of the scan in units of the free mode-0 amplitude.
        #[arg(long, default_value_t = 1.5)]
        span: f64,
    },
    /// Quasi-static DC ramp until the occupied well is lost.
    SnapVoltage {
        /// Driven electrode; the start well is on the opposite side.
        #[arg(long, default_value = "left")]
        electrode: String,
        /// Coarse ramp increment (V) before bisection.
        #[arg(long, default_value_t = 5.0)]
        v_step: f64,
        /// Skip the held-voltage release that classifies the outcome.
        #[arg(long)]
        no_dynamics: bool,
    },
    /// Run a write/read/wait script on one or more cells.
    Memory {
        /// Comma list of `w0`, `w1`, `r`, `wait:<seconds>`.
        #[arg(long, default_value = "w1,r,w0,r")]
        script: String,
        /// Bit stored before the script starts.
        #[arg(long, default_value_t = 0)]
        initial_bit: u8,
        /// Write voltage (V); defaults to overdrive × v_snap per cell.
        #[arg(long)]
        voltage: Option<f64>,
        #[arg(long, default_value_t = 1.5)]
        overdrive: f64,
        /// Write pulse length (s); defaults to 10/ω₀ of the slowest well mode.
        #[arg(long)]
        duration: Option<f64>,
        /// Comma list of lengths (m), one independent cell each.
        #[arg(long)]
        lengths: Option<String>,
    },
    /// Residual stress from measured midspan deflections.
    StressExtract {
        /// Comma list of deflections (m).
        #[arg(long, value_delimiter = ',', required = true)]
        deflection: Vec<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Modes { .. } => "modes",
            Command::Statics => "statics",
            Command::SweepLength { .. } => "sweep-length",
            Command::Landscape { .. } => "landscape",
            Command::SnapVoltage { .. } => "snap-voltage",
            Command::Memory { .. } => "memory",
            Command::StressExtract { .. } => "stress-extract",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Output {
    pub table: Table,
    pub summary: Value,
    /// `(cell, step)` of the first protocol step that ended in contact.
    pub contact: Option<(usize, usize)>,
}

impl Output {
    fn ok(table: Table, summary: Value) -> Self {
        Self {
            table,
            summary,
            contact: None,
        }
    }
}

fn arg_err(flag: &str, message: impl Into<String>) -> CliError {
    CliError::Argument {
        flag: flag.into(),
        message: message.into(),
    }
}

/// `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_range(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| arg_err(flag, format!("`{s}`: {e}")))
    };
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(arg_err(flag, "range must be start:stop:step"));
        }
        let (start, stop, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !(stop >= start) {
            return Err(arg_err(flag, "need step > 0 and stop >= start"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(arg_err(flag, "values must be positive"));
    }
    Ok(values)
}

pub fn parse_script(text: &str) -> Result<Vec<Step>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|tok| match tok {
            "w0" => Ok(Step::write(0)),
            "w1" => Ok(Step::write(1)),
            "r" => Ok(Step::Read),
            _ => match tok.strip_prefix("wait:").map(str::parse::<f64>) {
                Some(Ok(d)) if d > 0.0 && d.is_finite() => Ok(Step::Wait { duration: d }),
                _ => Err(arg_err("--script", format!("bad step `{tok}`"))),
            },
        })
        .collect()
}

pub fn run_command(cmd: &Command, cfg: &RunConfig) -> Result<Output, CliError> {
    match cmd {
        Command::Modes { count, points } => modes(cfg, count.unwrap_or(cfg.solver.mode_count), *points),
        Command::Statics => statics(cfg),
        Command::SweepLength { lengths, widths } => sweep_length(cfg, lengths, widths.as_deref()),
        Command::Landscape { resolution, span } => landscape(cfg, *resolution, *span),
        Command::SnapVoltage {
            electrode,
            v_step,
            no_dynamics,
        } => snap(cfg, electrode, *v_step, !no_dynamics),
        Command::Memory {
            script,
            initial_bit,
            voltage,
            overdrive,
            duration,
            lengths,
        } => memory(cfg, script, *initial_bit, *voltage, *overdrive, *duration, lengths.as_deref()),
        Command::StressExtract { deflection } => stress_extract(cfg, deflection),
    }
}

fn modes(cfg: &RunConfig, count: usize, points: usize) -> Result<Output, CliError> {
    if points < 2 {
        return Err(arg_err("--points", "need at least 2"));
    }
    let l = cfg.beam.length_m;
    let basis = ModeBasis::with_quadrature(l, count, cfg.solver.quadrature_points)?;
    let mut cols = vec!["x_over_l".to_string()];
    cols.extend((0..count).map(|i| format!("phi_{i}")));
    let mut table = Table::new(cols);
    for k in 0..points {
        let xi = k as f64 / (points - 1) as f64;
        let mut row = vec![xi.into()];
        for i in 0..count {
            row.push(basis.mode_shape(i, (xi * l).min(l))?.into());
        }
        table.push(row);
    }
    let material = cfg.material_spec();
    let cs = cfg.cross_section();
    let modes: Vec<Value> = (0..count)
        .map(|i| {
            let n = basis.wavenumber(i);
            let strain = cs.gyration_sq() * n * n;
            json!({
                "index": i,
                "root": basis.roots()[i],
                "family": basis.family(i),
                "wavenumber_per_m": n,
                "critical_strain": strain,
                "critical_stress_pa": material.youngs_modulus * strain,
            })
        })
        .collect();
    Ok(Output::ok(table, json!({ "length_m": l, "count": count, "points": points, "modes": modes })))
}

fn stability_str(s: Stability) -> &'static str {
    match s {
        Stability::StableMinimum => "stable_minimum",
        Stability::Saddle => "saddle",
        Stability::Degenerate => "degenerate",
    }
}

fn statics(cfg: &RunConfig) -> Result<Output, CliError> {
    let model = cfg.model()?;
    let n = model.mode_count();
    let eqs = model.find_equilibria();
    let mut cols: Vec<String> = vec!["index".into(), "stability".into(), "energy_j".into()];
    cols.extend((0..n).map(|i| format!("a{i}_m")));
    cols.extend(["min_gap_left_m".into(), "min_gap_right_m".into(), "residual_n".into()]);
    let mut table = Table::new(cols);
    for (k, e) in eqs.iter().enumerate() {
        let mut row = vec![k.into(), stability_str(e.stability).into(), e.energy.into()];
        row.extend(e.amplitudes.iter().map(|&a| a.into()));
        row.extend([e.min_gap_left.into(), e.min_gap_right.into(), e.residual.into()]);
        table.push(row);
    }
    let crit_len = critical_length(&cfg.cross_section(), &cfg.material_spec(), 0).ok();
    let summary = json!({
        "residual_strain": model.residual_strain(),
        "buckled": model.is_buckled(),
        "critical_strain": (0..n).map(|i| model.critical_strain(i)).collect::<Vec<_>>(),
        "critical_stress_pa": (0..n).map(|i| model.critical_stress(i)).collect::<Vec<_>>(),
        "critical_length_m": crit_len,
        "buckling_amplitude_m": (0..n).map(|i| model.buckling_amplitude(i)).collect::<Vec<_>>(),
        "energy_barrier_j": model.energy_barrier(),
        "escape_barrier_j": model.escape_barrier(),
        "equilibria": eqs.len(),
        "stable_states": eqs.iter().filter(|e| e.is_stable()).count(),
        "observable_mode": model.observable_mode_under_gap()?,
        "aspect_ratio": model.aspect_ratio_report()?,
    });
    Ok(Output::ok(table, summary))
}

fn sweep_length(cfg: &RunConfig, lengths: &str, widths: Option<&str>) -> Result<Output, CliError> {
    let mut lengths = parse_range("--lengths", lengths)?;
    let mut widths = match widths {
        Some(w) => parse_range("--widths", w)?,
        None => {
            if cfg.beam.width_top_m != cfg.beam.width_bottom_m {
                return Err(arg_err("--widths", "required for a trapezoidal section"));
            }
            vec![cfg.beam.width_top_m]
        }
    };
    lengths.sort_by(f64::total_cmp);
    widths.sort_by(f64::total_cmp);
    let points: Vec<(f64, f64)> = widths
        .iter()
        .flat_map(|&w| lengths.iter().map(move |&l| (w, l)))
        .collect();
    // Each point is independent; collect keeps input order.
    let rows = points
        .par_iter()
        .map(|&(w, l)| {
            let mut c = cfg.with_length(l);
            c.beam.width_top_m = w;
            c.beam.width_bottom_m = w;
            let model = c.model()?;
            let deflection = model
                .stable_wells()
                .iter()
                .map(|e| e.a0().abs())
                .fold(0.0, f64::max);
            Ok((l, w, deflection, model.is_buckled(), model.critical_stress(0)))
        })
        .collect::<Result<Vec<_>, nwcell::Error>>()?;
    let mut table = Table::new(["length_m", "width_m", "deflection_m", "buckled", "critical_stress_pa"]);
    for &(l, w, d, b, s) in &rows {
        table.push(vec![l.into(), w.into(), d.into(), b.into(), s.into()]);
    }
    let summary = json!({
        "points": rows.len(),
        "lengths_m": lengths,
        "widths_m": widths,
        "critical_length_m": widths.iter().map(|&w| {
            let mut c = cfg.clone();
            c.beam.width_top_m = w;
            c.beam.width_bottom_m = w;
            critical_length(&c.cross_section(), &c.material_spec(), 0).ok()
        }).collect::<Vec<_>>(),
    });
    Ok(Output::ok(table, summary))
}

fn landscape(cfg: &RunConfig, resolution: usize, span: f64) -> Result<Output, CliError> {
    if resolution < 3 {
        return Err(arg_err("--resolution", "need at least 3"));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(arg_err("--span", "must be positive"));
    }
    let model = cfg.model()?;
    let n = model.mode_count();
    if n < 2 {
        return Err(CliError::Config {
            key: "solver.mode_count".into(),
            line: None,
            message: "landscape needs at least 2 modes".into(),
        });
    }
    let scale = if model.is_buckled() {
        model.buckling_amplitude(0)
    } else {
        0.1 * cfg.beam.gap_m
    };
    let (r0, r1) = (span * scale, span * scale.max(model.buckling_amplitude(1)));
    let axis = |r: f64| -> Vec<f64> {
        (0..resolution)
            .map(|k| -r + 2.0 * r * k as f64 / (resolution - 1) as f64)
            .collect()
    };
    let (g0, g1) = (axis(r0), axis(r1));
    let mut energy = vec![vec![0.0; resolution]; resolution];
    let mut table = Table::new(["a0_m", "a1_m", "energy_j"]);
    let mut a = vec![0.0; n];
    for (i, &x) in g0.iter().enumerate() {
        for (j, &y) in g1.iter().enumerate() {
            a[0] = x;
            a[1] = y;
            let u = model.elastic_energy(&a);
            energy[i][j] = u;
            table.push(vec![x.into(), y.into(), u.into()]);
        }
    }
    let minima = grid_minima(&energy)
        .into_iter()
        .map(|(i, j)| json!({ "a0_m": g0[i], "a1_m": g1[j], "energy_j": energy[i][j] }))
        .collect::<Vec<_>>();
    let eqs: Vec<Value> = model
        .find_equilibria()
        .iter()
        .filter(|e| e.amplitudes[2..].iter().all(|x| x.abs() < 1e-12))
        .map(|e| {
            json!({
                "a0_m": e.amplitudes[0],
                "a1_m": e.amplitudes[1],
                "energy_j": e.energy,
                "stability": stability_str(e.stability),
            })
        })
        .collect();
    let summary = json!({
        "resolution": resolution,
        "a0_range_m": [-r0, r0],
        "a1_range_m": [-r1, r1],
        "grid_minima": minima,
        "equilibria_in_plane": eqs,
        "energy_barrier_j": model.energy_barrier(),
        "escape_barrier_j": model.escape_barrier(),
    });
    Ok(Output::ok(table, summary))
}

/// Interior grid points strictly below all eight neighbours.
pub fn grid_minima(u: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let (n, m) = (u.len(), u.first().map_or(0, Vec::len));
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        for j in 1..m.saturating_sub(1) {
            let c = u[i][j];
            let lower = (i - 1..=i + 1)
                .flat_map(|p| (j - 1..=j + 1).map(move |q| (p, q)))
                .filter(|&(p, q)| (p, q) != (i, j))
                .all(|(p, q)| c < u[p][q]);
            if lower {
                out.push((i, j));
            }
        }
    }
    out
}

fn snap(cfg: &RunConfig, label: &str, v_step: f64, classify: bool) -> Result<Output, CliError> {
    if !(v_step > 0.0 && v_step.is_finite()) {
        return Err(arg_err("--v-step", "must be positive"));
    }
    let model = cfg.model()?;
    let e = estatics::electrode(&model, label)?;
    let start = model
        .stable_wells()
        .into_iter()
        .find(|w| w.a0().signum() != e.side.sign())
        .ok_or(nwcell::Error::NotStable)?;
    let opts = SnapOptions {
        v_max: cfg.solver.v_max,
        v_step,
        classify_outcome: classify,
        ..SnapOptions::default()
    };
    let params = cfg.dynamics_params();
    let result = snap_voltage(&model, label, &start, &opts, &params)?;

    // Quasi-static branch up to the last stable voltage, for plotting.
    let n = model.mode_count();
    let mut cols: Vec<String> = vec!["voltage_v".into()];
    cols.extend((0..n).map(|i| format!("a{i}_m")));
    cols.extend(["min_gap_left_m".into(), "min_gap_right_m".into(), "stable".into()]);
    let mut table = Table::new(cols);
    let steps = (result.v_stable / v_step).ceil().max(1.0) as usize;
    let mut seed = start.amplitudes.clone();
    for k in 0..=steps {
        let v = (k as f64 * v_step).min(result.v_stable);
        let drive = DriveCondition::new(label, v)?;
        let (a, stab, _) = loaded_equilibrium(&model, &drive, &seed)?;
        let (gl, gr) = model.min_gaps(&a);
        let mut row = vec![v.into()];
        row.extend(a.iter().map(|&x| x.into()));
        row.extend([gl.into(), gr.into(), (stab == Stability::StableMinimum).into()]);
        table.push(row);
        seed = a;
    }
    let outcome = if classify { Some(result.outcome) } else { None };
    let summary = json!({
        "v_snap_volts": result.v_snap,
        "v_stable_volts": result.v_stable,
        "resolution_volts": opts.resolution,
        "outcome": outcome,
        "electrode": result.electrode,
        "start_amplitudes_m": start.amplitudes,
        "last_stable_amplitudes_m": result.last_stable,
    });
    Ok(Output::ok(table, summary))
}

#[derive(Debug, Clone, Serialize)]
struct CellSummary {
    length_m: f64,
    v_snap_volts: Option<f64>,
    write_voltage_volts: f64,
    pulse_duration_s: f64,
    reads: Vec<&'static str>,
    writes: Vec<cell::WriteOutcome>,
    aborted_at: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn memory(
    cfg: &RunConfig,
    script: &str,
    initial_bit: u8,
    voltage: Option<f64>,
    overdrive: f64,
    duration: Option<f64>,
    lengths: Option<&str>,
) -> Result<Output, CliError> {
    let steps = parse_script(script)?;
    let bit = Bit::from_digit(initial_bit).ok_or_else(|| arg_err("--initial-bit", "must be 0 or 1"))?;
    if let Some(v) = voltage {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(arg_err("--voltage", "must be non-negative"));
        }
    }
    if !(overdrive > 0.0) {
        return Err(arg_err("--overdrive", "must be positive"));
    }
    if let Some(d) = duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(arg_err("--duration", "must be positive"));
        }
    }
    let lengths = match lengths {
        Some(l) => parse_range("--lengths", l)?,
        None => vec![cfg.beam.length_m],
    };
    let params = cfg.dynamics_params();
    let runs = lengths
        .par_iter()
        .map(|&l| {
            let c = cfg.with_length(l);
            let model = c.model()?;
            let v_snap = match voltage {
                Some(_) => None,
                None => Some(write_threshold(
                    &model,
                    &params,
                    &SnapOptions {
                        v_max: c.solver.v_max,
                        ..SnapOptions::default()
                    },
                )?),
            };
            let defaults = SequenceDefaults {
                voltage: voltage.unwrap_or_else(|| overdrive * v_snap.unwrap_or(0.0)),
                duration: match duration {
                    Some(d) => d,
                    None => default_pulse_duration(&model)?,
                },
            };
            let initial = CellState::at_well(&model, bit)?;
            let report = run_sequence(&model, &params, &initial, &steps, defaults)?;
            Ok((l, v_snap, report))
        })
        .collect::<Result<Vec<_>, nwcell::Error>>()?;

    let mut table = Table::new([
        "cell", "length_m", "step", "op", "bit", "write_outcome", "read", "energy_j", "margin_f", "a0_m", "time_s",
    ]);
    let mut cells = Vec::new();
    let mut first_contact = None;
    for (ci, (l, v_snap, report)) in runs.iter().enumerate() {
        for r in &report.records {
            let (op, bit) = match r.step {
                Step::Write { bit, .. } => ("write", Some(bit as usize)),
                Step::Read => ("read", None),
                Step::Wait { .. } => ("wait", None),
            };
            table.push(vec![
                ci.into(),
                (*l).into(),
                r.index.into(),
                op.into(),
                bit.into(),
                r.write.map(|o| outcome_str(o).to_string()).into(),
                r.read.map(|b| b.as_str().to_string()).into(),
                r.energy.into(),
                r.margin.into(),
                r.a0.into(),
                r.time.into(),
            ]);
        }
        if let (None, Some(step)) = (first_contact, report.aborted_at) {
            first_contact = Some((ci, step));
        }
        cells.push(CellSummary {
            length_m: *l,
            v_snap_volts: *v_snap,
            write_voltage_volts: report.write_voltage,
            pulse_duration_s: report.pulse_duration,
            reads: report.reads().iter().map(|b| b.as_str()).collect(),
            writes: report.records.iter().filter_map(|r| r.write).collect(),
            aborted_at: report.aborted_at,
        });
    }
    let summary = json!({
        "script": steps,
        "initial_bit": initial_bit,
        "cells": cells,
        "contact": first_contact.map(|(c, s)| json!({ "cell": c, "step": s })),
    });
    let mut out = Output::ok(table, summary);
    out.contact = first_contact;
    Ok(out)
}

fn outcome_str(o: cell::WriteOutcome) -> &'static str {
    match o {
        cell::WriteOutcome::Written => "written",
        cell::WriteOutcome::AlreadySet => "already_set",
        cell::WriteOutcome::FailedNoSnap => "failed_no_snap",
        cell::WriteOutcome::FailedContact => "failed_contact",
    }
}

fn stress_extract(cfg: &RunConfig, deflections: &[f64]) -> Result<Output, CliError> {
    let beam = cfg.beam_spec();
    let mut table = Table::new(["deflection_m", "stress_pa", "exceeds_gap"]);
    let mut results = Vec::new();
    for &d in deflections {
        let est = stress_from_deflection(&beam, cfg.material.e_pa, d)?;
        table.push(vec![d.into(), est.stress.into(), est.exceeds_gap.into()]);
        results.push(json!({ "deflection_m": d, "stress_pa": est.stress, "exceeds_gap": est.exceeds_gap }));
    }
    Ok(Output::ok(table, json!({ "length_m": beam.length, "estimates": results })))
}
