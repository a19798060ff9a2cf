//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run alone with `cargo test -p nwcell-cli --test acceptance`.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use nwcell::cell::{default_pulse_duration, run_sequence, write_bit, write_threshold, SequenceDefaults, Step};
use nwcell::dynamics::{integrate, integrate_with, well_period, RunOptions};
use nwcell::estatics::{capacitance, electrode, force_and_jacobian, DriveCondition};
use nwcell::statics::{critical_length, stress_from_deflection};
use nwcell::*;
use nwcell_cli::commands::grid_minima;
use nwcell_cli::{execute, parse_with_overrides, Command};

// Tolerances and limits, as stated by the criteria.
const EVEN_ROOT_TOL: f64 = 1e-12;
const ODD_ROOT_TOL: f64 = 1e-10;
const ROOT_BUDGET: Duration = Duration::from_millis(1);
const CRIT_LENGTH_TARGET: f64 = 3.4e-6;
const CRIT_LENGTH_REL: f64 = 0.03;
const AMPLITUDE_REL: f64 = 1e-6;
// 400 intervals; odd so the a1 = 0 line is sampled.
const GRID: usize = 401;
const SNAP_WINDOW: (f64, f64) = (10.0, 200.0);
const SNAP_BUDGET: Duration = Duration::from_secs(10);
const FD_REL: f64 = 1e-5;
const FD_STATES: usize = 100;
const DRIFT_LIMIT: f64 = 1e-12;
const RETENTION_STEPS: usize = 1_000_000;
const HOLD_PERIODS: f64 = 1e3;
const STRESS_REL: f64 = 1e-9;

// Oracle results frozen from the bisection and golden-section routines below.
const ODD_ROOT_1: f64 = 8.986818915818128;
const ODD_ROOT_2: f64 = 15.450503673875414;

type Check = std::result::Result<String, String>;

fn model(length: f64, modes: usize) -> EnergyModel {
    EnergyModel::new(BeamSpec::with_length(length), MaterialSpec::thermal_oxide(), modes).unwrap()
}

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Bisection on `1 - cos u - (u/2) sin u` to an interval of 1e-13.
fn bisect_root(mut lo: f64, mut hi: f64) -> f64 {
    let f = |u: f64| 1.0 - u.cos() - 0.5 * u * u.sin();
    let flo = f(lo);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

fn c1_eigenvalues() -> Check {
    let odd = [bisect_root(2.0 * PI + 0.5, 3.0 * PI), bisect_root(4.0 * PI + 0.5, 5.0 * PI)];
    if (odd[0] - ODD_ROOT_1).abs() > 1e-12 || (odd[1] - ODD_ROOT_2).abs() > 1e-12 {
        return Err(format!("oracle drifted from frozen values: {odd:?}"));
    }
    let mut best = Duration::MAX;
    let mut roots = Vec::new();
    for _ in 0..20 {
        let t = Instant::now();
        roots = solve_eigenvalues(4).map_err(|e| e.to_string())?;
        best = best.min(t.elapsed());
    }
    let even_err = (roots[0] - 2.0 * PI).abs().max((roots[2] - 4.0 * PI).abs());
    let odd_err = (roots[1] - odd[0]).abs().max((roots[3] - odd[1]).abs());
    ensure(
        even_err <= EVEN_ROOT_TOL && odd_err <= ODD_ROOT_TOL && best < ROOT_BUDGET,
        format!("roots {roots:.12?}, even err {even_err:.1e}, odd err {odd_err:.1e}, {best:?}"),
    )
}

fn c2_critical_length() -> Check {
    let cs = CrossSection::rectangular(120e-9, 430e-9).unwrap();
    let l = critical_length(&cs, &MaterialSpec::thermal_oxide(), 0).map_err(|e| e.to_string())?;
    let rel = (l - CRIT_LENGTH_TARGET).abs() / CRIT_LENGTH_TARGET;
    ensure(rel <= CRIT_LENGTH_REL, format!("L0 = {:.4} um, {:.2}% from 3.4 um", l * 1e6, rel * 100.0))
}

fn c3_amplitudes() -> Check {
    let mut worst: f64 = 0.0;
    for l in [8e-6, 10e-6, 12e-6, 16e-6, 20e-6, 30e-6] {
        let m = model(l, 4);
        let a0 = m
            .find_equilibria()
            .iter()
            .filter(|e| e.is_stable())
            .map(|e| e.a0().abs())
            .fold(0.0, f64::max);
        let eps_cr = m.beam().cross_section.gyration_sq() * (2.0 * PI / l).powi(2);
        let closed = 2.0 * l / PI * (m.residual_strain() - eps_cr).sqrt();
        // The minimizer of U along pure mode 0 pins the closed form.
        let oracle = golden_min(|x| m.elastic_energy(&[x, 0.0, 0.0, 0.0]), 0.0, 4.0 * closed);
        if (oracle - closed).abs() > 1e-6 * closed {
            return Err(format!("oracle {oracle:e} disagrees with closed form {closed:e} at L={l:e}"));
        }
        worst = worst.max((a0 - closed).abs() / closed);
    }
    ensure(worst <= AMPLITUDE_REL, format!("worst relative error {worst:.2e} over 6 lengths"))
}

fn c4_bistability() -> Check {
    // Short enough that only mode 0 has buckled.
    let m = model(3.5e-6, 4);
    let eps = m.residual_strain();
    if !(m.critical_strain(0) < eps && eps < m.critical_strain(1)) {
        return Err("L = 3.5 um is not in the single-mode regime".into());
    }
    let eqs = m.find_equilibria();
    let amp = m.buckling_amplitude(0);
    let origin = eqs.iter().filter(|e| e.amplitudes.iter().all(|a| a.abs() < 1e-12 * amp.max(1e-30) + 1e-18));
    let saddles = origin.clone().filter(|e| e.stability == Stability::Saddle).count();
    let wells: Vec<_> = eqs.iter().filter(|e| e.is_stable()).collect();
    let structure = eqs.len() == 3
        && saddles == 1
        && wells.len() == 2
        && wells[0].a0() * wells[1].a0() < 0.0
        && (wells[0].energy - wells[1].energy).abs() <= 1e-12 * wells[0].energy.abs()
        && wells.iter().all(|w| w.amplitudes[1..].iter().all(|a| a.abs() < 1e-9 * amp));
    // Grid scan of U over the (a0, a1) plane.
    let r = 1.5 * amp;
    let axis: Vec<f64> = (0..GRID).map(|k| -r + 2.0 * r * k as f64 / (GRID - 1) as f64).collect();
    let u: Vec<Vec<f64>> = axis
        .iter()
        .map(|&x| axis.iter().map(|&y| m.elastic_energy(&[x, y, 0.0, 0.0])).collect())
        .collect();
    let minima = grid_minima(&u);
    let h = axis[1] - axis[0];
    let grid_ok = minima.len() == 2
        && minima.iter().all(|&(i, j)| {
            wells
                .iter()
                .any(|w| (axis[i] - w.a0()).abs() <= h && (axis[j] - w.amplitudes[1]).abs() <= h)
        });
    ensure(
        structure && grid_ok,
        format!(
            "{} equilibria ({} saddle at origin, {} wells), {} grid minima on {GRID}x{GRID} nodes",
            eqs.len(),
            saddles,
            wells.len(),
            minima.len()
        ),
    )
}

fn c5_gap_mode() -> Check {
    let long = model(30e-6, 4);
    let short = model(12e-6, 4);
    let ol = long.observable_mode_under_gap().map_err(|e| e.to_string())?;
    let os = short.observable_mode_under_gap().map_err(|e| e.to_string())?;
    let exceeds = long.buckling_amplitude(0) > long.beam().gap;
    ensure(
        exceeds && ol.mode.is_some_and(|m| m >= 1) && os.mode == Some(0),
        format!(
            "30 um: a0 = {:.3} um, mode {:?}; 12 um: mode {:?}",
            long.buckling_amplitude(0) * 1e6,
            ol.mode,
            os.mode
        ),
    )
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn c6_sweep_trend(dir: &Path) -> Check {
    let cfg = parse_with_overrides("", &[]).map_err(|e| e.to_string())?;
    let cmd = Command::SweepLength {
        lengths: "8e-6:20e-6:1e-6".into(),
        widths: Some("80e-9,100e-9".into()),
    };
    execute(&cmd, &cfg, dir).map_err(|e| e.to_string())?;
    let rows = read_csv(&dir.join("sweep-length.csv"));
    let curve = |w: f64| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| (r[1].parse::<f64>().unwrap() - w).abs() < 1e-12)
            .map(|r| (r[0].parse().unwrap(), r[2].parse().unwrap()))
            .collect()
    };
    let (c80, c100) = (curve(80e-9), curve(100e-9));
    let rising = |c: &[(f64, f64)]| c.windows(2).all(|p| p[1].0 > p[0].0 && p[1].1 > p[0].1);
    let above = c80.len() == c100.len() && c80.iter().zip(&c100).all(|(a, b)| a.0 == b.0 && a.1 >= b.1);
    ensure(
        c80.len() == 13 && rising(&c80) && rising(&c100) && above,
        format!("{} + {} points, monotone and ordered", c80.len(), c100.len()),
    )
}

fn c7_snap_voltage(dir: &Path) -> Check {
    let mut volts = Vec::new();
    let mut slowest = Duration::ZERO;
    for l in [12e-6, 20e-6, 30e-6] {
        let cfg = parse_with_overrides("", &[format!("beam.length_m={l:e}")]).map_err(|e| e.to_string())?;
        let cmd = Command::SnapVoltage {
            electrode: "left".into(),
            v_step: 5.0,
            no_dynamics: false,
        };
        let t = Instant::now();
        execute(&cmd, &cfg, dir).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("snap-voltage.json")).unwrap()).unwrap();
        volts.push(json["result"]["v_snap_volts"].as_f64().ok_or("missing v_snap_volts")?);
    }
    let v30 = volts[2];
    ensure(
        (SNAP_WINDOW.0..=SNAP_WINDOW.1).contains(&v30)
            && volts.windows(2).all(|w| w[1] <= w[0])
            && slowest < SNAP_BUDGET,
        format!("v_snap at 12/20/30 um = {volts:.1?} V, slowest point {slowest:.2?}"),
    )
}

fn fd_gradient(f: impl Fn(&[f64]) -> f64, a: &[f64], h: f64) -> DVector<f64> {
    DVector::from_fn(a.len(), |i, _| {
        let (mut p, mut m) = (a.to_vec(), a.to_vec());
        p[i] += h;
        m[i] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn c8_gradients() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let models = [model(8e-6, 4), model(12e-6, 4), model(20e-6, 4)];
    let (mut worst_u, mut worst_f): (f64, f64) = (0.0, 0.0);
    for k in 0..FD_STATES {
        let m = &models[k % models.len()];
        // Unit-peak modes: a bounded sum of |a_i| keeps every state clear of contact.
        let reach = 0.9 * (m.beam().gap - m.beam().contact_margin);
        let amp = m.buckling_amplitude(0).min(reach);
        let a: Vec<f64> = loop {
            let a: Vec<f64> = (0..4).map(|i| rng.random_range(-1.0..1.0) * amp / (1 + i) as f64).collect();
            if a.iter().map(|x| x.abs()).sum::<f64>() < reach {
                break a;
            }
        };
        let h = 1e-6 * m.beam().gap;
        let g = m.gradient(&a);
        let fd = fd_gradient(|x| m.elastic_energy(x), &a, h);
        worst_u = worst_u.max((&g - &fd).norm() / fd.norm());
        let v = rng.random_range(1.0..200.0);
        let label = if rng.random_bool(0.5) { "left" } else { "right" };
        let drive = DriveCondition::new(label, v).unwrap();
        let e = electrode(m, label).unwrap();
        let (f, _) = force_and_jacobian(m, &a, &drive).map_err(|e| e.to_string())?;
        let fd = fd_gradient(|x| 0.5 * v * v * capacitance(m, x, &e).unwrap(), &a, h);
        worst_f = worst_f.max((&f - &fd).norm() / fd.norm());
    }
    ensure(
        worst_u <= FD_REL && worst_f <= FD_REL,
        format!("{FD_STATES} states: elastic {worst_u:.1e}, electrostatic {worst_f:.1e}"),
    )
}

fn c9_protocol() -> Check {
    let m = model(12e-6, 4);
    let p = DynamicsParams::default();
    let v = write_threshold(&m, &p, &SnapOptions::default()).map_err(|e| e.to_string())?;
    let d = default_pulse_duration(&m).map_err(|e| e.to_string())?;
    let start = CellState::at_well(&m, Bit::Zero).map_err(|e| e.to_string())?;
    let script = [Step::write(1), Step::Read, Step::write(0), Step::Read, Step::write(0), Step::Read];
    let defaults = SequenceDefaults { voltage: 1.5 * v, duration: d };
    let report = run_sequence(&m, &p, &start, &script, defaults).map_err(|e| e.to_string())?;
    let reads = report.reads();
    let writes: Vec<_> = report.records.iter().filter_map(|r| r.write).collect();
    let protocol = reads == [Bit::One, Bit::Zero, Bit::Zero]
        && writes == [WriteOutcome::Written, WriteOutcome::Written, WriteOutcome::AlreadySet];

    // Retention: the V = 0 well is a fixed point of the integrator.
    let well = CellState::at_well(&m, Bit::One).map_err(|e| e.to_string())?;
    let params = DynamicsParams {
        sample_stride: 1000,
        ..p
    };
    let horizon = (RETENTION_STEPS as f64 + 10.0) * params.max_step_fraction * well_period(&m).unwrap();
    let opts = RunOptions {
        record_states: true,
        ..Default::default()
    };
    let run = integrate_with(&m, &params, &well, &ActuationWaveform::off(), horizon, &opts).map_err(|e| e.to_string())?;
    let drift = run
        .states
        .iter()
        .chain(std::iter::once(&run.final_state.amplitudes))
        .flat_map(|s| s.iter().zip(&well.amplitudes).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    ensure(
        protocol && run.steps >= RETENTION_STEPS && drift < DRIFT_LIMIT,
        format!(
            "reads {:?}, writes {:?}; drift {drift:.1e} m over {} steps",
            reads.iter().map(|b| b.as_str()).collect::<Vec<_>>(),
            writes,
            run.steps
        ),
    )
}

fn c10_non_volatility() -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for l in [12e-6] {
        let m = model(l, 4);
        let p = DynamicsParams::default();
        let v = write_threshold(&m, &p, &SnapOptions::default()).map_err(|e| e.to_string())?;
        let d = default_pulse_duration(&m).map_err(|e| e.to_string())?;
        let hold = HOLD_PERIODS * well_period(&m).unwrap();
        for (from, to) in [(Bit::Zero, Bit::One), (Bit::One, Bit::Zero)] {
            let start = CellState::at_well(&m, from).map_err(|e| e.to_string())?;
            let (cell, outcome) = write_bit(&start, &m, &p, to, 1.5 * v, d).map_err(|e| e.to_string())?;
            if outcome != WriteOutcome::Written {
                ok = false;
                lines.push(format!("write {} at {l:e}: {outcome:?}", to.as_str()));
                continue;
            }
            let run = integrate(&m, &p, &cell, &ActuationWaveform::off(), hold).map_err(|e| e.to_string())?;
            let sign = cell.amplitudes[0].signum();
            let kept = run.final_state.bit == to && run.samples.iter().all(|s| s.a0 * sign > 0.0);
            ok &= kept;
            lines.push(format!("bit {} kept: {kept}", to.as_str()));
        }
    }
    ensure(ok, format!("{} over {HOLD_PERIODS} periods", lines.join(", ")))
}

fn c11_stress_round_trip() -> Check {
    let mut worst: f64 = 0.0;
    for sigma in [100e6, 270e6, 500e6] {
        let m = model(12e-6, 4).with_stress(sigma).map_err(|e| e.to_string())?;
        let d = m.buckling_amplitude(0);
        let est = stress_from_deflection(m.beam(), m.material().youngs_modulus, d).map_err(|e| e.to_string())?;
        worst = worst.max((est.stress - sigma).abs() / sigma);
    }
    ensure(worst <= STRESS_REL, format!("worst relative error {worst:.1e}"))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("eigenvalues", Box::new(c1_eigenvalues)),
        ("critical length", Box::new(c2_critical_length)),
        ("amplitude closed form", Box::new(c3_amplitudes)),
        ("bistability structure", Box::new(c4_bistability)),
        ("gap-constrained mode", Box::new(c5_gap_mode)),
        ("sweep-length trend", Box::new(|| c6_sweep_trend(dir.path()))),
        ("snap voltage", Box::new(|| c7_snap_voltage(dir.path()))),
        ("gradient consistency", Box::new(c8_gradients)),
        ("memory protocol", Box::new(c9_protocol)),
        ("non-volatility", Box::new(c10_non_volatility)),
        ("stress round trip", Box::new(c11_stress_round_trip)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{:.2?}]", i + 1, t.elapsed());
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
