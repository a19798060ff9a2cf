//! wasm-bindgen wrappers for the browser demo. Each export returns a JSON
//! string; the page parses it and draws on a canvas.

use nwcell::{BeamSpec, CrossSection, EnergyModel, MaterialSpec, ModeBasis};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const HEIGHT: f64 = 430e-9;
const MODES: usize = 4;

fn model(length: f64, width: f64) -> nwcell::Result<EnergyModel> {
    let cs = CrossSection::rectangular(width, HEIGHT)?;
    EnergyModel::new(
        BeamSpec::with_length(length).with_cross_section(cs),
        MaterialSpec::thermal_oxide(),
        MODES,
    )
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Unit-peak buckling mode shapes sampled at `points` stations.
pub fn mode_shapes_json(count: usize, points: usize) -> nwcell::Result<Value> {
    let points = points.max(2);
    let basis = ModeBasis::new(1.0, count)?;
    let x = grid(0.0, 1.0, points);
    let shapes = (0..count)
        .map(|i| x.iter().map(|&xi| basis.mode_shape(i, xi)).collect::<nwcell::Result<Vec<_>>>())
        .collect::<nwcell::Result<Vec<_>>>()?;
    let families: Vec<_> = (0..count).map(|i| basis.family(i)).collect();
    Ok(json!({ "x": x, "shapes": shapes, "roots": basis.roots(), "families": families }))
}

/// Elastic energy over the (a0, a1) plane, row-major in a0, plus the
/// equilibria that lie in that plane.
pub fn landscape_json(length: f64, width: f64, resolution: usize) -> nwcell::Result<Value> {
    let n = resolution.clamp(3, 301);
    let m = model(length, width)?;
    let r0 = 1.5 * if m.is_buckled() { m.buckling_amplitude(0) } else { 0.1 * m.beam().gap };
    let r1 = 1.5 * m.buckling_amplitude(1).max(r0 / 1.5);
    let (g0, g1) = (grid(-r0, r0, n), grid(-r1, r1, n));
    let mut a = vec![0.0; MODES];
    let mut energy = Vec::with_capacity(n * n);
    for &x in &g0 {
        for &y in &g1 {
            a[0] = x;
            a[1] = y;
            energy.push(m.elastic_energy(&a));
        }
    }
    let eqs: Vec<Value> = m
        .find_equilibria()
        .iter()
        .filter(|e| e.amplitudes[2..].iter().all(|v| v.abs() < 1e-12))
        .map(|e| json!({ "a0": e.amplitudes[0], "a1": e.amplitudes[1], "energy": e.energy, "stability": e.stability }))
        .collect();
    Ok(json!({
        "n": n,
        "a0": [-r0, r0],
        "a1": [-r1, r1],
        "energy": energy,
        "equilibria": eqs,
        "barrier": m.energy_barrier(),
    }))
}

/// Peak static deflection against length for one width.
pub fn sweep_json(width: f64, l_min: f64, l_max: f64, points: usize) -> nwcell::Result<Value> {
    let lengths = grid(l_min, l_max, points.max(2));
    let mut deflection = Vec::with_capacity(lengths.len());
    for &l in &lengths {
        let m = model(l, width)?;
        deflection.push(m.stable_wells().iter().map(|e| e.a0().abs()).fold(0.0, f64::max));
    }
    Ok(json!({ "width": width, "length": lengths, "deflection": deflection, "gap": BeamSpec::with_length(l_min).gap }))
}

fn to_js(r: nwcell::Result<Value>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn mode_shapes(count: usize, points: usize) -> Result<String, JsValue> {
    to_js(mode_shapes_json(count, points))
}

#[wasm_bindgen]
pub fn landscape(length_m: f64, width_m: f64, resolution: usize) -> Result<String, JsValue> {
    to_js(landscape_json(length_m, width_m, resolution))
}

#[wasm_bindgen]
pub fn sweep(width_m: f64, l_min_m: f64, l_max_m: f64, points: usize) -> Result<String, JsValue> {
    to_js(sweep_json(width_m, l_min_m, l_max_m, points))
}
