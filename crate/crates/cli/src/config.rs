//! Run configuration: strict TOML with default fallbacks.
//!
//! Keys may be written sectioned (`[beam]` then `length_m = ...`) or dotted
//! (`beam.length_m = ...`). Unknown keys are errors.

use serde::{Deserialize, Serialize};
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use nwcell::dynamics::DynamicsParams;
use nwcell::modes::{MAX_MODES, MIN_QUADRATURE};
use nwcell::{BeamSpec, CrossSection, ElectrodeLayout, EnergyModel, MaterialSpec, SectionKind};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    #[serde(rename = "E_pa")]
    pub e_pa: f64,
    pub residual_stress_pa: f64,
    pub density_kg_m3: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let m = MaterialSpec::thermal_oxide();
        Self {
            e_pa: m.youngs_modulus,
            residual_stress_pa: m.residual_stress,
            density_kg_m3: m.density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub length_m: f64,
    pub width_top_m: f64,
    pub width_bottom_m: f64,
    pub thickness_m: f64,
    pub gap_m: f64,
    pub electrode_layout: ElectrodeLayout,
    pub contact_margin_m: f64,
    pub coverage_efficiency: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        let b = BeamSpec::with_length(12e-6);
        Self {
            length_m: b.length,
            width_top_m: b.cross_section.width_top,
            width_bottom_m: b.cross_section.width_bottom,
            thickness_m: b.cross_section.height,
            gap_m: b.gap,
            electrode_layout: b.electrode_layout,
            contact_margin_m: b.contact_margin,
            coverage_efficiency: b.coverage_efficiency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mode_count: usize,
    pub quadrature_points: usize,
    pub newton_tol: f64,
    pub v_max: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode_count: 4,
            quadrature_points: nwcell::modes::DEFAULT_QUADRATURE,
            newton_tol: nwcell::statics::DEFAULT_NEWTON_TOL,
            v_max: nwcell::estatics::DEFAULT_V_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub quality_factor: f64,
    pub rel_tol: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let d = DynamicsParams::default();
        Self {
            quality_factor: d.quality_factor,
            rel_tol: d.rel_tol,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub material: MaterialConfig,
    pub beam: BeamConfig,
    pub solver: SolverConfig,
    pub dynamics: DynamicsConfig,
}

impl RunConfig {
    pub fn material_spec(&self) -> MaterialSpec {
        MaterialSpec {
            youngs_modulus: self.material.e_pa,
            density: self.material.density_kg_m3,
            residual_stress: self.material.residual_stress_pa,
            ..MaterialSpec::thermal_oxide()
        }
    }

    pub fn cross_section(&self) -> CrossSection {
        let b = &self.beam;
        CrossSection {
            kind: if b.width_top_m == b.width_bottom_m {
                SectionKind::Rectangular
            } else {
                SectionKind::Trapezoidal
            },
            width_top: b.width_top_m,
            width_bottom: b.width_bottom_m,
            height: b.thickness_m,
        }
    }

    pub fn beam_spec(&self) -> BeamSpec {
        let b = &self.beam;
        BeamSpec {
            length: b.length_m,
            cross_section: self.cross_section(),
            gap: b.gap_m,
            electrode_layout: b.electrode_layout,
            contact_margin: b.contact_margin_m,
            coverage_efficiency: b.coverage_efficiency,
        }
    }

    pub fn dynamics_params(&self) -> DynamicsParams {
        DynamicsParams {
            quality_factor: self.dynamics.quality_factor,
            rel_tol: self.dynamics.rel_tol,
            ..DynamicsParams::default()
        }
    }

    pub fn model(&self) -> nwcell::Result<EnergyModel> {
        Ok(EnergyModel::with_quadrature(
            self.beam_spec(),
            self.material_spec(),
            self.solver.mode_count,
            self.solver.quadrature_points,
        )?
        .with_newton_tol(self.solver.newton_tol))
    }

    /// Same config with a different beam length.
    pub fn with_length(&self, length: f64) -> Self {
        let mut c = self.clone();
        c.beam.length_m = length;
        c
    }

    /// Check every invariant; the error names the offending key path.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let s = &self.solver;
        if s.mode_count == 0 || s.mode_count > MAX_MODES {
            return Err(("solver.mode_count".into(), format!("must lie in 1..={MAX_MODES}")));
        }
        if s.quadrature_points < MIN_QUADRATURE || s.quadrature_points % 4 != 0 {
            return Err((
                "solver.quadrature_points".into(),
                format!("must be a multiple of 4 and at least {MIN_QUADRATURE}"),
            ));
        }
        if !(s.newton_tol > 0.0 && s.newton_tol < 1e-3) {
            return Err(("solver.newton_tol".into(), "must lie in (0, 1e-3)".into()));
        }
        if !(s.v_max > 0.0 && s.v_max.is_finite()) {
            return Err(("solver.v_max".into(), "must be positive and finite".into()));
        }
        let core = |e: nwcell::Error| match e {
            nwcell::Error::InvalidParameter { name, reason } => (key_for(name).to_string(), reason),
            other => ("config".to_string(), other.to_string()),
        };
        self.material_spec().validate().map_err(core)?;
        self.beam_spec().validate().map_err(core)?;
        self.dynamics_params().validate().map_err(core)?;
        Ok(())
    }
}

/// Config key for a core parameter name.
fn key_for(name: &str) -> &'static str {
    match name {
        "youngs_modulus" => "material.E_pa",
        "density" => "material.density_kg_m3",
        "residual_stress" => "material.residual_stress_pa",
        "length" => "beam.length_m",
        "width_top" => "beam.width_top_m",
        "width_bottom" => "beam.width_bottom_m",
        "height" => "beam.thickness_m",
        "gap" => "beam.gap_m",
        "contact_margin" => "beam.contact_margin_m",
        "coverage_efficiency" => "beam.coverage_efficiency",
        "quality_factor" => "dynamics.quality_factor",
        "rel_tol" => "dynamics.rel_tol",
        _ => "config",
    }
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_with_overrides(text, &[])
}

/// Parse `text`, apply `key=value` overrides, then validate.
pub fn parse_with_overrides(text: &str, sets: &[String]) -> Result<RunConfig, CliError> {
    let located = |key: String, message: String| {
        let line = line_of_key(text, &key);
        CliError::Config { key, line, message }
    };
    let mut table: toml::Table = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_at(text, s.start));
        CliError::Config {
            key: e.span().and_then(|s| key_at(text, s.start)).unwrap_or_default(),
            line,
            message: e.message().to_string(),
        }
    })?;
    let mut overridden = Vec::new();
    for set in sets {
        let (key, value) = set.split_once('=').ok_or_else(|| CliError::Config {
            key: set.clone(),
            line: None,
            message: "override must look like key=value".into(),
        })?;
        let key = key.trim().to_string();
        insert_dotted(&mut table, &key, parse_value(value.trim()))?;
        overridden.push(key);
    }
    let from_override = |key: &str| overridden.iter().any(|k| k == key);

    let merged = toml::to_string(&table).expect("a parsed table serializes");
    let cfg: RunConfig = toml::from_str(&merged).map_err(|e| {
        let key = e.span().and_then(|s| key_at(&merged, s.start)).unwrap_or_default();
        if from_override(&key) {
            CliError::Config {
                line: None,
                message: format!("{} (from --set)", e.message()),
                key,
            }
        } else {
            located(key, e.message().to_string())
        }
    })?;
    cfg.validate().map_err(|(key, message)| {
        if from_override(&key) {
            CliError::Config {
                key,
                line: None,
                message: format!("{message} (from --set)"),
            }
        } else {
            located(key, message)
        }
    })?;
    Ok(cfg)
}

/// Override values are TOML literals; anything that is not one is a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn insert_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config {
            key: key.into(),
            line: None,
            message: format!("`{part}` is not a table"),
        })?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn walk<'a>(
    table: &'a DeTable<'a>,
    prefix: &str,
    visit: &mut dyn FnMut(&str, &Spanned<toml::de::DeString<'a>>, &Spanned<DeValue<'a>>),
) {
    for (k, v) in table.iter() {
        let path = if prefix.is_empty() {
            k.get_ref().to_string()
        } else {
            format!("{prefix}.{}", k.get_ref())
        };
        visit(&path, k, v);
        if let DeValue::Table(t) = v.get_ref() {
            walk(t, &path, visit);
        }
    }
}

/// Dotted path of the innermost key whose entry covers `offset`.
fn key_at(text: &str, offset: usize) -> Option<String> {
    let doc = DeTable::parse(text).ok()?;
    let mut best: Option<(usize, String)> = None;
    walk(doc.get_ref(), "", &mut |path, k, v| {
        let start = k.span().start.min(v.span().start);
        let end = k.span().end.max(v.span().end);
        if (start..=end).contains(&offset) && best.as_ref().is_none_or(|(w, _)| end - start <= *w) {
            best = Some((end - start, path.to_string()));
        }
    });
    best.map(|(_, p)| p)
}

/// 1-based line of `key` in `text`, if it is written there.
pub fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let doc = DeTable::parse(text).ok()?;
    let mut found = None;
    walk(doc.get_ref(), "", &mut |path, k, _| {
        if path == key {
            found = Some(line_at(text, k.span().start));
        }
    });
    found
}

/// Effective config as TOML, for embedding in outputs.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}
