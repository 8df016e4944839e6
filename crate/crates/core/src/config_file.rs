//! TOML configuration files.
//!
//! ```toml
//! [mode_a]
//! frequency = 1001.0
//! decay_rate = 1.0
//! bath_occupation = 0.0      # or: temperature = ...
//!
//! [mode_b]
//! frequency = 1.0
//! decay_rate = 0.05
//! bath_occupation = 1.0
//!
//! [drive]
//! amplitude = 3.0
//! drive_frequency = 1000.0
//!
//! [coupling]
//! kind = "beam_splitter"     # beam_splitter | full | generalized
//! # f_spec = [[1, 1, 1.0]]   # (m, n, coefficient) terms of F(a†, a)
//! # g_prime = 0.01
//! # f_drive = 0.5
//!
//! [units]
//! system = "scaled"          # scaled | si
//! ```
//!
//! `Δ = ω_a − ω_d` follows from `mode_a.frequency` and `drive.drive_frequency`.
//! Unknown sections or keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linearization::FSpec;
use crate::model::{thermal_occupation_in, CouplingKind, DriveParams, ModeParams, SystemConfig, UnitSystem};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMode {
    frequency: f64,
    decay_rate: f64,
    bath_occupation: Option<f64>,
    temperature: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    #[serde(default)]
    amplitude: f64,
    drive_frequency: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawKind {
    BeamSplitter,
    Full,
    Generalized,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoupling {
    kind: RawKind,
    f_spec: Option<Vec<(u32, u32, f64)>>,
    g_prime: Option<f64>,
    f_drive: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawUnitSystem {
    Scaled,
    Si,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUnits {
    system: RawUnitSystem,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode_a: RawMode,
    mode_b: RawMode,
    drive: RawDrive,
    coupling: RawCoupling,
    units: Option<RawUnits>,
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Locates `key` inside `[section]` for diagnostics on semantic errors.
fn key_position(text: &str, section: &str, key: &str) -> (usize, usize) {
    let mut in_section = false;
    let mut section_line = 1;
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            in_section = trimmed.trim_matches(|c| c == '[' || c == ']').trim() == section;
            if in_section {
                section_line = i + 1;
            }
            continue;
        }
        if in_section {
            let name = trimmed.split('=').next().unwrap_or("").trim();
            if name == key {
                let col = line.len() - line.trim_start().len() + 1;
                return (i + 1, col);
            }
        }
    }
    (section_line, 1)
}

fn semantic(text: &str, section: &str, key: &str, message: String) -> Error {
    let (line, column) = key_position(text, section, key);
    Error::Config { line, column, message }
}

fn occupation(text: &str, section: &str, raw: &RawMode, units: UnitSystem) -> Result<(f64, Option<f64>)> {
    match (raw.bath_occupation, raw.temperature) {
        (Some(_), Some(_)) => Err(semantic(
            text,
            section,
            "temperature",
            format!("[{section}] sets both bath_occupation and temperature"),
        )),
        (None, None) => Err(semantic(
            text,
            section,
            "frequency",
            format!("[{section}] needs bath_occupation or temperature"),
        )),
        (Some(n), None) => Ok((n, None)),
        (None, Some(t)) => thermal_occupation_in(units, raw.frequency, t)
            .map(|n| (n, Some(t)))
            .map_err(|e| semantic(text, section, "temperature", format!("{section}.temperature: {e}"))),
    }
}

/// Parses configuration text. Syntax and schema errors carry the line and
/// column of the offending token; invalid values name the field.
pub fn parse_config(text: &str) -> Result<SystemConfig<f64>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        Error::Config {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let units = match raw.units.map(|u| u.system) {
        None | Some(RawUnitSystem::Scaled) => UnitSystem::Scaled,
        Some(RawUnitSystem::Si) => UnitSystem::Si,
    };
    let (nbar_a, temp_a) = occupation(text, "mode_a", &raw.mode_a, units)?;
    let (nbar_b, temp_b) = occupation(text, "mode_b", &raw.mode_b, units)?;

    let c = &raw.coupling;
    let coupling = match c.kind {
        RawKind::BeamSplitter | RawKind::Full => {
            for (key, present) in [
                ("f_spec", c.f_spec.is_some()),
                ("g_prime", c.g_prime.is_some()),
                ("f_drive", c.f_drive.is_some()),
            ] {
                if present {
                    return Err(semantic(
                        text,
                        "coupling",
                        key,
                        format!("coupling.{key} applies only to kind = \"generalized\""),
                    ));
                }
            }
            if let RawKind::BeamSplitter = c.kind {
                CouplingKind::BeamSplitter
            } else {
                CouplingKind::Full
            }
        }
        RawKind::Generalized => {
            let missing = |key: &str| {
                semantic(
                    text,
                    "coupling",
                    "kind",
                    format!("coupling.{key} is required for kind = \"generalized\""),
                )
            };
            let terms = c.f_spec.clone().ok_or_else(|| missing("f_spec"))?;
            let spec = FSpec::new(terms);
            spec.check_hermitian()
                .map_err(|e| semantic(text, "coupling", "f_spec", format!("coupling.f_spec: {e}")))?;
            CouplingKind::Generalized {
                spec,
                f_drive: c.f_drive.ok_or_else(|| missing("f_drive"))?,
                g_prime: c.g_prime.ok_or_else(|| missing("g_prime"))?,
            }
        }
    };

    let config = SystemConfig {
        mode_a: ModeParams {
            frequency: raw.mode_a.frequency,
            decay_rate: raw.mode_a.decay_rate,
            bath_occupation: nbar_a,
        },
        mode_b: ModeParams {
            frequency: raw.mode_b.frequency,
            decay_rate: raw.mode_b.decay_rate,
            bath_occupation: nbar_b,
        },
        drive: DriveParams {
            amplitude: raw.drive.amplitude,
            drive_frequency: raw.drive.drive_frequency,
        },
        coupling,
        units,
        temperature: match (temp_a, temp_b) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        },
    };
    config.validate().map_err(|e| match &e {
        Error::InvalidParameter { field, .. } => {
            let (section, key) = field.split_once('.').unwrap_or(("", field.as_str()));
            let (line, column) = key_position(text, section, key);
            Error::Config {
                line,
                column,
                message: e.to_string(),
            }
        }
        _ => e,
    })?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<SystemConfig<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
