//! TOML configuration files. Every file carries `schema_version` at the top
//! level and one table holding the payload:
//!
//! - vehicle file: `[vehicle]` with the controller configuration;
//! - plant file: `[plant]` with the synthetic plant coefficients;
//! - scenario file: `[scenario]` plus optional `plant`, `vehicle` and
//!   `output_dir` paths, relative to the scenario file.
//!
//! Omitted fields take their defaults; unknown fields are errors.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::ConfigError;
use crate::guidance::PlanElement;
use crate::presets::Preset;
use crate::scenario::Scenario;
use crate::sim::PlantParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleFile {
    pub schema_version: u32,
    #[serde(default)]
    pub vehicle: ControllerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub schema_version: u32,
    #[serde(default)]
    pub plant: PlantParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Scenario,
}

/// A scenario with every referenced file loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub preset: Preset,
    pub output_dir: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    // the version is checked first so an old file gets a version error
    // rather than a field error
    #[derive(Deserialize)]
    struct Header {
        schema_version: Option<toml::Value>,
    }
    let display = path.display().to_string();
    let header: Header = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: display.clone(),
        message: e.to_string(),
    })?;
    match header.schema_version {
        None => {
            return Err(ConfigError::Invalid {
                path: display,
                field: "schema_version".into(),
                message: "missing".into(),
            })
        }
        Some(toml::Value::Integer(v)) if v == i64::from(SCHEMA_VERSION) => {}
        Some(toml::Value::Integer(v)) => {
            return Err(ConfigError::Schema {
                path: display,
                found: v.clamp(0, i64::from(u32::MAX)) as u32,
                expected: SCHEMA_VERSION,
            })
        }
        Some(_) => {
            return Err(ConfigError::Invalid {
                path: display,
                field: "schema_version".into(),
                message: "must be an integer".into(),
            })
        }
    }
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: display,
        message: e.to_string(),
    })
}

fn invalid(path: &Path, field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.display().to_string(),
        field: field.into(),
        message: message.into(),
    }
}

fn positive(path: &Path, field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(
            path,
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

pub fn validate_vehicle(v: &ControllerConfig, path: &Path) -> Result<(), ConfigError> {
    positive(path, "vehicle.sample_hz", v.sample_hz)?;
    if v.outer_divider == 0 {
        return Err(invalid(path, "vehicle.outer_divider", "must be at least 1"));
    }
    let nyquist = 0.5 * v.sample_hz;
    for (field, hz) in [
        ("vehicle.filters.inner_cutoff_hz", v.filters.inner_cutoff_hz),
        ("vehicle.filters.outer_cutoff_hz", v.filters.outer_cutoff_hz),
        (
            "vehicle.filters.lateral_accel_cutoff_hz",
            v.filters.lateral_accel_cutoff_hz,
        ),
        ("vehicle.compensator.cutoff_hz", v.compensator.cutoff_hz),
    ] {
        positive(path, field, hz)?;
        if hz >= nyquist {
            return Err(invalid(path, field, format!("must be below {nyquist} Hz")));
        }
    }
    positive(path, "vehicle.outer.mass", v.outer.mass)?;
    if v.allocation
        .wv
        .iter()
        .chain(&v.allocation.wu)
        .any(|w| !(w.is_finite() && *w > 0.0))
    {
        return Err(invalid(
            path,
            "vehicle.allocation",
            "weights must be positive",
        ));
    }
    if !(v.allocation.gamma.is_finite() && v.allocation.gamma >= 0.0) {
        return Err(invalid(
            path,
            "vehicle.allocation.gamma",
            "must be non-negative",
        ));
    }
    if v.gains.switch_down > v.gains.switch_up {
        return Err(invalid(
            path,
            "vehicle.gains.switch_down",
            "must not exceed switch_up",
        ));
    }
    Ok(())
}

pub fn validate_plant(p: &PlantParams, path: &Path) -> Result<(), ConfigError> {
    positive(path, "plant.mass", p.mass)?;
    for (i, j) in p.inertia.iter().enumerate() {
        positive(path, &format!("plant.inertia[{i}]"), *j)?;
    }
    positive(path, "plant.motor_thrust_max", p.motor_thrust_max)?;
    positive(path, "plant.air_density", p.air_density)?;
    Ok(())
}

pub fn validate_scenario(s: &Scenario, path: &Path) -> Result<(), ConfigError> {
    positive(path, "scenario.duration", s.duration)?;
    for (k, e) in s.plan.elements.iter().enumerate() {
        let field = format!("scenario.plan.elements[{k}]");
        match e {
            PlanElement::Hover { duration, .. } => {
                if let Some(d) = duration {
                    positive(path, &format!("{field}.duration"), *d)?;
                }
            }
            PlanElement::Goto { speed, .. } => positive(path, &format!("{field}.speed"), *speed)?,
            PlanElement::Line { start, end, speed } => {
                positive(path, &format!("{field}.speed"), *speed)?;
                if start[..2] == end[..2] {
                    return Err(invalid(path, &field, "line start and end coincide"));
                }
            }
        }
    }
    for (k, a) in s.accel_steps.iter().enumerate() {
        if !(a.t.is_finite() && a.accel.iter().all(|x| x.is_finite())) {
            return Err(invalid(
                path,
                &format!("scenario.accel_steps[{k}]"),
                "must be finite",
            ));
        }
    }
    Ok(())
}

pub fn load_vehicle(path: &Path) -> Result<ControllerConfig, ConfigError> {
    let f: VehicleFile = parse(&read(path)?, path)?;
    validate_vehicle(&f.vehicle, path)?;
    Ok(f.vehicle)
}

pub fn load_plant(path: &Path) -> Result<PlantParams, ConfigError> {
    let f: PlantFile = parse(&read(path)?, path)?;
    validate_plant(&f.plant, path)?;
    Ok(f.plant)
}

/// Load a scenario and every file it references. Nothing is simulated.
pub fn load_scenario(path: &Path) -> Result<ResolvedScenario, ConfigError> {
    let f: ScenarioFile = parse(&read(path)?, path)?;
    validate_scenario(&f.scenario, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let vehicle = f
        .vehicle
        .map(|p| load_vehicle(&base.join(p)))
        .transpose()?
        .unwrap_or_default();
    let plant = f
        .plant
        .map(|p| load_plant(&base.join(p)))
        .transpose()?
        .unwrap_or_default();
    Ok(ResolvedScenario {
        preset: Preset {
            scenario: f.scenario,
            vehicle,
            plant,
        },
        output_dir: f.output_dir.map(|p| base.join(p)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigKind {
    Scenario,
    Vehicle,
    Plant,
}

/// Check any config file, telling the kind apart by its payload table.
pub fn validate_file(path: &Path) -> Result<ConfigKind, ConfigError> {
    let text = read(path)?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let is_table = |k: &str| table.get(k).is_some_and(toml::Value::is_table);
    if is_table("scenario") {
        load_scenario(path).map(|_| ConfigKind::Scenario)
    } else if is_table("vehicle") {
        load_vehicle(path).map(|_| ConfigKind::Vehicle)
    } else if is_table("plant") {
        load_plant(path).map(|_| ConfigKind::Plant)
    } else {
        Err(invalid(
            path,
            "(top level)",
            "expected a [scenario], [vehicle] or [plant] table",
        ))
    }
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("configuration types serialize to TOML")
}

pub fn vehicle_to_toml(v: &ControllerConfig) -> String {
    to_toml(&VehicleFile {
        schema_version: SCHEMA_VERSION,
        vehicle: *v,
    })
}

pub fn plant_to_toml(p: &PlantParams) -> String {
    to_toml(&PlantFile {
        schema_version: SCHEMA_VERSION,
        plant: *p,
    })
}

/// Scenario file referring to vehicle and plant files by path.
pub fn scenario_to_toml(s: &Scenario, vehicle: Option<&Path>, plant: Option<&Path>) -> String {
    to_toml(&ScenarioFile {
        schema_version: SCHEMA_VERSION,
        plant: plant.map(Path::to_path_buf),
        vehicle: vehicle.map(Path::to_path_buf),
        output_dir: None,
        scenario: s.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{preset, NAMES};

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn presets_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in NAMES {
            let p = preset(name).unwrap();
            write(dir.path(), "v.toml", &vehicle_to_toml(&p.vehicle));
            write(dir.path(), "p.toml", &plant_to_toml(&p.plant));
            let s = write(
                dir.path(),
                "s.toml",
                &scenario_to_toml(
                    &p.scenario,
                    Some(Path::new("v.toml")),
                    Some(Path::new("p.toml")),
                ),
            );
            let back = load_scenario(&s).unwrap();
            assert_eq!(back.preset, p, "{name}");
        }
    }

    #[test]
    fn minimal_file_takes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.toml", "schema_version = 1\n");
        let r = load_scenario(&s).unwrap();
        assert_eq!(r.preset.scenario, Scenario::default());
        assert_eq!(r.preset.vehicle, ControllerConfig::default());
    }

    #[test]
    fn unknown_field_reports_line_and_name() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.toml",
            "schema_version = 1\n[scenario]\nduration = 5.0\nspeeed = 3\n",
        );
        let msg = load_scenario(&s).unwrap_err().to_string();
        assert!(msg.contains("line 4") && msg.contains("speeed"), "{msg}");
    }

    #[test]
    fn wrong_type_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.toml",
            "schema_version = 1\n\n[scenario]\nduration = \"long\"\n",
        );
        let msg = load_scenario(&s).unwrap_err().to_string();
        assert!(msg.contains("line 4") && msg.contains("duration"), "{msg}");
    }

    #[test]
    fn version_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.toml", "schema_version = 2\n");
        assert!(matches!(
            load_scenario(&s),
            Err(ConfigError::Schema {
                found: 2,
                expected: 1,
                ..
            })
        ));
        let s = write(dir.path(), "s.toml", "[scenario]\n");
        assert!(
            matches!(load_scenario(&s), Err(ConfigError::Invalid { field, .. }) if field == "schema_version")
        );
    }

    #[test]
    fn invalid_values_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.toml",
            "schema_version = 1\n[scenario]\nduration = -1.0\n",
        );
        assert!(
            matches!(load_scenario(&s), Err(ConfigError::Invalid { field, .. }) if field == "scenario.duration")
        );
        let v = write(
            dir.path(),
            "v.toml",
            "schema_version = 1\n[vehicle.filters]\ninner_cutoff_hz = 400.0\n",
        );
        assert!(
            matches!(load_vehicle(&v), Err(ConfigError::Invalid { field, .. }) if field == "vehicle.filters.inner_cutoff_hz")
        );
    }

    #[test]
    fn missing_referenced_file_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.toml",
            "schema_version = 1\nplant = \"absent.toml\"\n",
        );
        assert!(matches!(load_scenario(&s), Err(ConfigError::Io { .. })));
    }

    #[test]
    fn validate_file_tells_kinds_apart() {
        let dir = tempfile::tempdir().unwrap();
        let p = preset("hover").unwrap();
        let v = write(dir.path(), "v.toml", &vehicle_to_toml(&p.vehicle));
        let pl = write(dir.path(), "p.toml", &plant_to_toml(&p.plant));
        let s = write(
            dir.path(),
            "s.toml",
            &scenario_to_toml(
                &p.scenario,
                Some(Path::new("v.toml")),
                Some(Path::new("p.toml")),
            ),
        );
        assert_eq!(validate_file(&v).unwrap(), ConfigKind::Vehicle);
        assert_eq!(validate_file(&pl).unwrap(), ConfigKind::Plant);
        assert_eq!(validate_file(&s).unwrap(), ConfigKind::Scenario);
        let bare = write(dir.path(), "b.toml", "schema_version = 1\n");
        assert!(matches!(
            validate_file(&bare),
            Err(ConfigError::Invalid { .. })
        ));
    }
}
