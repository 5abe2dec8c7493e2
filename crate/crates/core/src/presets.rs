//! Built-in scenarios: the standard flights plus the runs behind the
//! turn-gain and flap-lift comparisons.

use crate::controller::ControllerConfig;
use crate::guidance::{FlightPlan, PlanElement};
use crate::scenario::{AccelStep, Scenario};
use crate::sim::{PlantParams, WindConfig};

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub scenario: Scenario,
    pub vehicle: ControllerConfig,
    pub plant: PlantParams,
}

impl Preset {
    fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            vehicle: ControllerConfig::default(),
            plant: PlantParams::default(),
        }
    }
}

pub const NAMES: &[&str] = &[
    "hover",
    "shuttle",
    "polygon",
    "transition",
    "turn-gains-split",
    "turn-gains-equal",
    "flap-lift-off",
    "flap-lift-on",
    "wind-transition",
];

const ALT: f64 = -20.0;

/// Corners of the line-following polygon, North/East metres.
pub const POLYGON: [[f64; 2]; 5] = [
    [0.0, 0.0],
    [250.0, 50.0],
    [300.0, 300.0],
    [100.0, 400.0],
    [-100.0, 200.0],
];

fn hover_at(n: f64, e: f64, duration: Option<f64>) -> PlanElement {
    PlanElement::Hover {
        point: [n, e, ALT],
        duration,
    }
}

fn named(name: &str, duration: f64, plan: Vec<PlanElement>) -> Scenario {
    Scenario {
        name: name.into(),
        duration,
        plan: FlightPlan { elements: plan },
        ..Scenario::default()
    }
}

/// Two laps of the polygon.
pub fn polygon_plan(speed: f64) -> Vec<PlanElement> {
    (0..POLYGON.len() * 2)
        .map(|k| {
            let a = POLYGON[k % POLYGON.len()];
            let b = POLYGON[(k + 1) % POLYGON.len()];
            PlanElement::Line {
                start: [a[0], a[1], ALT],
                end: [b[0], b[1], ALT],
                speed,
            }
        })
        .collect()
}

/// Back-and-forth lines along North; every element change is a ~180° turn.
pub fn reversal_plan(length: f64, speed: f64) -> Vec<PlanElement> {
    let a = [0.0, 0.0, ALT];
    let b = [length, 0.0, ALT];
    (0..4)
        .map(|k| {
            let (start, end) = if k % 2 == 0 { (a, b) } else { (b, a) };
            PlanElement::Line { start, end, speed }
        })
        .collect()
}

fn turn_gains(name: &str, pitch_gain: f64) -> Preset {
    let mut p = Preset::new(named(name, 60.0, reversal_plan(250.0, 16.0)));
    p.vehicle.gains.k_eta_fast = [7.6, pitch_gain, 7.6];
    p
}

/// A 0.5 s North acceleration pulse from hover.
fn flap_lift(name: &str, compensated: bool) -> Preset {
    let mut scenario = named(name, 12.0, Vec::new());
    scenario.accel_steps = vec![
        AccelStep {
            t: 1.0,
            accel: [1.0, 0.0, 0.0],
            hold_altitude: false,
        },
        AccelStep {
            t: 1.5,
            accel: [0.0, 0.0, 0.0],
            hold_altitude: false,
        },
    ];
    let mut p = Preset::new(scenario);
    p.vehicle.compensator.enabled = compensated;
    p
}

pub fn preset(name: &str) -> Option<Preset> {
    let p = match name {
        "hover" => Preset::new(named(name, 30.0, vec![hover_at(0.0, 0.0, None)])),
        "shuttle" => Preset::new(named(
            name,
            90.0,
            vec![
                hover_at(0.0, 0.0, Some(3.0)),
                PlanElement::Goto {
                    point: [0.0, 250.0, ALT],
                    speed: 16.0,
                },
                hover_at(0.0, 250.0, Some(5.0)),
                PlanElement::Goto {
                    point: [0.0, 0.0, ALT],
                    speed: 16.0,
                },
                hover_at(0.0, 0.0, None),
            ],
        )),
        "polygon" => Preset::new(named(name, 120.0, polygon_plan(16.0))),
        "transition" => {
            let mut s = named(name, 30.0, Vec::new());
            s.accel_steps = vec![
                AccelStep {
                    t: 2.0,
                    accel: [1.0, 0.0, 0.0],
                    hold_altitude: true,
                },
                AccelStep {
                    t: 20.0,
                    accel: [0.0, 0.0, 0.0],
                    hold_altitude: true,
                },
            ];
            Preset::new(s)
        }
        "turn-gains-split" => turn_gains(name, 13.3),
        "turn-gains-equal" => turn_gains(name, 7.6),
        "flap-lift-off" => flap_lift(name, false),
        "flap-lift-on" => flap_lift(name, true),
        "wind-transition" => {
            let mut s = named(
                name,
                60.0,
                vec![
                    hover_at(0.0, 0.0, Some(3.0)),
                    PlanElement::Goto {
                        point: [400.0, 0.0, ALT],
                        speed: 18.0,
                    },
                    hover_at(400.0, 0.0, None),
                ],
            );
            s.wind = WindConfig::constant(5.0, 45.0);
            Preset::new(s)
        }
        _ => return None,
    };
    Some(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves_and_carries_its_name() {
        for name in NAMES {
            assert_eq!(preset(name).unwrap().scenario.name, *name);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn shuttle_waypoints_are_far_apart_east() {
        let p = preset("shuttle").unwrap();
        let east: Vec<f64> = p
            .scenario
            .plan
            .elements
            .iter()
            .filter_map(|e| match e {
                PlanElement::Goto { point, .. } => Some(point[1]),
                _ => None,
            })
            .collect();
        assert!(east.iter().any(|e| *e > 200.0));
    }

    #[test]
    fn turn_presets_differ_only_in_pitch_gain() {
        let a = preset("turn-gains-split").unwrap();
        let b = preset("turn-gains-equal").unwrap();
        assert_eq!(a.vehicle.gains.k_eta_fast, [7.6, 13.3, 7.6]);
        assert_eq!(b.vehicle.gains.k_eta_fast, [7.6, 7.6, 7.6]);
        assert_eq!(a.scenario.plan, b.scenario.plan);
    }
}
