//! Closed-loop runs: one plant, one controller, one sensor suite and a wind
//! field stepped together at the control rate, plus the summary metrics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::controller::{Controller, ControllerConfig, Reference};
use crate::frames::{quat_from_euler_zxy, EulerZXY};
use crate::guidance::{FlightPlan, TurnMode};
use crate::log::LogRecord;
use crate::sim::{
    hover_motor_command, Plant, PlantParams, RigidBody, SensorConfig, SensorSuite, WindConfig,
};
use crate::types::ActuatorSet;

/// A fixed acceleration reference from `t` on, replacing guidance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelStep {
    pub t: f64,
    /// NED m/s².
    pub accel: [f64; 3],
    /// Replace the Down component with altitude hold at the initial altitude.
    #[serde(default)]
    pub hold_altitude: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// ZXY Euler angles, degrees.
    pub attitude_deg: [f64; 3],
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, -20.0],
            velocity: [0.0; 3],
            attitude_deg: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub seed: u64,
    pub wind: WindConfig,
    pub sensors: SensorConfig,
    pub initial: InitialState,
    pub plan: FlightPlan,
    /// When non-empty, guidance is bypassed from the first step's time on.
    pub accel_steps: Vec<AccelStep>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "hover".into(),
            duration: 30.0,
            seed: 1,
            wind: WindConfig::calm(),
            sensors: SensorConfig::default(),
            initial: InitialState::default(),
            plan: FlightPlan::default(),
            accel_steps: Vec::new(),
        }
    }
}

impl Scenario {
    fn reference_at(&self, t: f64) -> Reference {
        self.accel_steps
            .iter()
            .rev()
            .find(|s| t + 1e-9 >= s.t)
            .map_or(Reference::Guidance, |s| {
                let a = Vector3::from(s.accel);
                if s.hold_altitude {
                    Reference::AccelHoldingAltitude(a, self.initial.position[2])
                } else {
                    Reference::Accel(a)
                }
            })
    }
}

/// Log of a run and, if it was cut short, why.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<LogRecord>,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fault {
    pub t: f64,
    pub what: String,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub attitude: [f64; 4],
    pub omega: [f64; 3],
}

/// Run a scenario to completion or to the first numerical fault.
pub fn run(
    scenario: &Scenario,
    vehicle: &ControllerConfig,
    plant_params: &PlantParams,
) -> RunOutput {
    let dt = 1.0 / vehicle.sample_hz;
    let init = scenario.initial;
    let [phi, theta, psi] = init.attitude_deg.map(f64::to_radians);
    let attitude = quat_from_euler_zxy(EulerZXY::new(phi, theta, psi));
    let body = RigidBody {
        position: Vector3::from(init.position),
        velocity: Vector3::from(init.velocity),
        attitude,
        omega: Vector3::zeros(),
    };
    let hover = hover_motor_command(plant_params);
    let u0 = ActuatorSet::new(0.0, 0.0, hover, hover);
    let mut plant = Plant::new(*plant_params, body, u0, dt);
    let mut ctrl = Controller::new(*vehicle, scenario.plan.clone(), u0, psi);
    let mut sensors = SensorSuite::new(scenario.sensors, scenario.seed);

    let n = (scenario.duration * vehicle.sample_hz).round() as usize;
    let mut records = Vec::with_capacity(n);
    let mut fault = None;
    for k in 0..n {
        let t = k as f64 * dt;
        let wind = scenario.wind.at(t);
        plant.evaluate(wind);
        let snap = sensors.sense(&plant.truth(wind));
        let out = ctrl.tick(&snap, scenario.reference_at(t));
        records.push(LogRecord::from_tick(&snap, &out, &plant, wind));
        let what = if out.fault {
            Some("controller produced a non-finite value")
        } else {
            plant.step(&out.u_c, wind);
            (!plant.body.is_finite()).then_some("plant state diverged")
        };
        if let Some(what) = what {
            let b = plant.body;
            fault = Some(Fault {
                t,
                what: what.into(),
                position: b.position.into(),
                velocity: b.velocity.into(),
                attitude: [b.attitude.w, b.attitude.x, b.attitude.y, b.attitude.z],
                omega: b.omega.into(),
            });
            break;
        }
    }
    RunOutput { records, fault }
}

/// Per-element tracking metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub element: u32,
    pub start: f64,
    pub end: f64,
    pub attitude_rms_deg: f64,
    pub accel_rms: f64,
    pub cross_track_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeChange {
    pub t: f64,
    pub mode: TurnMode,
}

/// Metrics derived from the log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub duration: f64,
    pub phases: Vec<PhaseSummary>,
    /// Fraction of ticks each actuator sat on a bound.
    pub saturation_duty: [f64; 4],
    pub mode_changes: Vec<ModeChange>,
    pub max_altitude_excursion: f64,
    pub pitch_ref_rms_deg: f64,
    pub max_airspeed: f64,
    pub theta_range_deg: [f64; 2],
    pub fault: bool,
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

fn mode_of(code: u8) -> TurnMode {
    if code == TurnMode::FixedWingTurn.code() {
        TurnMode::FixedWingTurn
    } else {
        TurnMode::Direct
    }
}

pub fn summarize(records: &[LogRecord]) -> RunSummary {
    let mut phases: Vec<PhaseSummary> = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || records[i].element != records[start].element {
            let seg = &records[start..i];
            phases.push(PhaseSummary {
                element: seg[0].element,
                start: seg[0].t,
                end: seg[seg.len() - 1].t,
                attitude_rms_deg: rms(seg.iter().map(|r| {
                    let e = ((r.theta - r.theta_ref).powi(2) + (r.phi - r.phi_ref).powi(2)).sqrt();
                    e.to_degrees()
                })),
                accel_rms: rms(seg.iter().map(|r| {
                    let e = Vector3::new(
                        r.accel_ref_n - r.accel_f_n,
                        r.accel_ref_e - r.accel_f_e,
                        r.accel_ref_d - r.accel_f_d,
                    );
                    e.norm()
                })),
                cross_track_rms: rms(seg.iter().map(|r| r.cross_track)),
            });
            start = i;
        }
    }

    let n = records.len().max(1) as f64;
    let saturation_duty = std::array::from_fn(|i| {
        records
            .iter()
            .filter(|r| r.saturation & (1 << i) != 0)
            .count() as f64
            / n
    });

    let mut mode_changes = Vec::new();
    let mut last = None;
    for r in records {
        if last != Some(r.mode) {
            mode_changes.push(ModeChange {
                t: r.t,
                mode: mode_of(r.mode),
            });
            last = Some(r.mode);
        }
    }

    let z0 = records.first().map_or(0.0, |r| r.pos_d);
    RunSummary {
        duration: records.last().map_or(0.0, |r| r.t),
        phases,
        saturation_duty,
        mode_changes,
        max_altitude_excursion: records
            .iter()
            .map(|r| (r.pos_d - z0).abs())
            .fold(0.0, f64::max),
        pitch_ref_rms_deg: pitch_tracking_rms_deg(records, false),
        max_airspeed: records.iter().map(|r| r.airspeed_true).fold(0.0, f64::max),
        theta_range_deg: [
            records
                .iter()
                .map(|r| r.theta.to_degrees())
                .fold(f64::INFINITY, f64::min),
            records
                .iter()
                .map(|r| r.theta.to_degrees())
                .fold(f64::NEG_INFINITY, f64::max),
        ],
        fault: records.iter().any(|r| r.fault != 0),
    }
}

/// RMS of θ_ref − θ in degrees. With `skip_saturated`, ticks where the
/// pitch flaps sit on a bound or the outer command was clipped are left out.
pub fn pitch_tracking_rms_deg(records: &[LogRecord], skip_saturated: bool) -> f64 {
    rms(records
        .iter()
        .filter(|r| !skip_saturated || (r.saturation & 0b11 == 0 && r.outer_clamped == 0))
        .map(|r| (r.theta_ref - r.theta).to_degrees()))
}
