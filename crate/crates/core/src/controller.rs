//! The 500 Hz control tick: guidance, outer INDI, heading reference, inner
//! INDI and allocation, wired in the order the signals flow.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::allocation::WlsSettings;
use crate::attitude::{
    inner_indi_step, rate_reference, virtual_control, AngularAccelEstimator, GainSchedule,
    GainSelector, ThrustFloor,
};
use crate::effectiveness::{build_outer_g, ScheduleInputs, ScheduleParams};
use crate::error::FilterError;
use crate::filters::{ActuatorModel, ActuatorParams, Butter2Lowpass};
use crate::frames::{euler_zxy_from_quat_with_hint, quat_error, EulerZXY, Quaternion};
use crate::guidance::{FlightPlan, Guidance, GuidanceParams, NavState, TurnMode};
use crate::sideslip::{estimate_beta, heading_rate_ref, HeadingRef, SideslipParams};
use crate::sim::SensorSnapshot;
use crate::types::{ActuatorSet, Airspeed};
use crate::velocity::{
    outer_indi_step, reference_attitude, FlapLiftCompensator, OuterCommand, OuterParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompensatorConfig {
    pub enabled: bool,
    /// Body-X acceleration per unit of (−u_f0 + u_f1), m/s².
    pub g_flap: f64,
    pub cutoff_hz: f64,
}

impl Default for CompensatorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            g_flap: 1.9e-4,
            cutoff_hz: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Gyro, inner-loop actuator replica and thrust feedback.
    pub inner_cutoff_hz: f64,
    /// Acceleration, attitude and outer-loop actuator replica.
    pub outer_cutoff_hz: f64,
    pub lateral_accel_cutoff_hz: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            inner_cutoff_hz: 8.0,
            outer_cutoff_hz: 3.0,
            lateral_accel_cutoff_hz: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorReplicaConfig {
    pub flap: ActuatorParams,
    pub motor: ActuatorParams,
}

impl Default for ActuatorReplicaConfig {
    fn default() -> Self {
        Self {
            flap: ActuatorParams::flap(),
            motor: ActuatorParams::motor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub sample_hz: f64,
    /// Guidance and the outer loop run every `outer_divider`-th tick and
    /// hold their output in between; filters always run at `sample_hz`.
    pub outer_divider: u32,
    pub filters: FilterConfig,
    pub schedule: ScheduleParams,
    pub gains: GainSchedule,
    pub thrust_floor: ThrustFloor,
    pub allocation: WlsSettings,
    pub outer: OuterParams,
    pub compensator: CompensatorConfig,
    pub sideslip: SideslipParams,
    pub guidance: GuidanceParams,
    pub actuators: ActuatorReplicaConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            sample_hz: 500.0,
            outer_divider: 1,
            filters: FilterConfig::default(),
            schedule: ScheduleParams::default(),
            gains: GainSchedule::default(),
            thrust_floor: ThrustFloor::default(),
            allocation: WlsSettings::default(),
            outer: OuterParams::default(),
            compensator: CompensatorConfig::default(),
            sideslip: SideslipParams::default(),
            guidance: GuidanceParams::default(),
            actuators: ActuatorReplicaConfig::default(),
        }
    }
}

/// Where the acceleration reference comes from on a given tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Guidance,
    /// Fixed NED acceleration reference, m/s².
    Accel(Vector3<f64>),
    /// Fixed North and East acceleration; Down holds the given altitude
    /// (NED Down coordinate, m) with the guidance vertical gains.
    AccelHoldingAltitude(Vector3<f64>, f64),
}

/// Everything computed during one tick, for logging and inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub u_c: ActuatorSet,
    pub u_f: ActuatorSet,
    pub eta: EulerZXY,
    pub eta_ref: EulerZXY,
    pub thrust_ref: f64,
    pub thrust_f: f64,
    pub omega_f: Vector3<f64>,
    pub omega_dot_f: Vector3<f64>,
    pub omega_ref: Vector3<f64>,
    pub nu: Vector4<f64>,
    pub accel_ref: Vector3<f64>,
    pub accel_f: Vector3<f64>,
    pub accel_comp: Vector3<f64>,
    pub body_accel_f: Vector3<f64>,
    pub flap_lift_term: f64,
    pub f_y_f: f64,
    pub beta_hat: f64,
    pub psi_dot_ref: f64,
    pub velocity_ref: Vector3<f64>,
    pub mode: TurnMode,
    pub element: usize,
    pub cross_track: f64,
    pub airspeed: Airspeed,
    pub fast_gains: bool,
    pub motor_floor: f64,
    pub saturated: [bool; 4],
    pub thrust_pitch_active: bool,
    pub allocation_converged: bool,
    pub near_singular: bool,
    pub outer_clamped: bool,
    pub fault: bool,
}

fn lowpass3(c: f64, fs: f64) -> [Butter2Lowpass; 3] {
    std::array::from_fn(|_| Butter2Lowpass::new(c, fs))
}

fn step3(f: &mut [Butter2Lowpass; 3], x: Vector3<f64>) -> Result<Vector3<f64>, FilterError> {
    Ok(Vector3::new(
        f[0].step(x.x)?,
        f[1].step(x.y)?,
        f[2].step(x.z)?,
    ))
}

fn step4(f: &mut [Butter2Lowpass; 4], x: &ActuatorSet) -> Result<ActuatorSet, FilterError> {
    let mut out = ActuatorSet::ZERO;
    for i in 0..4 {
        out[i] = f[i].step(x[i])?;
    }
    Ok(out)
}

/// The full cascade with its filter state. One instance owns one vehicle.
#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    guidance: Guidance,
    gains: GainSelector,
    rate_est: AngularAccelEstimator,
    replicas: [ActuatorModel; 4],
    u_inner_lp: [Butter2Lowpass; 4],
    u_outer_lp: [Butter2Lowpass; 4],
    specific_force_lp: Butter2Lowpass,
    accel_lp: [Butter2Lowpass; 3],
    body_accel_lp: [Butter2Lowpass; 3],
    attitude_lp: [Butter2Lowpass; 3],
    f_y_lp: Butter2Lowpass,
    compensator: FlapLiftCompensator,
    heading: HeadingRef,
    last_command: ActuatorSet,
    last_psi: f64,
    ticks: u64,
    held_outer: Option<OuterHold>,
    fault: bool,
}

/// Outer-loop results reused on ticks the divider skips.
#[derive(Debug, Clone, Copy)]
struct OuterHold {
    accel_ref: Vector3<f64>,
    velocity_ref: Vector3<f64>,
    cross_track: f64,
    outer: OuterCommand,
}

impl Controller {
    /// `u0` is the actuator state at start; `psi0` the initial heading.
    pub fn new(config: ControllerConfig, plan: FlightPlan, u0: ActuatorSet, psi0: f64) -> Self {
        let fs = config.sample_hz;
        let f = config.filters;
        let replicas = std::array::from_fn(|i| {
            let p = if i < 2 {
                config.actuators.flap
            } else {
                config.actuators.motor
            };
            ActuatorModel::new(p, fs, u0[i])
        });
        Self {
            guidance: Guidance::new(config.guidance, plan),
            gains: GainSelector::new(config.gains),
            rate_est: AngularAccelEstimator::new(f.inner_cutoff_hz, fs),
            replicas,
            u_inner_lp: std::array::from_fn(|_| Butter2Lowpass::new(f.inner_cutoff_hz, fs)),
            u_outer_lp: std::array::from_fn(|_| Butter2Lowpass::new(f.outer_cutoff_hz, fs)),
            specific_force_lp: Butter2Lowpass::new(f.inner_cutoff_hz, fs),
            accel_lp: lowpass3(f.outer_cutoff_hz, fs),
            body_accel_lp: lowpass3(f.outer_cutoff_hz, fs),
            attitude_lp: lowpass3(f.outer_cutoff_hz, fs),
            f_y_lp: Butter2Lowpass::new(f.lateral_accel_cutoff_hz, fs),
            compensator: FlapLiftCompensator::new(
                config.compensator.g_flap,
                config.compensator.cutoff_hz,
                fs,
                config.compensator.enabled,
            ),
            heading: HeadingRef::new(psi0),
            last_command: u0,
            last_psi: psi0,
            ticks: 0,
            held_outer: None,
            fault: false,
            config,
        }
    }

    pub fn guidance(&self) -> &Guidance {
        &self.guidance
    }

    pub fn heading_ref(&self) -> f64 {
        self.heading.psi_ref
    }

    pub fn has_fault(&self) -> bool {
        self.fault
    }

    /// Run one tick. On a non-finite intermediate the previous command is held
    /// and the fault flag latches.
    pub fn tick(&mut self, s: &SensorSnapshot, reference: Reference) -> TickOutput {
        match self.try_tick(s, reference) {
            Some(out) => {
                self.last_command = out.u_c;
                out
            }
            None => {
                self.fault = true;
                self.fault_output(s)
            }
        }
    }

    fn fault_output(&self, s: &SensorSnapshot) -> TickOutput {
        let eta = euler_zxy_from_quat_with_hint(s.attitude, self.last_psi);
        let nan3 = Vector3::repeat(f64::NAN);
        TickOutput {
            u_c: self.last_command,
            u_f: self.last_command,
            eta,
            eta_ref: eta,
            thrust_ref: f64::NAN,
            thrust_f: f64::NAN,
            omega_f: nan3,
            omega_dot_f: nan3,
            omega_ref: nan3,
            nu: Vector4::repeat(f64::NAN),
            accel_ref: nan3,
            accel_f: nan3,
            accel_comp: nan3,
            body_accel_f: nan3,
            flap_lift_term: f64::NAN,
            f_y_f: f64::NAN,
            beta_hat: f64::NAN,
            psi_dot_ref: f64::NAN,
            velocity_ref: nan3,
            mode: self.guidance.mode(),
            element: self.guidance.element_index(),
            cross_track: f64::NAN,
            airspeed: s.airspeed,
            fast_gains: self.gains.is_fast(),
            motor_floor: self.config.thrust_floor.floor(s.airspeed),
            saturated: [false; 4],
            thrust_pitch_active: false,
            allocation_converged: false,
            near_singular: false,
            outer_clamped: false,
            fault: true,
        }
    }

    fn try_tick(&mut self, s: &SensorSnapshot, reference: Reference) -> Option<TickOutput> {
        let cfg = self.config;
        let dt = 1.0 / cfg.sample_hz;
        let mass = cfg.outer.mass;
        let g = cfg.schedule.gravity;

        let (omega_f, omega_dot_f) = self.rate_est.step(s.gyro).ok()?;

        // replicas of the actuators, fed with the last command
        let mut u_act = ActuatorSet::ZERO;
        for (i, r) in self.replicas.iter_mut().enumerate() {
            u_act[i] = r.step(self.last_command[i]);
        }
        let u_f = step4(&mut self.u_inner_lp, &u_act).ok()?;
        let u_f_outer = step4(&mut self.u_outer_lp, &u_act).ok()?;

        if !s.attitude.is_finite() || !s.accel.iter().all(|v| v.is_finite()) {
            return None;
        }
        let eta = euler_zxy_from_quat_with_hint(s.attitude, self.last_psi);
        self.last_psi = eta.psi;
        let m_nb = s.attitude.rotation_matrix();

        let accel_ned = m_nb * s.accel + Vector3::new(0.0, 0.0, g);
        let accel_f = step3(&mut self.accel_lp, accel_ned).ok()?;
        let body_accel_f = step3(&mut self.body_accel_lp, s.accel).ok()?;
        let att_f = step3(
            &mut self.attitude_lp,
            Vector3::new(eta.phi, eta.theta, eta.psi),
        )
        .ok()?;
        let thrust_f = mass * body_accel_f.z;
        let v_f = Vector3::new(att_f.x, att_f.y, thrust_f);
        let specific_force_z_f = self.specific_force_lp.step(s.accel.z).ok()?;

        self.gains.update(s.airspeed);

        let age = (s.t - s.fix_time).max(0.0);
        let nav = NavState {
            position: s.position + s.velocity * age,
            velocity: s.velocity,
            airspeed: s.airspeed.usable(),
        };
        let accel_comp = self
            .compensator
            .compensate(accel_f, u_f_outer[0], u_f_outer[1], &m_nb)
            .ok()?;

        let sched = &cfg.schedule;
        let run_outer = self.ticks.is_multiple_of(u64::from(cfg.outer_divider.max(1)));
        self.ticks += 1;
        let hold = match self.held_outer {
            Some(h) if !run_outer => h,
            _ => {
                let (accel_ref, velocity_ref, cross_track) = match reference {
                    Reference::Guidance => {
                        let out = self.guidance.step(s.t, &nav);
                        (out.accel_ref, out.velocity_ref, out.cross_track)
                    }
                    Reference::Accel(a) => (a, Vector3::zeros(), 0.0),
                    Reference::AccelHoldingAltitude(a, down) => {
                        let gp = &cfg.guidance;
                        let a_d = ((down - nav.position.z) * gp.k_z - nav.velocity.z) * gp.k_z_dot;
                        let a_d = a_d.clamp(-gp.accel_v_max, gp.accel_v_max);
                        (Vector3::new(a.x, a.y, a_d), Vector3::zeros(), 0.0)
                    }
                };

                let outer_g = build_outer_g(
                    eta,
                    sched.thrust_trim(eta.theta, mass),
                    sched.lift_trim(eta.theta, eta.phi, mass),
                    sched.lift_slope(eta.theta, s.airspeed, mass),
                );
                let outer = outer_indi_step(accel_ref, accel_comp, v_f, &outer_g, &cfg.outer);
                OuterHold {
                    accel_ref,
                    velocity_ref,
                    cross_track,
                    outer,
                }
            }
        };
        self.held_outer = Some(hold);
        let OuterHold {
            accel_ref,
            velocity_ref,
            cross_track,
            outer,
        } = hold;
        let (phi_ref, theta_ref, thrust_ref) = (outer.v.x, outer.v.y, outer.v.z);

        let f_y_f = self.f_y_lp.step(s.accel.y).ok()?;
        let beta_hat = estimate_beta(f_y_f, cfg.sideslip.c2, cfg.sideslip.b2);
        let psi_dot_ref = heading_rate_ref(
            phi_ref,
            theta_ref,
            s.airspeed.usable(),
            beta_hat,
            &cfg.sideslip,
        );
        let psi_ref = self.heading.step(psi_dot_ref, dt);

        let q_ref: Quaternion = reference_attitude(phi_ref, theta_ref, psi_ref);
        let q_err = quat_error(q_ref, s.attitude);
        let omega_ref = rate_reference(q_err, self.gains.k_eta());
        let thrust_increment = thrust_ref / mass - specific_force_z_f;
        let nu = virtual_control(omega_ref, s.gyro, self.gains.k_omega(), thrust_increment);

        let inner_g = sched.build_inner_g(&ScheduleInputs {
            theta: eta.theta,
            airspeed: s.airspeed,
            u_f,
        });
        let motor_floor = cfg.thrust_floor.floor(s.airspeed);
        let cmd = inner_indi_step(u_f, omega_dot_f, nu, &inner_g, motor_floor, &cfg.allocation)?;
        if !cmd.u_c.is_finite() || !accel_comp.iter().all(|v| v.is_finite()) {
            return None;
        }

        Some(TickOutput {
            u_c: cmd.u_c,
            u_f,
            eta,
            eta_ref: EulerZXY::new(phi_ref, theta_ref, psi_ref),
            thrust_ref,
            thrust_f,
            omega_f,
            omega_dot_f,
            omega_ref,
            nu,
            accel_ref,
            accel_f,
            accel_comp,
            body_accel_f,
            flap_lift_term: self.compensator.last_term(),
            f_y_f,
            beta_hat,
            psi_dot_ref,
            velocity_ref,
            mode: self.guidance.mode(),
            element: self.guidance.element_index(),
            cross_track,
            airspeed: s.airspeed,
            fast_gains: self.gains.is_fast(),
            motor_floor,
            saturated: std::array::from_fn(|i| cmd.allocation.saturated(i)),
            thrust_pitch_active: inner_g.thrust_pitch_active,
            allocation_converged: cmd.allocation.converged,
            near_singular: outer.near_singular,
            outer_clamped: outer.clamped,
            fault: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::quat_from_euler_zxy;
    use crate::guidance::PlanElement;
    use crate::sim::{
        hover_motor_command, Plant, PlantParams, RigidBody, SensorConfig, SensorSuite,
    };

    fn hover_plan() -> FlightPlan {
        FlightPlan {
            elements: vec![PlanElement::Hover {
                point: [0.0, 0.0, -10.0],
                duration: None,
            }],
        }
    }

    fn closed_loop(
        seconds: f64,
        sensors: SensorConfig,
        offset: Vector3<f64>,
    ) -> (Plant, Controller) {
        let params = PlantParams::default();
        let hover = hover_motor_command(&params);
        let u0 = ActuatorSet::new(0.0, 0.0, hover, hover);
        let body = RigidBody::at_rest(Vector3::new(0.0, 0.0, -10.0) + offset, Quaternion::IDENTITY);
        let mut plant = Plant::new(params, body, u0, 0.002);
        let mut ctrl = Controller::new(ControllerConfig::default(), hover_plan(), u0, 0.0);
        let mut suite = SensorSuite::new(sensors, 3);
        let wind = Vector3::zeros();
        let n = (seconds * 500.0).round() as usize;
        for _ in 0..n {
            let snap = suite.sense(&plant.truth(wind));
            let out = ctrl.tick(&snap, Reference::Guidance);
            plant.step(&out.u_c, wind);
        }
        (plant, ctrl)
    }

    #[test]
    fn holds_hover() {
        let (plant, ctrl) = closed_loop(10.0, SensorConfig::noiseless(), Vector3::zeros());
        assert!(!ctrl.has_fault());
        let err = plant.body.position - Vector3::new(0.0, 0.0, -10.0);
        assert!(err.norm() < 0.1, "drift {err:?}");
        assert!(plant.body.omega.norm() < 0.05);
    }

    #[test]
    fn recovers_from_offset_with_noise() {
        let (plant, ctrl) =
            closed_loop(15.0, SensorConfig::default(), Vector3::new(4.0, -3.0, 2.0));
        assert!(!ctrl.has_fault());
        let err = plant.body.position - Vector3::new(0.0, 0.0, -10.0);
        assert!(err.norm() < 0.5, "offset left {err:?}");
    }

    #[test]
    fn nan_sensor_holds_previous_command() {
        let u0 = ActuatorSet::new(10.0, -10.0, 5000.0, 5000.0);
        let mut ctrl = Controller::new(ControllerConfig::default(), hover_plan(), u0, 0.0);
        let snap = SensorSnapshot {
            t: 0.0,
            gyro: Vector3::new(f64::NAN, 0.0, 0.0),
            accel: Vector3::new(0.0, 0.0, -9.81),
            attitude: quat_from_euler_zxy(EulerZXY::default()),
            airspeed: Airspeed::invalid(),
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            fix_time: 0.0,
        };
        let out = ctrl.tick(&snap, Reference::Guidance);
        assert!(out.fault && ctrl.has_fault());
        assert_eq!(out.u_c, u0);
    }

    #[test]
    fn outer_divider_holds_the_attitude_reference() {
        let params = PlantParams::default();
        let hover = hover_motor_command(&params);
        let u0 = ActuatorSet::new(0.0, 0.0, hover, hover);
        let body = RigidBody::at_rest(Vector3::new(3.0, -2.0, -10.0), Quaternion::IDENTITY);
        let mut plant = Plant::new(params, body, u0, 0.002);
        let config = ControllerConfig {
            outer_divider: 5,
            ..ControllerConfig::default()
        };
        let mut ctrl = Controller::new(config, hover_plan(), u0, 0.0);
        let mut suite = SensorSuite::new(SensorConfig::noiseless(), 3);
        let wind = Vector3::zeros();
        let mut refs = Vec::new();
        for _ in 0..5000 {
            let out = ctrl.tick(&suite.sense(&plant.truth(wind)), Reference::Guidance);
            refs.push(out.accel_ref);
            plant.step(&out.u_c, wind);
        }
        for chunk in refs[..100].chunks(5) {
            assert!(chunk.iter().all(|a| *a == chunk[0]));
        }
        assert!(refs[..100].chunks(5).any(|c| c[0] != refs[0]));
        // still converges to the hover point at 100 Hz
        assert!((plant.body.position - Vector3::new(0.0, 0.0, -10.0)).norm() < 0.5);
        assert!(!ctrl.has_fault());
    }
}
