//! Rigid-body plant, wind and sensors for closed-loop simulation.

pub mod aero;
pub mod sensors;
pub mod wind;

use nalgebra::{Matrix3, Vector3};

use crate::filters::ActuatorModel;
use crate::frames::Quaternion;
use crate::types::{ActuatorSet, COMMAND_MAX};

pub use aero::{aero_forces, AeroOutput, PlantParams};
pub use sensors::{SensorConfig, SensorSnapshot, SensorSuite, SensorTruth};
pub use wind::{Gust, WindConfig};

/// Rigid-body state, NED position and velocity, body rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBody {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion,
    pub omega: Vector3<f64>,
}

impl RigidBody {
    pub fn at_rest(position: Vector3<f64>, attitude: Quaternion) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude,
            omega: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
            && self.attitude.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub accel: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    pub specific_force: Vector3<f64>,
    pub aero: AeroOutput,
}

/// Translational and rotational accelerations for the given inputs.
pub fn derivatives(
    p: &PlantParams,
    body: &RigidBody,
    u: &ActuatorSet,
    wind: Vector3<f64>,
) -> Derivatives {
    let r = body.attitude.rotation_matrix();
    let air = r.transpose() * (body.velocity - wind);
    let aero = aero_forces(p, air, body.omega, u);
    let specific_force = aero.force / p.mass;
    let accel = r * specific_force + Vector3::new(0.0, 0.0, p.gravity);
    let inertia = Matrix3::from_diagonal(&Vector3::from(p.inertia));
    let w = body.omega;
    let omega_dot = Vector3::new(
        (aero.moment.x - (w.cross(&(inertia * w))).x) / p.inertia[0],
        (aero.moment.y - (w.cross(&(inertia * w))).y) / p.inertia[1],
        (aero.moment.z - (w.cross(&(inertia * w))).z) / p.inertia[2],
    );
    Derivatives {
        accel,
        omega_dot,
        specific_force,
        aero,
    }
}

/// Semi-implicit Euler: rates and velocity first, then attitude and position
/// from the updated values.
pub fn integrate_semi_implicit(body: &mut RigidBody, d: &Derivatives, dt: f64) {
    body.omega += d.omega_dot * dt;
    body.attitude = body.attitude.integrate_body_rate(body.omega, dt);
    body.velocity += d.accel * dt;
    body.position += body.velocity * dt;
}

/// Classical RK4 with inputs and wind held over the step.
pub fn integrate_rk4(
    p: &PlantParams,
    body: &mut RigidBody,
    u: &ActuatorSet,
    wind: Vector3<f64>,
    dt: f64,
) {
    let eval = |b: &RigidBody| {
        let d = derivatives(p, b, u, wind);
        (b.velocity, d.accel, b.omega, d.omega_dot)
    };
    let offset = |b: &RigidBody,
                  k: &(Vector3<f64>, Vector3<f64>, Vector3<f64>, Vector3<f64>),
                  h: f64| RigidBody {
        position: b.position + k.0 * h,
        velocity: b.velocity + k.1 * h,
        attitude: b.attitude.integrate_body_rate(k.2, h),
        omega: b.omega + k.3 * h,
    };
    let k1 = eval(body);
    let k2 = eval(&offset(body, &k1, 0.5 * dt));
    let k3 = eval(&offset(body, &k2, 0.5 * dt));
    let k4 = eval(&offset(body, &k3, dt));
    let avg = |a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>, d: Vector3<f64>| {
        (a + 2.0 * b + 2.0 * c + d) / 6.0
    };
    body.position += avg(k1.0, k2.0, k3.0, k4.0) * dt;
    body.velocity += avg(k1.1, k2.1, k3.1, k4.1) * dt;
    body.attitude = body
        .attitude
        .integrate_body_rate(avg(k1.2, k2.2, k3.2, k4.2), dt);
    body.omega += avg(k1.3, k2.3, k3.3, k4.3) * dt;
}

/// Motor command that holds the weight in still air with the wing vertical.
pub fn hover_motor_command(p: &PlantParams) -> f64 {
    let per_motor = 0.5 * p.mass * p.gravity;
    (per_motor / p.motor_thrust_max).sqrt() * COMMAND_MAX
}

/// The plant: rigid body plus the physical actuators, stepped at a fixed rate.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub body: RigidBody,
    pub t: f64,
    pub dt: f64,
    actuators: [ActuatorModel; 4],
    last: Derivatives,
}

impl Plant {
    pub fn new(params: PlantParams, body: RigidBody, initial: ActuatorSet, dt: f64) -> Self {
        let fs = 1.0 / dt;
        let actuators = std::array::from_fn(|i| {
            let ap = if i < 2 {
                params.flap_actuator
            } else {
                params.motor_actuator
            };
            ActuatorModel::new(ap, fs, initial[i])
        });
        let mut plant = Self {
            params,
            body,
            t: 0.0,
            dt,
            actuators,
            last: Derivatives::default(),
        };
        plant.last = derivatives(&plant.params, &plant.body, &initial, Vector3::zeros());
        plant
    }

    pub fn actuator_state(&self) -> ActuatorSet {
        ActuatorSet(std::array::from_fn(|i| self.actuators[i].state()))
    }

    /// Derivatives evaluated at the start of the last step.
    pub fn last(&self) -> &Derivatives {
        &self.last
    }

    /// Refresh the cached derivatives for the current state without stepping.
    pub fn evaluate(&mut self, wind: Vector3<f64>) -> &Derivatives {
        let u = self.actuator_state();
        self.last = derivatives(&self.params, &self.body, &u, wind);
        &self.last
    }

    /// Advance the actuators toward `command`, then the rigid body, by one step.
    pub fn step(&mut self, command: &ActuatorSet, wind: Vector3<f64>) {
        for (i, a) in self.actuators.iter_mut().enumerate() {
            let c = if i < 2 {
                command[i].clamp(-COMMAND_MAX, COMMAND_MAX)
            } else {
                command[i].clamp(0.0, COMMAND_MAX)
            };
            a.step(c);
        }
        let u = self.actuator_state();
        self.last = derivatives(&self.params, &self.body, &u, wind);
        integrate_semi_implicit(&mut self.body, &self.last, self.dt);
        self.t += self.dt;
    }

    pub fn truth(&self, wind: Vector3<f64>) -> SensorTruth {
        let r = self.body.attitude.rotation_matrix();
        let air = r.transpose() * (self.body.velocity - wind);
        let alpha = if air.norm() > 1e-6 {
            air.x.atan2(-air.z)
        } else {
            0.0
        };
        SensorTruth {
            t: self.t,
            position: self.body.position,
            velocity: self.body.velocity,
            attitude: self.body.attitude,
            omega: self.body.omega,
            specific_force: self.last.specific_force,
            airspeed: air.norm(),
            alpha,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{quat_from_euler_zxy, EulerZXY};

    const DT: f64 = 0.002;

    fn massless_aero() -> PlantParams {
        PlantParams {
            wing_area: 0.0,
            damping: [0.0; 3],
            ..PlantParams::default()
        }
    }

    #[test]
    fn free_fall() {
        let mut plant = Plant::new(
            massless_aero(),
            RigidBody::at_rest(Vector3::zeros(), Quaternion::IDENTITY),
            ActuatorSet::ZERO,
            DT,
        );
        plant.step(&ActuatorSet::ZERO, Vector3::zeros());
        assert!((plant.last().accel - Vector3::new(0.0, 0.0, 9.81)).norm() < 1e-12);
        assert_eq!(plant.last().specific_force, Vector3::zeros());
    }

    #[test]
    fn hover_trim_holds_position() {
        let p = PlantParams::default();
        let u = hover_motor_command(&p);
        let cmd = ActuatorSet::new(0.0, 0.0, u, u);
        let mut plant = Plant::new(
            p,
            RigidBody::at_rest(Vector3::zeros(), Quaternion::IDENTITY),
            cmd,
            DT,
        );
        for _ in 0..5000 {
            plant.step(&cmd, Vector3::zeros());
        }
        assert!(
            plant.body.position.norm() < 1e-6,
            "{:?}",
            plant.body.position
        );
    }

    #[test]
    fn symmetric_flap_step_pitches_like_schedule() {
        let p = PlantParams::default();
        let u = hover_motor_command(&p);
        let trim = ActuatorSet::new(0.0, 0.0, u, u);
        let mut plant = Plant::new(
            p,
            RigidBody::at_rest(Vector3::zeros(), Quaternion::IDENTITY),
            trim,
            DT,
        );
        let cmd = ActuatorSet::new(3000.0, -3000.0, u, u);
        for _ in 0..20 {
            plant.step(&cmd, Vector3::zeros());
        }
        // G21 < 0 for the left flap: positive left / negative right pitches down
        assert!(plant.body.omega.y < 0.0);
    }

    #[test]
    fn torque_free_tumble_conserves_momentum() {
        let mut body = RigidBody::at_rest(Vector3::zeros(), Quaternion::IDENTITY);
        body.omega = Vector3::new(0.3, 2.0, 0.4);
        let p = massless_aero();
        let inertia = Matrix3::from_diagonal(&Vector3::from(p.inertia));
        let h0 = body.attitude.rotation_matrix() * inertia * body.omega;
        let e0 = body.omega.dot(&(inertia * body.omega));
        for _ in 0..5000 {
            integrate_rk4(&p, &mut body, &ActuatorSet::ZERO, Vector3::zeros(), 0.0005);
        }
        let h1 = body.attitude.rotation_matrix() * inertia * body.omega;
        let e1 = body.omega.dot(&(inertia * body.omega));
        assert!((h1 - h0).norm() / h0.norm() < 1e-6);
        assert!((e1 - e0).abs() / e0 < 1e-6);

        let mut body2 = RigidBody::at_rest(Vector3::zeros(), Quaternion::IDENTITY);
        body2.omega = Vector3::new(0.3, 2.0, 0.4);
        for _ in 0..1250 {
            let d = derivatives(&p, &body2, &ActuatorSet::ZERO, Vector3::zeros());
            integrate_semi_implicit(&mut body2, &d, DT);
        }
        let h2 = body2.attitude.rotation_matrix() * inertia * body2.omega;
        assert!((h2 - h0).norm() / h0.norm() < 1e-2);
    }

    #[test]
    fn unforced_coast_energy_bounded() {
        // gliding with the motors off: kinetic + potential energy can only drop
        let p = PlantParams::default();
        let mut body = RigidBody::at_rest(
            Vector3::new(0.0, 0.0, -100.0),
            quat_from_euler_zxy(EulerZXY::new(0.0, -1.35, 0.0)),
        );
        body.velocity = Vector3::new(15.0, 0.0, 0.0);
        let g = p.gravity;
        let energy = |b: &RigidBody| 0.5 * b.velocity.norm_squared() - g * b.position.z;
        let e0 = energy(&body);
        let mut plant = Plant::new(p, body, ActuatorSet::ZERO, DT);
        for _ in 0..1500 {
            plant.step(&ActuatorSet::ZERO, Vector3::zeros());
            assert!(energy(&plant.body) <= e0 + 0.05);
        }
    }

    #[test]
    fn semi_implicit_agrees_with_fine_rk4() {
        // powered glide, 10 s open loop
        let p = PlantParams::default();
        let cmd = ActuatorSet::new(0.0, 0.0, 3500.0, 3500.0);
        let mut start = RigidBody::at_rest(
            Vector3::zeros(),
            quat_from_euler_zxy(EulerZXY::new(0.0, -1.35, 0.0)),
        );
        start.velocity = Vector3::new(14.0, 0.0, 0.0);
        let mut a = start;
        let mut b = start;
        let mut path = 0.0;
        let mut worst = 0.0f64;
        for _ in 0..5000 {
            let d = derivatives(&p, &a, &cmd, Vector3::zeros());
            integrate_semi_implicit(&mut a, &d, DT);
            for _ in 0..4 {
                integrate_rk4(&p, &mut b, &cmd, Vector3::zeros(), DT / 4.0);
            }
            path += b.velocity.norm() * DT;
            worst = worst.max((a.position - b.position).norm());
        }
        assert!(worst / path < 0.01, "{} m over {} m", worst, path);
    }

    #[test]
    fn direct_flap_lift_gives_inverse_response() {
        // forward flight, sudden pitch-up flap pair: the body accelerates
        // toward the belly (down) before the pitch change builds lift
        let p = PlantParams::default();
        let th = -75f64.to_radians();
        let mut body = RigidBody::at_rest(
            Vector3::zeros(),
            quat_from_euler_zxy(EulerZXY::new(0.0, th, 0.0)),
        );
        body.velocity = Vector3::new(15.0, 0.0, 0.0);
        let trim = ActuatorSet::new(0.0, 0.0, 4000.0, 4000.0);
        let mut plant = Plant::new(p, body, trim, DT);
        plant.evaluate(Vector3::zeros());
        let a0 = plant.last().accel.z;
        let kick = ActuatorSet::new(-4000.0, 4000.0, 4000.0, 4000.0);
        let mut first = 0.0;
        for k in 0..25 {
            plant.step(&kick, Vector3::zeros());
            if k == 9 {
                first = plant.last().accel.z - a0;
            }
        }
        for _ in 0..200 {
            plant.step(&trim, Vector3::zeros());
        }
        assert!(
            first > 0.0,
            "initial response should be downward, got {first}"
        );
        assert!(plant.body.omega.y.abs() > 0.0);
    }
}
