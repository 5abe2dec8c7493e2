//! Control-effectiveness schedules for the inner (angular acceleration +
//! thrust) loop and the outer (NED acceleration) loop, plus the trim lift and
//! thrust used to evaluate the outer-loop Jacobian.
//!
//! Every coefficient lives in [`ScheduleParams`] so another airframe can be
//! described from its vehicle config without recompiling. The defaults are
//! the values identified for the dual-motor, dual-flap tailsitter.

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use crate::frames::EulerZXY;
use crate::types::{ActuatorSet, Airspeed, FLAP_LEFT, FLAP_RIGHT, MOTOR_LEFT, MOTOR_RIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    /// Pitch breakpoints (deg) of the flap-effectiveness ramp.
    pub flap_ramp_deg: [f64; 2],
    /// Lowest airspeed (m/s) at which the airspeed branch is used.
    pub airspeed_branch_min: f64,
    /// Pitch-axis flap effectiveness at the two ramp ends (rad/s² per unit).
    pub flap_pitch_ramp: [f64; 2],
    /// Pitch-axis flap effectiveness `a + b·V²`.
    pub flap_pitch_quadratic: [f64; 2],
    pub flap_yaw_ramp: [f64; 2],
    pub flap_yaw_quadratic: [f64; 2],
    /// Roll effectiveness per unit of motor state (rad/s² per unit²).
    pub motor_roll_gain: f64,
    /// Specific force per motor unit along body Z (m/s² per unit).
    pub motor_thrust: f64,
    /// Flap command beyond which thrust is allowed to help pitch.
    pub thrust_pitch_gate: f64,
    /// Thrust-on-pitch effectiveness (rad/s² per % thrust).
    pub thrust_pitch_per_percent: f64,
    /// Motor command units in one percent of thrust.
    pub motor_units_per_percent: f64,
    /// Pitch breakpoints (deg) of the lift-slope ramp.
    pub lift_ramp_deg: [f64; 2],
    /// Lift slope at the end of the ramp, per kg (N/rad/kg).
    pub lift_slope_low: f64,
    /// Airspeed from which the linear lift-slope law applies.
    pub lift_slope_airspeed: f64,
    pub lift_slope_offset: f64,
    pub lift_slope_gain: f64,
    pub gravity: f64,
    /// Divide the trim lift by cos φ (extra lift in a turn).
    pub lift_bank_correction: bool,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            flap_ramp_deg: [-30.0, -60.0],
            airspeed_branch_min: 6.0,
            flap_pitch_ramp: [-2.1e-3, -4.0e-3],
            flap_pitch_quadratic: [-2.4e-3, -0.031e-3],
            flap_yaw_ramp: [-2.0e-3, -8.0e-3],
            flap_yaw_quadratic: [-5.6e-3, -0.052e-3],
            motor_roll_gain: 1.8e-6,
            motor_thrust: -0.0011,
            thrust_pitch_gate: 7000.0,
            thrust_pitch_per_percent: 2.2,
            motor_units_per_percent: 96.0,
            lift_ramp_deg: [-40.0, -80.0],
            lift_slope_low: -24.0,
            lift_slope_airspeed: 12.0,
            lift_slope_offset: 8.5,
            lift_slope_gain: 6.88,
            gravity: 9.81,
            lift_bank_correction: false,
        }
    }
}

/// Linear ramp in pitch: 0 above `start_deg`, 1 below `end_deg`.
pub fn pitch_ramp(theta: f64, [start_deg, end_deg]: [f64; 2]) -> f64 {
    let deg = theta.to_degrees();
    if deg >= start_deg {
        0.0
    } else if deg <= end_deg {
        1.0
    } else {
        (deg - start_deg) / (end_deg - start_deg)
    }
}

/// Inputs the inner-loop schedule depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    pub theta: f64,
    pub airspeed: Airspeed,
    /// Filtered actuator state.
    pub u_f: ActuatorSet,
}

/// Inner-loop effectiveness. Rows: roll, pitch, yaw angular acceleration
/// (rad/s²) and body-Z specific force (m/s²); columns: the four actuators,
/// all per command unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerEffectiveness {
    pub g: Matrix4<f64>,
    /// Thrust-on-pitch gate was open when the matrix was built.
    pub thrust_pitch_active: bool,
}

/// Outer-loop effectiveness `G_T + G_L`: columns φ (N/rad), θ (N/rad) and
/// thrust (N/N); rows NED.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterEffectiveness {
    pub thrust_part: Matrix3<f64>,
    pub lift_part: Matrix3<f64>,
}

impl OuterEffectiveness {
    pub fn sum(&self) -> Matrix3<f64> {
        self.thrust_part + self.lift_part
    }
}

impl ScheduleParams {
    pub fn r_theta_inner(&self, theta: f64) -> f64 {
        pitch_ramp(theta, self.flap_ramp_deg)
    }

    pub fn r_theta_lift(&self, theta: f64) -> f64 {
        pitch_ramp(theta, self.lift_ramp_deg)
    }

    fn flap_schedule(&self, ramp: [f64; 2], quad: [f64; 2], theta: f64, v: Airspeed) -> f64 {
        if v.at_least(self.airspeed_branch_min) {
            quad[0] + quad[1] * v.value * v.value
        } else {
            let r = self.r_theta_inner(theta);
            ramp[0] * (1.0 - r) + ramp[1] * r
        }
    }

    /// Left-flap effectiveness on pitch; the right flap is its negative.
    pub fn flap_pitch_eff(&self, theta: f64, v: Airspeed) -> f64 {
        self.flap_schedule(self.flap_pitch_ramp, self.flap_pitch_quadratic, theta, v)
    }

    /// Flap effectiveness on yaw, equal for both flaps.
    pub fn flap_yaw_eff(&self, theta: f64, v: Airspeed) -> f64 {
        self.flap_schedule(self.flap_yaw_ramp, self.flap_yaw_quadratic, theta, v)
    }

    /// Roll effectiveness of the (left, right) motor from their filtered states.
    pub fn motor_roll_eff(&self, u_left: f64, u_right: f64) -> (f64, f64) {
        (
            -u_left * self.motor_roll_gain,
            u_right * self.motor_roll_gain,
        )
    }

    /// Thrust-on-pitch effectiveness in rad/s² per % thrust, non-zero only
    /// when both flaps are beyond the gate in opposite directions.
    pub fn thrust_pitch_eff(&self, u_left_flap: f64, u_right_flap: f64) -> f64 {
        let gate = self.thrust_pitch_gate;
        if u_left_flap > gate && u_right_flap < -gate {
            -self.thrust_pitch_per_percent
        } else if u_left_flap < -gate && u_right_flap > gate {
            self.thrust_pitch_per_percent
        } else {
            0.0
        }
    }

    pub fn build_inner_g(&self, s: &ScheduleInputs) -> InnerEffectiveness {
        let g21 = self.flap_pitch_eff(s.theta, s.airspeed);
        let g31 = self.flap_yaw_eff(s.theta, s.airspeed);
        let (g13, g14) = self.motor_roll_eff(s.u_f[MOTOR_LEFT], s.u_f[MOTOR_RIGHT]);
        let per_percent = self.thrust_pitch_eff(s.u_f[FLAP_LEFT], s.u_f[FLAP_RIGHT]);
        let g23 = per_percent / self.motor_units_per_percent;
        let t = self.motor_thrust;
        #[rustfmt::skip]
        let g = Matrix4::new(
            0.0, 0.0,  g13, g14,
            g21, -g21, g23, g23,
            g31, g31,  0.0, 0.0,
            0.0, 0.0,  t,   t,
        );
        InnerEffectiveness {
            g,
            thrust_pitch_active: per_percent != 0.0,
        }
    }

    /// Trim lift magnitude (N, negative = up in the lift frame). `phi` is only
    /// used when the bank correction is enabled.
    pub fn lift_trim(&self, theta: f64, phi: f64, mass: f64) -> f64 {
        let th = theta.clamp(-std::f64::consts::FRAC_PI_2, 0.0);
        let l = -self.gravity * (-th).sin() * mass;
        if self.lift_bank_correction {
            l / phi.cos().max(0.2)
        } else {
            l
        }
    }

    /// Trim thrust (N, negative = along −Z body).
    pub fn thrust_trim(&self, theta: f64, mass: f64) -> f64 {
        let th = theta.clamp(-std::f64::consts::FRAC_PI_2, 0.0);
        -self.gravity * th.cos() * mass
    }

    /// ∂L/∂θ in N/rad.
    pub fn lift_slope(&self, theta: f64, v: Airspeed, mass: f64) -> f64 {
        if v.at_least(self.lift_slope_airspeed) {
            -(v.value - self.lift_slope_offset) * self.lift_slope_gain * mass
        } else {
            self.lift_slope_low * self.r_theta_lift(theta) * mass
        }
    }
}

/// Thrust- and lift-vector Jacobians with respect to [φ, θ, T].
pub fn build_outer_g(eta: EulerZXY, thrust: f64, lift: f64, lift_slope: f64) -> OuterEffectiveness {
    let (sf, cf) = eta.phi.sin_cos();
    let (st, ct) = eta.theta.sin_cos();
    let (sp, cp) = eta.psi.sin_cos();
    let t = thrust;
    #[rustfmt::skip]
    let thrust_part = Matrix3::new(
        cf * ct * sp * t,  (ct * cp - sf * st * sp) * t, st * cp + sf * ct * sp,
        -cf * ct * cp * t, (ct * sp + sf * st * cp) * t, st * sp - sf * ct * cp,
        -sf * ct * t,      -cf * st * t,                 cf * ct,
    );
    let (l, dl) = (lift, lift_slope);
    #[rustfmt::skip]
    let lift_part = Matrix3::new(
        cf * sp * l,  sf * sp * dl,  0.0,
        -cf * cp * l, -sf * cp * dl, 0.0,
        -sf * l,      cf * dl,       0.0,
    );
    OuterEffectiveness {
        thrust_part,
        lift_part,
    }
}
