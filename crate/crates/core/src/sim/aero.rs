//! Synthetic aerodynamics of the tailsitter: a flat wing blended between
//! thin-airfoil and flat-plate behaviour, propellers with slipstream, and
//! flaps immersed in the slipstream.
//!
//! Body axes: X toward the belly, Y toward the right wing tip, Z toward the
//! tail. The propellers push along −Z.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::filters::ActuatorParams;
use crate::types::{ActuatorSet, COMMAND_MAX, FLAP_LEFT, FLAP_RIGHT, MOTOR_LEFT, MOTOR_RIGHT};

/// Plant coefficients. Every value is synthetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    pub mass: f64,
    /// Principal moments of inertia about body X, Y, Z (kg·m²).
    pub inertia: [f64; 3],
    pub gravity: f64,
    pub air_density: f64,
    pub wing_area: f64,
    pub chord: f64,
    pub span: f64,
    /// Lift slope of the attached-flow regime, 1/rad.
    pub cl_alpha: f64,
    pub cd0: f64,
    /// Angle of attack (rad) around which attached flow gives way to the plate.
    pub stall_alpha: f64,
    pub stall_sharpness: f64,
    /// Aerodynamic centre aft of the centre of gravity, m.
    pub ac_aft: f64,
    /// Aft travel of the centre of pressure at 90° angle of attack, as a
    /// fraction of the chord.
    pub cp_travel: f64,
    /// Side-force coefficient per unit sin(sideslip).
    pub side_force_coeff: f64,
    /// Directional stability, yaw moment per unit sin(sideslip) per q·S·b.
    pub weathervane_coeff: f64,
    /// Rate damping coefficients about body X, Y, Z.
    pub damping: [f64; 3],
    /// Static thrust of one motor at full command, N.
    pub motor_thrust_max: f64,
    /// Propeller pitch speed at full command, m/s.
    pub prop_pitch_speed: f64,
    /// Lateral offset of the motors and flaps, m.
    pub motor_arm: f64,
    pub disk_area: f64,
    /// Fraction of the slipstream dynamic pressure seen by the flaps.
    pub slipstream_efficiency: f64,
    pub flap_max_deflection: f64,
    /// Flap normal force per rad per Pa of local dynamic pressure, m².
    pub flap_force_slope: f64,
    /// Aft position of the flap force, m.
    pub flap_force_aft: f64,
    /// Flap pitching moment per rad per Pa, m³.
    pub flap_moment_slope: f64,
    pub flap_actuator: ActuatorParams,
    pub motor_actuator: ActuatorParams,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            mass: 1.2,
            inertia: [0.03125, 0.00625, 0.025],
            gravity: 9.81,
            air_density: 1.225,
            wing_area: 0.125,
            chord: 0.25,
            span: 0.5,
            // 2π·AR/(AR + 2) at aspect ratio 2
            cl_alpha: std::f64::consts::PI,
            cd0: 0.03,
            stall_alpha: 0.3,
            stall_sharpness: 30.0,
            ac_aft: 0.005,
            cp_travel: 0.05,
            side_force_coeff: 0.3,
            weathervane_coeff: 0.02,
            damping: [0.05, 0.5, 0.3],
            motor_thrust_max: 14.0,
            prop_pitch_speed: 32.0,
            motor_arm: 0.16,
            disk_area: 0.0324,
            slipstream_efficiency: 0.18,
            flap_max_deflection: 30f64.to_radians(),
            flap_force_slope: 0.13,
            flap_force_aft: 0.02,
            flap_moment_slope: 0.0045,
            flap_actuator: ActuatorParams::flap(),
            motor_actuator: ActuatorParams::motor(),
        }
    }
}

/// Lateral position of each actuator: the left flap sits behind the motor at
/// −Y (index 3), the right flap behind the motor at +Y (index 2).
pub fn actuator_y(p: &PlantParams) -> [f64; 4] {
    [-p.motor_arm, p.motor_arm, p.motor_arm, -p.motor_arm]
}

/// Sign of each flap's normal force along body X for a positive command.
const FLAP_SIGN: [f64; 2] = [-1.0, 1.0];

/// Smooth blend weight between attached flow (0) and plate flow (1).
pub fn stall_blend(alpha: f64, p: &PlantParams) -> f64 {
    let m = p.stall_sharpness;
    let a0 = p.stall_alpha;
    let e1 = (-m * (alpha - a0)).exp();
    let e2 = (m * (alpha + a0)).exp();
    let s = (1.0 + e1 + e2) / ((1.0 + e1) * (1.0 + e2));
    if s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Lift and drag coefficients for any angle of attack in (−π, π].
pub fn lift_drag_coefficients(alpha: f64, p: &PlantParams) -> (f64, f64) {
    let s = stall_blend(alpha, p);
    let plate_lift = 2.0 * alpha.sin() * alpha.cos();
    let plate_drag = 2.0 * alpha.sin() * alpha.sin();
    let attached_lift = p.cl_alpha * alpha;
    let k = 1.0 / (std::f64::consts::PI * 0.8 * p.span * p.span / p.wing_area);
    let attached_drag = k * attached_lift * attached_lift;
    let cl = (1.0 - s) * attached_lift + s * plate_lift;
    let cd = p.cd0 + (1.0 - s) * attached_drag + s * plate_drag;
    (cl, cd)
}

/// Thrust of one propeller at command `u` with axial inflow `v_axial`.
pub fn propeller_thrust(u: f64, v_axial: f64, p: &PlantParams) -> f64 {
    let n = (u / COMMAND_MAX).clamp(0.0, 1.0);
    if n == 0.0 {
        return 0.0;
    }
    let static_thrust = p.motor_thrust_max * n * n;
    let pitch_speed = p.prop_pitch_speed * n;
    (static_thrust * (1.0 - v_axial / pitch_speed)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AeroOutput {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
    /// Angle of attack and sideslip, rad.
    pub alpha: f64,
    pub beta: f64,
    pub airspeed: f64,
    /// Thrust of motor index 2 and 3, N.
    pub thrust: [f64; 2],
    /// Dynamic pressure at the left and right flap, Pa.
    pub flap_pressure: [f64; 2],
    /// Body-X force produced by the flaps alone, N.
    pub flap_force_x: f64,
}

/// Forces and moments about the centre of gravity in body axes, excluding
/// gravity. `air_vel` is the body-axis velocity relative to the air.
pub fn aero_forces(
    p: &PlantParams,
    air_vel: Vector3<f64>,
    omega: Vector3<f64>,
    u: &ActuatorSet,
) -> AeroOutput {
    let rho = p.air_density;
    let v = air_vel.norm();
    let q = 0.5 * rho * v * v;
    let v_axial = -air_vel.z;
    let ys = actuator_y(p);

    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();

    let (alpha, beta) = if v > 1e-6 {
        (
            air_vel.x.atan2(-air_vel.z),
            (air_vel.y / v).clamp(-1.0, 1.0).asin(),
        )
    } else {
        (0.0, 0.0)
    };

    if v > 1e-6 {
        let e = air_vel / v;
        let (cl, cd) = lift_drag_coefficients(alpha, p);
        // lift is perpendicular to the flow within the symmetry plane
        let n_xz = (e.x * e.x + e.z * e.z).sqrt();
        let lift_dir = if n_xz > 1e-9 {
            Vector3::new(e.z, 0.0, -e.x) / n_xz
        } else {
            Vector3::zeros()
        };
        let q_xz = 0.5 * rho * v * v * n_xz * n_xz;
        let lift = lift_dir * (q_xz * p.wing_area * cl);
        let drag = -e * (q * p.wing_area * cd);
        let side = Vector3::new(0.0, -q * p.wing_area * p.side_force_coeff * beta.sin(), 0.0);
        let wing = lift + drag;
        let cp = p.ac_aft + p.cp_travel * p.chord * alpha.sin().abs();
        let r = Vector3::new(0.0, 0.0, cp);
        force += wing + side;
        moment += r.cross(&wing);
        // yaw back into the wind, about the body normal
        moment.x += q * p.wing_area * p.span * p.weathervane_coeff * beta.sin();
    }

    // rate damping grows with airspeed and with propwash
    let lengths = [p.span, p.chord, p.span];
    for i in 0..3 {
        let ref_speed = v + 2.0;
        moment[i] -= 0.25
            * rho
            * ref_speed
            * p.wing_area
            * lengths[i]
            * lengths[i]
            * p.damping[i]
            * omega[i];
    }

    let mut thrust = [0.0; 2];
    for (k, &m) in [MOTOR_LEFT, MOTOR_RIGHT].iter().enumerate() {
        let t = propeller_thrust(u[m], v_axial, p);
        thrust[k] = t;
        let f = Vector3::new(0.0, 0.0, -t);
        force += f;
        moment += Vector3::new(0.0, ys[m], 0.0).cross(&f);
    }

    let freestream = 0.5 * rho * v_axial * v_axial.abs();
    let upstream = [thrust[1], thrust[0]];
    let mut flap_pressure = [0.0; 2];
    let mut flap_force_x = 0.0;
    for (k, &f) in [FLAP_LEFT, FLAP_RIGHT].iter().enumerate() {
        let qf = p.slipstream_efficiency * upstream[k] / p.disk_area + freestream;
        flap_pressure[k] = qf;
        let delta = (u[f] / COMMAND_MAX).clamp(-1.0, 1.0) * p.flap_max_deflection;
        let fx = FLAP_SIGN[k] * p.flap_force_slope * qf * delta;
        flap_force_x += fx;
        let ff = Vector3::new(fx, 0.0, 0.0);
        force += ff;
        moment += Vector3::new(0.0, ys[f], p.flap_force_aft).cross(&ff);
        moment.y += FLAP_SIGN[k] * p.flap_moment_slope * qf * delta;
    }

    AeroOutput {
        force,
        moment,
        alpha,
        beta,
        airspeed: v,
        thrust,
        flap_pressure,
        flap_force_x,
    }
}
