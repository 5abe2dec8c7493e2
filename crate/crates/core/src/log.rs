//! Per-tick CSV log. Column order is the field order below and never
//! changes; angles in rad, rates in rad/s, accelerations in m/s², thrust
//! in N, actuator values on the integer command scales.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::controller::TickOutput;
use crate::sim::{Plant, SensorSnapshot};
use crate::types::ActuatorSet;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub pos_n: f64,
    pub pos_e: f64,
    pub pos_d: f64,
    pub vel_n: f64,
    pub vel_e: f64,
    pub vel_d: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub phi_ref: f64,
    pub theta_ref: f64,
    pub psi_ref: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub p_ref: f64,
    pub q_ref: f64,
    pub r_ref: f64,
    pub p_dot_f: f64,
    pub q_dot_f: f64,
    pub r_dot_f: f64,
    pub nu_p: f64,
    pub nu_q: f64,
    pub nu_r: f64,
    pub nu_t: f64,
    pub uc_flap_l: f64,
    pub uc_flap_r: f64,
    pub uc_motor_l: f64,
    pub uc_motor_r: f64,
    pub uf_flap_l: f64,
    pub uf_flap_r: f64,
    pub uf_motor_l: f64,
    pub uf_motor_r: f64,
    pub u_flap_l: f64,
    pub u_flap_r: f64,
    pub u_motor_l: f64,
    pub u_motor_r: f64,
    pub accel_ref_n: f64,
    pub accel_ref_e: f64,
    pub accel_ref_d: f64,
    pub accel_f_n: f64,
    pub accel_f_e: f64,
    pub accel_f_d: f64,
    pub accel_comp_n: f64,
    pub accel_comp_e: f64,
    pub accel_comp_d: f64,
    /// Filtered body-axis specific force.
    pub fx_f: f64,
    pub fy_f: f64,
    pub fz_f: f64,
    pub thrust_ref: f64,
    pub thrust_f: f64,
    pub flap_lift_term: f64,
    pub beta_hat: f64,
    pub psi_dot_ref: f64,
    pub vel_ref_n: f64,
    pub vel_ref_e: f64,
    pub vel_ref_d: f64,
    /// Measured airspeed; `airspeed_valid` is 0 outside the Pitot envelope.
    pub airspeed: f64,
    pub airspeed_valid: u8,
    /// True airspeed, angle of attack and sideslip from the plant.
    pub airspeed_true: f64,
    pub alpha_true: f64,
    pub beta_true: f64,
    pub wind_n: f64,
    pub wind_e: f64,
    pub wind_d: f64,
    pub mode: u8,
    pub element: u32,
    pub cross_track: f64,
    pub fast_gains: u8,
    pub motor_floor: f64,
    /// Bit i set when actuator i is on a bound after allocation.
    pub saturation: u8,
    pub thrust_pitch_active: u8,
    pub allocation_converged: u8,
    pub near_singular: u8,
    pub outer_clamped: u8,
    pub fault: u8,
}

impl LogRecord {
    pub fn from_tick(
        snap: &SensorSnapshot,
        out: &TickOutput,
        plant: &Plant,
        wind: nalgebra::Vector3<f64>,
    ) -> Self {
        let b = &plant.body;
        let aero = &plant.last().aero;
        let u: ActuatorSet = plant.actuator_state();
        let sat = out
            .saturated
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &s)| acc | ((s as u8) << i));
        Self {
            t: snap.t,
            pos_n: b.position.x,
            pos_e: b.position.y,
            pos_d: b.position.z,
            vel_n: b.velocity.x,
            vel_e: b.velocity.y,
            vel_d: b.velocity.z,
            phi: out.eta.phi,
            theta: out.eta.theta,
            psi: out.eta.psi,
            phi_ref: out.eta_ref.phi,
            theta_ref: out.eta_ref.theta,
            psi_ref: out.eta_ref.psi,
            p: snap.gyro.x,
            q: snap.gyro.y,
            r: snap.gyro.z,
            p_ref: out.omega_ref.x,
            q_ref: out.omega_ref.y,
            r_ref: out.omega_ref.z,
            p_dot_f: out.omega_dot_f.x,
            q_dot_f: out.omega_dot_f.y,
            r_dot_f: out.omega_dot_f.z,
            nu_p: out.nu[0],
            nu_q: out.nu[1],
            nu_r: out.nu[2],
            nu_t: out.nu[3],
            uc_flap_l: out.u_c[0],
            uc_flap_r: out.u_c[1],
            uc_motor_l: out.u_c[2],
            uc_motor_r: out.u_c[3],
            uf_flap_l: out.u_f[0],
            uf_flap_r: out.u_f[1],
            uf_motor_l: out.u_f[2],
            uf_motor_r: out.u_f[3],
            u_flap_l: u[0],
            u_flap_r: u[1],
            u_motor_l: u[2],
            u_motor_r: u[3],
            accel_ref_n: out.accel_ref.x,
            accel_ref_e: out.accel_ref.y,
            accel_ref_d: out.accel_ref.z,
            accel_f_n: out.accel_f.x,
            accel_f_e: out.accel_f.y,
            accel_f_d: out.accel_f.z,
            accel_comp_n: out.accel_comp.x,
            accel_comp_e: out.accel_comp.y,
            accel_comp_d: out.accel_comp.z,
            fx_f: out.body_accel_f.x,
            fy_f: out.f_y_f,
            fz_f: out.body_accel_f.z,
            thrust_ref: out.thrust_ref,
            thrust_f: out.thrust_f,
            flap_lift_term: out.flap_lift_term,
            beta_hat: out.beta_hat,
            psi_dot_ref: out.psi_dot_ref,
            vel_ref_n: out.velocity_ref.x,
            vel_ref_e: out.velocity_ref.y,
            vel_ref_d: out.velocity_ref.z,
            airspeed: snap.airspeed.value,
            airspeed_valid: snap.airspeed.valid as u8,
            airspeed_true: aero.airspeed,
            alpha_true: aero.alpha,
            beta_true: aero.beta,
            wind_n: wind.x,
            wind_e: wind.y,
            wind_d: wind.z,
            mode: out.mode.code(),
            element: out.element as u32,
            cross_track: out.cross_track,
            fast_gains: out.fast_gains as u8,
            motor_floor: out.motor_floor,
            saturation: sat,
            thrust_pitch_active: out.thrust_pitch_active as u8,
            allocation_converged: out.allocation_converged as u8,
            near_singular: out.near_singular as u8,
            outer_clamped: out.outer_clamped as u8,
            fault: out.fault as u8,
        }
    }
}

pub fn write_log<W: Write>(w: W, records: &[LogRecord]) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(r: R) -> Result<Vec<LogRecord>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// Column names in order; kept in step with [`LogRecord`] by a test.
pub const FIELD_NAMES: &[&str] = &[
    "t",
    "pos_n",
    "pos_e",
    "pos_d",
    "vel_n",
    "vel_e",
    "vel_d",
    "phi",
    "theta",
    "psi",
    "phi_ref",
    "theta_ref",
    "psi_ref",
    "p",
    "q",
    "r",
    "p_ref",
    "q_ref",
    "r_ref",
    "p_dot_f",
    "q_dot_f",
    "r_dot_f",
    "nu_p",
    "nu_q",
    "nu_r",
    "nu_t",
    "uc_flap_l",
    "uc_flap_r",
    "uc_motor_l",
    "uc_motor_r",
    "uf_flap_l",
    "uf_flap_r",
    "uf_motor_l",
    "uf_motor_r",
    "u_flap_l",
    "u_flap_r",
    "u_motor_l",
    "u_motor_r",
    "accel_ref_n",
    "accel_ref_e",
    "accel_ref_d",
    "accel_f_n",
    "accel_f_e",
    "accel_f_d",
    "accel_comp_n",
    "accel_comp_e",
    "accel_comp_d",
    "fx_f",
    "fy_f",
    "fz_f",
    "thrust_ref",
    "thrust_f",
    "flap_lift_term",
    "beta_hat",
    "psi_dot_ref",
    "vel_ref_n",
    "vel_ref_e",
    "vel_ref_d",
    "airspeed",
    "airspeed_valid",
    "airspeed_true",
    "alpha_true",
    "beta_true",
    "wind_n",
    "wind_e",
    "wind_d",
    "mode",
    "element",
    "cross_track",
    "fast_gains",
    "motor_floor",
    "saturation",
    "thrust_pitch_active",
    "allocation_converged",
    "near_singular",
    "outer_clamped",
    "fault",
];
