//! Inner INDI loop: attitude error to rate reference, rate error to angular
//! acceleration demand, and the incremental actuator command.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::allocation::{wls_allocate, AllocationProblem, AllocationSolution, WlsSettings};
use crate::effectiveness::InnerEffectiveness;
use crate::error::FilterError;
use crate::filters::Butter2Lowpass;
use crate::frames::Quaternion;
use crate::types::{ActuatorSet, Airspeed, COMMAND_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainSchedule {
    /// Attitude gains (roll, pitch, yaw) below the switch speed, 1/s.
    pub k_eta_slow: [f64; 3],
    /// Attitude gains once the switch speed is reached.
    pub k_eta_fast: [f64; 3],
    /// Rate gains, 1/s.
    pub k_omega: [f64; 3],
    pub switch_up: f64,
    pub switch_down: f64,
}

impl Default for GainSchedule {
    fn default() -> Self {
        Self {
            k_eta_slow: [7.6, 13.3, 7.6],
            k_eta_fast: [7.6, 7.6, 7.6],
            k_omega: [28.0; 3],
            switch_up: 12.0,
            switch_down: 11.0,
        }
    }
}

/// Hysteretic selection between the slow and fast attitude gains.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSelector {
    pub schedule: GainSchedule,
    fast: bool,
}

impl GainSelector {
    pub fn new(schedule: GainSchedule) -> Self {
        Self {
            schedule,
            fast: false,
        }
    }

    pub fn is_fast(&self) -> bool {
        self.fast
    }

    pub fn update(&mut self, v: Airspeed) -> Vector3<f64> {
        if self.fast {
            if !v.valid || v.value < self.schedule.switch_down {
                self.fast = false;
            }
        } else if v.at_least(self.schedule.switch_up) {
            self.fast = true;
        }
        self.k_eta()
    }

    pub fn k_eta(&self) -> Vector3<f64> {
        Vector3::from(if self.fast {
            self.schedule.k_eta_fast
        } else {
            self.schedule.k_eta_slow
        })
    }

    pub fn k_omega(&self) -> Vector3<f64> {
        Vector3::from(self.schedule.k_omega)
    }
}

/// Proportional feedback on the vector part of a canonical error quaternion.
pub fn rate_reference(q_err: Quaternion, k_eta: Vector3<f64>) -> Vector3<f64> {
    k_eta.component_mul(&q_err.vector())
}

/// ν = [K_Ω(Ω_ref − Ω); ΔT_d].
pub fn virtual_control(
    omega_ref: Vector3<f64>,
    omega: Vector3<f64>,
    k_omega: Vector3<f64>,
    thrust_increment: f64,
) -> Vector4<f64> {
    let a = k_omega.component_mul(&(omega_ref - omega));
    Vector4::new(a.x, a.y, a.z, thrust_increment)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThrustFloor {
    pub low_speed_fraction: f64,
    pub high_speed_fraction: f64,
    pub airspeed: f64,
}

impl Default for ThrustFloor {
    fn default() -> Self {
        Self {
            low_speed_fraction: 0.42,
            high_speed_fraction: 0.16,
            airspeed: 8.0,
        }
    }
}

impl ThrustFloor {
    /// Minimum motor command. The high-speed floor needs a valid reading.
    pub fn floor(&self, v: Airspeed) -> f64 {
        if v.at_least(self.airspeed) {
            self.high_speed_fraction * COMMAND_MAX
        } else {
            self.low_speed_fraction * COMMAND_MAX
        }
    }
}

/// Angular acceleration from gyro samples: low-pass first, then a backward
/// difference of the filtered rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularAccelEstimator {
    filters: [Butter2Lowpass; 3],
    last: Option<Vector3<f64>>,
    sample_hz: f64,
}

impl AngularAccelEstimator {
    pub fn new(cutoff_hz: f64, sample_hz: f64) -> Self {
        Self {
            filters: std::array::from_fn(|_| Butter2Lowpass::new(cutoff_hz, sample_hz)),
            last: None,
            sample_hz,
        }
    }

    /// Returns (Ω_f, Ω̇_f).
    pub fn step(
        &mut self,
        gyro: Vector3<f64>,
    ) -> Result<(Vector3<f64>, Vector3<f64>), FilterError> {
        if !gyro.iter().all(|g| g.is_finite()) {
            return Err(FilterError::SensorCorrupt);
        }
        let mut f = Vector3::zeros();
        for i in 0..3 {
            f[i] = self.filters[i].step(gyro[i])?;
        }
        let d = match self.last {
            Some(prev) => (f - prev) * self.sample_hz,
            None => Vector3::zeros(),
        };
        self.last = Some(f);
        Ok((f, d))
    }
}

/// Result of one inner-loop increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerCommand {
    pub u_c: ActuatorSet,
    pub dnu: Vector4<f64>,
    pub allocation: AllocationSolution,
}

/// u_c = u_f + du with du the WLS allocation of ν − [Ω̇_f; 0].
///
/// `u_f` is first clamped to the admissible box so that `du = 0` is always
/// feasible. Returns `None` if any input is non-finite.
pub fn inner_indi_step(
    u_f: ActuatorSet,
    omega_dot_f: Vector3<f64>,
    nu: Vector4<f64>,
    g: &InnerEffectiveness,
    motor_floor: f64,
    settings: &WlsSettings,
) -> Option<InnerCommand> {
    if !u_f.is_finite()
        || !omega_dot_f.iter().all(|v| v.is_finite())
        || !nu.iter().all(|v| v.is_finite())
        || !g.g.iter().all(|v| v.is_finite())
    {
        return None;
    }
    let base = u_f.clamped(motor_floor);
    let lo = ActuatorSet::lower_limits(motor_floor) - base;
    let hi = ActuatorSet::upper_limits() - base;
    let dnu = Vector4::new(
        nu[0] - omega_dot_f.x,
        nu[1] - omega_dot_f.y,
        nu[2] - omega_dot_f.z,
        nu[3],
    );
    let problem = AllocationProblem {
        g: g.g,
        dnu,
        du_min: Vector4::from(lo.0),
        du_max: Vector4::from(hi.0),
        settings: *settings,
    };
    let allocation = wls_allocate(&problem);
    let du = ActuatorSet(allocation.du.into());
    Some(InnerCommand {
        u_c: (base + du).clamped(motor_floor),
        dnu,
        allocation,
    })
}
