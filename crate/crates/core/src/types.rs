//! Small value types shared by the controller, the plant and the logs.

use std::ops::{Add, Index, IndexMut, Sub};

use serde::{Deserialize, Serialize};

/// Full-scale actuator command.
pub const COMMAND_MAX: f64 = 9600.0;

pub const FLAP_LEFT: usize = 0;
pub const FLAP_RIGHT: usize = 1;
pub const MOTOR_LEFT: usize = 2;
pub const MOTOR_RIGHT: usize = 3;

/// Actuator vector ordered [left flap, right flap, left motor, right motor].
/// Flaps run on [−9600, 9600] (±30°, left-down and right-up positive),
/// motors on [0, 9600].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorSet(pub [f64; 4]);

impl ActuatorSet {
    pub const ZERO: ActuatorSet = ActuatorSet([0.0; 4]);

    pub fn new(flap_left: f64, flap_right: f64, motor_left: f64, motor_right: f64) -> Self {
        Self([flap_left, flap_right, motor_left, motor_right])
    }

    pub fn lower_limits(motor_floor: f64) -> Self {
        Self([-COMMAND_MAX, -COMMAND_MAX, motor_floor, motor_floor])
    }

    pub fn upper_limits() -> Self {
        Self([COMMAND_MAX; 4])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Clamp flaps to ±full scale and motors to [floor, full scale].
    pub fn clamped(self, motor_floor: f64) -> Self {
        let lo = Self::lower_limits(motor_floor);
        let hi = Self::upper_limits();
        Self(std::array::from_fn(|i| self.0[i].clamp(lo.0[i], hi.0[i])))
    }

    /// Symmetric-pitch flap channel (right minus left).
    pub fn flap_pitch_channel(&self) -> f64 {
        -self.0[FLAP_LEFT] + self.0[FLAP_RIGHT]
    }
}

impl Index<usize> for ActuatorSet {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ActuatorSet {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for ActuatorSet {
    type Output = Self;
    fn add(self, r: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] + r.0[i]))
    }
}

impl Sub for ActuatorSet {
    type Output = Self;
    fn sub(self, r: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] - r.0[i]))
    }
}

/// Airspeed together with the validity flag of the Pitot tube.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Airspeed {
    pub value: f64,
    pub valid: bool,
}

impl Airspeed {
    pub fn valid(value: f64) -> Self {
        Self { value, valid: true }
    }

    pub fn invalid() -> Self {
        Self {
            value: 0.0,
            valid: false,
        }
    }

    /// The airspeed if it can be trusted, otherwise 0.
    pub fn usable(&self) -> f64 {
        if self.valid {
            self.value.max(0.0)
        } else {
            0.0
        }
    }

    /// True when a valid reading is at least `threshold`.
    pub fn at_least(&self, threshold: f64) -> bool {
        self.valid && self.value >= threshold
    }
}
