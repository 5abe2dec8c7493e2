//! Discrete filters and the actuator model used to keep every incremental
//! signal on the same delay.
//!
//! All Butterworth sections are designed by the bilinear transform with the
//! corner frequency pre-warped, and are warm-started on the first sample so
//! that a constant input produces no start-up transient.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::FilterError;

/// One second-order section in direct form I.
#[derive(Debug, Clone, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
}

impl Biquad {
    fn lowpass(k: f64, q: f64) -> Self {
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    fn highpass(k: f64, q: f64) -> Self {
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            x: [0.0; 2],
            y: [0.0; 2],
        }
    }

    #[cfg(test)]
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Load the state of a section that has seen `x` forever. `gain` is the
    /// exact design DC gain (1 or 0).
    fn settle(&mut self, x: f64, gain: f64) -> f64 {
        let y = gain * x;
        self.x = [x; 2];
        self.y = [y; 2];
        y
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }
}

fn prewarp(cutoff_hz: f64, sample_hz: f64) -> f64 {
    (PI * cutoff_hz / sample_hz).tan()
}

/// Second-order Butterworth low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Butter2Lowpass {
    cutoff_hz: f64,
    sample_hz: f64,
    section: Biquad,
    primed: bool,
}

impl Butter2Lowpass {
    pub fn new(cutoff_hz: f64, sample_hz: f64) -> Self {
        assert!(
            cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_hz,
            "cutoff must lie in (0, Nyquist)"
        );
        Self {
            cutoff_hz,
            sample_hz,
            section: Biquad::lowpass(prewarp(cutoff_hz, sample_hz), 1.0 / SQRT_2),
            primed: false,
        }
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn sample_hz(&self) -> f64 {
        self.sample_hz
    }

    /// Filter one sample. A non-finite sample is rejected and leaves the state untouched.
    pub fn step(&mut self, x: f64) -> Result<f64, FilterError> {
        if !x.is_finite() {
            return Err(FilterError::SensorCorrupt);
        }
        if !self.primed {
            self.primed = true;
            return Ok(self.section.settle(x, 1.0));
        }
        Ok(self.section.step(x))
    }

    pub fn process(&mut self, xs: &mut [f64]) -> Result<(), FilterError> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(FilterError::SensorCorrupt);
        }
        for x in xs.iter_mut() {
            *x = self.step(*x)?;
        }
        Ok(())
    }

    pub fn output(&self) -> f64 {
        self.section.y[0]
    }

    pub fn reset(&mut self) {
        self.primed = false;
    }
}

/// Fourth-order Butterworth high-pass as two cascaded sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Butter4Highpass {
    cutoff_hz: f64,
    sample_hz: f64,
    sections: [Biquad; 2],
    primed: bool,
}

impl Butter4Highpass {
    pub fn new(cutoff_hz: f64, sample_hz: f64) -> Self {
        assert!(
            cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_hz,
            "cutoff must lie in (0, Nyquist)"
        );
        let k = prewarp(cutoff_hz, sample_hz);
        // pole-pair quality factors of the 4th-order Butterworth prototype
        let q1 = 1.0 / (2.0 * (PI / 8.0).cos());
        let q2 = 1.0 / (2.0 * (3.0 * PI / 8.0).cos());
        Self {
            cutoff_hz,
            sample_hz,
            sections: [Biquad::highpass(k, q1), Biquad::highpass(k, q2)],
            primed: false,
        }
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn sample_hz(&self) -> f64 {
        self.sample_hz
    }

    /// Filter one sample; the first sample is treated as a long-held level (output 0).
    pub fn step(&mut self, x: f64) -> Result<f64, FilterError> {
        if !x.is_finite() {
            return Err(FilterError::SensorCorrupt);
        }
        if !self.primed {
            self.primed = true;
            let mid = self.sections[0].settle(x, 0.0);
            return Ok(self.sections[1].settle(mid, 0.0));
        }
        let mid = self.sections[0].step(x);
        Ok(self.sections[1].step(mid))
    }

    pub fn process(&mut self, xs: &mut [f64]) -> Result<(), FilterError> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(FilterError::SensorCorrupt);
        }
        for x in xs.iter_mut() {
            *x = self.step(*x)?;
        }
        Ok(())
    }

    pub fn reset(&mut self) {
        self.primed = false;
    }
}

/// Parameters of the first-order discrete actuator model `a / (z − (1 − a))`
/// with an optional slew-rate limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// Pole parameter at the given sample rate.
    pub a: f64,
    /// Slew limit in command units per second; `None` means unlimited.
    pub rate_limit: Option<f64>,
}

impl ActuatorParams {
    /// Servo on the ±9600 scale: a = 0.1 at 500 Hz, 272 deg/s over a ±30 deg throw.
    pub fn flap() -> Self {
        Self {
            a: 0.1,
            rate_limit: Some(272.0 / 30.0 * 9600.0),
        }
    }

    /// Motor/ESC: a = 0.045 at 500 Hz, no slew limit.
    pub fn motor() -> Self {
        Self {
            a: 0.045,
            rate_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorModel {
    params: ActuatorParams,
    sample_hz: f64,
    state: f64,
}

impl ActuatorModel {
    pub fn new(params: ActuatorParams, sample_hz: f64, initial: f64) -> Self {
        Self {
            params,
            sample_hz,
            state: initial,
        }
    }

    pub fn state(&self) -> f64 {
        self.state
    }

    pub fn set_state(&mut self, u: f64) {
        self.state = u;
    }

    pub fn max_step(&self) -> f64 {
        self.params
            .rate_limit
            .map_or(f64::INFINITY, |r| r / self.sample_hz)
    }

    pub fn step(&mut self, command: f64) -> f64 {
        let lim = self.max_step();
        self.state += (self.params.a * (command - self.state)).clamp(-lim, lim);
        self.state
    }
}
