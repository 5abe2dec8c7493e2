//! Sensor models: gyro, accelerometer, Pitot tube and a slow, delayed
//! position/velocity fix.

use std::collections::VecDeque;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::frames::Quaternion;
use crate::types::Airspeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub gyro_sigma: f64,
    pub accel_sigma: f64,
    pub pitot_sigma: f64,
    pub pitot_min_speed: f64,
    /// Largest |angle of attack| at which the Pitot reads, degrees.
    pub pitot_max_alpha_deg: f64,
    pub fix_rate_hz: f64,
    pub fix_latency: f64,
    pub fix_position_sigma: f64,
    pub fix_velocity_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            gyro_sigma: 0.005,
            accel_sigma: 0.05,
            pitot_sigma: 0.1,
            pitot_min_speed: 6.0,
            pitot_max_alpha_deg: 30.0,
            fix_rate_hz: 10.0,
            fix_latency: 0.1,
            fix_position_sigma: 0.1,
            fix_velocity_sigma: 0.05,
        }
    }
}

impl SensorConfig {
    pub fn noiseless() -> Self {
        Self {
            gyro_sigma: 0.0,
            accel_sigma: 0.0,
            pitot_sigma: 0.0,
            fix_position_sigma: 0.0,
            fix_velocity_sigma: 0.0,
            fix_latency: 0.0,
            ..Self::default()
        }
    }
}

/// True quantities the sensors observe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorTruth {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion,
    pub omega: Vector3<f64>,
    /// Body-axis specific force, m/s².
    pub specific_force: Vector3<f64>,
    pub airspeed: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSnapshot {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub attitude: Quaternion,
    pub airspeed: Airspeed,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Measurement time of the position/velocity fix.
    pub fix_time: f64,
}

#[derive(Debug, Clone)]
pub struct SensorSuite {
    pub config: SensorConfig,
    rng: ChaCha8Rng,
    pending: VecDeque<(f64, Vector3<f64>, Vector3<f64>)>,
    next_fix: f64,
    fix: Option<(f64, Vector3<f64>, Vector3<f64>)>,
}

impl SensorSuite {
    pub fn new(config: SensorConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: VecDeque::new(),
            next_fix: 0.0,
            fix: None,
        }
    }

    fn noise(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * self.rng.sample::<f64, _>(StandardNormal)
        }
    }

    fn noise3(&mut self, sigma: f64) -> Vector3<f64> {
        Vector3::new(self.noise(sigma), self.noise(sigma), self.noise(sigma))
    }

    pub fn sense(&mut self, truth: &SensorTruth) -> SensorSnapshot {
        let c = self.config;
        let gyro = truth.omega + self.noise3(c.gyro_sigma);
        let accel = truth.specific_force + self.noise3(c.accel_sigma);
        let pitot_noise = self.noise(c.pitot_sigma);
        let in_envelope = truth.airspeed >= c.pitot_min_speed
            && truth.alpha.abs() <= c.pitot_max_alpha_deg.to_radians();
        let airspeed = if in_envelope {
            Airspeed::valid((truth.airspeed + pitot_noise).max(0.0))
        } else {
            Airspeed::invalid()
        };

        // sample on the fix grid, deliver after the latency
        if truth.t + 1e-9 >= self.next_fix {
            let p = truth.position + self.noise3(c.fix_position_sigma);
            let v = truth.velocity + self.noise3(c.fix_velocity_sigma);
            self.pending.push_back((truth.t, p, v));
            self.next_fix += 1.0 / c.fix_rate_hz;
        }
        while let Some(&(tm, p, v)) = self.pending.front() {
            if tm + c.fix_latency <= truth.t + 1e-9 {
                self.fix = Some((tm, p, v));
                self.pending.pop_front();
            } else {
                break;
            }
        }
        let (fix_time, position, velocity) =
            self.fix
                .unwrap_or((truth.t, truth.position, truth.velocity));

        SensorSnapshot {
            t: truth.t,
            gyro,
            accel,
            attitude: truth.attitude,
            airspeed,
            position,
            velocity,
            fix_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(t: f64, airspeed: f64, alpha: f64) -> SensorTruth {
        SensorTruth {
            t,
            position: Vector3::new(t, 2.0, -3.0),
            velocity: Vector3::new(1.0, 0.0, 0.0),
            attitude: Quaternion::IDENTITY,
            omega: Vector3::new(0.1, 0.2, 0.3),
            specific_force: Vector3::new(0.0, 0.0, -9.81),
            airspeed,
            alpha,
        }
    }

    #[test]
    fn noiseless_reproduces_truth() {
        let mut s = SensorSuite::new(SensorConfig::noiseless(), 1);
        let tr = truth(0.0, 10.0, 0.1);
        let snap = s.sense(&tr);
        assert_eq!(snap.gyro, tr.omega);
        assert_eq!(snap.accel, tr.specific_force);
        assert_eq!(snap.position, tr.position);
        assert_eq!(snap.airspeed, Airspeed::valid(10.0));
    }

    #[test]
    fn pitot_envelope() {
        let mut s = SensorSuite::new(SensorConfig::noiseless(), 1);
        assert!(!s.sense(&truth(0.0, 4.0, 0.0)).airspeed.valid);
        assert!(!s.sense(&truth(0.002, 12.0, 0.7)).airspeed.valid);
        assert!(s.sense(&truth(0.004, 6.0, 0.5)).airspeed.valid);
    }

    #[test]
    fn same_seed_same_noise() {
        let run = |seed| {
            let mut s = SensorSuite::new(SensorConfig::default(), seed);
            (0..100)
                .map(|k| s.sense(&truth(k as f64 * 0.002, 12.0, 0.0)).gyro.x)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn fix_is_slow_and_late() {
        let cfg = SensorConfig {
            fix_rate_hz: 10.0,
            fix_latency: 0.1,
            ..SensorConfig::noiseless()
        };
        let mut s = SensorSuite::new(cfg, 1);
        let mut times = Vec::new();
        for k in 0..=250 {
            let snap = s.sense(&truth(k as f64 * 0.002, 0.0, 0.0));
            times.push(snap.fix_time);
        }
        // at t = 0.5 s the newest delivered fix was taken at 0.4 s
        assert!((times[250] - 0.4).abs() < 1e-9);
    }
}
