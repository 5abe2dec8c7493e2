//! Wind field: a constant wind plus an optional one-minus-cosine gust.

use std::f64::consts::TAU;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gust {
    pub start: f64,
    pub duration: f64,
    /// Peak gust velocity, NED m/s.
    pub peak: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub speed: f64,
    /// Direction the wind blows from, degrees clockwise from North.
    pub from_deg: f64,
    pub gust: Option<Gust>,
}

impl WindConfig {
    pub fn calm() -> Self {
        Self::default()
    }

    pub fn constant(speed: f64, from_deg: f64) -> Self {
        Self {
            speed,
            from_deg,
            gust: None,
        }
    }

    /// Wind velocity (air mass motion) at time `t`, NED m/s.
    pub fn at(&self, t: f64) -> Vector3<f64> {
        let (s, c) = self.from_deg.to_radians().sin_cos();
        let mut w = Vector3::new(-self.speed * c, -self.speed * s, 0.0);
        if let Some(g) = self.gust {
            let tau = t - g.start;
            if tau >= 0.0 && tau <= g.duration && g.duration > 0.0 {
                let shape = 0.5 * (1.0 - (TAU * tau / g.duration).cos());
                w += Vector3::from(g.peak) * shape;
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calm_is_zero() {
        assert_eq!(WindConfig::calm().at(12.0), Vector3::zeros());
    }

    #[test]
    fn constant_from_minus_seventy() {
        let w = WindConfig::constant(6.7, -70.0).at(0.0);
        assert!((w.norm() - 6.7).abs() < 1e-12);
        // from 70° west of North, so it blows toward 110°
        assert!(w.x < 0.0 && w.y > 0.0);
        let bearing_to = w.y.atan2(w.x).to_degrees();
        assert!((bearing_to - 110.0).abs() < 1e-9);
    }

    #[test]
    fn gust_peaks_and_integrates() {
        let wind = WindConfig {
            speed: 0.0,
            from_deg: 0.0,
            gust: Some(Gust {
                start: 1.0,
                duration: 2.0,
                peak: [0.0, 4.0, 0.0],
            }),
        };
        assert!((wind.at(2.0).y - 4.0).abs() < 1e-12);
        assert_eq!(wind.at(0.5).y, 0.0);
        assert_eq!(wind.at(3.5).y, 0.0);
        let n = 20_000;
        let dt = 2.0 / n as f64;
        let integral: f64 = (0..n)
            .map(|k| wind.at(1.0 + (k as f64 + 0.5) * dt).y * dt)
            .sum();
        // mean of the shape over its window is one half of the peak
        assert!((integral - 4.0).abs() < 1e-6);
    }
}
