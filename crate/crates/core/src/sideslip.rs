//! Sideslip estimate from the lateral accelerometer and the heading
//! reference that nulls it.

use serde::{Deserialize, Serialize};

use crate::frames::wrap_pi;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SideslipParams {
    /// rad per m/s² of filtered lateral specific force.
    pub c2: f64,
    /// rad.
    pub b2: f64,
    /// Sideslip feedback gain, 1/s.
    pub k_beta: f64,
    /// Lower limit of the airspeed in the coordinated-turn term, m/s.
    pub v_floor: f64,
    pub gravity: f64,
    /// Largest backward pitch reference, rad.
    pub max_pitch_back: f64,
}

impl Default for SideslipParams {
    fn default() -> Self {
        Self {
            c2: -0.14,
            b2: 0.0,
            k_beta: 2.0,
            v_floor: 10.0,
            gravity: 9.81,
            max_pitch_back: 25f64.to_radians(),
        }
    }
}

/// β = c2·f_y + b2; defined at every airspeed.
pub fn estimate_beta(f_y: f64, c2: f64, b2: f64) -> f64 {
    c2 * f_y + b2
}

/// β = c1·f_y/V² + b1; kept for comparing fits, diverges as V → 0.
pub fn estimate_beta_inverse_square(f_y: f64, v: f64, c1: f64, b1: f64) -> f64 {
    c1 * f_y / (v * v) + b1
}

/// Bank angle used by the turn feed-forward. While pitching backward with a
/// small roll, the backward pitch is used instead so the vehicle turns
/// toward a target behind it. `sign(0)` is taken as +1.
pub fn phi_t(phi_ref: f64, theta_ref: f64) -> f64 {
    if theta_ref > 0.0 && phi_ref.abs() < theta_ref {
        if phi_ref < 0.0 {
            -theta_ref
        } else {
            theta_ref
        }
    } else {
        phi_ref
    }
}

/// ψ̇_ref = g·tan(φ_t)/max(V, V_floor) + K_β·β.
pub fn heading_rate_ref(
    phi_ref: f64,
    theta_ref: f64,
    v: f64,
    beta: f64,
    p: &SideslipParams,
) -> f64 {
    let v_l = v.max(p.v_floor);
    p.gravity * phi_t(phi_ref, theta_ref).tan() / v_l + p.k_beta * beta
}

pub fn clamp_pitch_ref(theta_ref: f64, max_pitch_back: f64) -> f64 {
    theta_ref.min(max_pitch_back)
}

/// Integrated heading reference.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadingRef {
    pub psi_ref: f64,
    pub psi_dot_ref: f64,
}

impl HeadingRef {
    pub fn new(psi0: f64) -> Self {
        Self {
            psi_ref: wrap_pi(psi0),
            psi_dot_ref: 0.0,
        }
    }

    pub fn step(&mut self, psi_dot_ref: f64, dt: f64) -> f64 {
        self.psi_dot_ref = psi_dot_ref;
        self.psi_ref = wrap_pi(self.psi_ref + psi_dot_ref * dt);
        self.psi_ref
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn beta_examples() {
        assert!(estimate_beta(-0.02 / 0.05, 0.05, 0.02).abs() < 1e-15);
        assert!((estimate_beta(2.0, 0.05, 0.0) - 0.1).abs() < 1e-15);
        assert!(estimate_beta(3.0, 0.05, 0.01).is_finite());
        assert!(!estimate_beta_inverse_square(3.0, 0.0, 1.0, 0.0).is_finite());
    }

    #[test]
    fn phi_t_examples() {
        assert_eq!(phi_t(0.2, -0.5), 0.2);
        assert_eq!(phi_t(0.1, 0.3), 0.3);
        assert_eq!(phi_t(-0.1, 0.3), -0.3);
        assert_eq!(phi_t(0.0, 0.3), 0.3);
        assert_eq!(phi_t(0.5, 0.3), 0.5);
    }

    #[test]
    fn heading_rate_examples() {
        let p = SideslipParams::default();
        assert_eq!(heading_rate_ref(0.0, -1.0, 15.0, 0.0, &p), 0.0);
        let r = heading_rate_ref(30f64.to_radians(), -1.0, 20.0, 0.0, &p);
        assert!((r - 9.81 * 30f64.to_radians().tan() / 20.0).abs() < 1e-15);
        assert!((r - 0.2832).abs() < 1e-4);
        let slow = heading_rate_ref(0.3, -0.2, 5.0, 0.0, &p);
        assert!((slow - 9.81 * 0.3f64.tan() / 10.0).abs() < 1e-15);
        let fb = heading_rate_ref(0.0, -1.0, 15.0, 0.1, &p);
        assert!((fb - 0.2).abs() < 1e-15);
    }

    #[test]
    fn pitch_clamp() {
        let m = 25f64.to_radians();
        assert_eq!(clamp_pitch_ref(40f64.to_radians(), m), m);
        assert_eq!(clamp_pitch_ref(-80f64.to_radians(), m), -80f64.to_radians());
        assert_eq!(clamp_pitch_ref(m, m), m);
    }

    #[test]
    fn heading_integration_wraps() {
        let mut h = HeadingRef::new(0.0);
        let rate = 0.7;
        let dt = 0.002;
        let n = 10_000;
        for _ in 0..n {
            h.step(rate, dt);
        }
        let expect = wrap_pi(rate * dt * n as f64);
        assert!((h.psi_ref - expect).abs() < 1e-9);
        assert!(h.psi_ref > -PI && h.psi_ref <= PI);
    }
}
