//! Outer INDI loop: NED acceleration error to increments of roll, pitch and
//! thrust, with compensation of the direct lift of the flaps.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::effectiveness::OuterEffectiveness;
use crate::error::FilterError;
use crate::filters::Butter4Highpass;
use crate::frames::{quat_from_euler_zxy, EulerZXY, Quaternion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterParams {
    pub mass: f64,
    /// Multiplier on the pitch column of the effectiveness before inversion.
    pub pitch_effectiveness_scale: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_max: f64,
    /// Largest thrust magnitude that may be commanded, N.
    pub thrust_max: f64,
    pub condition_limit: f64,
}

impl Default for OuterParams {
    fn default() -> Self {
        Self {
            mass: 1.2,
            pitch_effectiveness_scale: 1.0,
            theta_min: -std::f64::consts::FRAC_PI_2,
            theta_max: 25f64.to_radians(),
            phi_max: 45f64.to_radians(),
            thrust_max: 30.0,
            condition_limit: 1e6,
        }
    }
}

/// High-passed flap lift estimate removed from the measured acceleration so
/// the loop does not react to the flaps' own transient lift.
#[derive(Debug, Clone, PartialEq)]
pub struct FlapLiftCompensator {
    pub g_flap: f64,
    pub enabled: bool,
    hp: Butter4Highpass,
    last: f64,
}

impl FlapLiftCompensator {
    pub fn new(g_flap: f64, cutoff_hz: f64, sample_hz: f64, enabled: bool) -> Self {
        Self {
            g_flap,
            enabled,
            hp: Butter4Highpass::new(cutoff_hz, sample_hz),
            last: 0.0,
        }
    }

    /// Body-X acceleration attributed to flap transients in the last call.
    pub fn last_term(&self) -> f64 {
        self.last
    }

    /// ξ̈_comp = ξ̈_f − M_NB·[HP(−u_f0 + u_f1)·G_flap, 0, 0]ᵀ.
    pub fn compensate(
        &mut self,
        xi_ddot_f: Vector3<f64>,
        u_f0: f64,
        u_f1: f64,
        m_nb: &Matrix3<f64>,
    ) -> Result<Vector3<f64>, FilterError> {
        let hp = self.hp.step(-u_f0 + u_f1)?;
        self.last = if self.enabled { hp * self.g_flap } else { 0.0 };
        Ok(xi_ddot_f - m_nb * Vector3::new(self.last, 0.0, 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterCommand {
    /// [φ, θ, T]: rad, rad, N (negative thrust points along −Z body).
    pub v: Vector3<f64>,
    pub near_singular: bool,
    pub condition: f64,
    pub clamped: bool,
}

/// Solve `G·x = rhs`, switching to a Tikhonov-regularized solve when the
/// condition number exceeds `limit`. Returns (x, condition, regularized).
pub fn robust_solve(g: &Matrix3<f64>, rhs: &Vector3<f64>, limit: f64) -> (Vector3<f64>, f64, bool) {
    let sv = g.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if cond <= limit {
        if let Some(x) = g.lu().solve(rhs) {
            return (x, cond, false);
        }
    }
    let gtg = g.transpose() * g;
    let lambda = 1e-6 * gtg.trace();
    let reg = gtg + Matrix3::identity() * lambda;
    let x = reg
        .cholesky()
        .map(|c| c.solve(&(g.transpose() * rhs)))
        .unwrap_or_else(Vector3::zeros);
    (x, cond, true)
}

/// v = v_f + m·(G_T + G_L)⁻¹(ξ̈_ref − ξ̈_comp), then bounded.
pub fn outer_indi_step(
    xi_ddot_ref: Vector3<f64>,
    xi_ddot_comp: Vector3<f64>,
    v_f: Vector3<f64>,
    g: &OuterEffectiveness,
    p: &OuterParams,
) -> OuterCommand {
    let mut m = g.sum();
    for r in 0..3 {
        m[(r, 1)] *= p.pitch_effectiveness_scale;
    }
    let rhs = (xi_ddot_ref - xi_ddot_comp) * p.mass;
    let (dv, condition, near_singular) = robust_solve(&m, &rhs, p.condition_limit);
    let raw = v_f + dv;
    let v = Vector3::new(
        raw.x.clamp(-p.phi_max, p.phi_max),
        raw.y.clamp(p.theta_min, p.theta_max),
        raw.z.clamp(-p.thrust_max, 0.0),
    );
    OuterCommand {
        v,
        near_singular,
        condition,
        clamped: v != raw,
    }
}

pub fn reference_attitude(phi: f64, theta: f64, psi_ref: f64) -> Quaternion {
    quat_from_euler_zxy(EulerZXY::new(phi, theta, psi_ref))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effectiveness::{build_outer_g, ScheduleParams};
    use crate::frames::rotmat_ned_from_body;
    use crate::types::Airspeed;
    use proptest::prelude::*;

    const M: f64 = 1.2;

    fn hover_g() -> OuterEffectiveness {
        let s = ScheduleParams::default();
        build_outer_g(
            EulerZXY::default(),
            s.thrust_trim(0.0, M),
            0.0,
            s.lift_slope(0.0, Airspeed::invalid(), M),
        )
    }

    fn hover_v() -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -9.81 * M)
    }

    #[test]
    fn zero_error_is_fixed_point() {
        let a = Vector3::new(0.3, -0.2, 0.1);
        let c = outer_indi_step(a, a, hover_v(), &hover_g(), &OuterParams::default());
        assert_eq!(c.v, hover_v());
        assert!(!c.near_singular);
    }

    #[test]
    fn north_demand_tilts_forward() {
        let c = outer_indi_step(
            Vector3::x(),
            Vector3::zeros(),
            hover_v(),
            &hover_g(),
            &OuterParams::default(),
        );
        assert!((c.v.y + 1.0 / 9.81).abs() < 1e-12);
        assert!(c.v.x.abs() < 1e-12);
    }

    #[test]
    fn climb_demand_is_pure_thrust() {
        let c = outer_indi_step(
            -Vector3::z(),
            Vector3::zeros(),
            hover_v(),
            &hover_g(),
            &OuterParams::default(),
        );
        assert!((c.v.z - hover_v().z - (-M)).abs() < 1e-12);
        assert!(c.v.x.abs() < 1e-12 && c.v.y.abs() < 1e-12);
    }

    #[test]
    fn pitch_scaling_halves_pitch_increment() {
        let p = OuterParams {
            pitch_effectiveness_scale: 2.0,
            ..OuterParams::default()
        };
        let c = outer_indi_step(Vector3::x(), Vector3::zeros(), hover_v(), &hover_g(), &p);
        assert!((c.v.y + 0.5 / 9.81).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_falls_back_to_regularized_solve() {
        // θ = −90° with no lift slope and no thrust: pitch column vanishes
        let g = build_outer_g(
            EulerZXY::new(0.0, -std::f64::consts::FRAC_PI_2, 0.0),
            0.0,
            -9.81 * M,
            0.0,
        );
        let c = outer_indi_step(
            Vector3::new(1.0, 0.5, -1.0),
            Vector3::zeros(),
            Vector3::new(0.0, -1.5, -1.0),
            &g,
            &OuterParams::default(),
        );
        assert!(c.near_singular);
        assert!(c.v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn compensator_rejects_held_deflection() {
        let fs = 500.0;
        let mut comp = FlapLiftCompensator::new(1e-3, 0.5, fs, true);
        let m = Matrix3::identity();
        comp.compensate(Vector3::zeros(), 0.0, 0.0, &m).unwrap();
        let mut out = Vector3::zeros();
        for _ in 0..5000 {
            out = comp
                .compensate(Vector3::zeros(), -1000.0, 1000.0, &m)
                .unwrap();
        }
        assert!(out.norm() < 1e-3 * 1e-3 * 2000.0);
    }

    #[test]
    fn compensator_step_subtracts_flap_lift() {
        let fs = 500.0;
        let g_flap = 2e-3;
        let mut comp = FlapLiftCompensator::new(g_flap, 0.5, fs, true);
        let m = rotmat_ned_from_body(EulerZXY::new(0.0, -1.2, 0.4));
        let a = Vector3::new(0.5, -0.1, 0.2);
        comp.compensate(a, 0.0, 0.0, &m).unwrap();
        let out = comp.compensate(a, 0.0, 1000.0, &m).unwrap();
        let expected = a - m * Vector3::new(1000.0 * g_flap, 0.0, 0.0);
        assert!((out - expected).norm() < 0.01 * 1000.0 * g_flap);
        let mut last = comp.last_term();
        for _ in 0..1000 {
            comp.compensate(a, 0.0, 1000.0, &m).unwrap();
            last = comp.last_term();
        }
        assert!(last.abs() < 0.5 * 1000.0 * g_flap);
    }

    #[test]
    fn zero_deflection_passes_through() {
        let mut comp = FlapLiftCompensator::new(1e-3, 0.5, 500.0, true);
        let a = Vector3::new(1.0, 2.0, 3.0);
        for _ in 0..10 {
            assert_eq!(
                comp.compensate(a, 0.0, 0.0, &Matrix3::identity()).unwrap(),
                a
            );
        }
    }

    #[test]
    fn reference_attitude_identity() {
        assert_eq!(reference_attitude(0.0, 0.0, 0.0), Quaternion::IDENTITY);
    }

    proptest! {
        #[test]
        fn reference_attitude_matches_euler_conversion(phi in -1.0..1.0f64, theta in -1.6..0.5f64, psi in -3.1..3.1f64) {
            let a = reference_attitude(phi, theta, psi);
            let b = quat_from_euler_zxy(EulerZXY::new(phi, theta, psi));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn commanded_attitude_stays_bounded(
            ax in -50.0..50.0f64, ay in -50.0..50.0f64, az in -50.0..50.0f64,
            theta in -1.57..0.4f64, phi in -0.7..0.7f64, psi in -3.1..3.1f64, v in 0.0..25.0f64,
        ) {
            let s = ScheduleParams::default();
            let eta = EulerZXY::new(phi, theta, psi);
            let air = Airspeed::valid(v);
            let g = build_outer_g(eta, s.thrust_trim(theta, M), s.lift_trim(theta, phi, M), s.lift_slope(theta, air, M));
            let c = outer_indi_step(Vector3::new(ax, ay, az), Vector3::zeros(), Vector3::new(phi, theta, -10.0), &g, &OuterParams::default());
            prop_assert!(c.v.y <= 25f64.to_radians() && c.v.y >= -std::f64::consts::FRAC_PI_2);
            prop_assert!(c.v.iter().all(|x| x.is_finite()));
        }
    }
}
