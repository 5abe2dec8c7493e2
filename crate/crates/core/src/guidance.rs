//! Guidance: turns a flight plan into an NED acceleration reference.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::frames::wrap_pi;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceParams {
    /// Position gain, 1/s.
    pub k_xi: f64,
    /// Velocity gain, 1/s.
    pub k_xi_dot: f64,
    /// Vertical position and velocity gains.
    pub k_z: f64,
    pub k_z_dot: f64,
    /// Deceleration budget for the approach speed limit, m/s².
    pub a_max: f64,
    pub approach_limit: bool,
    /// Horizontal and vertical acceleration reference bounds, m/s².
    pub accel_h_max: f64,
    pub accel_v_max: f64,
    pub turn_airspeed: f64,
    pub turn_desired_airspeed: f64,
    /// Course-error gain of the fixed-wing turn, 1/s.
    pub turn_course_gain: f64,
    /// Lateral acceleration bound of the fixed-wing turn, m/s².
    pub turn_accel_max: f64,
    /// Course error beyond which the turn keeps its current direction, rad.
    pub turn_latch: f64,
    pub line_switch_distance: f64,
    pub line_quadratic: f64,
    pub line_scale: f64,
    /// Waypoint acceptance radius, m.
    pub waypoint_radius: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            k_xi: 0.8,
            k_xi_dot: 1.5,
            k_z: 1.0,
            k_z_dot: 2.0,
            a_max: 1.4,
            approach_limit: true,
            accel_h_max: 6.0,
            accel_v_max: 4.0,
            turn_airspeed: 10.0,
            turn_desired_airspeed: 14.0,
            turn_course_gain: 1.0,
            turn_accel_max: 4.0,
            turn_latch: 120f64.to_radians(),
            line_switch_distance: 20.0,
            line_quadratic: 0.05,
            line_scale: 50.0,
            waypoint_radius: 3.0,
        }
    }
}

/// ξ̈_ref = ((ξ_ref − ξ)K_ξ − ξ̇)K_ξ̇.
pub fn pd_accel_ref(
    xi_ref: Vector3<f64>,
    xi: Vector3<f64>,
    xi_dot: Vector3<f64>,
    k_xi: f64,
    k_xi_dot: f64,
) -> Vector3<f64> {
    ((xi_ref - xi) * k_xi - xi_dot) * k_xi_dot
}

/// Largest speed from which the vehicle can stop within `d` at `a_max`.
pub fn approach_speed_limit(d: f64, a_max: f64) -> f64 {
    (2.0 * d.max(0.0) * a_max).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnMode {
    Direct,
    FixedWingTurn,
}

impl TurnMode {
    pub fn code(self) -> u8 {
        match self {
            TurnMode::Direct => 0,
            TurnMode::FixedWingTurn => 1,
        }
    }
}

pub fn select_turn_mode(v_current: f64, v_desired: f64, p: &GuidanceParams) -> TurnMode {
    if v_current > p.turn_airspeed && v_desired > p.turn_desired_airspeed {
        TurnMode::FixedWingTurn
    } else {
        TurnMode::Direct
    }
}

/// λ = atan((d + c·d²)/s) for an unsigned distance.
pub fn line_lambda(d: f64, p: &GuidanceParams) -> f64 {
    let d = d.abs();
    ((d + p.line_quadratic * d * d) / p.line_scale).atan()
}

/// Rotate a horizontal NED vector clockwise (North toward East) by `a`.
fn rotate(v: Vector2<f64>, a: f64) -> Vector2<f64> {
    let (s, c) = a.sin_cos();
    Vector2::new(v.x * c - v.y * s, v.x * s + v.y * c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineField {
    /// Unit horizontal velocity direction.
    pub direction: Vector2<f64>,
    pub lambda: f64,
    /// Signed cross-track distance, positive right of the line.
    pub cross_track: f64,
    /// Distance travelled along the line from its start.
    pub along_track: f64,
    pub length: f64,
}

/// Vector field around the line through `start` and `end`.
pub fn line_vector(
    p: Vector3<f64>,
    start: Vector3<f64>,
    end: Vector3<f64>,
    gp: &GuidanceParams,
) -> LineField {
    let ab = Vector2::new(end.x - start.x, end.y - start.y);
    let length = ab.norm();
    let t = if length > 0.0 {
        ab / length
    } else {
        Vector2::x()
    };
    let r = Vector2::new(p.x - start.x, p.y - start.y);
    let cross_track = t.x * r.y - t.y * r.x;
    let along_track = t.dot(&r);
    let lambda = line_lambda(cross_track, gp);
    let direction = rotate(t, -cross_track.signum() * lambda);
    LineField {
        direction,
        lambda: if cross_track < 0.0 { -lambda } else { lambda },
        cross_track,
        along_track,
        length,
    }
}

/// Course change from the ground track to `target`, in (−π, π].
pub fn course_error(ground_vel: Vector2<f64>, target: Vector2<f64>) -> f64 {
    if target.norm() > 1e-6 && ground_vel.norm() > 1e-6 {
        wrap_pi(target.y.atan2(target.x) - ground_vel.y.atan2(ground_vel.x))
    } else {
        0.0
    }
}

/// Horizontal acceleration for a constant-speed course capture: a speed-hold
/// term along the current track bounded by `a_max`, and a lateral term
/// turning through `course_err` bounded by `turn_accel_max`.
pub fn fixed_wing_turn_accel(
    ground_vel: Vector2<f64>,
    v_des: f64,
    course_err: f64,
    p: &GuidanceParams,
) -> Vector2<f64> {
    let v = ground_vel.norm();
    let t = ground_vel / v;
    let n = Vector2::new(-t.y, t.x);
    let a_t = ((v_des - v) * p.k_xi_dot).clamp(-p.a_max, p.a_max);
    let a_n = (v * p.turn_course_gain * course_err).clamp(-p.turn_accel_max, p.turn_accel_max);
    t * a_t + n * a_n
}

/// [`fixed_wing_turn_accel`] toward the course of `target` by the shorter side.
pub fn fixed_wing_turn_ref(
    ground_vel: Vector2<f64>,
    target: Vector2<f64>,
    p: &GuidanceParams,
) -> Vector2<f64> {
    if ground_vel.norm() < 1e-6 {
        return (target - ground_vel) * p.k_xi_dot;
    }
    fixed_wing_turn_accel(
        ground_vel,
        target.norm(),
        course_error(ground_vel, target),
        p,
    )
}

/// Keeps a large turn going the way it started once the course error
/// passes `latch`, so a target near the reciprocal does not flip it.
pub fn latched_course_error(err: f64, previous: f64, latch: f64) -> f64 {
    if err.abs() > latch && previous.abs() > latch && err.signum() != previous.signum() {
        err - std::f64::consts::TAU * err.signum()
    } else {
        err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanElement {
    /// Hold a point; `duration` of `None` holds forever.
    Hover {
        point: [f64; 3],
        #[serde(default)]
        duration: Option<f64>,
    },
    /// Fly to a point, completed inside the acceptance radius.
    Goto { point: [f64; 3], speed: f64 },
    /// Track the segment from `start` to `end`.
    Line {
        start: [f64; 3],
        end: [f64; 3],
        speed: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlightPlan {
    pub elements: Vec<PlanElement>,
}

/// Guidance inputs for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Valid airspeed, or 0 when unknown.
    pub airspeed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceOutput {
    pub accel_ref: Vector3<f64>,
    pub velocity_ref: Vector3<f64>,
    pub mode: TurnMode,
    pub element: usize,
    /// Cross-track error of the active line, 0 otherwise.
    pub cross_track: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    pub params: GuidanceParams,
    pub plan: FlightPlan,
    index: usize,
    element_start: Option<f64>,
    mode: TurnMode,
    last_course_err: f64,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

fn horizontal(v: Vector3<f64>) -> Vector2<f64> {
    Vector2::new(v.x, v.y)
}

fn clamp_norm(v: Vector2<f64>, max: f64) -> Vector2<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

impl Guidance {
    pub fn new(params: GuidanceParams, plan: FlightPlan) -> Self {
        Self {
            params,
            plan,
            index: 0,
            element_start: None,
            mode: TurnMode::Direct,
            last_course_err: 0.0,
        }
    }

    pub fn element_index(&self) -> usize {
        self.index
    }

    pub fn mode(&self) -> TurnMode {
        self.mode
    }

    fn advance(&mut self) {
        if self.index + 1 < self.plan.elements.len() {
            self.index += 1;
            self.element_start = None;
        }
    }

    /// Update the sequencer and produce the acceleration reference.
    pub fn step(&mut self, t: f64, nav: &NavState) -> GuidanceOutput {
        let gp = self.params;
        let Some(element) = self.plan.elements.get(self.index).cloned() else {
            let accel_ref =
                pd_accel_ref(nav.position, nav.position, nav.velocity, 0.0, gp.k_xi_dot);
            return GuidanceOutput {
                accel_ref,
                velocity_ref: Vector3::zeros(),
                mode: TurnMode::Direct,
                element: 0,
                cross_track: 0.0,
            };
        };
        let started = *self.element_start.get_or_insert(t);

        let mut cross_track = 0.0;
        let (target_h, z_ref, z_dot_ref) = match element {
            PlanElement::Hover { point, duration } => {
                if duration.is_some_and(|d| t - started >= d) {
                    self.advance();
                }
                let e = horizontal(v3(point) - nav.position);
                let mut v = e * gp.k_xi;
                if gp.approach_limit {
                    v = clamp_norm(v, approach_speed_limit(e.norm(), gp.a_max).max(1e-9));
                }
                (v, point[2], 0.0)
            }
            PlanElement::Goto { point, speed } => {
                let e = horizontal(v3(point) - nav.position);
                let d = e.norm();
                let mut v = clamp_norm(e * gp.k_xi, speed);
                if gp.approach_limit {
                    v = clamp_norm(v, approach_speed_limit(d, gp.a_max).max(1e-9));
                }
                if d < gp.waypoint_radius {
                    self.advance();
                }
                (v, point[2], 0.0)
            }
            PlanElement::Line { start, end, speed } => {
                let f = line_vector(nav.position, v3(start), v3(end), &gp);
                cross_track = f.cross_track;
                let remaining = f.length - f.along_track;
                let mut s = speed;
                let last = self.index + 1 == self.plan.elements.len();
                if last {
                    s = s.min(remaining.max(0.0) * gp.k_xi);
                    if gp.approach_limit {
                        s = s.min(approach_speed_limit(remaining, gp.a_max));
                    }
                }
                if !last && remaining <= gp.line_switch_distance {
                    self.advance();
                }
                let frac = if f.length > 0.0 {
                    (f.along_track / f.length).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let z = start[2] + (end[2] - start[2]) * frac;
                let climb = if f.length > 0.0 {
                    (end[2] - start[2]) / f.length * s
                } else {
                    0.0
                };
                (f.direction * s, z, climb)
            }
        };

        let ground = horizontal(nav.velocity);
        self.mode = select_turn_mode(nav.airspeed, target_h.norm(), &gp);
        let a_h = match self.mode {
            TurnMode::Direct => (target_h - ground) * gp.k_xi_dot,
            TurnMode::FixedWingTurn if ground.norm() > 1e-6 => {
                let err = latched_course_error(
                    course_error(ground, target_h),
                    self.last_course_err,
                    gp.turn_latch,
                );
                self.last_course_err = err;
                fixed_wing_turn_accel(ground, target_h.norm(), err, &gp)
            }
            _ => {
                self.last_course_err = 0.0;
                (target_h - ground) * gp.k_xi_dot
            }
        };
        let a_h = clamp_norm(a_h, gp.accel_h_max);
        let w_ref = (z_ref - nav.position.z) * gp.k_z + z_dot_ref;
        let a_z = ((w_ref - nav.velocity.z) * gp.k_z_dot).clamp(-gp.accel_v_max, gp.accel_v_max);
        GuidanceOutput {
            accel_ref: Vector3::new(a_h.x, a_h.y, a_z),
            velocity_ref: Vector3::new(target_h.x, target_h.y, w_ref),
            mode: self.mode,
            element: self.index,
            cross_track,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn gp() -> GuidanceParams {
        GuidanceParams::default()
    }

    #[test]
    fn pd_examples() {
        let z = Vector3::zeros();
        assert_eq!(pd_accel_ref(z, z, z, 1.0, 1.0), z);
        assert_eq!(
            pd_accel_ref(Vector3::new(10.0, 0.0, 0.0), z, z, 1.0, 1.0),
            Vector3::new(10.0, 0.0, 0.0)
        );
        let k = 1.7;
        assert_eq!(
            pd_accel_ref(z, z, Vector3::new(0.0, 5.0, 0.0), 1.0, k),
            Vector3::new(0.0, -5.0 * k, 0.0)
        );
    }

    #[test]
    fn approach_limit_examples() {
        assert_eq!(approach_speed_limit(0.0, 2.0), 0.0);
        assert!((approach_speed_limit(50.0, 2.0) - 14.142).abs() < 1e-3);
        assert_eq!(approach_speed_limit(-1.0, 2.0), 0.0);
    }

    #[test]
    fn turn_mode_examples() {
        let p = gp();
        assert_eq!(select_turn_mode(20.0, 20.0, &p), TurnMode::FixedWingTurn);
        assert_eq!(select_turn_mode(5.0, 20.0, &p), TurnMode::Direct);
        assert_eq!(select_turn_mode(12.0, 12.0, &p), TurnMode::Direct);
        assert_eq!(select_turn_mode(10.0, 20.0, &p), TurnMode::Direct);
        assert_eq!(select_turn_mode(20.0, 14.0, &p), TurnMode::Direct);
    }

    #[test]
    fn turn_mode_grid() {
        let p = gp();
        for i in 0..=300 {
            for j in 0..=300 {
                let (a, b) = (i as f64 * 0.1, j as f64 * 0.1);
                let expect = a > 10.0 && b > 14.0;
                assert_eq!(
                    select_turn_mode(a, b, &p) == TurnMode::FixedWingTurn,
                    expect
                );
            }
        }
    }

    #[test]
    fn lambda_examples() {
        let p = gp();
        assert_eq!(line_lambda(0.0, &p), 0.0);
        assert!((line_lambda(50.0, &p) - 3.5f64.atan()).abs() < 1e-12);
        assert!((line_lambda(50.0, &p) - 1.2925).abs() < 1e-4);
        assert!((line_lambda(10.0, &p) - 0.3f64.atan()).abs() < 1e-12);
    }

    #[test]
    fn lambda_monotone_and_bounded() {
        let p = gp();
        let mut last = -1.0;
        for k in 0..10_000 {
            let l = line_lambda(k as f64 * 0.1, &p);
            assert!(l > last && l < FRAC_PI_2);
            last = l;
        }
    }

    #[test]
    fn line_field_points_toward_line() {
        let p = gp();
        let (a, b) = (Vector3::zeros(), Vector3::new(100.0, 0.0, 0.0));
        let on = line_vector(Vector3::new(30.0, 0.0, 0.0), a, b, &p);
        assert_eq!(on.direction, Vector2::new(1.0, 0.0));
        let right = line_vector(Vector3::new(30.0, 10.0, 0.0), a, b, &p);
        assert!(right.direction.y < 0.0 && right.direction.x > 0.0);
        assert!((right.lambda - 0.3f64.atan()).abs() < 1e-12);
        assert_eq!(right.cross_track, 10.0);
        let left = line_vector(Vector3::new(30.0, -50.0, 0.0), a, b, &p);
        assert!(left.direction.y > 0.0);
        assert!((left.direction.y.atan2(left.direction.x) - 3.5f64.atan()).abs() < 1e-12);
        assert!((right.direction.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_wing_turn_cases() {
        let p = gp();
        let on = fixed_wing_turn_ref(Vector2::new(20.0, 0.0), Vector2::new(20.0, 0.0), &p);
        assert_eq!(on, Vector2::zeros());
        let slow = fixed_wing_turn_ref(Vector2::new(20.0, 0.0), Vector2::new(18.0, 0.0), &p);
        assert!(slow.x < 0.0 && slow.y == 0.0);
        let back = fixed_wing_turn_ref(Vector2::new(20.0, 0.0), Vector2::new(-20.0, 0.0), &p);
        assert!(back.x.abs() < 1e-9);
        assert!((back.y.abs() - p.turn_accel_max).abs() < 1e-12);
        // decelerating turn: both components present
        let dec = fixed_wing_turn_ref(Vector2::new(20.0, 0.0), Vector2::new(0.0, 15.0), &p);
        assert!(dec.x < 0.0 && dec.y > 0.0);
    }

    #[test]
    fn large_turn_keeps_its_direction() {
        let latch = gp().turn_latch;
        let started_left = -170f64.to_radians();
        let now_right = 175f64.to_radians();
        let held = latched_course_error(now_right, started_left, latch);
        assert!(held < 0.0);
        assert!((held - (now_right - std::f64::consts::TAU)).abs() < 1e-15);
        // small errors never latch
        assert_eq!(latched_course_error(0.3, -0.2, latch), 0.3);
    }

    #[test]
    fn sequencer_switches_lines_before_end() {
        let plan = FlightPlan {
            elements: vec![
                PlanElement::Line {
                    start: [0.0, 0.0, -20.0],
                    end: [100.0, 0.0, -20.0],
                    speed: 12.0,
                },
                PlanElement::Line {
                    start: [100.0, 0.0, -20.0],
                    end: [100.0, 100.0, -20.0],
                    speed: 12.0,
                },
            ],
        };
        let mut g = Guidance::new(gp(), plan);
        let nav = |x: f64| NavState {
            position: Vector3::new(x, 0.0, -20.0),
            velocity: Vector3::new(12.0, 0.0, 0.0),
            airspeed: 12.0,
        };
        g.step(0.0, &nav(50.0));
        assert_eq!(g.element_index(), 0);
        g.step(0.1, &nav(81.0));
        assert_eq!(g.element_index(), 1);
    }

    #[test]
    fn hover_duration_advances() {
        let plan = FlightPlan {
            elements: vec![
                PlanElement::Hover {
                    point: [0.0, 0.0, -10.0],
                    duration: Some(1.0),
                },
                PlanElement::Goto {
                    point: [50.0, 0.0, -10.0],
                    speed: 10.0,
                },
            ],
        };
        let mut g = Guidance::new(gp(), plan);
        let nav = NavState {
            position: Vector3::new(0.0, 0.0, -10.0),
            velocity: Vector3::zeros(),
            airspeed: 0.0,
        };
        g.step(0.0, &nav);
        g.step(0.5, &nav);
        assert_eq!(g.element_index(), 0);
        g.step(1.0, &nav);
        assert_eq!(g.element_index(), 1);
        let out = g.step(1.002, &nav);
        assert!(out.accel_ref.x > 0.0);
    }

    #[test]
    fn approach_limit_caps_speed_reference() {
        let plan = FlightPlan {
            elements: vec![PlanElement::Goto {
                point: [40.0, 0.0, 0.0],
                speed: 20.0,
            }],
        };
        let nav = NavState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            airspeed: 0.0,
        };
        let mut limited = Guidance::new(gp(), plan.clone());
        let v1 = limited.step(0.0, &nav).velocity_ref.x;
        let mut free = Guidance::new(
            GuidanceParams {
                approach_limit: false,
                ..gp()
            },
            plan,
        );
        let v2 = free.step(0.0, &nav).velocity_ref.x;
        assert!((v1 - approach_speed_limit(40.0, gp().a_max)).abs() < 1e-12);
        assert!(v2 > v1);
    }

    #[test]
    fn plan_parses_from_toml() {
        let text = r#"
            [[elements]]
            type = "hover"
            point = [0.0, 0.0, -10.0]
            duration = 5.0

            [[elements]]
            type = "line"
            start = [0.0, 0.0, -10.0]
            end = [100.0, 0.0, -10.0]
            speed = 16.0
        "#;
        let plan: FlightPlan = toml::from_str(text).unwrap();
        assert_eq!(plan.elements.len(), 2);
    }
}
