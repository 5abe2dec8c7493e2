//! Weighted least-squares control allocation with box constraints, solved by
//! an active-set method.
//!
//! The cost is `‖Wv(G·du − dnu)‖² + γ‖Wu·du/s‖²` where `s` is the actuator
//! full range, so γ is dimensionless and does not depend on command units.

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::types::COMMAND_MAX;

const ROWS: usize = 8;
type Stacked = SMatrix<f64, ROWS, 4>;
type StackedVec = SVector<f64, ROWS>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WlsSettings {
    /// Priority of roll, pitch, yaw and thrust errors.
    pub wv: [f64; 4],
    pub wu: [f64; 4],
    pub gamma: f64,
    /// Normalization of `du` in the regularization term.
    pub input_scale: f64,
    pub max_iterations: usize,
}

impl Default for WlsSettings {
    fn default() -> Self {
        Self {
            wv: [100.0, 1000.0, 0.1, 10.0],
            wu: [1.0; 4],
            gamma: 1e-4,
            input_scale: COMMAND_MAX,
            max_iterations: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationProblem {
    pub g: Matrix4<f64>,
    pub dnu: Vector4<f64>,
    pub du_min: Vector4<f64>,
    pub du_max: Vector4<f64>,
    pub settings: WlsSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationSolution {
    pub du: Vector4<f64>,
    pub active_set: [BoundState; 4],
    pub iterations: usize,
    pub converged: bool,
    pub achieved: Vector4<f64>,
}

impl AllocationSolution {
    pub fn saturated(&self, i: usize) -> bool {
        self.active_set[i] != BoundState::Free
    }
}

impl AllocationProblem {
    /// Stack the weighted effectiveness on top of the regularization rows.
    fn stacked(&self) -> (Stacked, StackedVec) {
        let s = &self.settings;
        let mut a = Stacked::zeros();
        let mut b = StackedVec::zeros();
        let reg = s.gamma.sqrt() / s.input_scale;
        for r in 0..4 {
            for c in 0..4 {
                a[(r, c)] = s.wv[r] * self.g[(r, c)];
            }
            b[r] = s.wv[r] * self.dnu[r];
            a[(4 + r, r)] = reg * s.wu[r];
        }
        (a, b)
    }

    pub fn objective(&self, du: &Vector4<f64>) -> f64 {
        let (a, b) = self.stacked();
        (a * du - b).norm_squared()
    }

    /// Gradient of the objective.
    pub fn gradient(&self, du: &Vector4<f64>) -> Vector4<f64> {
        let (a, b) = self.stacked();
        2.0 * a.transpose() * (a * du - b)
    }

    /// Magnitude a gradient component can reach at `du`, used to make the
    /// optimality residuals dimensionless.
    fn gradient_scale(&self, du: &Vector4<f64>) -> f64 {
        let (a, b) = self.stacked();
        let col = (0..4).map(|c| a.column(c).norm()).fold(0.0, f64::max);
        2.0 * col * (b.norm() + (a * du).norm()) + f64::MIN_POSITIVE
    }
}

/// Least-squares solve on the free columns; returns the step for those
/// columns with zeros elsewhere.
fn free_step(a: &Stacked, rhs: &StackedVec, free: &[usize]) -> Vector4<f64> {
    let mut p = Vector4::zeros();
    if free.is_empty() {
        return p;
    }
    let af = DMatrix::from_fn(ROWS, free.len(), |r, c| a[(r, free[c])]);
    let qr = af.qr();
    let qtb = qr.q().transpose() * DVector::from_column_slice(rhs.as_slice());
    let sol = qr
        .r()
        .solve_upper_triangular(&qtb)
        .unwrap_or_else(|| DVector::zeros(free.len()));
    for (k, &i) in free.iter().enumerate() {
        p[i] = sol[k];
    }
    p
}

/// Active-set solution of the box-constrained WLS problem, starting from
/// `du = 0` with no active constraints. Ties are broken toward the lowest
/// input index.
pub fn wls_allocate(p: &AllocationProblem) -> AllocationSolution {
    let (a, b) = p.stacked();
    let mut du = Vector4::zeros();
    let mut ws = [BoundState::Free; 4];
    let mut converged = false;
    let mut iterations = 0;
    let tol = 1e-13 * p.gradient_scale(&Vector4::zeros());

    while iterations < p.settings.max_iterations {
        iterations += 1;
        let free: Vec<usize> = (0..4).filter(|&i| ws[i] == BoundState::Free).collect();
        let residual = b - a * du;
        let step = free_step(&a, &residual, &free);

        // largest feasible fraction of the step
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let candidate = if step[i] > 0.0 {
                (p.du_max[i] - du[i]) / step[i]
            } else if step[i] < 0.0 {
                (p.du_min[i] - du[i]) / step[i]
            } else {
                continue;
            };
            if candidate < alpha {
                alpha = candidate.max(0.0);
                blocking = Some(i);
            }
        }

        match blocking {
            Some(i) => {
                du += alpha * step;
                if step[i] > 0.0 {
                    du[i] = p.du_max[i];
                    ws[i] = BoundState::Upper;
                } else {
                    du[i] = p.du_min[i];
                    ws[i] = BoundState::Lower;
                }
            }
            None => {
                du += step;
                let g = 2.0 * a.transpose() * (a * du - b);
                let mut worst = -tol;
                let mut release = None;
                for i in 0..4 {
                    let lambda = match ws[i] {
                        BoundState::Free => continue,
                        BoundState::Lower => g[i],
                        BoundState::Upper => -g[i],
                    };
                    if lambda < worst {
                        worst = lambda;
                        release = Some(i);
                    }
                }
                match release {
                    Some(i) => ws[i] = BoundState::Free,
                    None => {
                        converged = true;
                        break;
                    }
                }
            }
        }
    }

    for i in 0..4 {
        du[i] = du[i].clamp(p.du_min[i], p.du_max[i]);
    }
    AllocationSolution {
        du,
        active_set: ws,
        iterations,
        converged,
        achieved: p.g * du,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest gradient component on free inputs, relative to the problem's
    /// gradient scale.
    pub stationarity: f64,
    /// Largest wrong-signed multiplier on active bounds, same scaling.
    pub multiplier_violation: f64,
    /// Largest bound violation in command units.
    pub infeasibility: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.multiplier_violation)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.max_residual() < tol && self.infeasibility == 0.0
    }
}

/// First-order optimality residuals of a candidate solution.
pub fn check_kkt(p: &AllocationProblem, sol: &AllocationSolution) -> KktReport {
    let g = p.gradient(&sol.du);
    let scale = p.gradient_scale(&sol.du);
    let mut stationarity = 0.0f64;
    let mut multiplier_violation = 0.0f64;
    let mut infeasibility = 0.0f64;
    for i in 0..4 {
        let d = sol.du[i];
        infeasibility = infeasibility.max(p.du_min[i] - d).max(d - p.du_max[i]);
        match sol.active_set[i] {
            BoundState::Free => stationarity = stationarity.max(g[i].abs() / scale),
            BoundState::Lower => multiplier_violation = multiplier_violation.max(-g[i] / scale),
            BoundState::Upper => multiplier_violation = multiplier_violation.max(g[i] / scale),
        }
    }
    KktReport {
        stationarity,
        multiplier_violation,
        infeasibility: infeasibility.max(0.0),
    }
}

/// Reference solver: tries every lower/upper/free assignment, solves the
/// free part by SVD and keeps the best feasible candidate.
pub fn solve_by_enumeration(p: &AllocationProblem) -> (Vector4<f64>, f64) {
    let (a, b) = p.stacked();
    let mut best = (Vector4::zeros(), p.objective(&Vector4::zeros()));
    for code in 0..81u32 {
        let mut du = Vector4::zeros();
        let mut free = Vec::with_capacity(4);
        let mut c = code;
        for i in 0..4 {
            match c % 3 {
                0 => free.push(i),
                1 => du[i] = p.du_min[i],
                _ => du[i] = p.du_max[i],
            }
            c /= 3;
        }
        if !free.is_empty() {
            let af = DMatrix::from_fn(ROWS, free.len(), |r, k| a[(r, free[k])]);
            let rhs = DVector::from_column_slice((b - a * du).as_slice());
            let Ok(x) = af.svd(true, true).solve(&rhs, 1e-15) else {
                continue;
            };
            let mut feasible = true;
            for (k, &i) in free.iter().enumerate() {
                let span = (p.du_max[i] - p.du_min[i]).abs().max(1.0);
                if x[k] < p.du_min[i] - 1e-12 * span || x[k] > p.du_max[i] + 1e-12 * span {
                    feasible = false;
                }
                du[i] = x[k].clamp(p.du_min[i], p.du_max[i]);
            }
            if !feasible {
                continue;
            }
        }
        let j = p.objective(&du);
        if j < best.1 {
            best = (du, j);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hover_g() -> Matrix4<f64> {
        Matrix4::new(
            0.0,
            0.0,
            -4500.0 * 1.8e-6,
            4500.0 * 1.8e-6,
            -2.1e-3,
            2.1e-3,
            0.0,
            0.0,
            -2.0e-3,
            -2.0e-3,
            0.0,
            0.0,
            0.0,
            0.0,
            -0.0011,
            -0.0011,
        )
    }

    fn problem(
        g: Matrix4<f64>,
        dnu: Vector4<f64>,
        lo: Vector4<f64>,
        hi: Vector4<f64>,
    ) -> AllocationProblem {
        AllocationProblem {
            g,
            dnu,
            du_min: lo,
            du_max: hi,
            settings: WlsSettings::default(),
        }
    }

    fn wide() -> (Vector4<f64>, Vector4<f64>) {
        (Vector4::repeat(-1e9), Vector4::repeat(1e9))
    }

    #[test]
    fn zero_demand_gives_zero_increment() {
        let (lo, hi) = wide();
        let sol = wls_allocate(&problem(hover_g(), Vector4::zeros(), lo, hi));
        assert_eq!(sol.du, Vector4::zeros());
        assert!(sol.converged);
    }

    #[test]
    fn unconstrained_matches_inverse() {
        let (lo, hi) = wide();
        let mut p = problem(hover_g(), Vector4::new(1.0, 2.0, -0.5, -1.0), lo, hi);
        p.settings.wv = [1.0; 4];
        p.settings.gamma = 0.0;
        let sol = wls_allocate(&p);
        let exact = hover_g().try_inverse().unwrap() * p.dnu;
        assert!(sol.converged);
        assert!((sol.du - exact).norm() / exact.norm() < 1e-10);
        assert!(check_kkt(&p, &sol).holds(1e-8));
    }

    #[test]
    fn default_regularization_barely_perturbs_unconstrained_solution() {
        let (lo, hi) = wide();
        let p = problem(hover_g(), Vector4::new(1.0, 2.0, -0.5, -1.0), lo, hi);
        let sol = wls_allocate(&p);
        let exact = hover_g().try_inverse().unwrap() * p.dnu;
        assert!((sol.du - exact).norm() / exact.norm() < 1e-3);
    }

    #[test]
    fn pitch_demand_splits_flaps_differentially() {
        let (lo, hi) = wide();
        let p = problem(hover_g(), Vector4::new(0.0, 5.0, 0.0, 0.0), lo, hi);
        let sol = wls_allocate(&p);
        let expect = 5.0 / (2.0 * 2.1e-3);
        assert!((sol.du[0] + expect).abs() / expect < 1e-3);
        assert!((sol.du[1] - expect).abs() / expect < 1e-3);
    }

    #[test]
    fn pitch_priority_sacrifices_yaw() {
        // flap box admits the pitch demand or the yaw demand, not both
        let g = hover_g();
        let dnu = Vector4::new(0.0, 20.0, -20.0, 0.0);
        let lo = Vector4::new(-5000.0, -5000.0, -100.0, -100.0);
        let hi = Vector4::new(5000.0, 5000.0, 100.0, 100.0);
        let p = problem(g, dnu, lo, hi);
        let sol = wls_allocate(&p);
        assert!(sol.converged);
        let r = sol.achieved - dnu;
        assert!(r[1].abs() < 0.05 * r[2].abs(), "{r:?}");
        let (best, j) = solve_by_enumeration(&p);
        assert!(p.objective(&sol.du) <= j + 1e-6);
        assert!((best - sol.du).norm() < 1e-6);
        assert!(check_kkt(&p, &sol).holds(1e-8));
    }

    #[test]
    fn gated_thrust_helps_pitch() {
        let mut g = hover_g();
        g[(1, 2)] = 2.2 / 96.0;
        g[(1, 3)] = 2.2 / 96.0;
        // flaps already saturated in the pitch-up direction
        let lo = Vector4::new(-1600.0, 0.0, -3000.0, -3000.0);
        let hi = Vector4::new(0.0, 1600.0, 3000.0, 3000.0);
        let p = problem(g, Vector4::new(0.0, 30.0, 0.0, 0.0), lo, hi);
        let sol = wls_allocate(&p);
        assert!(sol.du[2] > 100.0 && sol.du[3] > 100.0, "{:?}", sol.du);
        let (_, j) = solve_by_enumeration(&p);
        assert!(p.objective(&sol.du) <= j + 1e-6);
    }

    #[test]
    fn pinned_inputs_stay_put() {
        let lo = Vector4::new(0.0, -100.0, 0.0, 0.0);
        let hi = Vector4::new(0.0, 100.0, 0.0, 0.0);
        let p = problem(hover_g(), Vector4::new(1.0, 3.0, 1.0, -1.0), lo, hi);
        let sol = wls_allocate(&p);
        assert_eq!(sol.du[0], 0.0);
        assert_eq!(sol.du[2], 0.0);
        assert_eq!(sol.du[3], 0.0);
        assert!(sol.du[1].abs() <= 100.0);
    }

    #[test]
    fn iteration_cap_returns_flagged_feasible_iterate() {
        let lo = Vector4::repeat(-10.0);
        let hi = Vector4::repeat(10.0);
        let mut p = problem(hover_g(), Vector4::new(5.0, 5.0, 5.0, 5.0), lo, hi);
        p.settings.max_iterations = 1;
        let sol = wls_allocate(&p);
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.du.iter().all(|d| d.abs() <= 10.0));
    }

    fn random_g() -> impl Strategy<Value = Matrix4<f64>> {
        (
            -2e-2..0.0f64,
            0.0..2e-2f64,
            -8e-3..-1e-3f64,
            -1.5e-2..-1e-3f64,
            prop_oneof![Just(0.0), Just(2.2 / 96.0), Just(-2.2 / 96.0)],
        )
            .prop_map(|(g13, g14, g21, g31, g23)| {
                Matrix4::new(
                    0.0, 0.0, g13, g14, g21, -g21, g23, g23, g31, g31, 0.0, 0.0, 0.0, 0.0, -0.0011,
                    -0.0011,
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn matches_oracle_and_kkt(
            g in random_g(),
            dnu in prop::array::uniform4(-40.0..40.0f64),
            lo in prop::array::uniform4(0.0..9600.0f64),
            hi in prop::array::uniform4(0.0..9600.0f64),
        ) {
            let p = problem(g, Vector4::from(dnu), -Vector4::from(lo), Vector4::from(hi));
            let sol = wls_allocate(&p);
            let (_, j) = solve_by_enumeration(&p);
            prop_assert!(p.objective(&sol.du) <= j + 1e-6);
            for i in 0..4 {
                prop_assert!(sol.du[i] >= p.du_min[i] && sol.du[i] <= p.du_max[i]);
            }
            if sol.converged {
                prop_assert!(check_kkt(&p, &sol).holds(1e-8));
            }
        }

        #[test]
        fn positively_homogeneous(
            g in random_g(),
            dnu in prop::array::uniform4(-20.0..20.0f64),
            lo in prop::array::uniform4(1.0..5000.0f64),
            hi in prop::array::uniform4(1.0..5000.0f64),
            alpha in 0.1..10.0f64,
        ) {
            let base = problem(g, Vector4::from(dnu), -Vector4::from(lo), Vector4::from(hi));
            let scaled = AllocationProblem {
                dnu: base.dnu * alpha,
                du_min: base.du_min * alpha,
                du_max: base.du_max * alpha,
                ..base
            };
            let a = wls_allocate(&base);
            let b = wls_allocate(&scaled);
            prop_assert!((b.du - a.du * alpha).norm() <= 1e-8 * (1.0 + (a.du * alpha).norm()));
        }
    }
}
