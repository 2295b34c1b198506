//! Independent verification of plans: fixed-step simulation, closed-form and
//! bisection references, and the aggregate plan check.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Bounds, ValidatedProblem};
use crate::planner::{time_scale, Allowance, SwitchingPlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("reference requires order {expected}, got {got}")]
    Order { expected: usize, got: usize },
    #[error("boundary state violates the velocity bound")]
    InfeasibleBoundary,
    #[error("reference applies only without state bounds")]
    StateBounds,
    #[error("no feasible duration found up to {0}")]
    NoBracket(f64),
}

fn chain_rhs(x: &[f64], u: f64, out: &mut [f64]) {
    let n = x.len();
    out[..n - 1].copy_from_slice(&x[1..]);
    out[n - 1] = u;
}

/// One classical Runge-Kutta step of the chain under constant input.
pub fn rk4_step(x: &mut [f64], u: f64, h: f64) {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    chain_rhs(x, u, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    chain_rhs(&tmp, u, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    chain_rhs(&tmp, u, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    chain_rhs(&tmp, u, &mut k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Fixed-step integration over `[0, duration]` with an arbitrary input signal,
/// sampled at the midpoint of each step.
pub fn simulate_rk4(
    x0: &[f64],
    input: impl Fn(f64) -> f64,
    duration: f64,
    steps: usize,
) -> Vec<f64> {
    let steps = steps.max(1);
    let h = duration / steps as f64;
    let mut x = x0.to_vec();
    for k in 0..steps {
        rk4_step(&mut x, input((k as f64 + 0.5) * h), h);
    }
    x
}

/// Integration under a piecewise-constant input with every switching time on a
/// step boundary; `steps` steps per segment of positive length.
pub fn simulate_piecewise(x0: &[f64], times: &[f64], inputs: &[f64], steps: usize) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut prev = 0.0;
    for (&t, &u) in times.iter().zip(inputs) {
        let span = t - prev;
        if span > 0.0 {
            let h = span / steps.max(1) as f64;
            for _ in 0..steps.max(1) {
                rk4_step(&mut x, u, h);
            }
        }
        prev = t;
    }
    x
}

/// Closed-form minimum time of the double integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegratorSolution {
    pub duration: f64,
    /// The velocity saturates at a bound (trapezoid rather than triangle).
    pub cruise: bool,
    /// Sign of the first input phase (+1 or -1).
    pub sign: i32,
}

fn one_sided(d: f64, v0: f64, vf: f64, acc: f64, dec: f64, vmax: f64) -> Vec<(f64, bool)> {
    // accelerate with `acc` to the peak, optionally cruise at `vmax`, decelerate with `dec`
    let mut out = Vec::new();
    let m = v0.max(vf);
    let travel = |vp: f64| (vp * vp - v0 * v0) / (2.0 * acc) + (vp * vp - vf * vf) / (2.0 * dec);
    let time = |vp: f64| (vp - v0) / acc + (vp - vf) / dec;
    let w = 1.0 / (2.0 * acc) + 1.0 / (2.0 * dec);
    let sq = (d + v0 * v0 / (2.0 * acc) + vf * vf / (2.0 * dec)) / w;
    if sq >= 0.0 {
        for vp in [sq.sqrt(), -sq.sqrt()] {
            if vp >= m - 1e-12 * (1.0 + m.abs()) && vp <= vmax {
                out.push((time(vp.max(m)), false));
            }
        }
    }
    if vmax.is_finite() && vmax >= m && vmax != 0.0 {
        let cruise = (d - travel(vmax)) / vmax;
        if cruise >= 0.0 {
            out.push((time(vmax) + cruise, true));
        }
    }
    out
}

/// Minimum transition time for `n = 2` with asymmetric input bounds and an
/// optional velocity bound.
pub fn double_integrator_reference(
    x0: &[f64],
    xf: &[f64],
    bounds: &Bounds,
) -> Result<DoubleIntegratorSolution, OracleError> {
    if x0.len() != 2 {
        return Err(OracleError::Order {
            expected: 2,
            got: x0.len(),
        });
    }
    let (vmin, vmax) = bounds.state(2);
    for v in [x0[1], xf[1]] {
        if v > vmax || v < vmin {
            return Err(OracleError::InfeasibleBoundary);
        }
    }
    let d = xf[0] - x0[0];
    let (a, b) = (bounds.u_max, -bounds.u_min);
    let mut best: Option<DoubleIntegratorSolution> = None;
    let mut consider = |(t, cruise): (f64, bool), sign: i32| {
        if best.map_or(true, |s| t < s.duration) {
            best = Some(DoubleIntegratorSolution {
                duration: t,
                cruise,
                sign,
            });
        }
    };
    for c in one_sided(d, x0[1], xf[1], a, b, vmax) {
        consider(c, 1);
    }
    for c in one_sided(-d, -x0[1], -xf[1], b, a, -vmin) {
        consider(c, -1);
    }
    best.ok_or(OracleError::InfeasibleBoundary)
}

/// Free motion `e^{AT} x` of the chain.
fn drift(x: &[f64], t: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            let mut term = 1.0;
            for k in 0..n - i {
                if k > 0 {
                    term *= t / k as f64;
                }
                s += x[i + k] * term;
            }
            s
        })
        .collect()
}

/// State reached from rest under inputs `levels` held for `durations`.
fn forced(levels: &[f64; 3], durations: &[f64; 3]) -> [f64; 3] {
    let mut x = [0.0; 3];
    for (u, d) in levels.iter().zip(durations) {
        let (p, v, a) = (x[0], x[1], x[2]);
        x = [
            p + v * d + a * d * d / 2.0 + u * d * d * d / 6.0,
            v + a * d + u * d * d / 2.0,
            a + u * d,
        ];
    }
    x
}

/// Whether `xf` is reachable from `x0` in exactly `t` for the unconstrained
/// triple integrator. The reachable set from rest is convex and contains the
/// origin, so a point is reachable iff it is a scaled (`0 <= lambda <= 1`)
/// boundary point; boundary points come from inputs with at most two switches.
pub fn reachable_in(x0: &[f64], xf: &[f64], bounds: &Bounds, t: f64) -> bool {
    let free = drift(x0, t);
    let y = [xf[0] - free[0], xf[1] - free[1], xf[2] - free[2]];
    let ynorm = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if t <= 0.0 {
        return ynorm <= 1e-12;
    }
    if ynorm <= 1e-14 {
        return true;
    }
    let (a, b) = (bounds.u_max, bounds.u_min);
    let umag = a.max(-b);
    // per component: x1 grows like t^3, x3 only like t
    let tol: [f64; 3] =
        std::array::from_fn(|i| 1e-12 * (y[i].abs() + umag * (1.0 + t).powi(3 - i as i32)));
    for levels in [[a, b, a], [b, a, b]] {
        for &lam0 in &[0.5, 0.95] {
            for &(f1, f2) in &[(1.0 / 3.0, 1.0 / 3.0), (0.1, 0.1), (0.8, 0.1), (0.1, 0.8)] {
                if newton_reach(&levels, &y, t, [lam0, f1 * t, f2 * t], tol) {
                    return true;
                }
            }
        }
    }
    false
}

fn newton_reach(levels: &[f64; 3], y: &[f64; 3], t: f64, mut z: [f64; 3], tol: [f64; 3]) -> bool {
    let residual = |z: &[f64; 3]| -> [f64; 3] {
        let d = [z[1], z[2], t - z[1] - z[2]];
        let p = forced(levels, &d);
        [z[0] * p[0] - y[0], z[0] * p[1] - y[1], z[0] * p[2] - y[2]]
    };
    let clamp = |z: &mut [f64; 3]| {
        z[0] = z[0].clamp(0.0, 1.0);
        z[1] = z[1].clamp(0.0, t);
        z[2] = z[2].clamp(0.0, t - z[1]);
    };
    let norm = |r: &[f64; 3]| {
        r.iter()
            .zip(&tol)
            .fold(0.0f64, |m, (v, s)| m.max(v.abs() / s))
    };
    let mut r = residual(&z);
    for _ in 0..80 {
        if norm(&r) <= 1.0 {
            return true;
        }
        // forward-difference Jacobian
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let h = 1e-7 * (1.0 + z[k].abs());
            let mut zp = z;
            zp[k] += h;
            let rp = residual(&zp);
            for i in 0..3 {
                jac[i][k] = (rp[i] - r[i]) / h;
            }
        }
        let Some(step) = solve3(&jac, &r) else {
            return false;
        };
        let mut damping = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut cand = [
                z[0] - damping * step[0],
                z[1] - damping * step[1],
                z[2] - damping * step[2],
            ];
            clamp(&mut cand);
            let rc = residual(&cand);
            if norm(&rc) < norm(&r) {
                z = cand;
                r = rc;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if !improved {
            return norm(&r) <= 1.0;
        }
    }
    norm(&r) <= 1.0
}

fn solve3(m: &[[f64; 3]; 3], r: &[f64; 3]) -> Option<[f64; 3]> {
    let a = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    let b = nalgebra::Vector3::new(r[0], r[1], r[2]);
    let lu = a.lu();
    let x = lu.solve(&b)?;
    x.iter().all(|v| v.is_finite()).then(|| [x[0], x[1], x[2]])
}

/// Brackets the minimum feasible duration of an unconstrained `n = 3` problem.
///
/// Feasibility is not monotone in the duration, so a uniform scan locates the
/// first feasible grid point before bisecting.
pub fn bisection_t_oracle(
    x0: &[f64],
    xf: &[f64],
    bounds: &Bounds,
    t_lo: f64,
    t_hi: f64,
    tol: f64,
) -> Result<(f64, f64), OracleError> {
    if x0.len() != 3 {
        return Err(OracleError::Order {
            expected: 3,
            got: x0.len(),
        });
    }
    if (2..=3).any(|i| bounds.is_constrained(i)) {
        return Err(OracleError::StateBounds);
    }
    if reachable_in(x0, xf, bounds, t_lo) {
        return Ok((t_lo, t_lo + tol));
    }
    let grid = 400;
    let h = (t_hi - t_lo) / grid as f64;
    let mut lo = t_lo;
    let mut hi = None;
    for k in 1..=grid {
        let t = t_lo + h * k as f64;
        if reachable_in(x0, xf, bounds, t) {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi.ok_or(OracleError::NoBracket(t_hi))?;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if reachable_in(x0, xf, bounds, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

/// Tolerances applied by [`check_plan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckTolerances {
    /// Terminal error relative to `1 + |xf_i| + scale`.
    pub terminal: f64,
    /// Bound excess relative to the problem scale.
    pub bound: f64,
    /// Absolute continuity defect of the stored coefficients.
    pub continuity: f64,
    /// Relative optimality gap against an applicable reference.
    pub optimality: f64,
    /// Grid points for the bound scan.
    pub grid: usize,
    /// RK4 steps per segment.
    pub rk4_steps: usize,
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            terminal: 1e-7,
            bound: 1e-6,
            continuity: 1e-10,
            optimality: 1e-9,
            grid: 1000,
            rk4_steps: 8,
        }
    }
}

/// Verdict on a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    /// `|x_i(T) - xf_i|` of the RK4 simulation of the plan's input.
    pub terminal_error: Vec<f64>,
    /// Largest excess over the bounds of each state (0 when inside).
    pub max_bound_violation: Vec<f64>,
    /// Largest coefficient mismatch at each internal segment boundary.
    pub continuity_defects: Vec<f64>,
    /// `T_plan - T_reference`, when a reference applies.
    pub optimality_gap: Option<f64>,
    /// Switching times are nondecreasing and start at or after zero.
    pub ordered: bool,
    pub pass: bool,
    pub failures: Vec<String>,
    pub tolerances: CheckTolerances,
}

/// Checks a plan against its problem with independent machinery.
pub fn check_plan(
    plan: &SwitchingPlan,
    problem: &ValidatedProblem,
    tol: &CheckTolerances,
) -> CheckReport {
    let n = problem.order();
    let scale = problem.scale();
    let traj = &plan.trajectory;
    let mut failures = Vec::new();

    let mut ordered =
        plan.times.len() == traj.u_values.len() && plan.times.len() + 1 == traj.boundaries.len();
    let mut prev = 0.0;
    for &t in &plan.times {
        if !(t >= prev) {
            ordered = false;
        }
        prev = t;
    }
    if !ordered {
        failures.push("switching times are not ordered".into());
    }

    let end = simulate_piecewise(problem.x0(), &plan.times, &traj.u_values, tol.rk4_steps);
    let terminal_error: Vec<f64> = end
        .iter()
        .zip(problem.xf())
        .map(|(x, f)| (x - f).abs())
        .collect();
    for (i, e) in terminal_error.iter().enumerate() {
        let limit = tol.terminal * (1.0 + problem.xf()[i].abs() + scale);
        if !(*e <= limit) {
            failures.push(format!(
                "terminal error of x{} is {e:.3e} (limit {limit:.3e})",
                i + 1
            ));
        }
    }

    let allowance = Allowance::for_problem(problem);
    let mut max_bound_violation = vec![0.0; n];
    let duration = traj.duration();
    let mut samples: Vec<f64> = (0..=tol.grid)
        .map(|k| duration * k as f64 / tol.grid.max(1) as f64)
        .collect();
    samples.extend(plan.times.iter().copied());
    for t in samples {
        let (x, _) = traj.eval(t);
        for i in 2..=n {
            let (lo, hi) = problem.bounds.state(i);
            let v = x[i - 1];
            let excess = (v - hi).max(lo - v).max(0.0);
            max_bound_violation[i - 1] = f64::max(max_bound_violation[i - 1], excess);
        }
    }
    let flagged = problem.infeasible_states();
    for i in 2..=n {
        // boundary-infeasible states are reported, not failed
        if flagged.contains(&i) {
            continue;
        }
        let limit = tol.bound * scale
            + allowance.above[i - 1].max(allowance.below[i - 1]) * (1.0 + tol.bound);
        if !(max_bound_violation[i - 1] <= limit) {
            failures.push(format!(
                "x{i} exceeds its bounds by {:.3e}",
                max_bound_violation[i - 1]
            ));
        }
    }

    let continuity_defects = traj.continuity_defects();
    if let Some(worst) = continuity_defects.iter().copied().reduce(f64::max) {
        if !(worst <= tol.continuity) {
            failures.push(format!("continuity defect {worst:.3e}"));
        }
    }

    let optimality_gap = if n == 2 {
        double_integrator_reference(problem.x0(), problem.xf(), &problem.bounds)
            .ok()
            .map(|r| plan.duration - r.duration)
    } else {
        None
    };
    if let Some(gap) = optimality_gap {
        if gap.abs() > tol.optimality * (1.0 + plan.duration) {
            failures.push(format!(
                "duration differs from the closed-form optimum by {gap:.3e}"
            ));
        }
    }

    CheckReport {
        terminal_error,
        max_bound_violation,
        continuity_defects,
        optimality_gap,
        ordered,
        pass: failures.is_empty(),
        failures,
        tolerances: *tol,
    }
}

/// Upper end for the bisection scan of an `n = 3` problem.
pub fn bisection_upper_bound(problem: &ValidatedProblem, planned: f64) -> f64 {
    planned.max(time_scale(problem)) * 1.5 + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ballistic_drift() {
        let x = simulate_rk4(&[1.0, 2.0], |_| 0.0, 3.0, 10);
        assert!((x[0] - 7.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_by_simulation() {
        let x = simulate_piecewise(&[0.0, 0.0], &[1.0, 4.0, 5.0], &[1.0, 0.0, -1.0], 3);
        assert!((x[0] - 4.0).abs() < 1e-13 && x[1].abs() < 1e-13);
    }

    #[test]
    fn step_refinement_is_exact_for_low_orders() {
        let times = [0.3, 0.9, 1.4, 2.2, 2.5, 3.1, 3.3];
        let inputs = [1.0, 0.0, -2.0, 0.0, -2.0, 0.0, 1.0];
        let a = simulate_piecewise(&[0.2, -0.4, 0.7], &times, &inputs, 1);
        let b = simulate_piecewise(&[0.2, -0.4, 0.7], &times, &inputs, 2);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn double_integrator_cases() {
        let free = Bounds::symmetric(2, 1.0);
        let r = double_integrator_reference(&[0.0, 0.0], &[4.0, 0.0], &free).unwrap();
        assert!((r.duration - 4.0).abs() < 1e-12 && !r.cruise);
        let capped = free.clone().with_state(2, -1.0, 1.0);
        let r = double_integrator_reference(&[0.0, 0.0], &[4.0, 0.0], &capped).unwrap();
        assert!((r.duration - 5.0).abs() < 1e-12 && r.cruise);
        let r = double_integrator_reference(&[1.5, 0.3], &[1.5, 0.3], &capped).unwrap();
        assert!(r.duration.abs() < 1e-12);
        let r = double_integrator_reference(&[0.0, 0.0], &[-4.0, 0.0], &free).unwrap();
        assert!((r.duration - 4.0).abs() < 1e-12 && r.sign == -1);
    }

    #[test]
    fn double_integrator_asymmetric_input() {
        // accelerate at 2 and brake at 1 from rest to rest over d = 3: peak v^2 = 3 / (1/4 + 1/2) = 4
        let b = Bounds::input_only(2, -1.0, 2.0);
        let r = double_integrator_reference(&[0.0, 0.0], &[3.0, 0.0], &b).unwrap();
        assert!((r.duration - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reachability_of_the_worked_example() {
        let b = Bounds::symmetric(3, 1.0);
        let x0 = [-2.0, 0.5, 1.0];
        let xf = [2.0, 0.0, 0.0];
        let t7 = (400.0f64 / 3.0).cbrt() - 1.0;
        assert!(reachable_in(&x0, &xf, &b, t7 + 1e-3));
        assert!(!reachable_in(&x0, &xf, &b, t7 - 1e-3));
        let (lo, hi) = bisection_t_oracle(&x0, &xf, &b, 0.0, 10.0, 1e-4).unwrap();
        assert!(lo <= t7 && t7 <= hi && hi - lo <= 1e-4);
    }

    #[test]
    fn bisection_on_identical_states() {
        let b = Bounds::symmetric(3, 1.0);
        let (lo, hi) =
            bisection_t_oracle(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &b, 0.0, 5.0, 1e-4).unwrap();
        assert_eq!((lo, hi), (0.0, 1e-4));
    }
}
