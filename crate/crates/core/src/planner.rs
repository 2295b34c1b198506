//! Online planning: solve every profile type for both input signs, validate the
//! candidates and keep the fastest.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{
    builtin_bundle, BasisBundle, ProfileEntry, Selection, TriangularSystem, DEFAULT_GUARD_TOL,
};
use crate::combinatorics::{ProfileType, Sign, SwitchingPattern, TieMap};
use crate::model::{
    braking_overshoot, time_reversed, time_reversed_bounds, Bounds, ValidatedProblem, Warning,
};
use crate::poly::{integrate_piecewise, roots, roots_all, Env, PiecewiseTrajectory, Symbol};

/// Numerical tolerances of the planner. Relative tolerances are scaled by the
/// magnitude of the quantity they guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Relative band in which a guard divisor counts as zero.
    pub guard_tol: f64,
    /// Imaginary-part tolerance for accepting a root as real.
    pub eps_im: f64,
    /// Root clamping and deduplication tolerance, relative to the time scale.
    pub eps_t: f64,
    /// Allowed backwards step between consecutive switching times, relative to the time scale.
    pub order_tol: f64,
    /// Allowed state-bound excess, relative to `1 + |bound|`.
    pub bound_tol: f64,
    /// Allowed terminal mismatch, relative to `1 + |xf_i| + scale`.
    pub terminal_tol: f64,
    /// Durations closer than this (relative) count as equal when ranking candidates.
    pub tie_tol: f64,
    /// Coefficients below this fraction of their largest term count as zero.
    pub coeff_zero_tol: f64,
    /// Candidates with a terminal error below this are refined by Gauss-Newton
    /// on the switching conditions before the terminal test.
    pub polish_gate: f64,
    /// Roots whose imaginary part is below this fraction of `1 + |re|` are
    /// kept as approximations and polished. Nearby real roots can be split
    /// into complex pairs by rounding of the coefficients.
    pub near_real_tol: f64,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            guard_tol: DEFAULT_GUARD_TOL,
            eps_im: roots::DEFAULT_EPS_IM,
            eps_t: 1e-9,
            order_tol: 1e-7,
            bound_tol: 1e-8,
            terminal_tol: 1e-8,
            tie_tol: 1e-9,
            coeff_zero_tol: 1e-11,
            polish_gate: 1e-2,
            near_real_tol: 1e-3,
        }
    }
}

/// Parameter values seen by the coefficient trees, optionally with solved times.
#[derive(Debug, Clone)]
pub struct ParamEnv {
    pub x0: Vec<f64>,
    pub xf: Vec<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    times: Vec<f64>,
}

impl ParamEnv {
    /// Parameters of the problem as seen by the `sigma0 = +1` systems. A
    /// negative first sign is handled by mirroring the problem.
    pub fn new(problem: &ValidatedProblem, sign: Sign) -> Self {
        let n = problem.order();
        let (x0, xf, b) = match sign {
            Sign::Positive => (
                problem.x0().to_vec(),
                problem.xf().to_vec(),
                problem.bounds.clone(),
            ),
            Sign::Negative => (
                problem.x0().iter().map(|v| -v).collect(),
                problem.xf().iter().map(|v| -v).collect(),
                problem.bounds.mirrored(),
            ),
        };
        Self {
            x0,
            xf,
            u_min: b.u_min,
            u_max: b.u_max,
            x_min: b.x_min,
            x_max: b.x_max,
            times: vec![f64::NAN; (1 << n) + 1],
        }
    }

    pub fn set_time(&mut self, k: usize, v: f64) {
        self.times[k] = v;
    }

    pub fn clear_times(&mut self) {
        self.times.iter_mut().for_each(|t| *t = f64::NAN);
    }
}

impl Env for ParamEnv {
    fn get(&self, s: Symbol) -> Option<f64> {
        let v = match s {
            Symbol::X0(i) => *self.x0.get(i - 1)?,
            Symbol::Xf(i) => *self.xf.get(i - 1)?,
            Symbol::XMin(i) => *self.x_min.get(i - 1)?,
            Symbol::XMax(i) => *self.x_max.get(i - 1)?,
            Symbol::UMin => self.u_min,
            Symbol::UMax => self.u_max,
            Symbol::T(k) => *self.times.get(k)?,
        };
        (!v.is_nan()).then_some(v)
    }
}

/// A complete assignment of the free unknowns, `(time index, value)` in evaluation order.
pub type Assignment = Vec<(usize, f64)>;

/// Enumerates the real nonnegative solutions of a triangular system depth first.
pub fn solve_triangular(
    system: &TriangularSystem,
    env: &mut ParamEnv,
    opts: &PlannerOptions,
    time_scale: f64,
) -> Vec<Assignment> {
    solve_triangular_approx(system, env, opts, time_scale)
        .into_iter()
        .filter(|(_, approx)| !approx)
        .map(|(a, _)| a)
        .collect()
}

/// Like [`solve_triangular`], but also returns assignments built from
/// near-real roots, flagged `true`.
pub fn solve_triangular_approx(
    system: &TriangularSystem,
    env: &mut ParamEnv,
    opts: &PlannerOptions,
    time_scale: f64,
) -> Vec<(Assignment, bool)> {
    let mut out = Vec::new();
    let mut partial = Vec::with_capacity(system.entries.len());
    descend(
        system,
        0,
        env,
        opts,
        time_scale,
        &mut partial,
        false,
        &mut out,
    );
    for (k, _) in system.entries.iter().map(|e| (e.unknown, ())) {
        env.set_time(k, f64::NAN);
    }
    out
}

/// Real roots `>= -eps_t` plus the real parts of near-real complex pairs
/// (flagged), ascending.
fn candidate_roots(coeffs: &[f64], opts: &PlannerOptions, eps_t: f64) -> Vec<(f64, bool)> {
    let Some(roots) = roots_all(coeffs) else {
        return Vec::new();
    };
    let mut out: Vec<(f64, bool)> = Vec::new();
    for z in roots {
        if !z.re.is_finite() || z.re < -eps_t {
            continue;
        }
        let rel = z.im.abs() / (1.0 + z.re.abs());
        let approx = if rel <= opts.eps_im {
            false
        } else if rel <= opts.near_real_tol && z.im > 0.0 {
            true
        } else {
            continue;
        };
        out.push((z.re.max(0.0), approx));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out.dedup_by(|b, a| (b.0 - a.0).abs() <= eps_t);
    out
}

#[allow(clippy::too_many_arguments)]
fn descend(
    system: &TriangularSystem,
    level: usize,
    env: &mut ParamEnv,
    opts: &PlannerOptions,
    time_scale: f64,
    partial: &mut Assignment,
    approx: bool,
    out: &mut Vec<(Assignment, bool)>,
) {
    if level == system.entries.len() {
        out.push((partial.clone(), approx));
        return;
    }
    let entry = &system.entries[level];
    let mut coeffs = Vec::with_capacity(entry.coeffs.len());
    for c in &entry.coeffs {
        match c.eval_with_scale(env) {
            Ok((v, scale)) if v.is_finite() => {
                coeffs.push(if v.abs() <= opts.coeff_zero_tol * scale {
                    0.0
                } else {
                    v
                })
            }
            _ => return,
        }
    }
    let eps_t = opts.eps_t * (1.0 + time_scale);
    let candidates = if coeffs.iter().all(|c| *c == 0.0) {
        // the entry carries no information: tie the unknown to the latest solved earlier time
        let pred = partial
            .iter()
            .filter(|(k, _)| *k < entry.unknown)
            .max_by_key(|(k, _)| *k)
            .map_or(0.0, |(_, v)| *v);
        vec![(pred, false)]
    } else {
        candidate_roots(&coeffs, opts, eps_t)
    };
    for (r, a) in candidates {
        env.set_time(entry.unknown, r);
        partial.push((entry.unknown, r));
        descend(
            system,
            level + 1,
            env,
            opts,
            time_scale,
            partial,
            approx || a,
            out,
        );
        partial.pop();
    }
    env.set_time(entry.unknown, f64::NAN);
}

/// Full switching-time vector `t_1..t_N` from the free unknowns and the ties.
pub fn reconstruct_times(assignment: &[(usize, f64)], tie_map: &TieMap) -> Vec<f64> {
    let n_seg = tie_map.free.len() + tie_map.ties.len();
    let mut t = vec![0.0; n_seg + 1];
    for &(k, v) in assignment {
        t[k] = v;
    }
    // ties point backwards, so ascending order resolves chains
    let mut ties = tie_map.ties.clone();
    ties.sort_unstable();
    for (k, p) in ties {
        t[k] = t[p];
    }
    t.remove(0);
    t
}

/// Why a candidate was not accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    /// `t_index` precedes its predecessor by more than the ordering slack.
    Ordering { index: usize, gap: f64 },
    /// State `state` leaves its bounds by `excess`.
    Bound { state: usize, excess: f64 },
    /// The final state misses the target by `error` (largest relative component).
    Terminal { error: f64 },
    /// Valid, but another candidate is faster.
    Slower,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Ordering { index, gap } => {
                write!(f, "t{index} precedes its predecessor by {gap:.3e}")
            }
            Rejection::Bound { state, excess } => {
                write!(f, "x{state} exceeds its bound by {excess:.3e}")
            }
            Rejection::Terminal { error } => write!(f, "terminal error {error:.3e}"),
            Rejection::Slower => f.write_str("slower than the selected candidate"),
        }
    }
}

/// Outcome of checking one candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateCheck {
    Pass {
        times: Vec<f64>,
        trajectory: PiecewiseTrajectory,
        /// Largest tolerated bound excess per state, if any.
        violations: Vec<(usize, f64)>,
    },
    Fail(Rejection),
}

/// Bound excess tolerated for boundary-infeasible starts and ends, per state
/// `(above, below)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allowance {
    pub above: Vec<f64>,
    pub below: Vec<f64>,
    /// States checked only at the instants of their constraint segments.
    pub instants_only: Vec<bool>,
}

impl Allowance {
    pub fn none(n: usize) -> Self {
        Self {
            above: vec![0.0; n],
            below: vec![0.0; n],
            instants_only: vec![false; n],
        }
    }

    /// Fallback for boundary-infeasible problems: the flagged states may
    /// overshoot between switching instants.
    pub fn relaxed(problem: &ValidatedProblem) -> Self {
        let mut a = Self::for_problem(problem);
        for i in problem.infeasible_states() {
            a.instants_only[i - 1] = true;
        }
        a
    }

    /// The violation that cannot be avoided from the problem's boundary states.
    pub fn for_problem(problem: &ValidatedProblem) -> Self {
        let n = problem.order();
        let mut a = Self::none(n);
        let flagged = problem.infeasible_states();
        let b = &problem.bounds;
        for &i in &flagged {
            let (lo, hi) = b.state(i);
            for x in [problem.x0()[i - 1], problem.xf()[i - 1]] {
                a.above[i - 1] = a.above[i - 1].max(x - hi);
                a.below[i - 1] = a.below[i - 1].max(lo - x);
            }
        }
        if n >= 3 && flagged.contains(&(n - 1)) {
            let (up, down) = braking_overshoot(b, problem.x0());
            a.above[n - 2] = a.above[n - 2].max(up);
            a.below[n - 2] = a.below[n - 2].max(down);
            let (up, down) =
                braking_overshoot(&time_reversed_bounds(b), &time_reversed(problem.xf()));
            let (up, down) = if (n - 2) % 2 == 1 {
                (down, up)
            } else {
                (up, down)
            };
            a.above[n - 2] = a.above[n - 2].max(up);
            a.below[n - 2] = a.below[n - 2].max(down);
        }
        a
    }
}

/// Orders the times (snapping small inversions), integrates the candidate and
/// checks every bounded state on every segment.
pub fn check_candidate(
    times: &[f64],
    pattern: &SwitchingPattern,
    x0: &[f64],
    bounds: &Bounds,
    allowance: &Allowance,
    opts: &PlannerOptions,
    time_scale: f64,
) -> CandidateCheck {
    let slack = opts.order_tol * (1.0 + time_scale);
    let mut t = times.to_vec();
    let mut prev = 0.0;
    for (j, v) in t.iter_mut().enumerate() {
        if !v.is_finite() {
            return CandidateCheck::Fail(Rejection::Ordering {
                index: j + 1,
                gap: f64::INFINITY,
            });
        }
        if *v < prev {
            if *v < prev - slack {
                return CandidateCheck::Fail(Rejection::Ordering {
                    index: j + 1,
                    gap: prev - *v,
                });
            }
            *v = prev;
        }
        prev = *v;
    }
    let traj = match integrate_piecewise(x0, &pattern.sigma, &t, bounds.u_min, bounds.u_max) {
        Ok(tr) => tr,
        Err(_) => {
            return CandidateCheck::Fail(Rejection::Ordering {
                index: 0,
                gap: f64::NAN,
            })
        }
    };
    let n = x0.len();
    let mut violations = Vec::new();
    for i in 2..=n {
        if !bounds.is_constrained(i) {
            continue;
        }
        let (lo, hi) = bounds.state(i);
        let mut worst: f64 = 0.0;
        let mut fail = None;
        if allowance.instants_only[i - 1] {
            for (j, b) in pattern.constraint_map.iter().enumerate() {
                if b.unsigned_abs() as usize != i || j >= traj.segment_count() {
                    continue;
                }
                let v = traj.coeffs[j][i - 1][0];
                let excess = (v - hi - opts.bound_tol * (1.0 + hi.abs()))
                    .max(lo - v - opts.bound_tol * (1.0 + lo.abs()));
                if excess > 0.0 {
                    return CandidateCheck::Fail(Rejection::Bound { state: i, excess });
                }
            }
        }
        for j in 0..traj.segment_count() {
            if traj.span(j) == 0.0 && j + 1 < traj.segment_count() {
                continue;
            }
            let (smin, smax) = traj.state_range(j, i - 1);
            let above = smax - hi;
            let below = lo - smin;
            let tol_hi = opts.bound_tol * (1.0 + hi.abs());
            let tol_lo = opts.bound_tol * (1.0 + lo.abs());
            let strict = !allowance.instants_only[i - 1];
            if strict && above > tol_hi + allowance.above[i - 1] * (1.0 + opts.bound_tol) {
                fail = Some(above);
            }
            if strict && below > tol_lo + allowance.below[i - 1] * (1.0 + opts.bound_tol) {
                fail = Some(fail.unwrap_or(0.0).max(below));
            }
            if above > tol_hi {
                worst = worst.max(above);
            }
            if below > tol_lo {
                worst = worst.max(below);
            }
        }
        if let Some(excess) = fail {
            return CandidateCheck::Fail(Rejection::Bound { state: i, excess });
        }
        if worst > 0.0 {
            violations.push((i, worst));
        }
    }
    CandidateCheck::Pass {
        times: t,
        trajectory: traj,
        violations,
    }
}

/// Largest terminal mismatch relative to `1 + |xf_i| + scale + peak_i`, where
/// `peak_i` is the largest `|x_i|` at a switching instant. Long transitions
/// pass through large intermediate values whose rounding shows up at the end.
pub fn terminal_error(traj: &PiecewiseTrajectory, xf: &[f64], scale: f64) -> f64 {
    let mut peak = vec![0.0f64; xf.len()];
    for seg in &traj.coeffs {
        for (p, c) in peak.iter_mut().zip(seg) {
            *p = p.max(c[0].abs());
        }
    }
    traj.final_state()
        .iter()
        .zip(xf)
        .zip(&peak)
        .map(|((x, f), p)| (x - f).abs() / (1.0 + f.abs() + scale + p))
        .fold(0.0, f64::max)
}

/// Residuals of the switching conditions: terminal mismatch, and on every
/// active constraint arc the bound and contact conditions at its start.
fn condition_residuals(
    times: &[f64],
    pattern: &SwitchingPattern,
    active: &[bool],
    x0: &[f64],
    xf: &[f64],
    bounds: &Bounds,
) -> Option<Vec<f64>> {
    let mut t = times.to_vec();
    let mut prev = 0.0;
    for v in t.iter_mut() {
        *v = v.max(prev);
        prev = *v;
    }
    let traj = integrate_piecewise(x0, &pattern.sigma, &t, bounds.u_min, bounds.u_max).ok()?;
    let n = x0.len();
    let mut peak = vec![0.0f64; n];
    for seg in &traj.coeffs {
        for (p, c) in peak.iter_mut().zip(seg) {
            *p = p.max(c[0].abs());
        }
    }
    let mut r: Vec<f64> = traj
        .final_state()
        .iter()
        .zip(xf)
        .zip(&peak)
        .map(|((x, f), p)| (x - f) / (1.0 + f.abs() + p))
        .collect();
    for (seg, _) in pattern
        .constraint_segments()
        .zip(active)
        .filter(|(_, a)| **a)
    {
        let b = pattern.constraint_map[seg - 1];
        let k = b.unsigned_abs() as usize;
        let bound = if b > 0 {
            bounds.x_max[k - 1]
        } else {
            bounds.x_min[k - 1]
        };
        let x = &traj.coeffs[seg - 1];
        r.push((x[k - 1][0] - bound) / (1.0 + bound.abs() + peak[k - 1]));
        for i in k + 1..=n {
            r.push(x[i - 1][0] / (1.0 + peak[i - 1]));
        }
    }
    Some(r)
}

/// Refines the free switching times by Gauss-Newton on the switching
/// conditions. Returns `None` unless the residual decreases.
pub fn polish(
    assignment: &[(usize, f64)],
    tie_map: &TieMap,
    pattern: &SwitchingPattern,
    active: &[bool],
    problem: &ValidatedProblem,
) -> Option<Assignment> {
    polish_steps(assignment, tie_map, pattern, active, problem, 4)
}

fn polish_steps(
    assignment: &[(usize, f64)],
    tie_map: &TieMap,
    pattern: &SwitchingPattern,
    active: &[bool],
    problem: &ValidatedProblem,
    steps: usize,
) -> Option<Assignment> {
    let (x0, xf, bounds) = (problem.x0(), problem.xf(), &problem.bounds);
    let residual = |a: &[(usize, f64)]| {
        condition_residuals(
            &reconstruct_times(a, tie_map),
            pattern,
            active,
            x0,
            xf,
            bounds,
        )
    };
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut cur = assignment.to_vec();
    let mut r = residual(&cur)?;
    let start = norm(&r);
    let mut best = start;
    for _ in 0..steps {
        if best == 0.0 {
            break;
        }
        let p = cur.len();
        let mut jac = DMatrix::zeros(r.len(), p);
        for k in 0..p {
            let h = 1e-7 * (1.0 + cur[k].1.abs());
            let mut probe = cur.clone();
            probe[k].1 += h;
            let rk = residual(&probe)?;
            for (row, (a, b)) in rk.iter().zip(&r).enumerate() {
                jac[(row, k)] = (a - b) / h;
            }
        }
        let step = jac
            .svd(true, true)
            .solve(&DVector::from_column_slice(&r), 1e-12)
            .ok()?;
        let mut next = cur.clone();
        for (k, v) in next.iter_mut().enumerate() {
            v.1 = (v.1 - step[k]).max(0.0);
        }
        let rn = residual(&next)?;
        let nn = norm(&rn);
        if !(nn < best) {
            break;
        }
        best = nn;
        cur = next;
        r = rn;
    }
    (best < start).then_some(cur)
}

/// A planned time-optimal transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingPlan {
    pub profile: ProfileType,
    pub sigma0: Sign,
    pub pattern: SwitchingPattern,
    /// `t_1..t_N`, ties included.
    pub times: Vec<f64>,
    pub duration: f64,
    pub trajectory: PiecewiseTrajectory,
    pub warnings: Vec<Warning>,
    /// Index of the singularity guard whose auxiliary system produced the plan.
    pub guard: Option<usize>,
}

impl SwitchingPlan {
    pub fn order(&self) -> usize {
        self.trajectory.order()
    }
}

/// Disposition of one explored root combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub times: Vec<f64>,
    pub duration: f64,
    /// `None` for the selected candidate.
    pub rejection: Option<Rejection>,
}

/// Everything explored for one profile type and sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileAttempt {
    pub profile: ProfileType,
    pub sigma0: Sign,
    /// `default`, `auxiliary <k>`, or why the profile was skipped.
    pub system: String,
    pub candidates: Vec<CandidateRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub attempts: Vec<ProfileAttempt>,
}

impl CandidateSet {
    pub fn candidate_count(&self) -> usize {
        self.attempts.iter().map(|a| a.candidates.len()).sum()
    }
}

impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.attempts {
            writeln!(f, "profile {} sigma0 {}: {}", a.profile, a.sigma0, a.system)?;
            for c in &a.candidates {
                let times: Vec<String> = c.times.iter().map(|t| format!("{t:.6}")).collect();
                match &c.rejection {
                    None => writeln!(f, "  T={:.9} [{}] selected", c.duration, times.join(", "))?,
                    Some(r) => writeln!(f, "  T={:.9} [{}] {r}", c.duration, times.join(", "))?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("no basis bundle for chain order {0}")]
    NoBundle(usize),
    #[error("bundle is for order {bundle}, problem has order {problem}")]
    OrderMismatch { bundle: usize, problem: usize },
    #[error("no candidate satisfies all constraints ({} candidates explored)", .0.candidate_count())]
    NoCandidate(Box<CandidateSet>),
}

struct Accepted {
    profile_index: usize,
    sign: Sign,
    times: Vec<f64>,
    trajectory: PiecewiseTrajectory,
    violations: Vec<(usize, f64)>,
    guard: Option<usize>,
    attempt: usize,
    record: usize,
}

impl Accepted {
    fn duration(&self) -> f64 {
        self.trajectory.duration()
    }
}

/// Rough duration of the transition, used to scale time tolerances.
pub fn time_scale(problem: &ValidatedProblem) -> f64 {
    let n = problem.order();
    let b = &problem.bounds;
    let u = b.u_max.min(-b.u_min);
    let mut s: f64 = 0.0;
    for i in 1..=n {
        let d = (problem.x0()[i - 1] - problem.xf()[i - 1]).abs()
            + problem.x0()[i - 1].abs()
            + problem.xf()[i - 1].abs();
        s = s.max((d / u).powf(1.0 / (n - i + 1) as f64));
    }
    s
}

/// Plans against the builtin bundle of the problem's order.
pub fn plan(problem: &ValidatedProblem, opts: &PlannerOptions) -> Result<SwitchingPlan, PlanError> {
    let bundle = builtin_bundle(problem.order()).ok_or(PlanError::NoBundle(problem.order()))?;
    plan_with_bundle(problem, bundle, opts)
}

/// Active constraints of a profile must refer to finite bounds.
fn profile_applicable(entry: &ProfileEntry, env: &ParamEnv) -> bool {
    entry
        .pattern
        .constraint_segments()
        .zip(entry.profile.bits())
        .filter(|(_, a)| **a)
        .all(|(seg, _)| {
            let b = entry.pattern.constraint_map[seg - 1];
            let k = b.unsigned_abs() as usize;
            if b > 0 {
                env.x_max[k - 1].is_finite()
            } else {
                env.x_min[k - 1].is_finite()
            }
        })
}

pub fn plan_with_bundle(
    problem: &ValidatedProblem,
    bundle: &BasisBundle,
    opts: &PlannerOptions,
) -> Result<SwitchingPlan, PlanError> {
    let (result, _) = explore(problem, bundle, opts);
    result
}

/// Runs the planner and also returns the full candidate bookkeeping.
pub fn explore(
    problem: &ValidatedProblem,
    bundle: &BasisBundle,
    opts: &PlannerOptions,
) -> (Result<SwitchingPlan, PlanError>, CandidateSet) {
    let n = problem.order();
    let mut set = CandidateSet::default();
    if bundle.n != n {
        return (
            Err(PlanError::OrderMismatch {
                bundle: bundle.n,
                problem: n,
            }),
            set,
        );
    }
    let scale = problem.scale();
    let tscale = time_scale(problem);
    let mut best: Option<Accepted> = None;

    let mut envs = [
        ParamEnv::new(problem, Sign::Positive),
        ParamEnv::new(problem, Sign::Negative),
    ];
    let unconstrained_done = |best: &Option<Accepted>, set: &CandidateSet| -> bool {
        // early exit: the fastest terminal-consistent unconstrained candidate is valid
        let Some(b) = best else { return false };
        if !bundle.profiles[b.profile_index].profile.is_unconstrained() {
            return false;
        }
        let fastest_relaxed = set
            .attempts
            .iter()
            .flat_map(|a| a.candidates.iter())
            .filter(|c| {
                !matches!(
                    c.rejection,
                    Some(Rejection::Terminal { .. }) | Some(Rejection::Ordering { .. })
                )
            })
            .map(|c| c.duration)
            .fold(f64::INFINITY, f64::min);
        b.duration() <= fastest_relaxed + opts.tie_tol * (1.0 + fastest_relaxed)
    };

    let passes = if problem.infeasible_states().is_empty() {
        vec![Allowance::for_problem(problem)]
    } else {
        vec![Allowance::for_problem(problem), Allowance::relaxed(problem)]
    };
    for allowance in &passes {
        if best.is_some() {
            break;
        }
        for (pi, entry) in bundle.profiles.iter().enumerate() {
            if pi == 1 && unconstrained_done(&best, &set) {
                break;
            }
            for (si, sign) in Sign::both().into_iter().enumerate() {
                let env = &mut envs[si];
                let mut attempt = ProfileAttempt {
                    profile: entry.profile.clone(),
                    sigma0: sign,
                    system: String::new(),
                    candidates: Vec::new(),
                };
                if !profile_applicable(entry, env) {
                    attempt.system = "skipped: active constraint on an unbounded state".into();
                    set.attempts.push(attempt);
                    continue;
                }
                let (system, guard) = match entry.select(env, opts.guard_tol) {
                    Selection::Default(s) => (s, None),
                    Selection::Auxiliary { guard, system } => (system, Some(guard)),
                    Selection::Unavailable => {
                        attempt.system = if entry.system.is_none() {
                            "skipped: no precomputed system".into()
                        } else {
                            "skipped: singular parameters without auxiliary system".into()
                        };
                        set.attempts.push(attempt);
                        continue;
                    }
                };
                attempt.system = guard.map_or("default".to_string(), |g| format!("auxiliary {g}"));
                let pattern = match sign {
                    Sign::Positive => entry.pattern.clone(),
                    Sign::Negative => SwitchingPattern {
                        sigma: entry.pattern.sigma.iter().map(|s| -s).collect(),
                        constraint_map: entry.pattern.constraint_map.iter().map(|b| -b).collect(),
                        sigma0: Sign::Negative,
                    },
                };
                let assignments = solve_triangular_approx(system, env, opts, tscale);
                for (a, approx) in assignments {
                    let a = if approx {
                        match polish_steps(
                            &a,
                            &entry.tie_map,
                            &pattern,
                            entry.profile.bits(),
                            problem,
                            12,
                        ) {
                            Some(p) => p,
                            None => continue,
                        }
                    } else {
                        a
                    };
                    let mut times = reconstruct_times(&a, &entry.tie_map);
                    let mut check = check_candidate(
                        &times,
                        &pattern,
                        problem.x0(),
                        &problem.bounds,
                        allowance,
                        opts,
                        tscale,
                    );
                    if let CandidateCheck::Pass { trajectory, .. } = &check {
                        let err = terminal_error(trajectory, problem.xf(), scale);
                        if err > 0.0 && err <= opts.polish_gate {
                            if let Some(refined) =
                                polish(&a, &entry.tie_map, &pattern, entry.profile.bits(), problem)
                            {
                                let t2 = reconstruct_times(&refined, &entry.tie_map);
                                let c2 = check_candidate(
                                    &t2,
                                    &pattern,
                                    problem.x0(),
                                    &problem.bounds,
                                    allowance,
                                    opts,
                                    tscale,
                                );
                                if let CandidateCheck::Pass { trajectory, .. } = &c2 {
                                    if terminal_error(trajectory, problem.xf(), scale) < err {
                                        times = t2;
                                        check = c2;
                                    }
                                }
                            }
                        }
                    }
                    let duration = times.last().copied().unwrap_or(0.0);
                    let (rejection, accepted) = match check {
                        CandidateCheck::Fail(r) => (Some(r), None),
                        CandidateCheck::Pass {
                            times,
                            trajectory,
                            violations,
                        } => {
                            let err = terminal_error(&trajectory, problem.xf(), scale);
                            if err > opts.terminal_tol {
                                (Some(Rejection::Terminal { error: err }), None)
                            } else {
                                (None, Some((times, trajectory, violations)))
                            }
                        }
                    };
                    let record = attempt.candidates.len();
                    attempt.candidates.push(CandidateRecord {
                        times: times.clone(),
                        duration,
                        rejection,
                    });
                    if let Some((times, trajectory, violations)) = accepted {
                        let cand = Accepted {
                            profile_index: pi,
                            sign,
                            times,
                            trajectory,
                            violations,
                            guard,
                            attempt: set.attempts.len(),
                            record,
                        };
                        let better = match &best {
                            None => true,
                            Some(b) => prefer(&cand, b, bundle, opts),
                        };
                        if better {
                            if let Some(old) = best.replace(cand) {
                                let slot = if old.attempt == set.attempts.len() {
                                    &mut attempt.candidates[old.record]
                                } else {
                                    &mut set.attempts[old.attempt].candidates[old.record]
                                };
                                slot.rejection = Some(Rejection::Slower);
                            }
                        } else {
                            attempt.candidates[record].rejection = Some(Rejection::Slower);
                        }
                    }
                }
                set.attempts.push(attempt);
            }
        }
    }

    let Some(b) = best else {
        return (Err(PlanError::NoCandidate(Box::new(set.clone()))), set);
    };
    let entry = &bundle.profiles[b.profile_index];
    let mut warnings = problem.warnings.clone();
    for (state, magnitude) in &b.violations {
        warnings.push(Warning::ConstraintViolation {
            state: *state,
            magnitude: *magnitude,
        });
    }
    let pattern = match b.sign {
        Sign::Positive => entry.pattern.clone(),
        Sign::Negative => SwitchingPattern {
            sigma: entry.pattern.sigma.iter().map(|s| -s).collect(),
            constraint_map: entry.pattern.constraint_map.iter().map(|v| -v).collect(),
            sigma0: Sign::Negative,
        },
    };
    let plan = SwitchingPlan {
        profile: entry.profile.clone(),
        sigma0: b.sign,
        pattern,
        duration: b.duration(),
        times: b.times,
        trajectory: b.trajectory,
        warnings,
        guard: b.guard,
    };
    (Ok(plan), set)
}

fn prefer(cand: &Accepted, best: &Accepted, bundle: &BasisBundle, opts: &PlannerOptions) -> bool {
    let (tc, tb) = (cand.duration(), best.duration());
    if tc < tb - opts.tie_tol * (1.0 + tb) {
        return true;
    }
    if tc > tb + opts.tie_tol * (1.0 + tb) {
        return false;
    }
    let ac = bundle.profiles[cand.profile_index].profile.active_count();
    let ab = bundle.profiles[best.profile_index].profile.active_count();
    if ac != ab {
        return ac < ab;
    }
    cand.sign == Sign::Positive && best.sign == Sign::Negative
}
