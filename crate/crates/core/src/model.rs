//! Problem statement for an integrator chain: order, bounds and boundary states.
//!
//! The chain is `x_i' = x_{i+1}` for `i < n` and `x_n' = u`, with output `z = x_1`.
//! Bounds apply to the input and to the derivative states `x_2 ..= x_n`; an
//! unconstrained derivative carries infinite bounds so every profile type stays
//! enumerable. Vectors in this module are indexed from zero, so state `x_i`
//! lives at index `i - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest chain order for which bundles can be loaded and planned.
pub const MAX_ORDER: usize = 4;

/// Default relative tolerance used to decide whether a boundary state sits on a bound.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("chain order {0} is not supported (expected 1..={MAX_ORDER})")]
    UnsupportedOrder(usize),
    #[error("u_min must be negative, got {0}")]
    UminNotNegative(f64),
    #[error("u_max must be positive, got {0}")]
    UmaxNotPositive(f64),
    #[error("bounds of x{state} are empty: min {min} >= max {max}")]
    EmptyStateBound { state: usize, min: f64, max: f64 },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },
}

/// Number of segments `N = 2^n - 1` of the bang-zero input pattern.
pub fn segment_count(order: usize) -> usize {
    (1usize << order) - 1
}

/// Number of segments that can carry a state constraint, `2^(n-1) - 1`.
pub fn constraint_segment_count(order: usize) -> usize {
    (1usize << (order - 1)) - 1
}

/// Order of the integrator chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainSpec {
    order: usize,
}

impl ChainSpec {
    pub fn new(order: usize) -> Result<Self, ProblemError> {
        if order == 0 || order > MAX_ORDER {
            return Err(ProblemError::UnsupportedOrder(order));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn segment_count(&self) -> usize {
        segment_count(self.order)
    }

    pub fn constraint_segment_count(&self) -> usize {
        constraint_segment_count(self.order)
    }
}

/// Input and state bounds.
///
/// `x_min` and `x_max` have one entry per state; the entry for `x_1` is always
/// `(-inf, +inf)` after validation since the output itself is never bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub u_min: f64,
    pub u_max: f64,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
}

impl Bounds {
    /// Input bounds only; every derivative is unconstrained.
    pub fn input_only(order: usize, u_min: f64, u_max: f64) -> Self {
        Self {
            u_min,
            u_max,
            x_min: vec![f64::NEG_INFINITY; order],
            x_max: vec![f64::INFINITY; order],
        }
    }

    /// Symmetric input bound `|u| <= u`.
    pub fn symmetric(order: usize, u: f64) -> Self {
        Self::input_only(order, -u, u)
    }

    /// Sets the bounds of state `x_state` (1-based, `state >= 2`).
    pub fn with_state(mut self, state: usize, min: f64, max: f64) -> Self {
        self.x_min[state - 1] = min;
        self.x_max[state - 1] = max;
        self
    }

    pub fn order(&self) -> usize {
        self.x_min.len()
    }

    /// Bounds of state `x_state` (1-based).
    pub fn state(&self, state: usize) -> (f64, f64) {
        (self.x_min[state - 1], self.x_max[state - 1])
    }

    pub fn is_constrained(&self, state: usize) -> bool {
        let (lo, hi) = self.state(state);
        lo.is_finite() || hi.is_finite()
    }

    /// Bounds seen by the mirrored problem `x -> -x` (used for `sigma0 = -1`).
    pub fn mirrored(&self) -> Self {
        Self {
            u_min: -self.u_max,
            u_max: -self.u_min,
            x_min: self.x_max.iter().map(|v| -v).collect(),
            x_max: self.x_min.iter().map(|v| -v).collect(),
        }
    }

    /// Largest finite magnitude among all bounds, at least 1.
    pub fn magnitude(&self) -> f64 {
        let mut m = self.u_max.abs().max(self.u_min.abs());
        for v in self.x_min.iter().chain(self.x_max.iter()) {
            if v.is_finite() {
                m = m.max(v.abs());
            }
        }
        m.max(1.0)
    }
}

/// Initial and final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub x0: Vec<f64>,
    pub xf: Vec<f64>,
}

impl BoundaryConditions {
    pub fn new(x0: Vec<f64>, xf: Vec<f64>) -> Self {
        Self { x0, xf }
    }
}

/// Which end of the transition a boundary warning refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Initial,
    Final,
}

/// Non-fatal findings attached to a problem or a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// A boundary component lies outside its bounds.
    OutOfBounds {
        endpoint: Endpoint,
        state: usize,
        value: f64,
    },
    /// Boundary components from which a bound violation cannot be avoided.
    BoundaryInfeasible {
        endpoint: Endpoint,
        states: Vec<usize>,
    },
    /// Measured transient violation of a state bound in a returned plan.
    ConstraintViolation { state: usize, magnitude: f64 },
}

/// Result of [`classify_boundary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryClass {
    Feasible,
    /// 1-based indices of the offending state components.
    Infeasible(Vec<usize>),
}

impl BoundaryClass {
    pub fn is_feasible(&self) -> bool {
        matches!(self, BoundaryClass::Feasible)
    }
}

fn at_or_above(value: f64, bound: f64, tol: f64) -> bool {
    bound.is_finite() && value >= bound - tol * (1.0 + bound.abs())
}

fn at_or_below(value: f64, bound: f64, tol: f64) -> bool {
    bound.is_finite() && value <= bound + tol * (1.0 + bound.abs())
}

/// Excess over the bounds of `x_{n-1}` that cannot be avoided from `state`.
///
/// With `x_n != 0` the fastest way to stop `x_{n-1}` is to drive `x_n` to zero
/// with the opposing input bound, which still moves `x_{n-1}` by
/// `x_n |x_n| / (2 |u|)`. Returns `(excess above max, excess below min)`.
pub fn braking_overshoot(bounds: &Bounds, state: &[f64]) -> (f64, f64) {
    let n = state.len();
    if n < 3 {
        return (0.0, 0.0);
    }
    let (v, a) = (state[n - 2], state[n - 1]);
    let (lo, hi) = bounds.state(n - 1);
    let reach = if a > 0.0 {
        v + a * a / (2.0 * bounds.u_min.abs())
    } else {
        v - a * a / (2.0 * bounds.u_max)
    };
    let above = if hi.is_finite() {
        (reach - hi).max(0.0)
    } else {
        0.0
    };
    let below = if lo.is_finite() {
        (lo - reach).max(0.0)
    } else {
        0.0
    };
    (above, below)
}

/// Flags initial-state components that sit on a bound while a higher derivative
/// pushes them further out, or from which braking overshoots the bound.
pub fn classify_boundary(bounds: &Bounds, state: &[f64], tol: f64) -> BoundaryClass {
    let n = state.len();
    let mut offending = Vec::new();
    for i in 2..=n {
        let (lo, hi) = bounds.state(i);
        let x = state[i - 1];
        let outside = (hi.is_finite() && x > hi + tol * (1.0 + hi.abs()))
            || (lo.is_finite() && x < lo - tol * (1.0 + lo.abs()));
        // first nonzero higher derivative decides the direction of motion
        let drift = state[i..]
            .iter()
            .copied()
            .find(|d| d.abs() > tol)
            .unwrap_or(0.0);
        let pushes_out =
            (at_or_above(x, hi, tol) && drift > 0.0) || (at_or_below(x, lo, tol) && drift < 0.0);
        let overshoot = if i == n - 1 && n >= 3 {
            let (above, below) = braking_overshoot(bounds, state);
            above > tol * (1.0 + hi.abs()) || below > tol * (1.0 + lo.abs())
        } else {
            false
        };
        if outside || pushes_out || overshoot {
            offending.push(i);
        }
    }
    if offending.is_empty() {
        BoundaryClass::Feasible
    } else {
        BoundaryClass::Infeasible(offending)
    }
}

/// Maps a state to the time-reversed chain: even-order derivatives flip sign.
pub fn time_reversed(state: &[f64]) -> Vec<f64> {
    state
        .iter()
        .enumerate()
        .map(|(k, &x)| if k % 2 == 1 { -x } else { x })
        .collect()
}

/// Bounds seen by the time-reversed chain.
pub fn time_reversed_bounds(bounds: &Bounds) -> Bounds {
    let n = bounds.order();
    let mut out = bounds.clone();
    for k in 0..n {
        if k % 2 == 1 {
            out.x_min[k] = -bounds.x_max[k];
            out.x_max[k] = -bounds.x_min[k];
        }
    }
    // the input of the reversed chain is (-1)^n u
    if n % 2 == 1 {
        out.u_min = -bounds.u_max;
        out.u_max = -bounds.u_min;
    }
    out
}

/// Classification of a final state: a final state is infeasible when the
/// time-reversed chain could not leave it without a violation.
pub fn classify_terminal(bounds: &Bounds, state: &[f64], tol: f64) -> BoundaryClass {
    classify_boundary(&time_reversed_bounds(bounds), &time_reversed(state), tol)
}

/// A problem whose inputs passed validation. Warnings never block planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedProblem {
    pub spec: ChainSpec,
    pub bounds: Bounds,
    pub bc: BoundaryConditions,
    pub warnings: Vec<Warning>,
    /// Relative tolerance used for the boundary classification.
    pub boundary_tol: f64,
}

impl ValidatedProblem {
    pub fn order(&self) -> usize {
        self.spec.order()
    }

    pub fn x0(&self) -> &[f64] {
        &self.bc.x0
    }

    pub fn xf(&self) -> &[f64] {
        &self.bc.xf
    }

    /// Re-runs validation; a validated problem is a fixed point.
    pub fn revalidate(&self) -> Result<ValidatedProblem, ProblemError> {
        validate_problem_with(
            self.spec,
            self.bounds.clone(),
            self.bc.clone(),
            self.boundary_tol,
        )
    }

    /// Components flagged infeasible at either end.
    pub fn infeasible_states(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for w in &self.warnings {
            if let Warning::BoundaryInfeasible { states, .. } = w {
                out.extend(states.iter().copied());
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Magnitude of the problem data used to scale tolerances.
    pub fn scale(&self) -> f64 {
        let m = self
            .bc
            .x0
            .iter()
            .chain(self.bc.xf.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        1.0 + m
    }
}

fn canonical(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Validates with the default boundary tolerance.
pub fn validate_problem(
    spec: ChainSpec,
    bounds: Bounds,
    bc: BoundaryConditions,
) -> Result<ValidatedProblem, ProblemError> {
    validate_problem_with(spec, bounds, bc, DEFAULT_BOUNDARY_TOL)
}

pub fn validate_problem_with(
    spec: ChainSpec,
    bounds: Bounds,
    bc: BoundaryConditions,
    boundary_tol: f64,
) -> Result<ValidatedProblem, ProblemError> {
    let n = spec.order();
    ChainSpec::new(n)?;
    for (what, len) in [
        ("x0", bc.x0.len()),
        ("xf", bc.xf.len()),
        ("x_min", bounds.x_min.len()),
        ("x_max", bounds.x_max.len()),
    ] {
        if len != n {
            return Err(ProblemError::LengthMismatch {
                what,
                got: len,
                expected: n,
            });
        }
    }
    if bc.x0.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite { what: "x0" });
    }
    if bc.xf.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite { what: "xf" });
    }
    if bounds.u_min.is_nan() || bounds.u_max.is_nan() {
        return Err(ProblemError::NonFinite {
            what: "input bounds",
        });
    }
    if !(bounds.u_min < 0.0) || !bounds.u_min.is_finite() {
        return Err(ProblemError::UminNotNegative(bounds.u_min));
    }
    if !(bounds.u_max > 0.0) || !bounds.u_max.is_finite() {
        return Err(ProblemError::UmaxNotPositive(bounds.u_max));
    }
    let mut b = Bounds {
        u_min: bounds.u_min,
        u_max: bounds.u_max,
        x_min: bounds.x_min.iter().map(|&v| canonical(v)).collect(),
        x_max: bounds.x_max.iter().map(|&v| canonical(v)).collect(),
    };
    b.x_min[0] = f64::NEG_INFINITY;
    b.x_max[0] = f64::INFINITY;
    for i in 2..=n {
        let (lo, hi) = b.state(i);
        if lo.is_nan() || hi.is_nan() {
            return Err(ProblemError::NonFinite {
                what: "state bounds",
            });
        }
        if lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(ProblemError::EmptyStateBound {
                state: i,
                min: lo,
                max: hi,
            });
        }
    }
    let bc = BoundaryConditions {
        x0: bc.x0.iter().map(|&v| canonical(v)).collect(),
        xf: bc.xf.iter().map(|&v| canonical(v)).collect(),
    };

    let mut warnings = Vec::new();
    for (endpoint, state) in [(Endpoint::Initial, &bc.x0), (Endpoint::Final, &bc.xf)] {
        for i in 2..=n {
            let (lo, hi) = b.state(i);
            let x = state[i - 1];
            if x > hi + boundary_tol * (1.0 + hi.abs()) || x < lo - boundary_tol * (1.0 + lo.abs())
            {
                warnings.push(Warning::OutOfBounds {
                    endpoint,
                    state: i,
                    value: x,
                });
            }
        }
        let class = match endpoint {
            Endpoint::Initial => classify_boundary(&b, state, boundary_tol),
            Endpoint::Final => classify_terminal(&b, state, boundary_tol),
        };
        if let BoundaryClass::Infeasible(states) = class {
            warnings.push(Warning::BoundaryInfeasible { endpoint, states });
        }
    }

    Ok(ValidatedProblem {
        spec,
        bounds: b,
        bc,
        warnings,
        boundary_tol,
    })
}
