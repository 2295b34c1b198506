//! Piecewise-polynomial trajectories of the integrator chain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::roots::{real_nonneg_roots, DEFAULT_EPS_IM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("switching time t{index} = {value} precedes its predecessor")]
    Decreasing { index: usize, value: f64 },
    #[error("switching time t{index} is not finite")]
    NonFinite { index: usize },
    #[error("{inputs} inputs for {times} switching times")]
    LengthMismatch { inputs: usize, times: usize },
    #[error("initial state is empty")]
    EmptyState,
}

/// State trajectory under a piecewise-constant input.
///
/// `coeffs[j][i][k]` is the coefficient of `tau^k` of state `x_{i+1}` in
/// segment `j`, where `tau = t - boundaries[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTrajectory {
    pub boundaries: Vec<f64>,
    pub coeffs: Vec<Vec<Vec<f64>>>,
    pub u_values: Vec<f64>,
}

/// Taylor coefficients of every state after holding `u` from state `x`.
fn segment_coeffs(x: &[f64], u: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut c = Vec::with_capacity(n - i + 1);
            let mut fact = 1.0;
            for k in 0..n - i {
                if k > 0 {
                    fact *= k as f64;
                }
                c.push(x[i + k] / fact);
            }
            fact *= (n - i) as f64;
            c.push(u / fact);
            c
        })
        .collect()
}

fn horner_asc(c: &[f64], tau: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * tau + v)
}

/// Integrates the chain from `x0` through segments ending at `times` with the
/// constant inputs `inputs`.
pub fn integrate_inputs(
    x0: &[f64],
    inputs: &[f64],
    times: &[f64],
) -> Result<PiecewiseTrajectory, TrajectoryError> {
    if x0.is_empty() {
        return Err(TrajectoryError::EmptyState);
    }
    if inputs.len() != times.len() {
        return Err(TrajectoryError::LengthMismatch {
            inputs: inputs.len(),
            times: times.len(),
        });
    }
    let mut boundaries = Vec::with_capacity(times.len() + 1);
    boundaries.push(0.0);
    let mut prev = 0.0;
    for (j, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(TrajectoryError::NonFinite { index: j + 1 });
        }
        if t < prev {
            return Err(TrajectoryError::Decreasing {
                index: j + 1,
                value: t,
            });
        }
        boundaries.push(t);
        prev = t;
    }
    let mut x = x0.to_vec();
    let mut coeffs = Vec::with_capacity(times.len());
    for (j, &u) in inputs.iter().enumerate() {
        let seg = segment_coeffs(&x, u);
        let span = boundaries[j + 1] - boundaries[j];
        if span > 0.0 {
            for (xi, c) in x.iter_mut().zip(&seg) {
                *xi = horner_asc(c, span);
            }
        }
        coeffs.push(seg);
    }
    Ok(PiecewiseTrajectory {
        boundaries,
        coeffs,
        u_values: inputs.to_vec(),
    })
}

/// Integrates a bang-zero pattern: `sigma` selects `u_max`, `0` or `u_min`.
pub fn integrate_piecewise(
    x0: &[f64],
    sigma: &[i8],
    times: &[f64],
    u_min: f64,
    u_max: f64,
) -> Result<PiecewiseTrajectory, TrajectoryError> {
    let inputs: Vec<f64> = sigma
        .iter()
        .map(|s| match s {
            1 => u_max,
            -1 => u_min,
            _ => 0.0,
        })
        .collect();
    integrate_inputs(x0, &inputs, times)
}

impl PiecewiseTrajectory {
    pub fn order(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    pub fn segment_count(&self) -> usize {
        self.u_values.len()
    }

    pub fn duration(&self) -> f64 {
        *self.boundaries.last().unwrap_or(&0.0)
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.coeffs[0].iter().map(|c| c[0]).collect()
    }

    pub fn span(&self, j: usize) -> f64 {
        self.boundaries[j + 1] - self.boundaries[j]
    }

    /// State at local time `tau` of segment `j`.
    pub fn state_in_segment(&self, j: usize, tau: f64) -> Vec<f64> {
        self.coeffs[j].iter().map(|c| horner_asc(c, tau)).collect()
    }

    /// State at the end of segment `j`.
    pub fn end_state(&self, j: usize) -> Vec<f64> {
        self.state_in_segment(j, self.span(j))
    }

    pub fn final_state(&self) -> Vec<f64> {
        match self.segment_count() {
            0 => Vec::new(),
            n => self.end_state(n - 1),
        }
    }

    /// Segment index containing `t`; a boundary belongs to the segment it opens.
    /// Zero-length segments are never selected for interior times.
    fn locate(&self, t: f64) -> usize {
        let inner = &self.boundaries[1..self.boundaries.len() - 1];
        let k = inner.partition_point(|b| *b <= t);
        k.min(self.segment_count() - 1)
    }

    /// State and input at time `t`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, f64) {
        if self.segment_count() == 0 {
            return (Vec::new(), 0.0);
        }
        let total = self.duration();
        if t < 0.0 {
            let first = self.first_active_segment();
            return (self.initial_state(), self.u_values[first]);
        }
        if t >= total {
            return (self.final_state(), 0.0);
        }
        let j = self.locate(t);
        (
            self.state_in_segment(j, t - self.boundaries[j]),
            self.u_values[j],
        )
    }

    fn first_active_segment(&self) -> usize {
        (0..self.segment_count())
            .find(|&j| self.span(j) > 0.0)
            .unwrap_or(0)
    }

    /// Input in effect just after `t`, or just before when `left` is set.
    pub fn input_at(&self, t: f64, left: bool) -> f64 {
        if self.segment_count() == 0 || t > self.duration() || (t == self.duration() && !left) {
            return 0.0;
        }
        if t < 0.0 || (t == 0.0 && left) {
            return self.u_values[self.first_active_segment()];
        }
        if left {
            let j = (0..self.segment_count())
                .rev()
                .find(|&j| self.boundaries[j] < t && self.boundaries[j + 1] >= t);
            return j.map_or(self.u_values[0], |j| self.u_values[j]);
        }
        self.u_values[self.locate(t)]
    }

    /// Minimum and maximum of state `i` (0-based) over segment `j`.
    pub fn state_range(&self, j: usize, i: usize) -> (f64, f64) {
        let span = self.span(j);
        let c = &self.coeffs[j][i];
        let mut lo = c[0];
        let mut hi = c[0];
        let mut visit = |tau: f64| {
            let v = horner_asc(c, tau);
            lo = lo.min(v);
            hi = hi.max(v);
        };
        visit(span);
        if span > 0.0 && c.len() > 2 {
            // stationary points: roots of the derivative, which is the next state
            let d: Vec<f64> = c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, v)| v * k as f64)
                .rev()
                .collect();
            for r in real_nonneg_roots(&d, DEFAULT_EPS_IM, 0.0) {
                if r < span {
                    visit(r);
                }
            }
        }
        (lo, hi)
    }

    /// Largest mismatch between a segment's end state and the next segment's start.
    pub fn continuity_defects(&self) -> Vec<f64> {
        (1..self.segment_count())
            .map(|j| {
                let end = self.end_state(j - 1);
                end.iter()
                    .zip(&self.coeffs[j])
                    .map(|(e, c)| (e - c[0]).abs() / (1.0 + e.abs()))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}
