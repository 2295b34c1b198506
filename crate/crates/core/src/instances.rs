//! Random problem generation for benchmarks and test suites.

use rand::Rng;

use crate::model::{validate_problem, BoundaryConditions, Bounds, ChainSpec, ValidatedProblem};

/// Shape of the generated problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOptions {
    /// Half-width of the box the boundary states are drawn from.
    pub state_range: f64,
    /// Bounds are drawn log-uniformly from this range.
    pub bound_range: (f64, f64),
    /// Probability that a derivative receives state bounds.
    pub state_bound_probability: f64,
    /// Use `u_min = -u_max` and `x_min = -x_max`.
    pub symmetric: bool,
    /// Draw the final derivatives as zero (rest at the target).
    pub rest_at_target: bool,
}

impl Default for InstanceOptions {
    fn default() -> Self {
        Self {
            state_range: 10.0,
            bound_range: (0.1, 10.0),
            state_bound_probability: 0.5,
            symmetric: false,
            rest_at_target: false,
        }
    }
}

impl InstanceOptions {
    pub fn unconstrained() -> Self {
        Self {
            state_bound_probability: 0.0,
            ..Self::default()
        }
    }
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn draw_bounds<R: Rng + ?Sized>(rng: &mut R, n: usize, opts: &InstanceOptions) -> Bounds {
    let u_max = log_uniform(rng, opts.bound_range);
    let u_min = if opts.symmetric {
        -u_max
    } else {
        -log_uniform(rng, opts.bound_range)
    };
    let mut b = Bounds::input_only(n, u_min, u_max);
    for i in 2..=n {
        if rng.random_bool(opts.state_bound_probability) {
            let hi = log_uniform(rng, opts.bound_range);
            let lo = if opts.symmetric {
                -hi
            } else {
                -log_uniform(rng, opts.bound_range)
            };
            b = b.with_state(i, lo, hi);
        }
    }
    b
}

fn draw_state<R: Rng + ?Sized>(
    rng: &mut R,
    b: &Bounds,
    opts: &InstanceOptions,
    rest: bool,
) -> Vec<f64> {
    let n = b.order();
    let r = opts.state_range;
    (1..=n)
        .map(|i| {
            if i > 1 && rest {
                return 0.0;
            }
            let (lo, hi) = b.state(i);
            rng.random_range(lo.max(-r)..hi.min(r))
        })
        .collect()
}

/// A random problem whose boundary states are strictly feasible.
pub fn random_problem<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    opts: &InstanceOptions,
) -> ValidatedProblem {
    let spec = ChainSpec::new(n).expect("supported order");
    loop {
        let b = draw_bounds(rng, n, opts);
        let x0 = draw_state(rng, &b, opts, false);
        let xf = draw_state(rng, &b, opts, opts.rest_at_target);
        if let Ok(p) = validate_problem(spec, b, BoundaryConditions::new(x0, xf)) {
            if p.warnings.is_empty() {
                return p;
            }
        }
    }
}
