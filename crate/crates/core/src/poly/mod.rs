//! Expression trees, root finding and piecewise trajectories.

pub mod expr;
pub mod piecewise;
pub mod roots;

pub use expr::{Constant, Env, Expr, ExprError, Symbol};
pub use piecewise::{integrate_inputs, integrate_piecewise, PiecewiseTrajectory, TrajectoryError};
pub use roots::{real_nonneg_roots, roots_all, C64};
