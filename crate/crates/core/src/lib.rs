//! Time-optimal bang-zero trajectories for integrator chains.
//!
//! Switching times are the common nonnegative real roots of precomputed
//! triangular polynomial systems, one per profile type (the set of state
//! constraints that become active). Planning evaluates those systems for both
//! signs of the first input phase, validates every candidate and keeps the
//! fastest.
//!
//! ```
//! use chaintraj::{plan, validate_problem, Bounds, BoundaryConditions, ChainSpec, PlannerOptions};
//!
//! let problem = validate_problem(
//!     ChainSpec::new(2).unwrap(),
//!     Bounds::symmetric(2, 1.0).with_state(2, -1.0, 1.0),
//!     BoundaryConditions::new(vec![0.0, 0.0], vec![4.0, 0.0]),
//! )
//! .unwrap();
//! let plan = plan(&problem, &PlannerOptions::default()).unwrap();
//! assert!((plan.duration - 5.0).abs() < 1e-9);
//! ```

pub mod bundle;
pub mod cli;
pub mod combinatorics;
pub mod document;
pub mod instances;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod poly;

pub use bundle::{
    builtin_bundle, builtin_bundles, load_bundle, select_system, BasisBundle, BundleError,
    TriangularSystem,
};
pub use combinatorics::{
    condition_count, enumerate_profile_types, switching_sequence, tie_map, ProfileType, Sign,
    SwitchingPattern, TieMap,
};
pub use model::{
    classify_boundary, validate_problem, validate_problem_with, BoundaryClass, BoundaryConditions,
    Bounds, ChainSpec, ProblemError, ValidatedProblem, Warning,
};
pub use oracle::{check_plan, CheckReport, CheckTolerances};
pub use planner::{plan, plan_with_bundle, CandidateSet, PlanError, PlannerOptions, SwitchingPlan};
pub use poly::{integrate_piecewise, PiecewiseTrajectory};
