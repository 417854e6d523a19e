//! Greedy 2-coordinate descent and 1-norm steepest descent for smooth minimization
//! subject to `Σ aᵢxᵢ = γ` and optional per-coordinate bounds.

pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod objectives;
pub mod oracles;
pub mod rules;
pub mod solver;
pub mod step;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    check_feasible, project_to_feasible, BoundHit, Direction, Iterate, LipschitzInfo, ProblemSpec, Trace,
    TraceRecord, FEASIBILITY_TOL,
};
pub use objectives::{LeastSquares, Objective, Quadratic};
pub use rules::{PairChoice, RuleId};
pub use step::StepPolicy;
