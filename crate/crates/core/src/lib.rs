//! Regular solutions of constrained Beltrami equations, their first-order
//! variations, and necessary conditions for extremals of Gateaux
//! differentiable functionals.

pub mod config;
pub mod constraints;
pub mod error;
pub mod extremal;
pub mod field;
pub mod runner;
pub mod solver;
pub mod transforms;
pub mod variation;

pub use config::RunConfig;
pub use constraints::{ConstraintFamily, ConvexPolygon};
pub use error::{Error, Result};
pub use field::{ComplexField, GridSpec, MaskedField, RealField};
pub use runner::{run, ExitStatus};
pub use solver::{solve, Coefficient, Solution, SolveOptions};
pub use transforms::TransformPlan;
