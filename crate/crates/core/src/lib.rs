//! Sensitivity analysis for parametric Markov chains and parametric robust
//! Markov chains.

pub mod benchgen;
pub mod error;
pub mod expr;
pub mod learning;
pub mod lp;
pub mod models;
pub mod oracle;
pub mod pmc;
pub mod prmc;
pub mod sparse;
pub mod topk;

pub use error::{Error, ErrorClass, Result};
pub use expr::{Expr, Instantiation, ParamId, ParamSet, Parameter, Rational};
pub use models::{
    ConcreteMc, ConcretePolytope, ConcretePrmc, Model, ParametricPolytope, Pmc, Prmc,
};
pub use pmc::{GradientMethod, GradientReport, PmcAnalysis, PmcSolution};
pub use prmc::{
    DifferentiabilityVerdict, Failure, RobustAnalysis, RobustSolution, SolveOptions,
    StateDiagnostic,
};
pub use sparse::SparseMatrix;
pub use topk::{Direction, TopkResult};
