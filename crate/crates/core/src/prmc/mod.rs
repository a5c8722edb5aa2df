//! Robust expected reward of a prMC against a minimizing adversary, and its
//! partial derivatives.

mod derivative;
mod solve;

use crate::error::{Error, Result};
use crate::expr::{Instantiation, ParamId};
use crate::models::{ConcretePrmc, Prmc};
use crate::pmc::{GradientMethod, GradientReport};
use crate::sparse::{ColumnOrder, LuFactors};
use crate::topk::{relaxation_factored, Direction, TopkResult};
use derivative::DerivativeSystem;

pub use solve::SolveOptions;

/// Dual multipliers above this value mark a row as active.
pub const ACTIVE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct RobustSolution {
    /// Robust value per state.
    pub x: Vec<f64>,
    /// Multipliers of the polytope rows per state; empty for pinned states.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    /// Robust value at the initial distribution.
    pub sol: f64,
    /// `alpha > ACTIVE_TOL` per row.
    pub active: Vec<Vec<bool>>,
    /// A worst-case distribution per state, over its support.
    pub policy: Vec<Vec<f64>>,
    pub lp_iterations: usize,
    pub rpi_iterations: usize,
    pub warm_started: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    /// Fewer active rows than needed to pin down the worst case.
    Underdetermined,
    /// More rows constrain the worst case than needed, and a parameter moves
    /// the extra ones.
    Overdetermined,
    /// The derivative system has no unique solution.
    Singular,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateDiagnostic {
    /// `None` when the failure concerns the whole system.
    pub state: Option<usize>,
    pub active: usize,
    pub needed: usize,
    /// Active plus tight rows.
    pub tight: usize,
    pub failure: Failure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferentiabilityVerdict {
    pub differentiable: bool,
    pub failures: Vec<StateDiagnostic>,
    /// Rows of the derivative system.
    pub system_size: usize,
}

impl DifferentiabilityVerdict {
    pub fn reason(&self) -> Option<Failure> {
        self.failures.first().map(|f| f.failure)
    }

    pub fn describe(&self) -> String {
        match self.failures.first() {
            None => "differentiable".into(),
            Some(f) => {
                let at = f
                    .state
                    .map_or_else(|| "derivative system".to_string(), |s| format!("state {s}"));
                format!(
                    "{:?} at {at} ({} active rows, {} needed; {} failing states)",
                    f.failure,
                    f.active,
                    f.needed,
                    self.failures.len()
                )
            }
        }
    }
}

/// Indices of the active rows per state.
pub fn extract_active_sets(sol: &RobustSolution) -> Vec<Vec<usize>> {
    sol.active
        .iter()
        .map(|a| {
            a.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

pub fn solve_concrete(mc: &ConcretePrmc, opts: &SolveOptions) -> Result<RobustSolution> {
    solve::solve(mc, opts)
}

pub fn robust_solve(m: &Prmc, u: &Instantiation) -> Result<RobustSolution> {
    solve::solve(&m.instantiate(u)?, &SolveOptions::default())
}

/// A solved prMC at a fixed instantiation with its derivative system
/// factorized (when differentiable).
pub struct RobustAnalysis<'a> {
    model: &'a Prmc,
    u: Instantiation,
    mc: ConcretePrmc,
    solution: RobustSolution,
    verdict: DifferentiabilityVerdict,
    system: Option<(DerivativeSystem, LuFactors)>,
}

impl<'a> RobustAnalysis<'a> {
    pub fn new(model: &'a Prmc, u: &Instantiation) -> Result<Self> {
        Self::with_options(model, u, &SolveOptions::default())
    }

    pub fn with_options(model: &'a Prmc, u: &Instantiation, opts: &SolveOptions) -> Result<Self> {
        let mc = model.instantiate(u)?;
        let solution = solve::solve(&mc, opts)?;
        let derivs = derivative::entry_derivatives(model, u)?;
        let mut failures = derivative::state_diagnostics(&mc, &solution, &derivs);
        let mut system = None;
        let mut size = 0;
        if failures.is_empty() {
            let sys = derivative::assemble(&mc, &solution)?;
            size = sys.c.rows();
            match LuFactors::factorize(&sys.c, ColumnOrder::default()) {
                Ok(lu) => system = Some((sys, lu)),
                Err(Error::SingularMatrix { .. }) => failures.push(StateDiagnostic {
                    state: None,
                    active: 0,
                    needed: 0,
                    tight: 0,
                    failure: Failure::Singular,
                }),
                Err(e) => return Err(e),
            }
        }
        Ok(RobustAnalysis {
            model,
            u: u.clone(),
            mc,
            solution,
            verdict: derivative::verdict_from(failures, size),
            system,
        })
    }

    pub fn solution(&self) -> &RobustSolution {
        &self.solution
    }

    pub fn concrete(&self) -> &ConcretePrmc {
        &self.mc
    }

    pub fn verdict(&self) -> &DifferentiabilityVerdict {
        &self.verdict
    }

    fn system(&self) -> Result<&(DerivativeSystem, LuFactors)> {
        self.system
            .as_ref()
            .ok_or_else(|| Error::NotDifferentiable(self.verdict.describe()))
    }

    fn derivative_from(&self, sys: &(DerivativeSystem, LuFactors), v: ParamId) -> Result<f64> {
        let rhs = sys.0.rhs(self.model, &self.u, &self.solution, v)?;
        if rhs.is_empty() {
            return Ok(0.0);
        }
        let mut dense = vec![0.0; sys.0.c.rows()];
        for (r, val) in rhs {
            dense[r] = val;
        }
        let dx = sys.1.solve(&dense)?;
        Ok(self.mc.initial().iter().zip(&dx).map(|(p, d)| p * d).sum())
    }

    pub fn gradient(&self, v: ParamId) -> Result<f64> {
        if v.0 >= self.model.num_params() {
            return Err(Error::UnknownParameter(format!("#{}", v.0)));
        }
        self.derivative_from(self.system()?, v)
    }

    pub fn derivatives_for_subset(&self, subset: &[ParamId]) -> Result<GradientReport> {
        let sys = self.system()?;
        let values = subset
            .iter()
            .map(|&v| self.derivative_from(sys, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(GradientReport {
            method: GradientMethod::Robust,
            params: subset.to_vec(),
            values,
        })
    }

    /// One solve per parameter on the shared factorization.
    pub fn gradient_all(&self) -> Result<GradientReport> {
        let all: Vec<ParamId> = (0..self.model.num_params()).map(ParamId).collect();
        self.derivatives_for_subset(&all)
    }

    pub fn topk(&self, k: usize, direction: Direction, with_values: bool) -> Result<TopkResult> {
        let sys = self.system()?;
        let d = (0..self.model.num_params())
            .map(|i| sys.0.rhs(self.model, &self.u, &self.solution, ParamId(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut w = vec![0.0; sys.0.c.rows()];
        w[..self.mc.num_states()].copy_from_slice(self.mc.initial());
        let mut r = relaxation_factored(&sys.1, &w, &d, k, direction)?;
        if with_values {
            r.values = Some(self.derivatives_for_subset(&r.selected)?.values);
        }
        Ok(r)
    }
}

pub fn check_differentiability(m: &Prmc, u: &Instantiation) -> Result<DifferentiabilityVerdict> {
    Ok(RobustAnalysis::new(m, u)?.verdict)
}

pub fn robust_gradient(m: &Prmc, u: &Instantiation, v: ParamId) -> Result<f64> {
    RobustAnalysis::new(m, u)?.gradient(v)
}

pub fn robust_gradient_all(m: &Prmc, u: &Instantiation) -> Result<GradientReport> {
    RobustAnalysis::new(m, u)?.gradient_all()
}

pub fn topk_robust(
    m: &Prmc,
    u: &Instantiation,
    k: usize,
    direction: Direction,
) -> Result<TopkResult> {
    RobustAnalysis::new(m, u)?.topk(k, direction, false)
}
