//! Expected cumulative reward of a pMC and its partial derivatives.
//!
//! With `P` the instantiated transition matrix and terminal (or otherwise
//! pinned) states fixed to zero, the value vector solves `(I − P) x = r` and
//! `sol = s_Iᵀ x`. Differentiating gives `(I − P) ∂x = ∂P x` for each
//! parameter, so one factorization of `I − P` serves the solve and all
//! derivative systems.

use crate::error::Result;
use crate::expr::{Instantiation, ParamId};
use crate::models::{ConcreteMc, Pmc};
use crate::sparse::{ColumnOrder, LuFactors};
use crate::topk::{relaxation_factored, Direction, TopkResult};

#[derive(Clone, Debug, PartialEq)]
pub struct PmcSolution {
    pub x: Vec<f64>,
    pub sol: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMethod {
    Explicit,
    Adjoint,
    Topk,
    Robust,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub method: GradientMethod,
    pub params: Vec<ParamId>,
    pub values: Vec<f64>,
}

impl GradientReport {
    pub fn get(&self, v: ParamId) -> Option<f64> {
        self.params
            .iter()
            .position(|&p| p == v)
            .map(|i| self.values[i])
    }
}

/// A solved pMC at a fixed instantiation, holding the factorization of
/// `I − P` for derivative queries.
pub struct PmcAnalysis<'a> {
    model: &'a Pmc,
    u: Instantiation,
    mc: ConcreteMc,
    lu: LuFactors,
    solution: PmcSolution,
}

impl<'a> PmcAnalysis<'a> {
    pub fn new(model: &'a Pmc, u: &Instantiation) -> Result<Self> {
        let mc = model.instantiate(u)?;
        let lu = LuFactors::factorize(&mc.system_matrix(), ColumnOrder::default())?;
        let x = lu.solve(&mc.reward_vector())?;
        let sol = dot(mc.initial(), &x);
        Ok(PmcAnalysis {
            model,
            u: u.clone(),
            mc,
            lu,
            solution: PmcSolution { x, sol },
        })
    }

    pub fn solution(&self) -> &PmcSolution {
        &self.solution
    }

    pub fn chain(&self) -> &ConcreteMc {
        &self.mc
    }

    pub fn derivative_rhs(&self, v: ParamId) -> Result<Vec<f64>> {
        derivative_rhs(self.model, &self.u, &self.solution.x, v)
    }

    fn sparse_rhs(&self, v: ParamId) -> Result<Vec<(usize, f64)>> {
        let d = self.derivative_rhs(v)?;
        Ok(d.into_iter()
            .enumerate()
            .filter(|(_, x)| *x != 0.0)
            .collect())
    }

    /// One solve against the shared factorization per parameter.
    pub fn gradient_explicit(&self) -> Result<GradientReport> {
        let all: Vec<ParamId> = (0..self.model.num_params()).map(ParamId).collect();
        let mut r = self.derivatives_for_subset(&all)?;
        r.method = GradientMethod::Explicit;
        Ok(r)
    }

    /// One transposed solve `(I − P)ᵀ g = s_I`, then `gᵀ d_i` per parameter.
    pub fn gradient_adjoint(&self) -> Result<GradientReport> {
        let g = self.lu.solve_transposed(self.mc.initial())?;
        let params: Vec<ParamId> = (0..self.model.num_params()).map(ParamId).collect();
        let values = params
            .iter()
            .map(|&v| Ok(self.sparse_rhs(v)?.iter().map(|&(s, d)| g[s] * d).sum()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(GradientReport {
            method: GradientMethod::Adjoint,
            params,
            values,
        })
    }

    pub fn derivatives_for_subset(&self, subset: &[ParamId]) -> Result<GradientReport> {
        let mut values = Vec::with_capacity(subset.len());
        for &v in subset {
            let d = self.derivative_rhs(v)?;
            if d.iter().all(|x| *x == 0.0) {
                values.push(0.0);
                continue;
            }
            let dx = self.lu.solve(&d)?;
            values.push(dot(self.mc.initial(), &dx));
        }
        Ok(GradientReport {
            method: GradientMethod::Explicit,
            params: subset.to_vec(),
            values,
        })
    }

    /// The `k` parameters with the highest (or lowest) derivatives, read off
    /// a vertex optimum of the relaxation LP. With `with_values` the selected
    /// derivatives are computed on the shared factorization.
    pub fn topk(&self, k: usize, direction: Direction, with_values: bool) -> Result<TopkResult> {
        let d = (0..self.model.num_params())
            .map(|i| self.sparse_rhs(ParamId(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut r = relaxation_factored(&self.lu, self.mc.initial(), &d, k, direction)?;
        if with_values {
            r.values = Some(self.derivatives_for_subset(&r.selected)?.values);
        }
        Ok(r)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn solve_expected_reward(m: &Pmc, u: &Instantiation) -> Result<PmcSolution> {
    Ok(PmcAnalysis::new(m, u)?.solution)
}

/// `∂(P x)/∂v` at `u`, zero on pinned states.
pub fn derivative_rhs(m: &Pmc, u: &Instantiation, x_star: &[f64], v: ParamId) -> Result<Vec<f64>> {
    let mut d = vec![0.0; m.num_states()];
    let pinned = m.pinned();
    for occ in m.occurrences(v) {
        if pinned[occ.state] {
            continue;
        }
        d[occ.state] += occ.derivative.eval(u)? * x_star[occ.successor];
    }
    Ok(d)
}

pub fn gradient_explicit(m: &Pmc, u: &Instantiation) -> Result<GradientReport> {
    PmcAnalysis::new(m, u)?.gradient_explicit()
}

pub fn gradient_adjoint(m: &Pmc, u: &Instantiation) -> Result<GradientReport> {
    PmcAnalysis::new(m, u)?.gradient_adjoint()
}

pub fn derivatives_for_subset(
    m: &Pmc,
    u: &Instantiation,
    subset: &[ParamId],
) -> Result<GradientReport> {
    PmcAnalysis::new(m, u)?.derivatives_for_subset(subset)
}

pub fn topk(m: &Pmc, u: &Instantiation, k: usize, direction: Direction) -> Result<TopkResult> {
    PmcAnalysis::new(m, u)?.topk(k, direction, false)
}
