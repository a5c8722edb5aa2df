//! Differentiability check and the linear system of the robust derivative.
//!
//! Fixing the active rows `E_s` of every state and differentiating the
//! dualized LP gives, per parameter `v`,
//!
//! ```text
//! ∂x_s = 0                                                     (pinned s)
//! ∂x_s + b_Eᵀ∂α_E + ∂β_s = −α_Eᵀ ∂b_E
//! A_Eᵀ∂α_E + ∂x_post(s) + ∂β_s 𝟙 = −(∂A_E)ᵀ α_E
//! ```
//!
//! whose matrix `C` does not depend on `v`. It is square exactly when every
//! state has `|post(s)| − 1` active rows.

use super::solve::vertex_from_rows;
use super::{DifferentiabilityVerdict, Failure, RobustSolution, StateDiagnostic};
use crate::error::Result;
use crate::expr::{Instantiation, ParamId};
use crate::models::{ConcretePrmc, PolytopeEntry, Prmc};
use crate::sparse::SparseMatrix;

/// Slack below which a non-active row counts as tight.
const TIGHT_TOL: f64 = 1e-9;
/// First-order slack change above which a tight row leaves or joins the
/// active set.
const SLACK_RATE_TOL: f64 = 1e-8;

pub(crate) struct DerivativeSystem {
    pub c: SparseMatrix,
    succ_offset: Vec<usize>,
}

/// Derivative values of polytope entries at `u`, grouped per state.
pub(crate) fn entry_derivatives(
    model: &Prmc,
    u: &Instantiation,
) -> Result<Vec<Vec<(ParamId, PolytopeEntry, f64)>>> {
    let mut by_state = vec![Vec::new(); model.num_states()];
    for i in 0..model.num_params() {
        let v = ParamId(i);
        for occ in model.occurrences(v) {
            let d = occ.derivative.eval(u)?;
            if d != 0.0 {
                by_state[occ.state].push((v, occ.entry, d));
            }
        }
    }
    Ok(by_state)
}

fn row_dot(row: &[f64], p: &[f64]) -> f64 {
    row.iter().zip(p).map(|(a, x)| a * x).sum()
}

/// Per-state shape and redundancy checks. `derivs` comes from
/// [`entry_derivatives`].
pub(crate) fn state_diagnostics(
    mc: &ConcretePrmc,
    sol: &RobustSolution,
    derivs: &[Vec<(ParamId, PolytopeEntry, f64)>],
) -> Vec<StateDiagnostic> {
    let mut out = Vec::new();
    for s in 0..mc.num_states() {
        if mc.pinned()[s] {
            continue;
        }
        let poly = mc.polytope(s).expect("non-pinned states have polytopes");
        let n = poly.support.len();
        let rows: Vec<usize> = (0..poly.a.len()).filter(|&i| sol.active[s][i]).collect();
        let needed = n - 1;
        let diag = |failure, tight| StateDiagnostic {
            state: Some(s),
            active: rows.len(),
            needed,
            tight,
            failure,
        };
        if rows.len() < needed {
            out.push(diag(Failure::Underdetermined, rows.len()));
            continue;
        }
        if rows.len() > needed {
            out.push(diag(Failure::Overdetermined, rows.len()));
            continue;
        }
        let Ok((p, lu)) = vertex_from_rows(poly, &rows) else {
            out.push(diag(Failure::Singular, rows.len()));
            continue;
        };
        let tight: Vec<usize> = (0..poly.a.len())
            .filter(|&i| !sol.active[s][i])
            .filter(|&i| poly.b[i] - row_dot(&poly.a[i], &p) <= TIGHT_TOL * (1.0 + poly.b[i].abs()))
            .collect();
        if tight.is_empty() || derivs[s].is_empty() {
            continue;
        }
        // Per parameter: ∂p from the active rows, then the slack rate of every
        // tight row.
        let mut params: Vec<ParamId> = derivs[s].iter().map(|d| d.0).collect();
        params.dedup();
        let m = poly.a.len();
        let mut moved = false;
        for v in params {
            let mut da = vec![vec![0.0; n]; m];
            let mut db = vec![0.0; m];
            let mut scale: f64 = 1.0;
            for &(w, entry, d) in &derivs[s] {
                if w != v {
                    continue;
                }
                scale = scale.max(d.abs());
                match entry {
                    PolytopeEntry::A { row, col } => da[row][col] += d,
                    PolytopeEntry::B { row } => db[row] += d,
                }
            }
            let mut rhs: Vec<f64> = rows.iter().map(|&i| db[i] - row_dot(&da[i], &p)).collect();
            rhs.push(0.0);
            let dp = lu.solve(&rhs);
            for &i in &tight {
                let rate = db[i] - row_dot(&da[i], &p) - row_dot(&poly.a[i], &dp);
                if rate.abs() > SLACK_RATE_TOL * scale {
                    moved = true;
                }
            }
        }
        if moved {
            out.push(diag(Failure::Overdetermined, rows.len() + tight.len()));
        }
    }
    out
}

pub(crate) fn assemble(mc: &ConcretePrmc, sol: &RobustSolution) -> Result<DerivativeSystem> {
    let n = mc.num_states();
    let mut succ_offset = vec![usize::MAX; n];
    let mut row = n;
    let mut col = n;
    let mut t = Vec::new();
    for s in 0..n {
        t.push((s, s, 1.0));
        if mc.pinned()[s] {
            continue;
        }
        let poly = mc.polytope(s).expect("non-pinned states have polytopes");
        succ_offset[s] = row;
        let beta = col + sol.active[s].iter().filter(|&&a| a).count();
        t.push((s, beta, 1.0));
        for (j, &succ) in poly.support.iter().enumerate() {
            t.push((row + j, succ, 1.0));
            t.push((row + j, beta, 1.0));
        }
        for i in (0..poly.a.len()).filter(|&i| sol.active[s][i]) {
            t.push((s, col, poly.b[i]));
            for j in 0..poly.support.len() {
                t.push((row + j, col, poly.a[i][j]));
            }
            col += 1;
        }
        col += 1;
        row += poly.support.len();
    }
    let c = SparseMatrix::from_triplets(row, col, &t)?;
    Ok(DerivativeSystem { c, succ_offset })
}

impl DerivativeSystem {
    /// Sparse right-hand side for one parameter.
    pub(crate) fn rhs(
        &self,
        model: &Prmc,
        u: &Instantiation,
        sol: &RobustSolution,
        v: ParamId,
    ) -> Result<Vec<(usize, f64)>> {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for occ in model.occurrences(v) {
            let s = occ.state;
            if model.pinned()[s] {
                continue;
            }
            let (row, r) = match occ.entry {
                PolytopeEntry::A { row, col } => (row, self.succ_offset[s] + col),
                PolytopeEntry::B { row } => (row, s),
            };
            if !sol.active[s][row] {
                continue;
            }
            let d = occ.derivative.eval(u)?;
            acc.push((r, -sol.alpha[s][row] * d));
        }
        acc.sort_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
        for (r, v) in acc {
            match out.last_mut() {
                Some(last) if last.0 == r => last.1 += v,
                _ => out.push((r, v)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        Ok(out)
    }
}

pub(crate) fn verdict_from(
    failures: Vec<StateDiagnostic>,
    system_size: usize,
) -> DifferentiabilityVerdict {
    DifferentiabilityVerdict {
        differentiable: failures.is_empty(),
        failures,
        system_size,
    }
}
