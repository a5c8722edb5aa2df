//! Parametric Markov chains, parametric robust Markov chains, and their
//! numeric instantiations.

mod json;

pub use json::{instantiation_from_json, model_from_json, model_to_json, Model, FORMAT_TAG};

use crate::error::{Error, Result};
use crate::expr::{Expr, Instantiation, ParamId, ParamSet};
use crate::lp::{solve_lp, Cmp, LinearProgram, LpStatus, Sense};
use crate::sparse::SparseMatrix;

/// Row-sum tolerance for instantiated transition rows.
pub const ROW_SUM_TOL: f64 = 1e-9;
const INITIAL_SUM_TOL: f64 = 1e-12;

/// State space data shared by both model kinds.
#[derive(Clone, Debug)]
struct Frame {
    initial: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
}

impl Frame {
    fn new(n: usize, initial: Vec<f64>, rewards: Vec<f64>, terminal: &[usize]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("model has no states".into()));
        }
        if initial.len() != n || rewards.len() != n {
            return Err(Error::InvalidModel(format!(
                "expected {n} initial probabilities and rewards, got {} and {}",
                initial.len(),
                rewards.len()
            )));
        }
        if let Some(s) = initial.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel(format!(
                "initial probability of state {s} is invalid"
            )));
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > INITIAL_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "initial distribution sums to {total}"
            )));
        }
        if let Some(s) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "reward of state {s} is not finite"
            )));
        }
        let mut mask = vec![false; n];
        for &t in terminal {
            if t >= n {
                return Err(Error::InvalidModel(format!(
                    "terminal state {t} out of range"
                )));
            }
            mask[t] = true;
        }
        Ok(Frame {
            initial,
            rewards,
            terminal: mask,
        })
    }
}

/// Marks states whose value is fixed to zero: terminal states and states that
/// cannot reach a terminal state. The latter must be unreachable from the
/// initial distribution.
pub(crate) fn pinned_states(
    initial: &[f64],
    terminal: &[bool],
    succ: &[Vec<usize>],
) -> Result<Vec<bool>> {
    let n = terminal.len();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, row) in succ.iter().enumerate() {
        for &t in row {
            pred[t].push(s);
        }
    }
    let mut reaches = terminal.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&s| terminal[s]).collect();
    while let Some(t) = stack.pop() {
        for &s in &pred[t] {
            if !reaches[s] {
                reaches[s] = true;
                stack.push(s);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&s| initial[s] > 0.0).collect();
    for &s in &stack {
        seen[s] = true;
    }
    while let Some(s) = stack.pop() {
        if !reaches[s] {
            return Err(Error::Unreachable(s));
        }
        if terminal[s] {
            continue;
        }
        for &t in &succ[s] {
            if !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    Ok((0..n).map(|s| terminal[s] || !reaches[s]).collect())
}

fn check_expr_params(e: &Expr, params: &ParamSet) -> Result<()> {
    match e.params().iter().find(|p| p.0 >= params.len()) {
        Some(p) => Err(Error::MissingParameter(p.0)),
        None => Ok(()),
    }
}

fn check_dimension(u: &Instantiation, params: &ParamSet) -> Result<()> {
    if u.len() != params.len() {
        return Err(Error::InvalidModel(format!(
            "instantiation has {} values for {} parameters",
            u.len(),
            params.len()
        )));
    }
    Ok(())
}

/// A transition whose probability depends on a parameter: `P(state,
/// successor)` with its symbolic derivative.
#[derive(Clone, Debug)]
pub struct TransitionOccurrence {
    pub state: usize,
    pub successor: usize,
    pub derivative: Expr,
}

/// Parametric Markov chain.
#[derive(Clone, Debug)]
pub struct Pmc {
    params: ParamSet,
    frame: Frame,
    rows: Vec<Vec<(usize, Expr)>>,
    pinned: Vec<bool>,
    occurrences: Vec<Vec<TransitionOccurrence>>,
}

impl Pmc {
    /// Builds and structurally validates a pMC. Duplicate successors in a row
    /// are merged by summing their expressions.
    pub fn new(
        params: ParamSet,
        initial: Vec<f64>,
        rewards: Vec<f64>,
        terminal: &[usize],
        rows: Vec<Vec<(usize, Expr)>>,
    ) -> Result<Self> {
        let n = rows.len();
        let frame = Frame::new(n, initial, rewards, terminal)?;
        let mut merged_rows = Vec::with_capacity(n);
        for (s, mut row) in rows.into_iter().enumerate() {
            if frame.terminal[s] && !row.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "terminal state {s} has outgoing transitions"
                )));
            }
            if !frame.terminal[s] && row.is_empty() {
                return Err(Error::InvalidModel(format!("state {s} has no transitions")));
            }
            row.sort_by_key(|(t, _)| *t);
            let mut merged: Vec<(usize, Expr)> = Vec::with_capacity(row.len());
            for (t, e) in row {
                if t >= n {
                    return Err(Error::InvalidModel(format!(
                        "state {s} has successor {t} out of range"
                    )));
                }
                check_expr_params(&e, &params)?;
                match merged.last_mut() {
                    Some((u, f)) if *u == t => *f = f.add(&e),
                    _ => merged.push((t, e)),
                }
            }
            merged_rows.push(merged);
        }
        let succ: Vec<Vec<usize>> = merged_rows
            .iter()
            .map(|r| r.iter().map(|(t, _)| *t).collect())
            .collect();
        let pinned = pinned_states(&frame.initial, &frame.terminal, &succ)?;
        let mut occurrences = vec![Vec::new(); params.len()];
        for (s, row) in merged_rows.iter().enumerate() {
            for (t, e) in row {
                for &p in e.params() {
                    occurrences[p.0].push(TransitionOccurrence {
                        state: s,
                        successor: *t,
                        derivative: e.diff(p),
                    });
                }
            }
        }
        Ok(Pmc {
            params,
            frame,
            rows: merged_rows,
            pinned,
            occurrences,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn initial(&self) -> &[f64] {
        &self.frame.initial
    }

    pub fn rewards(&self) -> &[f64] {
        &self.frame.rewards
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.frame.terminal[s]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&s| self.frame.terminal[s])
            .collect()
    }

    pub fn row(&self, s: usize) -> &[(usize, Expr)] {
        &self.rows[s]
    }

    /// States whose value is fixed to zero (terminal or unable to reach a
    /// terminal state).
    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// Transitions that depend on parameter `v`, with their derivatives.
    pub fn occurrences(&self, v: ParamId) -> &[TransitionOccurrence] {
        &self.occurrences[v.0]
    }

    /// Numeric chain at `u`, checking graph preservation and row sums.
    pub fn instantiate(&self, u: &Instantiation) -> Result<ConcreteMc> {
        check_dimension(u, &self.params)?;
        let mut rows = Vec::with_capacity(self.rows.len());
        for (s, row) in self.rows.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            let mut sum = 0.0;
            for (t, e) in row {
                let p = e.eval(u)?;
                if !(p > 0.0 && p <= 1.0 + ROW_SUM_TOL) {
                    return Err(Error::GraphPreservation {
                        state: s,
                        successor: *t,
                        detail: format!("probability {p} outside (0, 1]"),
                    });
                }
                sum += p;
                out.push((*t, p));
            }
            if !self.frame.terminal[s] && (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::GraphPreservation {
                    state: s,
                    successor: row[0].0,
                    detail: format!("row sums to {sum}"),
                });
            }
            rows.push(out);
        }
        Ok(ConcreteMc {
            initial: self.frame.initial.clone(),
            rewards: self.frame.rewards.clone(),
            terminal: self.frame.terminal.clone(),
            rows,
            pinned: self.pinned.clone(),
        })
    }
}

/// Numeric Markov chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteMc {
    initial: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    rows: Vec<Vec<(usize, f64)>>,
    pinned: Vec<bool>,
}

impl ConcreteMc {
    pub fn new(
        initial: Vec<f64>,
        rewards: Vec<f64>,
        terminal: &[usize],
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let frame = Frame::new(rows.len(), initial, rewards, terminal)?;
        for (s, row) in rows.iter().enumerate() {
            if frame.terminal[s] && !row.is_empty() {
                return Err(Error::InvalidModel(format!(
                    "terminal state {s} has outgoing transitions"
                )));
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if !frame.terminal[s] && (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("row {s} sums to {sum}")));
            }
            if let Some(&(t, p)) = row
                .iter()
                .find(|(t, p)| *t >= rows.len() || !(*p > 0.0 && *p <= 1.0 + ROW_SUM_TOL))
            {
                return Err(Error::GraphPreservation {
                    state: s,
                    successor: t,
                    detail: format!("probability {p}"),
                });
            }
        }
        let succ: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| r.iter().map(|(t, _)| *t).collect())
            .collect();
        let pinned = pinned_states(&frame.initial, &frame.terminal, &succ)?;
        Ok(ConcreteMc {
            initial: frame.initial,
            rewards: frame.rewards,
            terminal: frame.terminal,
            rows,
            pinned,
        })
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// `I − P` with identity rows for pinned states.
    pub fn system_matrix(&self) -> SparseMatrix {
        let mut t =
            Vec::with_capacity(self.rows.iter().map(Vec::len).sum::<usize>() + self.rows.len());
        for (s, row) in self.rows.iter().enumerate() {
            t.push((s, s, 1.0));
            if self.pinned[s] {
                continue;
            }
            for &(j, p) in row {
                t.push((s, j, -p));
            }
        }
        SparseMatrix::from_triplets(self.rows.len(), self.rows.len(), &t)
            .expect("indices validated")
    }

    /// Rewards with zeros on pinned states.
    pub fn reward_vector(&self) -> Vec<f64> {
        self.rewards
            .iter()
            .zip(&self.pinned)
            .map(|(&r, &z)| if z { 0.0 } else { r })
            .collect()
    }
}

/// Uncertainty set `{p : A p ≤ b, 𝟙ᵀp = 1}` over the successors `support`.
#[derive(Clone, Debug)]
pub struct ParametricPolytope {
    support: Vec<usize>,
    a: Vec<Vec<Expr>>,
    b: Vec<Expr>,
}

impl ParametricPolytope {
    pub fn new(support: Vec<usize>, a: Vec<Vec<Expr>>, b: Vec<Expr>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidModel("polytope has empty support".into()));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidModel(
                "polytope support has duplicate successors".into(),
            ));
        }
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidModel(format!(
                "polytope has {} rows and {} right-hand sides",
                a.len(),
                b.len()
            )));
        }
        if let Some(r) = a.iter().position(|row| row.len() != support.len()) {
            return Err(Error::InvalidModel(format!(
                "polytope row {r} has {} entries for {} successors",
                a[r].len(),
                support.len()
            )));
        }
        Ok(ParametricPolytope { support, a, b })
    }

    /// Interval encoding: rows `p_j ≤ upper_j` and `−p_j ≤ −lower_j` per
    /// successor, in that order.
    pub fn from_intervals(entries: Vec<(usize, Expr, Expr)>) -> Result<Self> {
        let k = entries.len();
        let mut support = Vec::with_capacity(k);
        let mut a = Vec::with_capacity(2 * k);
        let mut b = Vec::with_capacity(2 * k);
        for (j, (t, lower, upper)) in entries.into_iter().enumerate() {
            support.push(t);
            let mut up = vec![Expr::zero(); k];
            up[j] = Expr::one();
            let mut down = vec![Expr::zero(); k];
            down[j] = Expr::integer(-1);
            a.push(up);
            b.push(upper);
            a.push(down);
            b.push(lower.neg());
        }
        ParametricPolytope::new(support, a, b)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[Vec<Expr>] {
        &self.a
    }

    pub fn b(&self) -> &[Expr] {
        &self.b
    }

    pub fn instantiate(&self, u: &Instantiation) -> Result<ConcretePolytope> {
        let a = self
            .a
            .iter()
            .map(|row| row.iter().map(|e| e.eval(u)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let b = self
            .b
            .iter()
            .map(|e| e.eval(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConcretePolytope {
            support: self.support.clone(),
            a,
            b,
        })
    }
}

/// Entry of a polytope that depends on a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolytopeEntry {
    A { row: usize, col: usize },
    B { row: usize },
}

#[derive(Clone, Debug)]
pub struct PolytopeOccurrence {
    pub state: usize,
    pub entry: PolytopeEntry,
    pub derivative: Expr,
}

/// Parametric robust Markov chain with a minimizing adversary.
#[derive(Clone, Debug)]
pub struct Prmc {
    params: ParamSet,
    frame: Frame,
    polytopes: Vec<Option<ParametricPolytope>>,
    pinned: Vec<bool>,
    occurrences: Vec<Vec<PolytopeOccurrence>>,
}

impl Prmc {
    pub fn new(
        params: ParamSet,
        initial: Vec<f64>,
        rewards: Vec<f64>,
        terminal: &[usize],
        polytopes: Vec<Option<ParametricPolytope>>,
    ) -> Result<Self> {
        let n = polytopes.len();
        let frame = Frame::new(n, initial, rewards, terminal)?;
        for (s, poly) in polytopes.iter().enumerate() {
            match (frame.terminal[s], poly) {
                (true, Some(_)) => {
                    return Err(Error::InvalidModel(format!(
                        "terminal state {s} has an uncertainty set"
                    )))
                }
                (false, None) => {
                    return Err(Error::InvalidModel(format!(
                        "state {s} has no uncertainty set"
                    )))
                }
                (false, Some(p)) => {
                    if let Some(&t) = p.support.iter().find(|&&t| t >= n) {
                        return Err(Error::InvalidModel(format!(
                            "state {s} has successor {t} out of range"
                        )));
                    }
                    for e in p.a.iter().flatten().chain(&p.b) {
                        check_expr_params(e, &params)?;
                    }
                }
                (true, None) => {}
            }
        }
        let succ: Vec<Vec<usize>> = polytopes
            .iter()
            .map(|p| p.as_ref().map_or_else(Vec::new, |p| p.support.clone()))
            .collect();
        let pinned = pinned_states(&frame.initial, &frame.terminal, &succ)?;
        let mut occurrences = vec![Vec::new(); params.len()];
        for (s, poly) in polytopes.iter().enumerate() {
            let Some(poly) = poly else { continue };
            for (row, coeffs) in poly.a.iter().enumerate() {
                for (col, e) in coeffs.iter().enumerate() {
                    for &p in e.params() {
                        occurrences[p.0].push(PolytopeOccurrence {
                            state: s,
                            entry: PolytopeEntry::A { row, col },
                            derivative: e.diff(p),
                        });
                    }
                }
            }
            for (row, e) in poly.b.iter().enumerate() {
                for &p in e.params() {
                    occurrences[p.0].push(PolytopeOccurrence {
                        state: s,
                        entry: PolytopeEntry::B { row },
                        derivative: e.diff(p),
                    });
                }
            }
        }
        Ok(Prmc {
            params,
            frame,
            polytopes,
            pinned,
            occurrences,
        })
    }

    /// Interval prMC: `rows[s]` lists `(successor, lower, upper)`; terminal
    /// states have empty rows.
    pub fn from_intervals(
        params: ParamSet,
        initial: Vec<f64>,
        rewards: Vec<f64>,
        terminal: &[usize],
        rows: Vec<Vec<(usize, Expr, Expr)>>,
    ) -> Result<Self> {
        let mut is_terminal = vec![false; rows.len()];
        for &t in terminal {
            if t < rows.len() {
                is_terminal[t] = true;
            }
        }
        let polytopes = rows
            .into_iter()
            .enumerate()
            .map(|(s, row)| {
                if is_terminal[s] && row.is_empty() {
                    Ok(None)
                } else {
                    ParametricPolytope::from_intervals(row).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Prmc::new(params, initial, rewards, terminal, polytopes)
    }

    /// Point-interval twin of a pMC: every transition gets `[P, P]`.
    pub fn from_pmc(m: &Pmc) -> Result<Self> {
        let rows = (0..m.num_states())
            .map(|s| {
                m.row(s)
                    .iter()
                    .map(|(t, e)| (*t, e.clone(), e.clone()))
                    .collect()
            })
            .collect();
        Prmc::from_intervals(
            m.params().clone(),
            m.initial().to_vec(),
            m.rewards().to_vec(),
            &m.terminal_states(),
            rows,
        )
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_states(&self) -> usize {
        self.polytopes.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.polytopes
            .iter()
            .flatten()
            .map(|p| p.support.len())
            .sum()
    }

    pub fn initial(&self) -> &[f64] {
        &self.frame.initial
    }

    pub fn rewards(&self) -> &[f64] {
        &self.frame.rewards
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.frame.terminal[s]
    }

    pub fn terminal_states(&self) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&s| self.frame.terminal[s])
            .collect()
    }

    pub fn polytope(&self, s: usize) -> Option<&ParametricPolytope> {
        self.polytopes[s].as_ref()
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn occurrences(&self, v: ParamId) -> &[PolytopeOccurrence] {
        &self.occurrences[v.0]
    }

    /// Numeric polytopes at `u`; each non-pinned state's set is probed for
    /// nonemptiness.
    pub fn instantiate(&self, u: &Instantiation) -> Result<ConcretePrmc> {
        check_dimension(u, &self.params)?;
        let mut polys = Vec::with_capacity(self.polytopes.len());
        for (s, p) in self.polytopes.iter().enumerate() {
            match p {
                None => polys.push(None),
                Some(p) => {
                    let c = p.instantiate(u)?;
                    if let Some(bad) = c.a.iter().flatten().chain(&c.b).find(|v| !v.is_finite()) {
                        return Err(Error::Domain(format!(
                            "non-finite polytope entry {bad} at state {s}"
                        )));
                    }
                    if !self.pinned[s] && !c.is_feasible()? {
                        return Err(Error::EmptyUncertaintySet(s));
                    }
                    polys.push(Some(c));
                }
            }
        }
        Ok(ConcretePrmc {
            initial: self.frame.initial.clone(),
            rewards: self.frame.rewards.clone(),
            terminal: self.frame.terminal.clone(),
            polytopes: polys,
            pinned: self.pinned.clone(),
        })
    }
}

/// Numeric polytope `{p : A p ≤ b, 𝟙ᵀp = 1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcretePolytope {
    pub support: Vec<usize>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ConcretePolytope {
    /// Per-successor `[lower, upper]` when every row bounds a single
    /// coordinate and every coordinate is bounded on both sides.
    pub fn intervals(&self) -> Option<Vec<(f64, f64)>> {
        let k = self.support.len();
        let mut lo = vec![f64::NEG_INFINITY; k];
        let mut hi = vec![f64::INFINITY; k];
        for (row, &b) in self.a.iter().zip(&self.b) {
            let mut nz = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
            let (j, &c) = nz.next()?;
            if nz.next().is_some() {
                return None;
            }
            if c > 0.0 {
                hi[j] = hi[j].min(b / c);
            } else {
                lo[j] = lo[j].max(b / c);
            }
        }
        if lo.iter().chain(&hi).any(|v| v.is_infinite()) {
            return None;
        }
        Some(lo.into_iter().zip(hi).collect())
    }

    pub fn is_feasible(&self) -> Result<bool> {
        if let Some(iv) = self.intervals() {
            let lo: f64 = iv.iter().map(|x| x.0).sum();
            let hi: f64 = iv.iter().map(|x| x.1).sum();
            return Ok(iv.iter().all(|(l, h)| l <= h)
                && lo <= 1.0 + ROW_SUM_TOL
                && hi >= 1.0 - ROW_SUM_TOL);
        }
        let lp = self.feasibility_lp(None);
        Ok(solve_lp(&lp)?.status == LpStatus::Optimal)
    }

    /// Whether some point of the set has a negative coordinate.
    pub fn admits_negative(&self) -> Result<bool> {
        for j in 0..self.support.len() {
            let lp = self.feasibility_lp(Some(j));
            let s = solve_lp(&lp)?;
            if s.status == LpStatus::Unbounded || (s.is_optimal() && s.x[j] < -ROW_SUM_TOL) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        let sum: f64 = p.iter().sum();
        (sum - 1.0).abs() <= tol
            && self
                .a
                .iter()
                .zip(&self.b)
                .all(|(row, &b)| row.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() <= b + tol)
    }

    fn feasibility_lp(&self, minimize: Option<usize>) -> LinearProgram {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let k = self.support.len();
        for j in 0..k {
            let c = if minimize == Some(j) { 1.0 } else { 0.0 };
            lp.add_var(c, f64::NEG_INFINITY, f64::INFINITY);
        }
        for (row, &b) in self.a.iter().zip(&self.b) {
            lp.add_constraint(row.iter().copied().enumerate().collect(), Cmp::Le, b);
        }
        lp.add_eq((0..k).map(|j| (j, 1.0)).collect(), 1.0);
        lp
    }
}

/// Numeric robust Markov chain.
#[derive(Clone, Debug)]
pub struct ConcretePrmc {
    initial: Vec<f64>,
    rewards: Vec<f64>,
    terminal: Vec<bool>,
    polytopes: Vec<Option<ConcretePolytope>>,
    pinned: Vec<bool>,
}

impl ConcretePrmc {
    pub fn num_states(&self) -> usize {
        self.polytopes.len()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    pub fn polytope(&self, s: usize) -> Option<&ConcretePolytope> {
        self.polytopes[s].as_ref()
    }

    /// Copy with every polytope replaced by `f(state, polytope)`.
    pub fn map_polytopes(
        &self,
        mut f: impl FnMut(usize, &ConcretePolytope) -> ConcretePolytope,
    ) -> Self {
        let mut out = self.clone();
        for (s, p) in out.polytopes.iter_mut().enumerate() {
            if let Some(p) = p {
                *p = f(s, p);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Pmc {
        let ps = ParamSet::from_names(["v1"]).unwrap();
        let v = Expr::param(ParamId(0));
        Pmc::new(
            ps,
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            &[1],
            vec![vec![(1, v.clone()), (0, Expr::one().sub(&v))], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn instantiates_rows() {
        let m = two_state();
        let c = m
            .instantiate(&Instantiation::new(vec![0.5]).unwrap())
            .unwrap();
        assert_eq!(c.row(0), &[(0, 0.5), (1, 0.5)]);
    }

    #[test]
    fn vanishing_transition_rejected() {
        let m = two_state();
        let r = m.instantiate(&Instantiation::new(vec![0.0]).unwrap());
        assert!(matches!(r, Err(Error::GraphPreservation { state: 0, .. })));
        assert!(m
            .instantiate(&Instantiation::new(vec![1.2]).unwrap())
            .is_err());
        assert!(m.instantiate(&Instantiation::empty()).is_err());
    }

    #[test]
    fn parameter_free_instantiation_is_identity() {
        let ps = ParamSet::new();
        let m = Pmc::new(
            ps,
            vec![1.0, 0.0, 0.0],
            vec![1.0, 2.0, 0.0],
            &[2],
            vec![
                vec![(1, Expr::fraction(1, 4)), (2, Expr::fraction(3, 4))],
                vec![(2, Expr::one())],
                vec![],
            ],
        )
        .unwrap();
        let c = m.instantiate(&Instantiation::empty()).unwrap();
        assert_eq!(c.row(0), &[(1, 0.25), (2, 0.75)]);
        assert_eq!(c.row(1), &[(2, 1.0)]);
    }

    #[test]
    fn duplicate_successors_merge() {
        let m = Pmc::new(
            ParamSet::new(),
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            &[1],
            vec![
                vec![(1, Expr::fraction(1, 2)), (1, Expr::fraction(1, 2))],
                vec![],
            ],
        )
        .unwrap();
        assert_eq!(m.num_transitions(), 1);
    }

    #[test]
    fn unreachable_terminals_detected() {
        let r = Pmc::new(
            ParamSet::new(),
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
            &[2],
            vec![vec![(1, Expr::one())], vec![(0, Expr::one())], vec![]],
        );
        assert!(matches!(r, Err(Error::Unreachable(_))));
        // The same trap is fine when nothing reaches it.
        let m = Pmc::new(
            ParamSet::new(),
            vec![0.0, 0.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0, 0.0],
            &[3],
            vec![
                vec![(1, Expr::one())],
                vec![(0, Expr::one())],
                vec![(3, Expr::one())],
                vec![],
            ],
        )
        .unwrap();
        assert_eq!(m.pinned(), &[true, true, false, true]);
    }

    #[test]
    fn interval_rows_encoding() {
        let poly = ParametricPolytope::from_intervals(vec![
            (0, Expr::fraction(3, 10), Expr::fraction(6, 10)),
            (1, Expr::fraction(4, 10), Expr::fraction(7, 10)),
        ])
        .unwrap();
        assert_eq!(poly.num_rows(), 4);
        let c = poly.instantiate(&Instantiation::empty()).unwrap();
        assert_eq!(c.b, vec![0.6, -0.3, 0.7, -0.4]);
        assert_eq!(c.intervals().unwrap(), vec![(0.3, 0.6), (0.4, 0.7)]);
    }

    #[test]
    fn feasibility_probe() {
        let iv = |l: f64, h: f64| {
            ParametricPolytope::from_intervals(vec![
                (0, Expr::from_f64(l).unwrap(), Expr::from_f64(h).unwrap()),
                (1, Expr::from_f64(l).unwrap(), Expr::from_f64(h).unwrap()),
            ])
            .unwrap()
            .instantiate(&Instantiation::empty())
            .unwrap()
        };
        assert!(iv(0.2, 0.8).is_feasible().unwrap());
        assert!(iv(0.2, 0.8).contains(&[0.5, 0.5], 1e-12));
        assert!(!iv(0.6, 0.7).is_feasible().unwrap());
        let point = iv(0.5, 0.5);
        assert!(point.is_feasible().unwrap());
        assert!(point.contains(&[0.5, 0.5], 1e-12));
        assert!(!point.contains(&[0.6, 0.4], 1e-12));

        // A general (non-interval) polytope goes through the LP probe.
        let general = ConcretePolytope {
            support: vec![0, 1],
            a: vec![vec![1.0, -1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            b: vec![-1.1, 0.0, 0.0],
        };
        assert!(general.intervals().is_none());
        assert!(!general.is_feasible().unwrap());
        let general = ConcretePolytope {
            b: vec![0.2, 0.0, 0.0],
            ..general
        };
        assert!(general.is_feasible().unwrap());
        assert!(!general.admits_negative().unwrap());
    }

    #[test]
    fn empty_set_names_state() {
        let ps = ParamSet::new();
        let m = Prmc::from_intervals(
            ps,
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            &[1, 2],
            vec![
                vec![
                    (1, Expr::fraction(6, 10), Expr::fraction(7, 10)),
                    (2, Expr::fraction(6, 10), Expr::fraction(7, 10)),
                ],
                vec![],
                vec![],
            ],
        )
        .unwrap();
        assert!(matches!(
            m.instantiate(&Instantiation::empty()),
            Err(Error::EmptyUncertaintySet(0))
        ));
    }
}
