//! Linear programs in equality form with bounded variables, solved by a
//! revised primal simplex that always returns a basic (vertex) solution.

mod simplex;

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub use simplex::{solve_lp, solve_lp_from, FEASIBILITY_TOL, OPTIMALITY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

/// `opt cᵀx  s.t.  A x = b,  lower ≤ x ≤ upper`.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    /// Adds `row · x = rhs`. Repeated indices are summed.
    pub fn add_eq(&mut self, row: Vec<(usize, f64)>, rhs: f64) -> usize {
        let mut row = row;
        row.sort_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (j, v) in row {
            match merged.last_mut() {
                Some((k, w)) if *k == j => *w += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        self.rows.push(merged);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    /// Adds an inequality through a nonnegative slack variable.
    pub fn add_constraint(&mut self, mut row: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) -> usize {
        match cmp {
            Cmp::Eq => {}
            Cmp::Le => {
                let s = self.add_var(0.0, 0.0, f64::INFINITY);
                row.push((s, 1.0));
            }
            Cmp::Ge => {
                let s = self.add_var(0.0, 0.0, f64::INFINITY);
                row.push((s, -1.0));
            }
        }
        self.add_eq(row, rhs)
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, j: usize, cost: f64) {
        self.objective[j] = cost;
    }

    pub fn set_sense(&mut self, sense: Sense) {
        self.sense = sense;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of the equality rows and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, &b) in self.rows.iter().zip(&self.rhs) {
            let ax: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
            worst = worst.max((ax - b).abs());
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        for (j, ((&c, &l), &u)) in self
            .objective
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .enumerate()
        {
            if !c.is_finite() {
                return Err(Error::Lp(format!(
                    "objective coefficient of x{j} is not finite"
                )));
            }
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Lp(format!("invalid bounds [{l}, {u}] on x{j}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !self.rhs[i].is_finite() {
                return Err(Error::Lp(format!(
                    "right-hand side of row {i} is not finite"
                )));
            }
            for &(j, a) in row {
                if j >= n {
                    return Err(Error::Lp(format!(
                        "row {i} references unknown variable x{j}"
                    )));
                }
                if !a.is_finite() {
                    return Err(Error::Lp(format!(
                        "coefficient of x{j} in row {i} is not finite"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump, one constraint per line:
    ///
    /// ```text
    /// max: 1 x0 + 2 x1
    /// r0: 1 x0 - 1 x1 = 0
    /// x0 in [0, inf]
    /// ```
    pub fn to_text(&self) -> String {
        fn term(out: &mut String, first: bool, a: f64, j: usize) {
            if first {
                let _ = write!(out, "{a:?} x{j}");
            } else if a < 0.0 {
                let _ = write!(out, " - {:?} x{j}", -a);
            } else {
                let _ = write!(out, " + {a:?} x{j}");
            }
        }
        let mut out = String::new();
        out.push_str(match self.sense {
            Sense::Maximize => "max:",
            Sense::Minimize => "min:",
        });
        let mut first = true;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                if first {
                    out.push(' ');
                }
                term(&mut out, first, c, j);
                first = false;
            }
        }
        if first {
            out.push_str(" 0");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "r{i}:");
            if row.is_empty() {
                out.push_str(" 0");
            }
            for (t, &(j, a)) in row.iter().enumerate() {
                if t == 0 {
                    out.push(' ');
                }
                term(&mut out, t == 0, a, j);
            }
            let _ = writeln!(out, " = {:?}", self.rhs[i]);
        }
        for j in 0..self.num_vars() {
            let fmt = |v: f64| {
                if v.is_infinite() {
                    if v > 0.0 {
                        "inf".to_string()
                    } else {
                        "-inf".to_string()
                    }
                } else {
                    format!("{v:?}")
                }
            };
            let _ = writeln!(
                out,
                "x{j} in [{}, {}]",
                fmt(self.lower[j]),
                fmt(self.upper[j])
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Position of a variable relative to the basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Zero,
}

/// A basis: `head[r]` is the variable basic in row `r`; `status` covers all
/// structural variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub head: Vec<usize>,
    pub status: Vec<VarStatus>,
}

impl Basis {
    /// Builds a basis from the basic variables; every other variable is put at
    /// its finite lower bound, else its finite upper bound, else zero.
    pub fn from_head(lp: &LinearProgram, head: Vec<usize>) -> Self {
        let mut status: Vec<VarStatus> = (0..lp.num_vars())
            .map(|j| default_status(lp.lower[j], lp.upper[j]))
            .collect();
        for &j in &head {
            if j < status.len() {
                status[j] = VarStatus::Basic;
            }
        }
        Basis { head, status }
    }

    pub fn is_basic(&self, j: usize) -> bool {
        self.status.get(j) == Some(&VarStatus::Basic)
    }
}

pub(crate) fn default_status(lo: f64, hi: f64) -> VarStatus {
    if lo.is_finite() {
        VarStatus::AtLower
    } else if hi.is_finite() {
        VarStatus::AtUpper
    } else {
        VarStatus::Zero
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful when optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Final basis; `None` if a redundant row kept an artificial basic.
    pub basis: Option<Basis>,
    /// Row duals `y` with reduced costs `c_j − yᵀA_j`, in the program's sense.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Whether the supplied warm basis was accepted.
    pub warm_started: bool,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Reduced cost of variable `j` under the reported duals.
    pub fn reduced_cost(&self, lp: &LinearProgram, column: &[(usize, f64)], j: usize) -> f64 {
        lp.objective[j] - column.iter().map(|&(i, a)| a * self.duals[i]).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_dump_lists_every_constraint() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(1.0, 0.0, f64::INFINITY);
        let y = lp.add_var(-2.0, f64::NEG_INFINITY, 3.0);
        lp.add_eq(vec![(x, 1.0), (y, -1.0)], 0.5);
        let t = lp.to_text();
        assert_eq!(
            t,
            "max: 1.0 x0 - 2.0 x1\nr0: 1.0 x0 - 1.0 x1 = 0.5\nx0 in [0.0, inf]\nx1 in [-inf, 3.0]\n"
        );
    }

    #[test]
    fn duplicate_row_entries_merge() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_eq(vec![(x, 1.0), (x, 2.0)], 3.0);
        assert_eq!(lp.row(0), &[(0, 3.0)]);
    }

    #[test]
    fn malformed_programs_rejected() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(1.0, 1.0, 0.0);
        assert!(lp.validate().is_err());
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(f64::NAN, 0.0, 1.0);
        assert!(lp.validate().is_err());
        let mut lp = LinearProgram::new(Sense::Minimize);
        lp.add_var(0.0, 0.0, 1.0);
        lp.add_eq(vec![(3, 1.0)], 0.0);
        assert!(lp.validate().is_err());
    }
}
