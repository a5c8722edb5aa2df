//! Bounded-variable revised primal simplex.
//!
//! The basis is held as a sparse LU factorization plus a product-form eta
//! file, refactorized every [`REFACTOR_EVERY`] pivots. Phase one minimizes
//! the sum of one artificial per row; phase two starts either from phase
//! one or from a caller-supplied basis. Pricing is Dantzig's rule until a
//! run of degenerate pivots trips the cycle guard, after which Bland's rule
//! is used for the rest of the phase.

use super::{default_status, Basis, LinearProgram, LpSolution, LpStatus, Sense, VarStatus};
use crate::error::{Error, Result};
use crate::sparse::{ColumnOrder, LuFactors, SparseMatrix};

pub const FEASIBILITY_TOL: f64 = 1e-8;
pub const OPTIMALITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_LIMIT: usize = 50;

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_from(lp, None)
}

/// Solves `lp`, starting phase two from `warm` when it names a nonsingular,
/// primal feasible basis. Any other basis falls back to a cold start.
pub fn solve_lp_from(lp: &LinearProgram, warm: Option<&Basis>) -> Result<LpSolution> {
    lp.validate()?;
    let mut s = Simplex::new(lp)?;
    let warm_ok = match warm {
        Some(b) => s.try_warm(b)?,
        None => false,
    };
    if !warm_ok {
        s.cold_start()?;
        s.set_phase_costs(true);
        match s.run()? {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => return Err(Error::Lp("phase one reported unbounded".into())),
            other => return Ok(s.report(other, false)),
        }
        if s.infeasibility() > FEASIBILITY_TOL * (1.0 + s.rhs_norm) {
            return Ok(s.report(LpStatus::Infeasible, false));
        }
        s.end_phase_one()?;
    }
    s.set_phase_costs(false);
    let status = s.run()?;
    if status == LpStatus::Optimal && !s.factor().etas.is_empty() {
        s.refactor()?;
        s.recompute_basics()?;
    }
    Ok(s.report(status, warm_ok))
}

struct Eta {
    row: usize,
    pivot: f64,
    rest: Vec<(usize, f64)>,
}

struct Factor {
    lu: LuFactors,
    etas: Vec<Eta>,
}

struct Simplex<'a> {
    lp: &'a LinearProgram,
    m: usize,
    n: usize,
    /// Row `j` holds column `j` of `A`.
    cols: SparseMatrix,
    art_sign: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    head: Vec<usize>,
    factor: Option<Factor>,
    iterations: usize,
    max_iterations: usize,
    rhs_norm: f64,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a LinearProgram) -> Result<Self> {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut t = Vec::new();
        for i in 0..m {
            for &(j, a) in lp.row(i) {
                t.push((j, i, a));
            }
        }
        let cols = SparseMatrix::from_triplets(n, m, &t)?;
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(0.0, m));
        Ok(Simplex {
            lp,
            m,
            n,
            cols,
            art_sign: vec![1.0; m],
            lo,
            hi,
            cost: vec![0.0; n + m],
            x: vec![0.0; n + m],
            status: vec![VarStatus::AtLower; n + m],
            head: (n..n + m).collect(),
            factor: None,
            iterations: 0,
            max_iterations: 200 * (n + m) + 10_000,
            rhs_norm: lp.rhs().iter().fold(0.0f64, |a, b| a.max(b.abs())),
        })
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            let (rows, vals) = self.cols.row(j);
            for (&i, &a) in rows.iter().zip(vals) {
                f(i, a);
            }
        } else {
            f(j - self.n, self.art_sign[j - self.n]);
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_column(j, |i, a| s += a * y[i]);
        s
    }

    fn dense_column(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        self.for_column(j, |i, a| v[i] += a);
        v
    }

    fn refactor(&mut self) -> Result<()> {
        let mut t = Vec::new();
        for (r, &j) in self.head.iter().enumerate() {
            self.for_column(j, |i, a| t.push((i, r, a)));
        }
        let b = SparseMatrix::from_triplets(self.m, self.m, &t)?;
        let lu = LuFactors::factorize(&b, ColumnOrder::MinDegree)?;
        self.factor = Some(Factor {
            lu,
            etas: Vec::new(),
        });
        Ok(())
    }

    fn factor(&self) -> &Factor {
        self.factor.as_ref().expect("basis factorized")
    }

    /// `B⁻¹ v`.
    fn ftran(&self, v: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor();
        let mut x = f.lu.solve(v)?;
        for eta in &f.etas {
            let xr = x[eta.row] / eta.pivot;
            x[eta.row] = xr;
            if xr != 0.0 {
                for &(i, w) in &eta.rest {
                    x[i] -= w * xr;
                }
            }
        }
        Ok(x)
    }

    /// `B⁻ᵀ v`.
    fn btran(&self, v: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor();
        let mut z = v.to_vec();
        for eta in f.etas.iter().rev() {
            let s: f64 = eta.rest.iter().map(|&(i, w)| w * z[i]).sum();
            z[eta.row] = (z[eta.row] - s) / eta.pivot;
        }
        f.lu.solve_transposed(&z)
    }

    fn push_eta(&mut self, row: usize, w: &[f64]) {
        let rest = w
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != row && v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        let f = self.factor.as_mut().expect("basis factorized");
        f.etas.push(Eta {
            row,
            pivot: w[row],
            rest,
        });
    }

    fn recompute_basics(&mut self) -> Result<()> {
        let mut rhs = self.lp.rhs().to_vec();
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_column(j, |i, a| rhs[i] -= a * xj);
            }
        }
        let xb = self.ftran(&rhs)?;
        for (r, &j) in self.head.iter().enumerate() {
            self.x[j] = xb[r];
        }
        Ok(())
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lo[j],
            VarStatus::AtUpper => self.hi[j],
            VarStatus::Zero | VarStatus::Basic => 0.0,
        }
    }

    fn cold_start(&mut self) -> Result<()> {
        let mut residual = self.lp.rhs().to_vec();
        for j in 0..self.n {
            self.status[j] = default_status(self.lo[j], self.hi[j]);
            self.x[j] = self.nonbasic_value(j);
            let xj = self.x[j];
            if xj != 0.0 {
                self.for_column(j, |i, a| residual[i] -= a * xj);
            }
        }
        for (i, &res) in residual.iter().enumerate() {
            let a = self.n + i;
            self.art_sign[i] = if res >= 0.0 { 1.0 } else { -1.0 };
            self.lo[a] = 0.0;
            self.hi[a] = f64::INFINITY;
            self.x[a] = res.abs();
            self.status[a] = VarStatus::Basic;
            self.head[i] = a;
        }
        self.refactor()
    }

    fn try_warm(&mut self, basis: &Basis) -> Result<bool> {
        if basis.head.len() != self.m || basis.status.len() != self.n {
            return Ok(false);
        }
        let mut seen = vec![false; self.n];
        for &j in &basis.head {
            if j >= self.n || seen[j] || basis.status[j] != VarStatus::Basic {
                return Ok(false);
            }
            seen[j] = true;
        }
        if basis
            .status
            .iter()
            .filter(|s| **s == VarStatus::Basic)
            .count()
            != self.m
        {
            return Ok(false);
        }
        for j in 0..self.n {
            let (lo, hi) = (self.lo[j], self.hi[j]);
            let ok = match basis.status[j] {
                VarStatus::Basic => true,
                VarStatus::AtLower => lo.is_finite(),
                VarStatus::AtUpper => hi.is_finite(),
                VarStatus::Zero => lo <= 0.0 && hi >= 0.0,
            };
            if !ok {
                return Ok(false);
            }
            self.status[j] = basis.status[j];
            self.x[j] = self.nonbasic_value(j);
        }
        for i in 0..self.m {
            let a = self.n + i;
            self.lo[a] = 0.0;
            self.hi[a] = 0.0;
            self.x[a] = 0.0;
            self.status[a] = VarStatus::AtLower;
        }
        self.head = basis.head.clone();
        match self.refactor() {
            Ok(()) => {}
            Err(Error::SingularMatrix { .. }) => return Ok(false),
            Err(e) => return Err(e),
        }
        self.recompute_basics()?;
        let feasible = self.head.iter().all(|&j| {
            let v = self.x[j];
            v >= self.lo[j] - FEASIBILITY_TOL * (1.0 + self.lo[j].abs())
                && v <= self.hi[j] + FEASIBILITY_TOL * (1.0 + self.hi[j].abs())
        });
        Ok(feasible)
    }

    fn set_phase_costs(&mut self, phase_one: bool) {
        let flip = if self.lp.sense() == Sense::Maximize {
            -1.0
        } else {
            1.0
        };
        for j in 0..self.n {
            self.cost[j] = if phase_one {
                0.0
            } else {
                flip * self.lp.objective()[j]
            };
        }
        for i in 0..self.m {
            self.cost[self.n + i] = if phase_one { 1.0 } else { 0.0 };
        }
    }

    fn infeasibility(&self) -> f64 {
        (self.n..self.n + self.m)
            .map(|a| self.x[a].abs())
            .fold(0.0, f64::max)
    }

    /// Fixes artificials at zero and pivots basic ones out where a structural
    /// column can replace them. Rows with no such column are redundant.
    fn end_phase_one(&mut self) -> Result<()> {
        for i in 0..self.m {
            let a = self.n + i;
            self.hi[a] = 0.0;
            if self.status[a] != VarStatus::Basic {
                self.x[a] = 0.0;
                self.status[a] = VarStatus::AtLower;
            }
        }
        for r in 0..self.m {
            let a = self.head[r];
            if a < self.n {
                continue;
            }
            let mut e = vec![0.0; self.m];
            e[r] = 1.0;
            let rho = self.btran(&e)?;
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n {
                if self.status[j] == VarStatus::Basic {
                    continue;
                }
                let v = self.col_dot(j, &rho).abs();
                if v > 1e-7 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let w = self.ftran(&self.dense_column(j))?;
                self.push_eta(r, &w);
                self.head[r] = j;
                self.status[j] = VarStatus::Basic;
                self.status[a] = VarStatus::AtLower;
                self.x[a] = 0.0;
            }
        }
        self.refactor()?;
        self.recompute_basics()
    }

    fn run(&mut self) -> Result<LpStatus> {
        let mut bland = false;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Ok(LpStatus::IterationLimit);
            }
            let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
            let y = self.btran(&cb)?;

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.n + self.m {
                let st = self.status[j];
                if st == VarStatus::Basic || self.hi[j] <= self.lo[j] {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(j, &y);
                let eligible = match st {
                    VarStatus::AtLower => d < -OPTIMALITY_TOL,
                    VarStatus::AtUpper => d > OPTIMALITY_TOL,
                    VarStatus::Zero => d.abs() > OPTIMALITY_TOL,
                    VarStatus::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, b)| d.abs() > b.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((j, d)) = entering else {
                return Ok(LpStatus::Optimal);
            };
            let dir = if d < 0.0 { 1.0 } else { -1.0 };
            let w = self.ftran(&self.dense_column(j))?;

            let mut theta = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, bool)> = None;
            for (r, &wr) in w.iter().enumerate() {
                if wr.abs() <= PIVOT_TOL {
                    continue;
                }
                let k = self.head[r];
                let rate = -dir * wr;
                let (t, to_upper) = if rate < 0.0 {
                    if !self.lo[k].is_finite() {
                        continue;
                    }
                    ((self.x[k] - self.lo[k]).max(0.0) / -rate, false)
                } else {
                    if !self.hi[k].is_finite() {
                        continue;
                    }
                    ((self.hi[k] - self.x[k]).max(0.0) / rate, true)
                };
                let take = match leave {
                    None => t < theta,
                    Some((cur, _)) => {
                        let tie = RATIO_TIE * (1.0 + theta.abs());
                        if t < theta - tie {
                            true
                        } else if t <= theta + tie {
                            if bland {
                                k < self.head[cur]
                            } else {
                                wr.abs() > w[cur].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if take {
                    theta = t;
                    leave = Some((r, to_upper));
                }
            }
            if theta.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }

            self.iterations += 1;
            if theta != 0.0 {
                self.x[j] += dir * theta;
                for (r, &wr) in w.iter().enumerate() {
                    if wr != 0.0 {
                        let k = self.head[r];
                        self.x[k] -= dir * wr * theta;
                    }
                }
            }
            match leave {
                None => {
                    self.status[j] = match self.status[j] {
                        VarStatus::AtLower => VarStatus::AtUpper,
                        _ => VarStatus::AtLower,
                    };
                    self.x[j] = self.nonbasic_value(j);
                }
                Some((r, to_upper)) => {
                    let k = self.head[r];
                    if k >= self.n {
                        self.hi[k] = 0.0;
                        self.x[k] = 0.0;
                        self.status[k] = VarStatus::AtLower;
                    } else {
                        self.status[k] = if to_upper {
                            VarStatus::AtUpper
                        } else {
                            VarStatus::AtLower
                        };
                        self.x[k] = self.nonbasic_value(k);
                    }
                    self.head[r] = j;
                    self.status[j] = VarStatus::Basic;
                    self.push_eta(r, &w);
                    if self.factor().etas.len() >= REFACTOR_EVERY {
                        self.refactor()?;
                        self.recompute_basics()?;
                    }
                }
            }
            if theta <= RATIO_TIE {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_LIMIT {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
        }
    }

    fn report(&self, status: LpStatus, warm_started: bool) -> LpSolution {
        let x: Vec<f64> = self.x[..self.n].to_vec();
        let mut duals = vec![0.0; self.m];
        let mut basis = None;
        if status == LpStatus::Optimal {
            let cb: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
            if let Ok(y) = self.btran(&cb) {
                let flip = if self.lp.sense() == Sense::Maximize {
                    -1.0
                } else {
                    1.0
                };
                duals = y.iter().map(|v| flip * v).collect();
            }
            if self.head.iter().all(|&j| j < self.n) {
                basis = Some(Basis {
                    head: self.head.clone(),
                    status: self.status[..self.n].to_vec(),
                });
            }
        }
        LpSolution {
            status,
            objective: if status == LpStatus::Optimal {
                self.lp.objective_value(&x)
            } else {
                f64::NAN
            },
            x,
            basis,
            duals,
            iterations: self.iterations,
            warm_started,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::Cmp;
    use super::*;
    use crate::benchgen::random_lp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn single_bounded_variable() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(1.0, 0.0, INF);
        lp.add_constraint(vec![(x, 1.0)], Cmp::Le, 3.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[x] - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn simplex_vertex() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let p0 = lp.add_var(1.0, 0.0, INF);
        let p1 = lp.add_var(2.0, 0.0, INF);
        lp.add_eq(vec![(p0, 1.0), (p1, 1.0)], 1.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert_eq!(s.objective, 1.0);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_eq(vec![(x, 1.0)], 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(Sense::Maximize);
        let x = lp.add_var(1.0, 0.0, INF);
        let y = lp.add_var(0.0, 0.0, INF);
        lp.add_eq(vec![(x, 1.0), (y, -1.0)], 1.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_redundant_rows() {
        let mut lp = LinearProgram::new(Sense::Minimize);
        let x = lp.add_var(1.0, f64::NEG_INFINITY, INF);
        let y = lp.add_var(1.0, 0.0, INF);
        lp.add_eq(vec![(x, 1.0), (y, 1.0)], 2.0);
        lp.add_eq(vec![(x, 2.0), (y, 2.0)], 4.0);
        lp.add_eq(vec![(x, 1.0), (y, -1.0)], 0.0);
        let s = solve_lp(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[x] - 1.0).abs() < 1e-12 && (s.x[y] - 1.0).abs() < 1e-12);
        assert!(s.basis.is_none());
    }

    #[test]
    fn warm_start_reuses_basis() {
        let lp = random_lp(&mut ChaCha8Rng::seed_from_u64(5), 12, 20);
        let cold = solve_lp(&lp).unwrap();
        assert_eq!(cold.status, LpStatus::Optimal);
        let warm = solve_lp_from(&lp, cold.basis.as_ref()).unwrap();
        assert!(warm.warm_started);
        assert_eq!(warm.iterations, 0);
        assert!((warm.objective - cold.objective).abs() < 1e-9);

        let bogus = Basis::from_head(&lp, vec![0; lp.num_rows()]);
        let fallback = solve_lp_from(&lp, Some(&bogus)).unwrap();
        assert!(!fallback.warm_started);
        assert!((fallback.objective - cold.objective).abs() < 1e-9);
    }

    #[test]
    fn random_residuals_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..40 {
            let m = rng.gen_range(1..15);
            let n = m + rng.gen_range(1..15);
            let lp = random_lp(&mut rng, m, n);
            let a = solve_lp(&lp).unwrap();
            assert_eq!(a.status, LpStatus::Optimal);
            assert!(lp.max_violation(&a.x) <= 1e-8);
            let b = solve_lp(&lp).unwrap();
            assert_eq!(a.x, b.x);
        }
    }
}
