//! Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.
//!
//! Factorizes `P A Q = L U` with `L` unit lower triangular. The column
//! order `Q` is chosen up front; row pivots are chosen numerically. One
//! factorization serves any number of `solve` / `solve_transposed` calls.

use std::cell::Cell;

use super::{ordering, SparseMatrix};
use crate::error::{Error, Result};

/// Absolute pivot magnitude below which the matrix is declared singular.
pub const SINGULAR_PIVOT: f64 = 1e-12;

/// Candidates within this fraction of the largest entry may be preferred for
/// sparsity.
const PIVOT_THRESHOLD: f64 = 0.1;

thread_local! {
    static FACTORIZATIONS: Cell<usize> = const { Cell::new(0) };
}

/// Number of sparse LU factorizations performed on the current thread.
pub fn factorization_count() -> usize {
    FACTORIZATIONS.with(Cell::get)
}

/// Fill-reducing column pre-ordering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ColumnOrder {
    Natural,
    /// Approximate minimum degree on the pattern of `A + Aᵀ`.
    #[default]
    MinDegree,
}

#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    /// Strictly lower part of `L` by column, rows in pivot positions.
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    /// Strictly upper part of `U` by column, rows in pivot positions.
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    /// Original row -> pivot position.
    pinv: Vec<usize>,
    /// Elimination step -> original column.
    q: Vec<usize>,
}

const UNSET: usize = usize::MAX;

impl LuFactors {
    pub fn factorize(a: &SparseMatrix, order: ColumnOrder) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidModel(format!(
                "cannot factorize a {}x{} matrix",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let cols = a.transpose();
        let (q, preferred) = match order {
            ColumnOrder::Natural => ((0..n).collect(), (0..n).collect()),
            ColumnOrder::MinDegree => {
                // Order on the pattern with matched rows moved onto the diagonal.
                let matched = ordering::transversal(&cols);
                if let Some(step) = matched.iter().position(|&r| r == UNSET) {
                    return Err(Error::SingularMatrix { step, pivot: 0.0 });
                }
                let mut col_of_row = vec![0; n];
                for (c, &r) in matched.iter().enumerate() {
                    col_of_row[r] = c;
                }
                let t: Vec<_> = a
                    .triplets()
                    .map(|(i, j, _)| (col_of_row[i], j, 1.0))
                    .collect();
                (
                    ordering::min_degree(&SparseMatrix::from_triplets(n, n, &t)?),
                    matched,
                )
            }
        };
        let f = Self::factorize_ordered(a, &cols, q, &preferred);
        FACTORIZATIONS.with(|c| c.set(c.get() + 1));
        f
    }

    /// `preferred[c]` is the row tried first as pivot of column `c`.
    fn factorize_ordered(
        a: &SparseMatrix,
        cols: &SparseMatrix,
        q: Vec<usize>,
        preferred: &[usize],
    ) -> Result<Self> {
        let n = a.rows();
        let row_count: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();

        // L is accumulated with original row indices and remapped at the end.
        let mut l_ptr = vec![0usize];
        let mut l_idx: Vec<usize> = Vec::new();
        let mut l_val: Vec<f64> = Vec::new();
        let mut u_ptr = vec![0usize];
        let mut u_idx: Vec<usize> = Vec::new();
        let mut u_val: Vec<f64> = Vec::new();
        let mut u_diag = Vec::with_capacity(n);
        let mut pinv = vec![UNSET; n];

        let mut x = vec![0.0f64; n];
        let mut mark = vec![usize::MAX; n];
        let mut topo: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for (k, &col) in q.iter().enumerate() {
            let (a_rows, a_vals) = cols.row(col);

            // Symbolic: rows reachable from the pattern of A[:, col] through L.
            topo.clear();
            for &start in a_rows {
                if mark[start] == k {
                    continue;
                }
                mark[start] = k;
                stack.push((start, 0));
                while let Some(&mut (node, ref mut child)) = stack.last_mut() {
                    let step = pinv[node];
                    let next = if step == UNSET {
                        None
                    } else {
                        let range = l_ptr[step]..l_ptr[step + 1];
                        let mut found = None;
                        while l_ptr[step] + *child < range.end {
                            let r = l_idx[l_ptr[step] + *child];
                            *child += 1;
                            if mark[r] != k {
                                found = Some(r);
                                break;
                            }
                        }
                        found
                    };
                    match next {
                        Some(r) => {
                            mark[r] = k;
                            stack.push((r, 0));
                        }
                        None => {
                            stack.pop();
                            topo.push(node);
                        }
                    }
                }
            }

            // Numeric: sparse triangular solve in reverse post-order.
            for (&r, &v) in a_rows.iter().zip(a_vals) {
                x[r] = v;
            }
            for &node in topo.iter().rev() {
                let step = pinv[node];
                if step == UNSET {
                    continue;
                }
                let xv = x[node];
                if xv == 0.0 {
                    continue;
                }
                for p in l_ptr[step]..l_ptr[step + 1] {
                    x[l_idx[p]] -= l_val[p] * xv;
                }
            }

            // Pivot selection among rows not yet pivotal.
            let mut max_abs = 0.0f64;
            for &node in &topo {
                if pinv[node] == UNSET {
                    max_abs = max_abs.max(x[node].abs());
                }
            }
            if max_abs < SINGULAR_PIVOT {
                return Err(Error::SingularMatrix {
                    step: k,
                    pivot: max_abs,
                });
            }
            let mut pivot = UNSET;
            let pref = preferred[col];
            if pinv[pref] == UNSET && mark[pref] == k && x[pref].abs() >= PIVOT_THRESHOLD * max_abs
            {
                pivot = pref;
            } else {
                let mut best = (usize::MAX, 0.0f64);
                for &node in &topo {
                    if pinv[node] != UNSET {
                        continue;
                    }
                    let mag = x[node].abs();
                    if mag < PIVOT_THRESHOLD * max_abs {
                        continue;
                    }
                    let better = row_count[node] < best.0
                        || (row_count[node] == best.0
                            && (mag > best.1 || (mag == best.1 && node < pivot)));
                    if better {
                        best = (row_count[node], mag);
                        pivot = node;
                    }
                }
            }
            let pv = x[pivot];
            pinv[pivot] = k;
            u_diag.push(pv);

            for &node in &topo {
                let v = x[node];
                x[node] = 0.0;
                if node == pivot || v == 0.0 {
                    continue;
                }
                let step = pinv[node];
                if step != UNSET && step < k {
                    u_idx.push(step);
                    u_val.push(v);
                } else {
                    l_idx.push(node);
                    l_val.push(v / pv);
                }
            }
            u_ptr.push(u_idx.len());
            l_ptr.push(l_idx.len());
        }

        for r in &mut l_idx {
            *r = pinv[*r];
        }

        Ok(LuFactors {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            u_diag,
            pinv,
            q,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L` and `U` including the diagonal of `U`.
    pub fn nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len() + self.n
    }

    /// Smallest pivot magnitude.
    pub fn min_pivot(&self) -> f64 {
        self.u_diag
            .iter()
            .fold(f64::INFINITY, |m, d| m.min(d.abs()))
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(b)?;
        let mut y = vec![0.0; self.n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        self.solve_permuted_in_place(&mut y);
        let mut x = vec![0.0; self.n];
        for (k, &c) in self.q.iter().enumerate() {
            x[c] = y[k];
        }
        Ok(x)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transposed(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(b)?;
        let mut v: Vec<f64> = self.q.iter().map(|&c| b[c]).collect();
        self.solve_transposed_permuted_in_place(&mut v);
        Ok((0..self.n).map(|i| v[self.pinv[i]]).collect())
    }

    /// `L U y = c` on pivot-ordered data.
    fn solve_permuted_in_place(&self, y: &mut [f64]) {
        for k in 0..self.n {
            let yk = y[k];
            if yk != 0.0 {
                for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                    y[self.l_idx[p]] -= self.l_val[p] * yk;
                }
            }
        }
        for k in (0..self.n).rev() {
            let zk = y[k] / self.u_diag[k];
            y[k] = zk;
            if zk != 0.0 {
                for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                    y[self.u_idx[p]] -= self.u_val[p] * zk;
                }
            }
        }
    }

    /// `Uᵀ Lᵀ w = c` on pivot-ordered data.
    fn solve_transposed_permuted_in_place(&self, v: &mut [f64]) {
        for k in 0..self.n {
            let mut s = v[k];
            for p in self.u_ptr[k]..self.u_ptr[k + 1] {
                s -= self.u_val[p] * v[self.u_idx[p]];
            }
            v[k] = s / self.u_diag[k];
        }
        for k in (0..self.n).rev() {
            let mut s = v[k];
            for p in self.l_ptr[k]..self.l_ptr[k + 1] {
                s -= self.l_val[p] * v[self.l_idx[p]];
            }
            v[k] = s;
        }
    }

    fn check_dim(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.n {
            return Err(Error::InvalidModel(format!(
                "right-hand side has length {}, expected {}",
                b.len(),
                self.n
            )));
        }
        Ok(())
    }
}
