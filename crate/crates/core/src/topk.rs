//! Top-k parameter selection through the LP relaxation
//!
//! ```text
//! opt  wᵀy   s.t.  M y − Σ_i z_i d_i = 0,   Σ_i z_i = k,   0 ≤ z ≤ 1,   y free
//! ```
//!
//! where `M` is the (nonsingular) system matrix of the analysis and `d_i` the
//! derivative right-hand side of parameter `i`. At a vertex optimum `z` is
//! binary and selects the `k` extremal derivatives `wᵀM⁻¹d_i`.
//!
//! [`relaxation_factored`] solves the same program with `y` eliminated
//! through an existing factorization of `M`, leaving one row over `z`.

use crate::error::{Error, Result};
use crate::expr::ParamId;
use crate::lp::{solve_lp_from, Basis, LinearProgram, LpStatus, Sense, VarStatus};
use crate::sparse::{LuFactors, SparseMatrix};

/// Relative tolerance under which two derivatives count as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Highest,
    Lowest,
}

#[derive(Clone, Debug)]
pub struct TopkResult {
    /// Selected parameters in increasing index order.
    pub selected: Vec<ParamId>,
    pub k: usize,
    pub direction: Direction,
    /// LP objective, the sum of the selected derivatives.
    pub objective: f64,
    /// Relaxation values per parameter after tie-breaking; binary.
    pub z: Vec<f64>,
    /// Derivatives of the selected parameters, when requested.
    pub values: Option<Vec<f64>>,
    pub lp_iterations: usize,
}

/// Solves the relaxation for system `m` (square), objective weights `w` and
/// sparse derivative columns `d` (one per parameter).
pub fn relaxation(
    m: &SparseMatrix,
    w: &[f64],
    d: &[Vec<(usize, f64)>],
    k: usize,
    direction: Direction,
) -> Result<TopkResult> {
    let q = m.rows();
    let l = d.len();
    check_k(k, l)?;
    let mut lp = LinearProgram::new(sense_of(direction));
    for &wi in w {
        lp.add_var(wi, f64::NEG_INFINITY, f64::INFINITY);
    }
    let z0 = q;
    for _ in 0..l {
        lp.add_var(0.0, 0.0, 1.0);
    }
    let mut rows: Vec<Vec<(usize, f64)>> = (0..q)
        .map(|i| {
            let (c, v) = m.row(i);
            c.iter().zip(v).map(|(&j, &a)| (j, a)).collect()
        })
        .collect();
    for (i, col) in d.iter().enumerate() {
        for &(r, v) in col {
            rows[r].push((z0 + i, -v));
        }
    }
    for row in rows {
        lp.add_eq(row, 0.0);
    }
    lp.add_eq((0..l).map(|i| (z0 + i, 1.0)).collect(), k as f64);

    // Crash basis: all y basic, z_0..z_{k-2} at their upper bound, z_{k-1}
    // basic at one.
    let mut head: Vec<usize> = (0..q).collect();
    head.push(z0 + k - 1);
    let mut status = vec![VarStatus::Basic; q];
    status.extend(crash_z(k, l));
    let sol = solve_lp_from(&lp, Some(&Basis { head, status }))?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!(
            "top-k relaxation ended with status {:?}",
            sol.status
        )));
    }

    // Derivatives from the duals of the system rows: wᵀM⁻¹d_i = πᵀd_i.
    let derivs = project(&sol.duals[..q], d);
    finish(
        &sol.x[z0..],
        &derivs,
        k,
        direction,
        sol.objective,
        sol.iterations,
    )
}

/// The relaxation with `y = M⁻¹ Σ z_i d_i` substituted, given the LU of `M`:
/// `opt Σ_i (πᵀd_i) z_i  s.t.  Σ_i z_i = k,  0 ≤ z ≤ 1`, with `Mᵀπ = w`.
pub fn relaxation_factored(
    lu: &LuFactors,
    w: &[f64],
    d: &[Vec<(usize, f64)>],
    k: usize,
    direction: Direction,
) -> Result<TopkResult> {
    let l = d.len();
    check_k(k, l)?;
    let pi = lu.solve_transposed(w)?;
    let derivs = project(&pi, d);
    let mut lp = LinearProgram::new(sense_of(direction));
    for &g in &derivs {
        lp.add_var(g, 0.0, 1.0);
    }
    lp.add_eq((0..l).map(|i| (i, 1.0)).collect(), k as f64);
    let crash = Basis {
        head: vec![k - 1],
        status: crash_z(k, l).collect(),
    };
    let sol = solve_lp_from(&lp, Some(&crash))?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Lp(format!(
            "top-k relaxation ended with status {:?}",
            sol.status
        )));
    }
    finish(&sol.x, &derivs, k, direction, sol.objective, sol.iterations)
}

fn check_k(k: usize, l: usize) -> Result<()> {
    if k == 0 || k > l {
        return Err(Error::InvalidModel(format!("k = {k} must lie in 1..={l}")));
    }
    Ok(())
}

fn sense_of(direction: Direction) -> Sense {
    match direction {
        Direction::Highest => Sense::Maximize,
        Direction::Lowest => Sense::Minimize,
    }
}

/// `z_0..z_{k-2}` at their upper bound, `z_{k-1}` basic, the rest at zero.
fn crash_z(k: usize, l: usize) -> impl Iterator<Item = VarStatus> {
    (0..l).map(move |i| match i.cmp(&(k - 1)) {
        std::cmp::Ordering::Less => VarStatus::AtUpper,
        std::cmp::Ordering::Equal => VarStatus::Basic,
        std::cmp::Ordering::Greater => VarStatus::AtLower,
    })
}

fn project(pi: &[f64], d: &[Vec<(usize, f64)>]) -> Vec<f64> {
    d.iter()
        .map(|col| col.iter().map(|&(r, v)| pi[r] * v).sum())
        .collect()
}

fn finish(
    z: &[f64],
    derivs: &[f64],
    k: usize,
    direction: Direction,
    objective: f64,
    lp_iterations: usize,
) -> Result<TopkResult> {
    let l = derivs.len();
    if let Some(i) = z.iter().position(|&v| v > 1e-7 && v < 1.0 - 1e-7) {
        return Err(Error::Lp(format!(
            "relaxation returned fractional z[{i}] = {}",
            z[i]
        )));
    }
    let chosen: Vec<usize> = (0..l).filter(|&i| z[i] > 0.5).collect();
    if chosen.len() != k {
        return Err(Error::Lp(format!(
            "relaxation selected {} parameters, expected {k}",
            chosen.len()
        )));
    }
    let selected = tie_break(derivs, &chosen, direction);
    let mut zb = vec![0.0; l];
    for &i in &selected {
        zb[i] = 1.0;
    }
    Ok(TopkResult {
        selected: selected.into_iter().map(ParamId).collect(),
        k,
        direction,
        objective,
        z: zb,
        values: None,
        lp_iterations,
    })
}

/// Keeps every chosen index strictly better than the boundary value and fills
/// the rest from the tie class at the boundary, lowest index first.
fn tie_break(derivs: &[f64], chosen: &[usize], direction: Direction) -> Vec<usize> {
    let better = |a: f64, b: f64| match direction {
        Direction::Highest => a > b,
        Direction::Lowest => a < b,
    };
    let boundary = chosen
        .iter()
        .map(|&i| derivs[i])
        .reduce(|a, b| if better(a, b) { b } else { a })
        .expect("k >= 1");
    let tol = TIE_TOL * boundary.abs().max(1.0);
    let mut keep: Vec<usize> = chosen
        .iter()
        .copied()
        .filter(|&i| better(derivs[i], boundary) && (derivs[i] - boundary).abs() > tol)
        .collect();
    let need = chosen.len() - keep.len();
    let ties: Vec<usize> = (0..derivs.len())
        .filter(|&i| (derivs[i] - boundary).abs() <= tol && !keep.contains(&i))
        .take(need)
        .collect();
    keep.extend(ties);
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_system_picks_largest_columns() {
        let m = SparseMatrix::identity(3);
        let w = vec![1.0, 1.0, 1.0];
        let d = vec![
            vec![(0, 1.0)],
            vec![(1, 5.0)],
            vec![(2, -2.0), (0, 0.5)],
            vec![(1, 3.0)],
        ];
        let r = relaxation(&m, &w, &d, 2, Direction::Highest).unwrap();
        assert_eq!(r.selected, vec![ParamId(1), ParamId(3)]);
        assert!((r.objective - 8.0).abs() < 1e-12);
        let r = relaxation(&m, &w, &d, 1, Direction::Lowest).unwrap();
        assert_eq!(r.selected, vec![ParamId(2)]);
        assert!((r.objective + 1.5).abs() < 1e-12);
        let r = relaxation(&m, &w, &d, 4, Direction::Highest).unwrap();
        assert_eq!(r.z, vec![1.0; 4]);
        assert!(relaxation(&m, &w, &d, 5, Direction::Highest).is_err());
    }

    #[test]
    fn factored_form_agrees_with_full_program() {
        let m = SparseMatrix::from_dense(&[
            vec![1.0, -0.5, 0.0],
            vec![0.0, 1.0, -0.3],
            vec![-0.2, 0.0, 1.0],
        ])
        .unwrap();
        let lu = LuFactors::factorize(&m, Default::default()).unwrap();
        let w = [1.0, 0.0, 0.5];
        let d = vec![
            vec![(0, 1.0)],
            vec![(1, 2.0), (2, -1.0)],
            vec![(2, 3.0)],
            vec![(0, -1.0), (1, 1.0)],
            vec![(1, 0.5)],
        ];
        for k in 1..=5 {
            for dir in [Direction::Highest, Direction::Lowest] {
                let a = relaxation(&m, &w, &d, k, dir).unwrap();
                let b = relaxation_factored(&lu, &w, &d, k, dir).unwrap();
                assert_eq!(a.selected, b.selected);
                assert!((a.objective - b.objective).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let m = SparseMatrix::identity(1);
        let d = vec![
            vec![(0, 1.0)],
            vec![(0, 2.0)],
            vec![(0, 2.0)],
            vec![(0, 2.0)],
        ];
        let r = relaxation(&m, &[1.0], &d, 2, Direction::Highest).unwrap();
        assert_eq!(r.selected, vec![ParamId(1), ParamId(2)]);
        assert_eq!(
            tie_break(&[3.0, 3.0, 3.0], &[2], Direction::Lowest),
            vec![0]
        );
        assert_eq!(
            tie_break(&[1.0, 2.0, 2.0, 5.0], &[3, 2], Direction::Highest),
            vec![1, 3]
        );
    }
}
