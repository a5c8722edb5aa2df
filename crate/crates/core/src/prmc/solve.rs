//! Robust solution of an instantiated prMC.
//!
//! Robust policy iteration finds the worst-case distribution of every state;
//! its vertex determines a basis of the dualized LP
//!
//! ```text
//! max s_Iᵀx  s.t.  x_s = 0                               (pinned s)
//!                  x_s + b_sᵀα_s + β_s = r_s              (other s)
//!                  A_sᵀα_s + x_post(s) + β_s 𝟙 = 0,  α_s ≥ 0
//! ```
//!
//! which the simplex then certifies (normally without pivoting). A cold LP
//! solve is available for cross-checking.

use super::RobustSolution;
use crate::error::{Error, Result};
use crate::lp::{solve_lp_from, Basis, LinearProgram, LpStatus, Sense};
use crate::models::{ConcretePolytope, ConcretePrmc};
use crate::sparse::{ColumnOrder, DenseLu, LuFactors, SparseMatrix};

const MAX_POLICY_ITERATIONS: usize = 1000;

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    /// Solve the dualized LP from scratch instead of from the policy basis.
    pub cold_lp: bool,
    /// Worst-case distributions from an earlier solve, used as the initial
    /// policy when shapes match.
    pub warm_policy: Option<Vec<Vec<f64>>>,
}

/// Worst-case point of one polytope for objective `c`, with `n − 1` rows
/// whose constraints define it when they are known.
pub(crate) struct InnerVertex {
    pub p: Vec<f64>,
    pub active: Option<Vec<usize>>,
}

/// Greedy minimization over an interval polytope: every coordinate starts at
/// its lower bound and the free mass goes to the cheapest successors first.
fn greedy_intervals(iv: &[(f64, f64)], c: &[f64]) -> InnerVertex {
    let n = iv.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| c[i].total_cmp(&c[j]).then(i.cmp(&j)));
    let mut p: Vec<f64> = iv.iter().map(|x| x.0).collect();
    let mut mass = 1.0 - p.iter().sum::<f64>();
    for &j in &order {
        let add = (iv[j].1 - iv[j].0).min(mass).max(0.0);
        p[j] += add;
        mass -= add;
    }
    let r = order.iter().position(|&j| p[j] < iv[j].1).unwrap_or(n - 1);
    let mut active = Vec::with_capacity(n - 1);
    for (pos, &j) in order.iter().enumerate() {
        if pos < r {
            active.push(2 * j);
        } else if pos > r {
            active.push(2 * j + 1);
        }
    }
    active.sort_unstable();
    InnerVertex {
        p,
        active: Some(active),
    }
}

/// Rows of the interval encoding are `2j` (upper) and `2j + 1` (lower); the
/// greedy path applies only when the polytope uses exactly that layout.
fn interval_layout(poly: &ConcretePolytope) -> Option<Vec<(f64, f64)>> {
    let n = poly.support.len();
    if poly.a.len() != 2 * n {
        return None;
    }
    for j in 0..n {
        let up = &poly.a[2 * j];
        let down = &poly.a[2 * j + 1];
        for k in 0..n {
            let (eu, ed) = if k == j { (1.0, -1.0) } else { (0.0, 0.0) };
            if up[k] != eu || down[k] != ed {
                return None;
            }
        }
    }
    Some(
        (0..n)
            .map(|j| (-poly.b[2 * j + 1], poly.b[2 * j]))
            .collect(),
    )
}

pub(crate) fn inner_min(poly: &ConcretePolytope, c: &[f64]) -> Result<InnerVertex> {
    if let Some(iv) = interval_layout(poly) {
        return Ok(greedy_intervals(&iv, c));
    }
    let n = poly.support.len();
    let m = poly.a.len();
    let mut lp = LinearProgram::new(Sense::Minimize);
    for &cj in c {
        lp.add_var(cj, f64::NEG_INFINITY, f64::INFINITY);
    }
    for (i, row) in poly.a.iter().enumerate() {
        let s = lp.add_var(0.0, 0.0, f64::INFINITY);
        debug_assert_eq!(s, n + i);
        let mut r: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
        r.push((s, 1.0));
        lp.add_eq(r, poly.b[i]);
    }
    lp.add_eq((0..n).map(|j| (j, 1.0)).collect(), 1.0);
    let sol = solve_lp_from(&lp, None)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Lp("inner problem infeasible".into())),
        other => {
            return Err(Error::Lp(format!(
                "inner problem ended with status {other:?}"
            )))
        }
    }
    let active = sol.basis.as_ref().and_then(|b| {
        let rows: Vec<usize> = (0..m).filter(|&i| !b.is_basic(n + i)).collect();
        (rows.len() == n - 1 && (0..n).all(|j| b.is_basic(j))).then_some(rows)
    });
    Ok(InnerVertex {
        p: sol.x[..n].to_vec(),
        active,
    })
}

fn evaluate_policy(mc: &ConcretePrmc, policy: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = mc.num_states();
    let mut t = Vec::new();
    let mut r = vec![0.0; n];
    for s in 0..n {
        t.push((s, s, 1.0));
        if mc.pinned()[s] {
            continue;
        }
        r[s] = mc.rewards()[s];
        let poly = mc.polytope(s).expect("non-pinned states have polytopes");
        for (&succ, &p) in poly.support.iter().zip(&policy[s]) {
            t.push((s, succ, -p));
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &t)?;
    LuFactors::factorize(&a, ColumnOrder::default())?.solve(&r)
}

fn successor_values(poly: &ConcretePolytope, x: &[f64]) -> Vec<f64> {
    poly.support.iter().map(|&t| x[t]).collect()
}

struct PolicyResult {
    policy: Vec<Vec<f64>>,
    active: Vec<Option<Vec<usize>>>,
    iterations: usize,
}

fn policy_iteration(mc: &ConcretePrmc, warm: Option<&Vec<Vec<f64>>>) -> Result<PolicyResult> {
    let n = mc.num_states();
    let zeros = vec![0.0; n];
    let mut policy: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut active: Vec<Option<Vec<usize>>> = Vec::with_capacity(n);
    for s in 0..n {
        match mc.polytope(s).filter(|_| !mc.pinned()[s]) {
            None => {
                policy.push(Vec::new());
                active.push(None);
            }
            Some(poly) => {
                let warm_row = warm
                    .and_then(|w| w.get(s))
                    .filter(|p| p.len() == poly.support.len() && poly.contains(p, 1e-9));
                match warm_row {
                    Some(p) => {
                        policy.push(p.clone());
                        active.push(None);
                    }
                    None => {
                        let v = inner_min(poly, &successor_values(poly, &zeros))?;
                        policy.push(v.p);
                        active.push(v.active);
                    }
                }
            }
        }
    }
    for it in 1..=MAX_POLICY_ITERATIONS {
        let x = evaluate_policy(mc, &policy)?;
        let mut changed = false;
        for s in 0..n {
            if mc.pinned()[s] {
                continue;
            }
            let poly = mc.polytope(s).expect("non-pinned states have polytopes");
            let c = successor_values(poly, &x);
            let current: f64 = policy[s].iter().zip(&c).map(|(p, v)| p * v).sum();
            let v = inner_min(poly, &c)?;
            let best: f64 = v.p.iter().zip(&c).map(|(p, v)| p * v).sum();
            if best < current - 1e-12 * (1.0 + current.abs()) {
                policy[s] = v.p;
                changed = true;
            }
            active[s] = v.active;
        }
        if !changed {
            return Ok(PolicyResult {
                policy,
                active,
                iterations: it,
            });
        }
    }
    Err(Error::Lp(format!(
        "robust policy iteration did not converge in {MAX_POLICY_ITERATIONS} rounds"
    )))
}

/// Variable layout of the dualized LP.
pub(crate) struct Layout {
    pub alpha_start: Vec<usize>,
    pub beta: Vec<usize>,
    pub num_vars: usize,
}

pub(crate) fn layout(mc: &ConcretePrmc) -> Layout {
    let n = mc.num_states();
    let mut next = n;
    let mut alpha_start = vec![usize::MAX; n];
    let mut beta = vec![usize::MAX; n];
    for s in 0..n {
        if mc.pinned()[s] {
            continue;
        }
        let m = mc
            .polytope(s)
            .expect("non-pinned states have polytopes")
            .a
            .len();
        alpha_start[s] = next;
        beta[s] = next + m;
        next += m + 1;
    }
    Layout {
        alpha_start,
        beta,
        num_vars: next,
    }
}

pub(crate) fn dual_lp(mc: &ConcretePrmc, lay: &Layout) -> LinearProgram {
    let n = mc.num_states();
    let mut lp = LinearProgram::new(Sense::Maximize);
    for s in 0..n {
        lp.add_var(mc.initial()[s], f64::NEG_INFINITY, f64::INFINITY);
    }
    for s in 0..n {
        if mc.pinned()[s] {
            continue;
        }
        let m = mc
            .polytope(s)
            .expect("non-pinned states have polytopes")
            .a
            .len();
        for _ in 0..m {
            lp.add_var(0.0, 0.0, f64::INFINITY);
        }
        lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    }
    debug_assert_eq!(lp.num_vars(), lay.num_vars);
    for s in 0..n {
        if mc.pinned()[s] {
            lp.add_eq(vec![(s, 1.0)], 0.0);
            continue;
        }
        let poly = mc.polytope(s).expect("non-pinned states have polytopes");
        let a0 = lay.alpha_start[s];
        let mut row = vec![(s, 1.0), (lay.beta[s], 1.0)];
        row.extend(poly.b.iter().enumerate().map(|(i, &b)| (a0 + i, b)));
        lp.add_eq(row, mc.rewards()[s]);
        for (j, &t) in poly.support.iter().enumerate() {
            let mut row = vec![(t, 1.0), (lay.beta[s], 1.0)];
            row.extend(poly.a.iter().enumerate().map(|(i, a)| (a0 + i, a[j])));
            lp.add_eq(row, 0.0);
        }
    }
    lp
}

pub(crate) fn solve(mc: &ConcretePrmc, opts: &SolveOptions) -> Result<RobustSolution> {
    let lay = layout(mc);
    let lp = dual_lp(mc, &lay);
    let mut rpi_iterations = 0;
    let mut crash = None;
    let mut policy = None;
    if !opts.cold_lp {
        match policy_iteration(mc, opts.warm_policy.as_ref()) {
            Ok(pr) => {
                rpi_iterations = pr.iterations;
                if pr
                    .active
                    .iter()
                    .enumerate()
                    .all(|(s, a)| mc.pinned()[s] || a.is_some())
                {
                    let mut head: Vec<usize> = (0..mc.num_states()).collect();
                    for s in 0..mc.num_states() {
                        if let Some(rows) = &pr.active[s] {
                            head.push(lay.beta[s]);
                            head.extend(rows.iter().map(|&i| lay.alpha_start[s] + i));
                        }
                    }
                    crash = Some(Basis::from_head(&lp, head));
                }
                policy = Some(pr.policy);
            }
            Err(Error::SingularMatrix { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let sol = solve_lp_from(&lp, crash.as_ref())?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let s = (0..mc.num_states())
                .find(|&s| {
                    !mc.pinned()[s]
                        && !mc
                            .polytope(s)
                            .is_none_or(|p| p.is_feasible().unwrap_or(false))
                })
                .unwrap_or(0);
            return Err(Error::EmptyUncertaintySet(s));
        }
        LpStatus::Unbounded => {
            return Err(Error::Unreachable(
                (0..mc.num_states())
                    .find(|&s| mc.initial()[s] > 0.0)
                    .unwrap_or(0),
            ))
        }
        LpStatus::IterationLimit => {
            return Err(Error::Lp("robust LP hit the iteration limit".into()))
        }
    }
    let n = mc.num_states();
    let mut x = sol.x[..n].to_vec();
    for (v, _) in x.iter_mut().zip(mc.pinned()).filter(|(_, &p)| p) {
        *v = 0.0;
    }
    let mut alpha = vec![Vec::new(); n];
    let mut beta = vec![0.0; n];
    for s in 0..n {
        if mc.pinned()[s] {
            continue;
        }
        let m = mc
            .polytope(s)
            .expect("non-pinned states have polytopes")
            .a
            .len();
        let a0 = lay.alpha_start[s];
        alpha[s] = sol.x[a0..a0 + m].iter().map(|v| v.max(0.0)).collect();
        beta[s] = sol.x[lay.beta[s]];
    }
    let policy = match policy {
        Some(p) if sol.iterations == 0 => p,
        _ => (0..n)
            .map(|s| match mc.polytope(s).filter(|_| !mc.pinned()[s]) {
                None => Ok(Vec::new()),
                Some(poly) => Ok(inner_min(poly, &successor_values(poly, &x))?.p),
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let sol_r = mc.initial().iter().zip(&x).map(|(p, v)| p * v).sum();
    let active = alpha
        .iter()
        .map(|a| a.iter().map(|&v| v > super::ACTIVE_TOL).collect())
        .collect();
    Ok(RobustSolution {
        x,
        alpha,
        beta,
        sol: sol_r,
        active,
        policy,
        lp_iterations: sol.iterations,
        rpi_iterations,
        warm_started: sol.warm_started,
    })
}

/// Worst-case point defined by the rows `rows` (plus the simplex equality),
/// and the LU of `[A_rows; 𝟙ᵀ]`.
pub(crate) fn vertex_from_rows(
    poly: &ConcretePolytope,
    rows: &[usize],
) -> Result<(Vec<f64>, DenseLu)> {
    let n = poly.support.len();
    let mut m: Vec<Vec<f64>> = rows.iter().map(|&i| poly.a[i].clone()).collect();
    m.push(vec![1.0; n]);
    let lu = DenseLu::factorize(&m)?;
    let mut rhs: Vec<f64> = rows.iter().map(|&i| poly.b[i]).collect();
    rhs.push(1.0);
    Ok((lu.solve(&rhs), lu))
}
