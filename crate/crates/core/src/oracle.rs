//! Reference computations used to check the analyses: finite differences,
//! sort-based top-k, vertex enumeration, robust value iteration, simulation
//! and plain Gaussian elimination.

use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Instantiation, ParamId};
use crate::models::{ConcreteMc, ConcretePolytope, ConcretePrmc, Pmc, Prmc};
use crate::prmc::{solve_concrete, RobustSolution, SolveOptions};
use crate::sparse::{ColumnOrder, LuFactors, SparseMatrix};
use crate::topk::Direction;

/// Systems up to this size are solved densely by [`dense_solve`].
pub const DENSE_LIMIT: usize = 300;

/// Gaussian elimination with partial pivoting on a copy of `a`.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
            .expect("non-empty");
        if m[p][k].abs() < 1e-14 {
            return Err(Error::SingularMatrix {
                step: k,
                pivot: m[p][k].abs(),
            });
        }
        m.swap(k, p);
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            if f != 0.0 {
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
        x[k] = (m[k][n] - s) / m[k][k];
    }
    Ok(x)
}

/// Exact Gaussian elimination over the rationals.
pub fn exact_solve(a: &[Vec<BigRational>], b: &[BigRational]) -> Result<Vec<BigRational>> {
    let n = b.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut r = r.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for k in 0..n {
        let p = (k..n)
            .find(|&i| !m[i][k].is_zero())
            .ok_or(Error::SingularMatrix {
                step: k,
                pivot: 0.0,
            })?;
        m.swap(k, p);
        for i in k + 1..n {
            if m[i][k].is_zero() {
                continue;
            }
            let f = &m[i][k] / &m[k][k];
            for j in k..=n {
                let d = &f * &m[k][j];
                m[i][j] -= d;
            }
        }
    }
    let mut x = vec![BigRational::zero(); n];
    for k in (0..n).rev() {
        let mut s = m[k][n].clone();
        for j in k + 1..n {
            s -= &m[k][j] * &x[j];
        }
        x[k] = s / &m[k][k];
    }
    Ok(x)
}

/// Expected reward by an independent assembly of `(I − P) x = r`, dense for
/// small chains. The solution is refined with residuals accumulated in
/// double-double arithmetic, so its error is near unit roundoff rather than
/// growing with the conditioning of the chain.
pub fn chain_value(mc: &ConcreteMc) -> Result<f64> {
    let n = mc.num_states();
    let fixed = |s: usize| mc.pinned()[s];
    let rhs: Vec<f64> = (0..n)
        .map(|s| if fixed(s) { 0.0 } else { mc.rewards()[s] })
        .collect();
    let mut t = Vec::new();
    for s in 0..n {
        t.push((s, s, 1.0));
        if !fixed(s) {
            t.extend(mc.row(s).iter().map(|&(j, p)| (s, j, -p)));
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &t)?;
    let solver: Box<dyn Fn(&[f64]) -> Result<Vec<f64>>> = if n <= DENSE_LIMIT {
        let dense = a.to_dense();
        Box::new(move |b: &[f64]| dense_solve(&dense, b))
    } else {
        let lu = LuFactors::factorize(&a, ColumnOrder::default())?;
        Box::new(move |b: &[f64]| lu.solve(b))
    };
    let mut x = solver(&rhs)?;
    for _ in 0..3 {
        let r: Vec<f64> = (0..n)
            .map(|i| {
                let (cols, vals) = a.row(i);
                let mut acc = DoubleDouble::from(rhs[i]);
                for (&j, &v) in cols.iter().zip(vals) {
                    acc = acc.add_product(-v, x[j]);
                }
                acc.hi + acc.lo
            })
            .collect();
        let dx = solver(&r)?;
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    let mut acc = DoubleDouble::from(0.0);
    for (a, b) in mc.initial().iter().zip(&x) {
        acc = acc.add_product(*a, *b);
    }
    Ok(acc.hi + acc.lo)
}

/// Unevaluated sum `hi + lo` with error-free transformations.
#[derive(Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl From<f64> for DoubleDouble {
    fn from(hi: f64) -> Self {
        DoubleDouble { hi, lo: 0.0 }
    }
}

impl DoubleDouble {
    /// `self + a·b`.
    fn add_product(self, a: f64, b: f64) -> Self {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let s = self.hi + p;
        let bb = s - self.hi;
        let se = (self.hi - (s - bb)) + (p - bb);
        let lo = self.lo + pe + se;
        let hi = s + lo;
        DoubleDouble {
            hi,
            lo: lo - (hi - s),
        }
    }
}

/// Central differences of the expected reward.
pub fn fd_gradient_pmc(m: &Pmc, u: &Instantiation, h: f64) -> Result<Vec<f64>> {
    (0..m.num_params())
        .map(|i| {
            let up = chain_value(&m.instantiate(&u.perturbed(ParamId(i), h))?)?;
            let down = chain_value(&m.instantiate(&u.perturbed(ParamId(i), -h))?)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Value of the chain induced by the worst-case distributions of `sol`,
/// through [`chain_value`]. Pinned states become terminal.
pub fn robust_chain_value(mc: &ConcretePrmc, sol: &RobustSolution) -> Result<f64> {
    let n = mc.num_states();
    let rows = (0..n)
        .map(|s| match mc.polytope(s).filter(|_| !mc.pinned()[s]) {
            None => Vec::new(),
            Some(poly) => poly
                .support
                .iter()
                .zip(&sol.policy[s])
                .filter(|(_, &p)| p > 0.0)
                .map(|(&t, &p)| (t, p))
                .collect(),
        })
        .collect();
    let pinned: Vec<usize> = (0..n).filter(|&s| mc.pinned()[s]).collect();
    let chain = ConcreteMc::new(mc.initial().to_vec(), mc.rewards().to_vec(), &pinned, rows)?;
    chain_value(&chain)
}

/// Robust value at `u`, evaluated on the induced chain.
pub fn robust_value(m: &Prmc, u: &Instantiation) -> Result<f64> {
    let mc = m.instantiate(u)?;
    let sol = solve_concrete(&mc, &SolveOptions::default())?;
    robust_chain_value(&mc, &sol)
}

/// Central differences of the robust value.
pub fn fd_gradient_prmc(m: &Prmc, u: &Instantiation, h: f64) -> Result<Vec<f64>> {
    (0..m.num_params())
        .map(|i| {
            let up = robust_value(m, &u.perturbed(ParamId(i), h))?;
            let down = robust_value(m, &u.perturbed(ParamId(i), -h))?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Indices of the `k` largest (or smallest) entries, ties to the lowest
/// index, in increasing order.
pub fn brute_topk(g: &[f64], k: usize, direction: Direction) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g.len()).collect();
    idx.sort_by(|&a, &b| {
        let ord = match direction {
            Direction::Highest => g[b].total_cmp(&g[a]),
            Direction::Lowest => g[a].total_cmp(&g[b]),
        };
        ord.then(a.cmp(&b))
    });
    let mut out: Vec<usize> = idx.into_iter().take(k).collect();
    out.sort_unstable();
    out
}

/// Whether two selections agree once values within `tol` (relative) of the
/// selection boundary are treated as interchangeable.
pub fn selections_equivalent(g: &[f64], a: &[usize], b: &[usize], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut va: Vec<f64> = a.iter().map(|&i| g[i]).collect();
    let mut vb: Vec<f64> = b.iter().map(|&i| g[i]).collect();
    va.sort_by(f64::total_cmp);
    vb.sort_by(f64::total_cmp);
    va.iter()
        .zip(&vb)
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

/// All vertices of `{p : A p ≤ b, 𝟙ᵀp = 1}`, by solving every choice of
/// `n − 1` rows.
pub fn enumerate_vertices(poly: &ConcretePolytope) -> Vec<Vec<f64>> {
    let n = poly.support.len();
    let m = poly.a.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut pick: Vec<usize> = (0..n - 1).collect();
    loop {
        let mut a: Vec<Vec<f64>> = pick.iter().map(|&i| poly.a[i].clone()).collect();
        a.push(vec![1.0; n]);
        let mut b: Vec<f64> = pick.iter().map(|&i| poly.b[i]).collect();
        b.push(1.0);
        if let Ok(p) = dense_solve(&a, &b) {
            if poly.contains(&p, 1e-9)
                && !out
                    .iter()
                    .any(|q| q.iter().zip(&p).all(|(x, y)| (x - y).abs() < 1e-9))
            {
                out.push(p);
            }
        }
        // Next combination in lexicographic order.
        let Some(i) = (0..pick.len())
            .rev()
            .find(|&i| pick[i] < m - (pick.len() - i))
        else {
            break;
        };
        pick[i] += 1;
        for j in i + 1..pick.len() {
            pick[j] = pick[j - 1] + 1;
        }
        if n == 1 {
            break;
        }
    }
    out
}

/// Robust values by Gauss–Seidel Bellman updates over enumerated vertices.
pub fn robust_value_iteration(mc: &ConcretePrmc, tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
    let n = mc.num_states();
    let verts: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|s| match mc.polytope(s).filter(|_| !mc.pinned()[s]) {
            Some(p) => enumerate_vertices(p),
            None => Vec::new(),
        })
        .collect();
    let mut x = vec![0.0; n];
    for _ in 0..max_sweeps {
        let mut delta: f64 = 0.0;
        for s in 0..n {
            if mc.pinned()[s] {
                continue;
            }
            let support = &mc.polytope(s).expect("non-pinned").support;
            let best = verts[s]
                .iter()
                .map(|p| p.iter().zip(support).map(|(q, &t)| q * x[t]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let v = mc.rewards()[s] + best;
            delta = delta.max((v - x[s]).abs());
            x[s] = v;
        }
        if delta <= tol {
            return Ok(x);
        }
    }
    Err(Error::Lp(format!(
        "value iteration did not reach {tol} in {max_sweeps} sweeps"
    )))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Runs cut off at the step cap; their partial reward is included.
    pub truncated: usize,
}

/// Mean cumulative reward over `runs` simulated trajectories.
pub fn mc_estimate(mc: &ConcreteMc, runs: usize, seed: u64, max_steps: usize) -> Estimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<(usize, f64)> = mc
        .initial()
        .iter()
        .copied()
        .enumerate()
        .filter(|e| e.1 > 0.0)
        .collect();
    let pick = |rng: &mut ChaCha8Rng, row: &[(usize, f64)]| {
        let mut u: f64 = rng.gen();
        for &(t, p) in row {
            if u < p {
                return t;
            }
            u -= p;
        }
        row.last().expect("non-empty row").0
    };
    let (mut sum, mut sq, mut truncated) = (0.0, 0.0, 0);
    for _ in 0..runs {
        let mut s = pick(&mut rng, &init);
        let mut total = 0.0;
        let mut steps = 0;
        while !mc.pinned()[s] {
            if steps == max_steps {
                truncated += 1;
                break;
            }
            total += mc.rewards()[s];
            s = pick(&mut rng, mc.row(s));
            steps += 1;
        }
        sum += total;
        sq += total * total;
    }
    let n = runs as f64;
    let mean = sum / n;
    let var = if runs > 1 {
        ((sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        stderr: (var / n).sqrt(),
        truncated,
    }
}

/// Largest `|a − b| / max(|b|, floor)` over paired entries.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{random_interval_prmc, random_pmc};
    use crate::expr::{Expr, ParamSet, Rational};
    use crate::pmc::gradient_explicit;
    use crate::prmc::robust_solve;
    use proptest::prelude::*;
    use rand::Rng;

    fn r(n: i64, d: i64) -> BigRational {
        Rational::fraction(n, d).exact().clone()
    }

    #[test]
    fn exact_three_state_chain() {
        // x0 = 1 + x0/2 + x1/4, x1 = 2 + x0/3, x2 = 0.
        let a = vec![
            vec![r(1, 2), r(-1, 4), r(0, 1)],
            vec![r(-1, 3), r(1, 1), r(0, 1)],
            vec![r(0, 1), r(0, 1), r(1, 1)],
        ];
        let b = vec![r(1, 1), r(2, 1), r(0, 1)];
        let x = exact_solve(&a, &b).unwrap();
        assert_eq!(x[0], r(18, 5));
        assert_eq!(x[1], r(16, 5));
        let mc = ConcreteMc::new(
            vec![1.0, 0.0, 0.0],
            vec![1.0, 2.0, 0.0],
            &[2],
            vec![
                vec![(0, 0.5), (1, 0.25), (2, 0.25)],
                vec![(0, 1.0 / 3.0), (2, 2.0 / 3.0)],
                vec![],
            ],
        )
        .unwrap();
        assert!((chain_value(&mc).unwrap() - 3.6).abs() < 1e-13);
    }

    #[test]
    fn fd_is_exact_for_linear_rewards() {
        // sol = 1 + v: one step, then with probability v another.
        let ps = ParamSet::from_names(["v"]).unwrap();
        let v = Expr::param(ParamId(0));
        let m = Pmc::new(
            ps,
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
            &[2],
            vec![
                vec![(1, v.clone()), (2, Expr::one().sub(&v))],
                vec![(2, Expr::one())],
                vec![],
            ],
        )
        .unwrap();
        for h in [1e-1, 1e-3, 1e-5] {
            let g = fd_gradient_pmc(&m, &Instantiation::new(vec![0.5]).unwrap(), h).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_topk_rules() {
        assert_eq!(
            brute_topk(&[1.0, 3.0, 2.0], 3, Direction::Highest),
            vec![0, 1, 2]
        );
        assert_eq!(brute_topk(&[5.0; 4], 2, Direction::Lowest), vec![0, 1]);
        assert_eq!(
            brute_topk(&[1.0, 3.0, 2.0, 3.0], 1, Direction::Highest),
            vec![1]
        );
        assert_eq!(
            brute_topk(&[1.0, -3.0, 2.0], 2, Direction::Lowest),
            vec![0, 1]
        );
        assert!(selections_equivalent(&[1.0, 2.0, 2.0], &[1], &[2], 1e-9));
        assert!(!selections_equivalent(&[1.0, 2.0, 2.0], &[0], &[2], 1e-9));
    }

    #[test]
    fn vertices_of_a_box_slice() {
        let poly = ConcretePolytope {
            support: vec![0, 1, 2],
            a: vec![
                vec![1.0, 0.0, 0.0],
                vec![-1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, -1.0],
            ],
            b: vec![0.5, -0.2, 0.5, -0.2, 0.5, -0.2],
        };
        // Permutations of (0.5, 0.3, 0.2).
        assert_eq!(enumerate_vertices(&poly).len(), 6);
    }

    #[test]
    fn simulation_of_a_deterministic_chain() {
        let mc = ConcreteMc::new(
            vec![1.0, 0.0, 0.0],
            vec![2.0, 3.0, 0.0],
            &[2],
            vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![]],
        )
        .unwrap();
        let e = mc_estimate(&mc, 100, 1, 1000);
        assert_eq!((e.mean, e.stderr, e.truncated), (5.0, 0.0, 0));
        let one = mc_estimate(&mc, 1, 1, 1000);
        assert_eq!(one.mean, 5.0);
        let cut = mc_estimate(&mc, 3, 1, 1);
        assert_eq!((cut.mean, cut.truncated), (2.0, 3));
    }

    #[test]
    fn simulation_matches_solution() {
        for seed in 0..5 {
            let (m, u) = random_pmc(15, 3, 3, seed).unwrap();
            let mc = m.instantiate(&u).unwrap();
            let e = mc_estimate(&mc, 20_000, seed, 100_000);
            let exact = chain_value(&mc).unwrap();
            assert!(
                (e.mean - exact).abs() <= 4.0 * e.stderr,
                "{} vs {exact} ± {}",
                e.mean,
                e.stderr
            );
        }
    }

    #[test]
    fn induced_chain_reproduces_the_robust_value() {
        for seed in 0..5 {
            let (m, u) = random_interval_prmc(40, 4, 3, seed).unwrap();
            let s = robust_solve(&m, &u).unwrap();
            let v = robust_value(&m, &u).unwrap();
            assert!(
                (s.sol - v).abs() <= 1e-10 * s.sol.abs().max(1.0),
                "{} vs {v}",
                s.sol
            );
        }
    }

    #[test]
    fn value_iteration_matches_robust_solve() {
        for seed in 0..10 {
            let (m, u) = random_interval_prmc(12, 3, 3, seed).unwrap();
            let mc = m.instantiate(&u).unwrap();
            let x = robust_value_iteration(&mc, 1e-12, 100_000).unwrap();
            let s = robust_solve(&m, &u).unwrap();
            for (a, b) in x.iter().zip(&s.x) {
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn fd_matches_explicit_gradient(seed in 0u64..100_000, n in 3usize..60, k in 1usize..6) {
            let (m, u) = random_pmc(n, k, 3, seed).unwrap();
            let fd = fd_gradient_pmc(&m, &u, 1e-5).unwrap();
            let g = gradient_explicit(&m, &u).unwrap().values;
            let scale = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!((a - b).abs() <= 1e-4 * a.abs().max(1e-3 * scale), "{} vs {}", a, b);
            }
        }

        #[test]
        fn dense_solve_residual(seed in 0u64..1000, n in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| rng.gen_range(-1.0..1.0) + if i == j { n as f64 } else { 0.0 }).collect()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = dense_solve(&a, &b).unwrap();
            for i in 0..n {
                let r: f64 = a[i].iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() - b[i];
                prop_assert!(r.abs() < 1e-10);
            }
        }
    }
}
