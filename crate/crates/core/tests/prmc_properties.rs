use prmc_core::benchgen::{gridworld_prmc, random_interval_prmc, GridSpec};
use prmc_core::oracle::{
    brute_topk, enumerate_vertices, robust_chain_value, robust_value_iteration,
    selections_equivalent,
};
use prmc_core::prmc::{solve_concrete, SolveOptions};
use prmc_core::{Direction, Error, RobustAnalysis};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn multipliers_certify_the_robust_values(seed in 0u64..100_000) {
        let (m, u) = random_interval_prmc(20, 5, 3, seed).unwrap();
        let mc = m.instantiate(&u).unwrap();
        let s = solve_concrete(&mc, &SolveOptions::default()).unwrap();
        for st in 0..mc.num_states() {
            let Some(poly) = mc.polytope(st).filter(|_| !mc.pinned()[st]) else {
                prop_assert_eq!(s.x[st], 0.0);
                continue;
            };
            let alpha = &s.alpha[st];
            prop_assert!(alpha.iter().all(|&a| a >= -1e-12));
            let r = mc.rewards()[st] - dot(&poly.b, alpha) - s.beta[st];
            prop_assert!((s.x[st] - r).abs() <= 1e-7 * s.x[st].abs().max(1.0));
            for (j, &t) in poly.support.iter().enumerate() {
                let ata: f64 = poly.a.iter().zip(alpha).map(|(row, a)| row[j] * a).sum();
                prop_assert!((ata + s.x[t] + s.beta[st]).abs() <= 1e-7 * s.x[t].abs().max(1.0));
            }
        }
    }

    #[test]
    fn worst_case_is_the_best_vertex(seed in 0u64..100_000) {
        let (m, u) = random_interval_prmc(15, 4, 3, seed).unwrap();
        let mc = m.instantiate(&u).unwrap();
        let s = solve_concrete(&mc, &SolveOptions::default()).unwrap();
        for st in 0..mc.num_states() {
            let Some(poly) = mc.polytope(st).filter(|_| !mc.pinned()[st]) else { continue };
            let next: Vec<f64> = poly.support.iter().map(|&t| s.x[t]).collect();
            let best = enumerate_vertices(poly).iter().map(|p| dot(p, &next)).fold(f64::INFINITY, f64::min);
            prop_assert!(poly.contains(&s.policy[st], 1e-9));
            prop_assert!((dot(&s.policy[st], &next) - best).abs() <= 1e-9 * best.abs().max(1.0));
        }
    }

    #[test]
    fn agrees_with_value_iteration(seed in 0u64..100_000) {
        let (m, u) = random_interval_prmc(15, 4, 3, seed).unwrap();
        let mc = m.instantiate(&u).unwrap();
        let s = solve_concrete(&mc, &SolveOptions::default()).unwrap();
        let vi = robust_value_iteration(&mc, 1e-12, 200_000).unwrap();
        for (a, b) in s.x.iter().zip(&vi) {
            prop_assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "{} vs {}", a, b);
        }
        let induced = robust_chain_value(&mc, &s).unwrap();
        prop_assert!((induced - s.sol).abs() <= 1e-9 * s.sol.abs().max(1.0));
    }

    #[test]
    fn cold_and_warm_solves_agree(seed in 0u64..100_000) {
        let (m, u) = random_interval_prmc(25, 6, 3, seed).unwrap();
        let mc = m.instantiate(&u).unwrap();
        let warm = solve_concrete(&mc, &SolveOptions::default()).unwrap();
        let cold = solve_concrete(&mc, &SolveOptions { cold_lp: true, ..Default::default() }).unwrap();
        prop_assert!(warm.warm_started && !cold.warm_started);
        prop_assert!((warm.sol - cold.sol).abs() <= 1e-9 * warm.sol.abs().max(1.0));
        for (a, b) in warm.x.iter().zip(&cold.x) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn robust_topk_agrees_with_sorting(seed in 0u64..100_000, k in 1usize..5, lowest in any::<bool>()) {
        let (m, u) = random_interval_prmc(20, 6, 3, seed).unwrap();
        let dir = if lowest { Direction::Lowest } else { Direction::Highest };
        let a = RobustAnalysis::new(&m, &u).unwrap();
        match a.gradient_all() {
            Ok(g) => {
                let r = a.topk(k, dir, true).unwrap();
                let got: Vec<usize> = r.selected.iter().map(|p| p.0).collect();
                prop_assert!(selections_equivalent(&g.values, &got, &brute_topk(&g.values, k, dir), 1e-9));
                let vals = r.values.unwrap();
                for (p, v) in r.selected.iter().zip(&vals) {
                    prop_assert!((g.values[p.0] - v).abs() <= 1e-9 * v.abs().max(1.0));
                }
            }
            Err(Error::NotDifferentiable(_)) => {
                prop_assert!(!a.verdict().differentiable);
                prop_assert!(matches!(a.topk(k, dir, false), Err(Error::NotDifferentiable(_))));
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

#[test]
fn warm_policy_from_a_nearby_point_converges_to_the_same_values() {
    let (m, u) = gridworld_prmc(&GridSpec::new(6, 6, 4, 2), 5).unwrap();
    let first = solve_concrete(&m.instantiate(&u).unwrap(), &SolveOptions::default()).unwrap();
    let moved = u.perturbed(prmc_core::ParamId(1), 5.0);
    let mc = m.instantiate(&moved).unwrap();
    let fresh = solve_concrete(&mc, &SolveOptions::default()).unwrap();
    let reused = solve_concrete(
        &mc,
        &SolveOptions {
            warm_policy: Some(first.policy),
            ..Default::default()
        },
    )
    .unwrap();
    assert!((fresh.sol - reused.sol).abs() <= 1e-10 * fresh.sol.abs());
}
