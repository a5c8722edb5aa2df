use prmc_core::benchgen::{gridworld_pmc, random_pmc, GridSpec};
use prmc_core::expr::{Expr, ParamSet};
use prmc_core::oracle::{brute_topk, chain_value, fd_gradient_pmc, mc_estimate};
use prmc_core::pmc::{gradient_explicit, solve_expected_reward, topk};
use prmc_core::sparse::factorization_count;
use prmc_core::{Direction, Instantiation, ParamId, Pmc, PmcAnalysis};
use proptest::prelude::*;

#[test]
fn explicit_gradient_matches_fine_differences() {
    for seed in 0..8 {
        let (m, u) = random_pmc(40 + 30 * seed as usize, 12, 3, 300 + seed).unwrap();
        let a = PmcAnalysis::new(&m, &u).unwrap();
        let g = a.gradient_explicit().unwrap().values;
        let fd = fd_gradient_pmc(&m, &u, 1e-6).unwrap();
        let floor = 1e-5 * a.solution().sol.abs().max(1.0);
        for (i, (x, y)) in g.iter().zip(&fd).enumerate() {
            assert!(
                (x - y).abs() <= 1e-5 * y.abs().max(floor),
                "seed {seed} param {i}: {x} vs {y}"
            );
        }
    }
}

#[test]
fn one_factorization_serves_every_parameter() {
    let (m, u) = random_pmc(200, 40, 3, 8).unwrap();
    let before = factorization_count();
    let a = PmcAnalysis::new(&m, &u).unwrap();
    a.gradient_explicit().unwrap();
    a.gradient_adjoint().unwrap();
    a.derivatives_for_subset(&[ParamId(3), ParamId(7)]).unwrap();
    assert_eq!(factorization_count() - before, 1);
}

#[test]
fn solution_matches_independent_assembly_and_simulation() {
    let (m, u) = gridworld_pmc(&GridSpec::new(4, 6, 3, 1), 1).unwrap();
    let sol = solve_expected_reward(&m, &u).unwrap().sol;
    let mc = m.instantiate(&u).unwrap();
    assert!((sol - chain_value(&mc).unwrap()).abs() < 1e-9 * sol);
    let est = mc_estimate(&mc, 20_000, 4, 100_000);
    assert_eq!(est.truncated, 0);
    assert!(
        (est.mean - sol).abs() < 5.0 * est.stderr,
        "{} ± {} vs {sol}",
        est.mean,
        est.stderr
    );
}

/// `s0` branches to two copies of the same sub-chain, one per parameter.
fn mirrored() -> Pmc {
    let ps = ParamSet::from_names(["a", "b"]).unwrap();
    let half = Expr::fraction(1, 2);
    let loop_row = |v: usize, back: usize| {
        let p = Expr::param(ParamId(v));
        vec![(back, p.clone()), (3, Expr::one().sub(&p))]
    };
    Pmc::new(
        ps,
        vec![1.0, 0.0, 0.0, 0.0],
        vec![1.0, 2.0, 2.0, 0.0],
        &[3],
        vec![
            vec![(1, half.clone()), (2, half)],
            loop_row(0, 1),
            loop_row(1, 2),
            vec![],
        ],
    )
    .unwrap()
}

#[test]
fn symmetric_parameters_have_equal_derivatives() {
    let m = mirrored();
    let u = Instantiation::new(vec![0.3, 0.3]).unwrap();
    let g = gradient_explicit(&m, &u).unwrap().values;
    assert!((g[0] - g[1]).abs() < 1e-12, "{g:?}");
    // x1 = 2 / (1 − a), so d sol / da = ½ · 2 / (1 − a)².
    assert!((g[0] - 1.0 / 0.49).abs() < 1e-12);
    let r = topk(&m, &u, 1, Direction::Highest).unwrap();
    assert_eq!(r.selected, vec![ParamId(0)]);
    let r = topk(&m, &u, 1, Direction::Lowest).unwrap();
    assert_eq!(r.selected, vec![ParamId(0)]);
}

#[test]
fn parameters_outside_the_chain_have_zero_derivative() {
    let ps = ParamSet::from_names(["used", "unused"]).unwrap();
    let p = Expr::param(ParamId(0));
    let m = Pmc::new(
        ps,
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        &[1],
        vec![vec![(0, p.clone()), (1, Expr::one().sub(&p))], vec![]],
    )
    .unwrap();
    let u = Instantiation::new(vec![0.5, 0.9]).unwrap();
    let g = gradient_explicit(&m, &u).unwrap().values;
    assert_eq!(g[1], 0.0);
    assert!((g[0] - 4.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn topk_agrees_with_sorting(seed in 0u64..10_000, k in 1usize..6, lowest in any::<bool>()) {
        let (m, u) = random_pmc(30, 8, 3, seed).unwrap();
        let dir = if lowest { Direction::Lowest } else { Direction::Highest };
        let g = gradient_explicit(&m, &u).unwrap().values;
        let r = topk(&m, &u, k, dir).unwrap();
        let got: Vec<usize> = r.selected.iter().map(|p| p.0).collect();
        prop_assert!(prmc_core::oracle::selections_equivalent(&g, &got, &brute_topk(&g, k, dir), 1e-9));
        prop_assert!(r.z.iter().all(|&z| z == 0.0 || z == 1.0));
    }

    #[test]
    fn adjoint_equals_explicit(seed in 0u64..10_000) {
        let (m, u) = random_pmc(25, 6, 2, seed).unwrap();
        let a = PmcAnalysis::new(&m, &u).unwrap();
        let e = a.gradient_explicit().unwrap().values;
        let d = a.gradient_adjoint().unwrap().values;
        for (x, y) in e.iter().zip(&d) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-9));
        }
    }
}
