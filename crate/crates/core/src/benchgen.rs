//! Deterministic model generators: slippery grid worlds and random pMCs and
//! interval prMCs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Expr, Instantiation, ParamId, ParamSet, Rational};
use crate::learning::{interval_prmc, LearnState, DEFAULT_CONFIDENCE};
use crate::lp::{LinearProgram, Sense};
use crate::models::{Pmc, Prmc};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TerrainLayout {
    /// Every cell gets a uniformly drawn terrain; each terrain is used at
    /// least once.
    Uniform,
    /// The first `heavy` terrains share a `share` fraction of the cells and
    /// the remaining terrains cover the rest.
    Biased { heavy: usize, share: f64 },
}

impl TerrainLayout {
    /// Ten terrains over half of the cells.
    pub const LEARNING: TerrainLayout = TerrainLayout::Biased {
        heavy: 10,
        share: 0.5,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub terrains: usize,
    /// Seed of the terrain assignment.
    pub layout_seed: u64,
    pub layout: TerrainLayout,
    /// Range of simulated sample sizes for the interval variant.
    pub samples: (u64, u64),
    /// Range of the true slip probabilities.
    pub slip: (f64, f64),
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, terrains: usize, layout_seed: u64) -> Self {
        GridSpec {
            rows,
            cols,
            terrains,
            layout_seed,
            layout: TerrainLayout::Uniform,
            samples: (500, 1000),
            slip: (0.1, 0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.rows * self.cols;
        let bad = |m: String| Err(Error::InvalidModel(m));
        if cells < 2 {
            return bad(format!(
                "grid {}x{} needs at least two cells",
                self.rows, self.cols
            ));
        }
        if self.terrains > cells {
            return bad(format!("{} terrains for {cells} cells", self.terrains));
        }
        if self.samples.0 == 0 || self.samples.0 > self.samples.1 {
            return bad(format!("sample range {:?}", self.samples));
        }
        if !(0.0 < self.slip.0 && self.slip.0 <= self.slip.1 && self.slip.1 < 1.0) {
            return bad(format!("slip range {:?}", self.slip));
        }
        if let TerrainLayout::Biased { heavy, share } = self.layout {
            let first = (cells as f64 * share).round() as usize;
            if heavy > self.terrains
                || !(0.0..=1.0).contains(&share)
                || heavy > first
                || self.terrains - heavy > cells - first
            {
                return bad(format!("biased layout ({heavy}, {share}) does not fit"));
            }
        }
        Ok(())
    }
}

/// A grid with its terrain map and the true slip probability per terrain.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorld {
    pub spec: GridSpec,
    /// Terrain per cell, `None` when the cell never slips.
    pub terrain: Vec<Option<usize>>,
    pub slip: Vec<f64>,
    pub seed: u64,
}

fn color(
    cells: &[usize],
    terrains: std::ops::Range<usize>,
    out: &mut [Option<usize>],
    rng: &mut impl Rng,
) {
    let k = terrains.len();
    if k == 0 {
        return;
    }
    for (i, &c) in cells.iter().enumerate() {
        out[c] = Some(if i < k {
            terrains.start + i
        } else {
            rng.gen_range(terrains.clone())
        });
    }
}

pub fn gridworld(spec: &GridSpec, seed: u64) -> Result<GridWorld> {
    spec.validate()?;
    let cells = spec.rows * spec.cols;
    let mut lrng = ChaCha8Rng::seed_from_u64(spec.layout_seed);
    let mut order: Vec<usize> = (0..cells).collect();
    order.shuffle(&mut lrng);
    let mut terrain = vec![None; cells];
    match spec.layout {
        TerrainLayout::Uniform => color(&order, 0..spec.terrains, &mut terrain, &mut lrng),
        TerrainLayout::Biased { heavy, share } => {
            let first = (cells as f64 * share).round() as usize;
            color(&order[..first], 0..heavy, &mut terrain, &mut lrng);
            color(
                &order[first..],
                heavy..spec.terrains,
                &mut terrain,
                &mut lrng,
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slip = (0..spec.terrains)
        .map(|_| {
            if spec.slip.0 == spec.slip.1 {
                spec.slip.0
            } else {
                rng.gen_range(spec.slip.0..spec.slip.1)
            }
        })
        .collect();
    Ok(GridWorld {
        spec: spec.clone(),
        terrain,
        slip,
        seed,
    })
}

impl GridWorld {
    pub fn num_states(&self) -> usize {
        self.terrain.len()
    }

    pub fn goal(&self) -> usize {
        self.num_states() - 1
    }

    /// Moves right or down with probability one half each, wrapping around;
    /// moving down slips two cells with the terrain's probability. Reward one
    /// per step, the goal in the bottom-right corner is terminal.
    pub fn pmc(&self) -> Result<Pmc> {
        let (rows, cols) = (self.spec.rows, self.spec.cols);
        let params = ParamSet::from_names((0..self.spec.terrains).map(|i| format!("v{i}")))?;
        let half = Expr::fraction(1, 2);
        let n = self.num_states();
        let mut trans = Vec::with_capacity(n);
        for s in 0..n {
            if s == self.goal() {
                trans.push(Vec::new());
                continue;
            }
            let (r, c) = (s / cols, s % cols);
            let right = r * cols + (c + 1) % cols;
            let down = ((r + 1) % rows) * cols + c;
            let slip = ((r + 2) % rows) * cols + c;
            let row = match self.terrain[s] {
                Some(t) => {
                    let v = Expr::param(ParamId(t));
                    vec![
                        (right, half.clone()),
                        (down, half.mul(&Expr::one().sub(&v))),
                        (slip, half.mul(&v)),
                    ]
                }
                None => vec![(right, half.clone()), (down, half.clone())],
            };
            trans.push(row);
        }
        let mut rewards = vec![1.0; n];
        rewards[self.goal()] = 0.0;
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        Pmc::new(params, initial, rewards, &[self.goal()], trans)
    }

    pub fn true_instantiation(&self) -> Instantiation {
        Instantiation::new(self.slip.clone()).expect("finite slip probabilities")
    }

    /// Simulated sample counts: `N_t` uniform in the spec's range and
    /// Bernoulli successes at the true slip probability.
    pub fn sample_counts(&self, seed: u64) -> Result<LearnState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = self.spec.samples;
        let mut n = Vec::with_capacity(self.slip.len());
        let mut k = Vec::with_capacity(self.slip.len());
        for &p in &self.slip {
            let ni = rng.gen_range(lo..=hi);
            n.push(ni);
            k.push((0..ni).filter(|_| rng.gen::<f64>() < p).count() as u64);
        }
        LearnState::new(n, k, DEFAULT_CONFIDENCE, seed)
    }
}

/// Grid-world pMC with one slip parameter per terrain and the true slip
/// probabilities.
pub fn gridworld_pmc(spec: &GridSpec, seed: u64) -> Result<(Pmc, Instantiation)> {
    let g = gridworld(spec, seed)?;
    Ok((g.pmc()?, g.true_instantiation()))
}

/// Interval grid world over sample-size parameters `N_t`, with the sampled
/// sizes as instantiation.
pub fn gridworld_prmc(spec: &GridSpec, seed: u64) -> Result<(Prmc, Instantiation)> {
    let g = gridworld(spec, seed)?;
    let counts = g.sample_counts(seed.wrapping_add(1))?;
    interval_prmc(&g.pmc()?, &counts, 1.0)
}

fn rat(x: f64) -> Expr {
    Expr::constant(Rational::from_f64(x).expect("finite"))
}

struct Skeleton {
    succ: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    rewards: Vec<f64>,
}

/// States `0..n−1` with terminal `n − 1`; every other state has a progress
/// edge to its successor and `fanout − 1` random further successors.
fn skeleton(n: usize, fanout: usize, rng: &mut impl Rng) -> Skeleton {
    let mut succ = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for s in 0..n {
        if s + 1 == n {
            succ.push(Vec::new());
            weights.push(Vec::new());
            continue;
        }
        let mut row = vec![s + 1];
        let target = fanout.min(n);
        let mut tries = 0;
        while row.len() < target && tries < 20 * fanout {
            let t = rng.gen_range(0..n);
            if !row.contains(&t) {
                row.push(t);
            }
            tries += 1;
        }
        let w: Vec<f64> = row.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = w.iter().sum();
        succ.push(row);
        weights.push(w.into_iter().map(|x| x / total).collect());
    }
    let rewards = (0..n)
        .map(|s| {
            if s + 1 == n {
                0.0
            } else {
                rng.gen_range(0.5..2.0)
            }
        })
        .collect();
    Skeleton {
        succ,
        weights,
        rewards,
    }
}

/// Random pMC whose rows are affine in at most one parameter each, valid for
/// every parameter value in `[0, 1]`; returns it with a nominal
/// instantiation drawn from `[0.1, 0.9]`.
pub fn random_pmc(
    n_states: usize,
    n_params: usize,
    fanout: usize,
    seed: u64,
) -> Result<(Pmc, Instantiation)> {
    if fanout == 0 || n_states < 2 {
        return Err(Error::InvalidModel(
            "random_pmc needs fanout >= 1 and two states".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sk = skeleton(n_states, fanout, &mut rng);
    let params = ParamSet::from_names((0..n_params).map(|i| format!("p{i}")))?;
    let mut rows = Vec::with_capacity(n_states);
    let mut next_param = 0;
    for s in 0..n_states {
        let w = &sk.weights[s];
        let mut row: Vec<(usize, Expr)> = sk.succ[s]
            .iter()
            .zip(w)
            .map(|(&t, &p)| (t, rat(p)))
            .collect();
        // The first states take the parameters in turn so every parameter
        // occurs; later states pick one at random.
        if row.len() >= 2 && n_params > 0 && (next_param < n_params || rng.gen_bool(0.8)) {
            let v = if next_param < n_params {
                next_param += 1;
                next_param - 1
            } else {
                rng.gen_range(0..n_params)
            };
            let i = rng.gen_range(0..row.len());
            let mut j = rng.gen_range(0..row.len() - 1);
            if j >= i {
                j += 1;
            }
            // P_i = w_i + a (v − 1/2), P_j = w_j − a (v − 1/2) with |a| ≤ min(w_i, w_j).
            let a = w[i].min(w[j])
                * rng.gen_range(0.2..0.9)
                * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let shift = Expr::param(ParamId(v))
                .sub(&Expr::fraction(1, 2))
                .mul(&rat(a));
            row[i].1 = rat(w[i]).add(&shift);
            row[j].1 = rat(w[j]).sub(&shift);
        }
        rows.push(row);
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    let m = Pmc::new(params, initial, sk.rewards, &[n_states - 1], rows)?;
    let u = Instantiation::new((0..n_params).map(|_| rng.gen_range(0.1..0.9)).collect())?;
    Ok((m, u))
}

/// Random interval prMC: every transition has an interval around a nominal
/// probability whose endpoints are affine in a random parameter (or
/// constant). Valid for parameters in `[0, 1]`; the returned instantiation
/// is drawn from `[0.1, 0.9]`.
pub fn random_interval_prmc(
    n_states: usize,
    n_params: usize,
    fanout: usize,
    seed: u64,
) -> Result<(Prmc, Instantiation)> {
    if fanout == 0 || n_states < 2 {
        return Err(Error::InvalidModel(
            "random_interval_prmc needs fanout >= 1 and two states".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sk = skeleton(n_states, fanout, &mut rng);
    let params = ParamSet::from_names((0..n_params).map(|i| format!("p{i}")))?;
    let mut next_param = 0;
    let mut endpoint = |rng: &mut ChaCha8Rng, q: f64, sign: f64| {
        let w = q * rng.gen_range(0.05..0.3);
        let base = rat(q + sign * w);
        if n_params == 0 || rng.gen_bool(0.3) && next_param >= n_params {
            return base;
        }
        let v = if next_param < n_params {
            next_param += 1;
            next_param - 1
        } else {
            rng.gen_range(0..n_params)
        };
        base.add(&Expr::param(ParamId(v)).mul(&rat(sign * 0.5 * w)))
    };
    let mut rows = Vec::with_capacity(n_states);
    for s in 0..n_states {
        if sk.succ[s].len() == 1 {
            rows.push(vec![(sk.succ[s][0], Expr::one(), Expr::one())]);
            continue;
        }
        let row = sk.succ[s]
            .iter()
            .zip(&sk.weights[s])
            .map(|(&t, &q)| {
                let lo = endpoint(&mut rng, q, -1.0);
                let hi = endpoint(&mut rng, q, 1.0);
                (t, lo, hi)
            })
            .collect();
        rows.push(row);
    }
    let mut initial = vec![0.0; n_states];
    initial[0] = 1.0;
    let m = Prmc::from_intervals(params, initial, sk.rewards, &[n_states - 1], rows)?;
    let u = Instantiation::new((0..n_params).map(|_| rng.gen_range(0.1..0.9)).collect())?;
    Ok((m, u))
}

/// Random equality-form LP, feasible by construction (`b = A x0` for some `x0` inside the box) and
/// bounded, since only zero-cost variables have infinite bounds.
pub fn random_lp(rng: &mut impl Rng, m: usize, n: usize) -> LinearProgram {
    let sense = if rng.gen_bool(0.5) {
        Sense::Maximize
    } else {
        Sense::Minimize
    };
    let mut lp = LinearProgram::new(sense);
    let mut x0 = Vec::new();
    for _ in 0..n {
        let (lo, hi) = match rng.gen_range(0..10) {
            0 => (f64::NEG_INFINITY, rng.gen_range(0.5..3.0)),
            1 => (rng.gen_range(-2.0..0.0), f64::INFINITY),
            _ => {
                let lo = rng.gen_range(-2.0..0.0);
                (lo, lo + rng.gen_range(0.5..3.0))
            }
        };
        let v = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => rng.gen_range(lo..hi),
            (true, false) => lo + rng.gen_range(0.0..2.0),
            _ => hi - rng.gen_range(0.0..2.0),
        };
        x0.push(v);
        let cost = if lo.is_finite() && hi.is_finite() {
            rng.gen_range(-1.0..1.0)
        } else {
            0.0
        };
        lp.add_var(cost, lo, hi);
    }
    for _ in 0..m {
        let mut row = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.3) {
                row.push((j, rng.gen_range(-2.0..2.0)));
            }
        }
        let b: f64 = row.iter().map(|&(j, a): &(usize, f64)| a * x0[j]).sum();
        lp.add_eq(row, b);
    }
    lp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmc::solve_expected_reward;
    use crate::prmc::robust_solve;
    use proptest::prelude::*;

    #[test]
    fn tiny_grids() {
        // 1x2: right reaches the goal, down stays put; expected steps 2.
        let (m, u) = gridworld_pmc(&GridSpec::new(1, 2, 0, 0), 0).unwrap();
        assert_eq!(m.num_params(), 0);
        assert!((solve_expected_reward(&m, &u).unwrap().sol - 2.0).abs() < 1e-12);
        // 2x2 without slipping: x0 = 1 + (x1 + x2)/2, x1 = 1 + (x0 + x3)/2,
        // x2 = 1 + (x3 + x0)/2, x3 = 0, so x0 = 4.
        let g = gridworld(&GridSpec::new(2, 2, 0, 0), 0).unwrap();
        let m = g.pmc().unwrap();
        let s = solve_expected_reward(&m, &g.true_instantiation()).unwrap();
        assert!((s.sol - 4.0).abs() < 1e-12, "{}", s.sol);
    }

    #[test]
    fn transition_count_and_parameters() {
        let (m, _) = gridworld_pmc(&GridSpec::new(50, 100, 100, 3), 4).unwrap();
        assert_eq!(m.num_states(), 5000);
        assert_eq!(m.num_transitions(), 3 * 5000 - 3);
        assert_eq!(m.num_params(), 100);
        for i in 0..100 {
            assert!(!m.occurrences(ParamId(i)).is_empty());
        }
    }

    #[test]
    fn biased_layout_splits_cells() {
        let mut spec = GridSpec::new(20, 40, 100, 1);
        spec.layout = TerrainLayout::LEARNING;
        let g = gridworld(&spec, 2).unwrap();
        let heavy = g
            .terrain
            .iter()
            .filter(|t| t.is_some_and(|t| t < 10))
            .count();
        assert_eq!(heavy, 400);
        assert!(g.terrain.iter().all(Option::is_some));
        let mut seen = [false; 100];
        g.terrain.iter().flatten().for_each(|&t| seen[t] = true);
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = GridSpec::new(5, 6, 4, 9);
        assert_eq!(gridworld(&spec, 1).unwrap(), gridworld(&spec, 1).unwrap());
        assert_ne!(
            gridworld(&spec, 1).unwrap().slip,
            gridworld(&spec, 2).unwrap().slip
        );
        let (a, ua) = random_pmc(30, 4, 3, 5).unwrap();
        let (b, ub) = random_pmc(30, 4, 3, 5).unwrap();
        assert_eq!(ua, ub);
        assert_eq!(
            solve_expected_reward(&a, &ua).unwrap(),
            solve_expected_reward(&b, &ub).unwrap()
        );
    }

    #[test]
    fn chain_reward_is_the_sum() {
        let (m, u) = random_pmc(12, 0, 1, 8).unwrap();
        let total: f64 = m.rewards().iter().sum();
        assert!((solve_expected_reward(&m, &u).unwrap().sol - total).abs() < 1e-12);
    }

    #[test]
    fn grid_intervals_cover_the_truth() {
        let spec = GridSpec::new(4, 5, 6, 0);
        let (mut hit, mut total) = (0, 0);
        for seed in 0..100 {
            let g = gridworld(&spec, seed).unwrap();
            let c = g.sample_counts(seed + 1000).unwrap();
            for (t, &p) in g.slip.iter().enumerate() {
                let (lo, hi) = c.interval(t);
                hit += usize::from(lo <= p && p <= hi);
                total += 1;
            }
        }
        assert!(
            hit as f64 >= DEFAULT_CONFIDENCE * total as f64,
            "{hit}/{total}"
        );
    }

    #[test]
    fn interval_grid_brackets_the_truth() {
        let spec = GridSpec::new(6, 6, 5, 2);
        let (m, n) = gridworld_prmc(&spec, 3).unwrap();
        let (p, truth) = gridworld_pmc(&spec, 3).unwrap();
        let lower = robust_solve(&m, &n).unwrap().sol;
        let exact = solve_expected_reward(&p, &truth).unwrap().sol;
        assert!(lower <= exact + 1e-9, "{lower} > {exact}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn random_pmcs_validate_in_the_box(seed in 0u64..10_000, n in 2usize..40, k in 0usize..6, f in 1usize..5) {
            let (m, u) = random_pmc(n, k, f, seed).unwrap();
            prop_assert!(m.instantiate(&u).is_ok());
            let corner = Instantiation::new(vec![1.0; k]).unwrap();
            prop_assert!(m.instantiate(&corner).is_ok());
            let zero = Instantiation::new(vec![0.0; k]).unwrap();
            prop_assert!(m.instantiate(&zero).is_ok());
        }

        #[test]
        fn random_prmcs_instantiate(seed in 0u64..10_000, n in 2usize..30, k in 0usize..6, f in 1usize..5) {
            let (m, u) = random_interval_prmc(n, k, f, seed).unwrap();
            prop_assert!(m.instantiate(&u).is_ok());
            prop_assert!(robust_solve(&m, &u).is_ok());
        }
    }
}
