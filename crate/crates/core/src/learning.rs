//! Derivative-guided sample allocation.
//!
//! Each parameter `v_i` of a skeleton pMC is an unknown probability learned
//! from Bernoulli samples. With `N_i` samples and mean `p̂_i` the Hoeffding
//! interval `[p̂_i − ε_i, p̂_i + ε_i]`, `ε_i = sqrt((ln 2 − ln(1 − β)) / 2N_i)`,
//! turns the skeleton into an interval prMC whose parameters are the sample
//! sizes. Rewards are negated, so the robust value is `−f⁺` with `f⁺` an upper
//! bound on the true expected reward.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{Expr, Instantiation, ParamId, ParamSet, Rational};
use crate::models::{ConcreteMc, Pmc, Prmc};
use crate::prmc::{RobustAnalysis, SolveOptions};
use crate::sparse::{ColumnOrder, LuFactors};
use crate::topk::Direction;

/// Lower clip of interval endpoints; the upper clip is `1 − CLIP`.
pub const CLIP: f64 = 1e-6;
pub const DEFAULT_CONFIDENCE: f64 = 0.9;
pub const INITIAL_SAMPLES: u64 = 100;

pub fn hoeffding_epsilon(n: f64, beta: f64) -> f64 {
    ((2f64.ln() - (1.0 - beta).ln()) / (2.0 * n)).sqrt()
}

pub fn hoeffding_interval(p_hat: f64, n: u64, beta: f64) -> (f64, f64) {
    let e = hoeffding_epsilon(n as f64, beta);
    let clip = |x: f64| x.clamp(CLIP, 1.0 - CLIP);
    (clip(p_hat - e), clip(p_hat + e))
}

/// `ε` as an expression in the sample-size parameter `n`.
pub fn epsilon_expr(n: ParamId, beta: f64) -> Result<Expr> {
    let miss = Expr::one().sub(&Expr::constant(Rational::from_f64(beta)?));
    let num = Expr::integer(2).ln().sub(&miss.ln());
    Ok(num.div(&Expr::integer(2).mul(&Expr::param(n))).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnState {
    pub samples: Vec<u64>,
    pub successes: Vec<u64>,
    pub beta: f64,
    pub seed: u64,
    /// `(step, robust upper bound)` in step order.
    pub trajectory: Vec<(usize, f64)>,
}

impl LearnState {
    pub fn new(samples: Vec<u64>, successes: Vec<u64>, beta: f64, seed: u64) -> Result<Self> {
        if samples.len() != successes.len() {
            return Err(Error::InvalidModel(
                "sample and success counts differ in length".into(),
            ));
        }
        if let Some(i) = samples
            .iter()
            .zip(&successes)
            .position(|(&n, &k)| n == 0 || k > n)
        {
            return Err(Error::InvalidModel(format!(
                "parameter {i}: need 1 <= N and successes <= N, got N = {}, successes = {}",
                samples[i], successes[i]
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!("confidence {beta} outside (0, 1)")));
        }
        Ok(LearnState {
            samples,
            successes,
            beta,
            seed,
            trajectory: Vec::new(),
        })
    }

    /// `initial` Bernoulli samples of every parameter drawn from `rng`.
    pub fn sampled(
        truth: &[f64],
        initial: u64,
        beta: f64,
        seed: u64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let successes = truth.iter().map(|&p| draw(rng, p, initial)).collect();
        LearnState::new(vec![initial; truth.len()], successes, beta, seed)
    }

    pub fn num_params(&self) -> usize {
        self.samples.len()
    }

    pub fn p_hat(&self, i: usize) -> f64 {
        self.successes[i] as f64 / self.samples[i] as f64
    }

    pub fn epsilon(&self, i: usize) -> f64 {
        hoeffding_epsilon(self.samples[i] as f64, self.beta)
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        hoeffding_interval(self.p_hat(i), self.samples[i], self.beta)
    }

    pub fn observe(&mut self, i: usize, successes: u64, trials: u64) {
        self.samples[i] += trials;
        self.successes[i] += successes;
    }

    pub fn sample_sizes(&self) -> Instantiation {
        Instantiation::new(self.samples.iter().map(|&n| n as f64).collect())
            .expect("finite sample sizes")
    }
}

fn draw(rng: &mut impl Rng, p: f64, n: u64) -> u64 {
    (0..n).filter(|_| rng.gen::<f64>() < p).count() as u64
}

/// Checks that every transition of `skeleton` is constant or affine in a
/// single parameter; returns the parameter of each transition.
fn transition_params(skeleton: &Pmc) -> Result<Vec<Vec<Option<(ParamId, f64)>>>> {
    let probe = Instantiation::new(vec![0.5; skeleton.num_params()])?;
    let mut out = Vec::with_capacity(skeleton.num_states());
    for s in 0..skeleton.num_states() {
        let mut row = Vec::new();
        for (t, e) in skeleton.row(s) {
            match e.params() {
                [] => row.push(None),
                [v] => {
                    let d = e.diff(*v);
                    if !d.is_constant() {
                        return Err(Error::InvalidModel(format!(
                            "transition {s} -> {t} is not affine in its parameter"
                        )));
                    }
                    row.push(Some((*v, d.eval(&probe)?)));
                }
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "transition {s} -> {t} depends on more than one parameter"
                    )))
                }
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Interval prMC over sample sizes `N_i` for the current counts, with
/// rewards multiplied by `reward_sign`. Returns the model and the current
/// sample sizes.
pub fn interval_prmc(
    skeleton: &Pmc,
    state: &LearnState,
    reward_sign: f64,
) -> Result<(Prmc, Instantiation)> {
    if state.num_params() != skeleton.num_params() {
        return Err(Error::InvalidModel(format!(
            "{} sample counts for {} parameters",
            state.num_params(),
            skeleton.num_params()
        )));
    }
    let deps = transition_params(skeleton)?;
    let names = skeleton.params().names().iter().map(|n| format!("N_{n}"));
    let params = ParamSet::from_names(names)?;
    let mut lo_e = Vec::with_capacity(state.num_params());
    let mut hi_e = Vec::with_capacity(state.num_params());
    for i in 0..state.num_params() {
        let p = state.p_hat(i);
        let eps = epsilon_expr(ParamId(i), state.beta)?;
        let e = state.epsilon(i);
        let ph = Expr::constant(Rational::from_f64(p)?);
        let clip_lo = Expr::constant(Rational::from_f64(CLIP)?);
        let clip_hi = Expr::constant(Rational::from_f64(1.0 - CLIP)?);
        lo_e.push(if p - e < CLIP {
            clip_lo.clone()
        } else if p - e > 1.0 - CLIP {
            clip_hi.clone()
        } else {
            ph.sub(&eps)
        });
        hi_e.push(if p + e > 1.0 - CLIP {
            clip_hi
        } else if p + e < CLIP {
            clip_lo
        } else {
            ph.add(&eps)
        });
    }
    let rows = (0..skeleton.num_states())
        .map(|s| {
            skeleton
                .row(s)
                .iter()
                .zip(&deps[s])
                .map(|((t, e), dep)| match dep {
                    None => (*t, e.clone(), e.clone()),
                    Some((v, slope)) => {
                        let at = |b: &Expr| e.substitute(&BTreeMap::from([(*v, b.clone())]));
                        let (a, b) = (at(&lo_e[v.0]), at(&hi_e[v.0]));
                        if *slope >= 0.0 {
                            (*t, a, b)
                        } else {
                            (*t, b, a)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let rewards = skeleton.rewards().iter().map(|r| reward_sign * r).collect();
    let m = Prmc::from_intervals(
        params,
        skeleton.initial().to_vec(),
        rewards,
        &skeleton.terminal_states(),
        rows,
    )?;
    Ok((m, state.sample_sizes()))
}

/// The prMC whose robust value is `−f⁺`.
pub fn build_learning_prmc(skeleton: &Pmc, state: &LearnState) -> Result<(Prmc, Instantiation)> {
    interval_prmc(skeleton, state, -1.0)
}

/// Expected visits before absorption: `(I − P)ᵀ μ = s_I`.
pub fn expected_visits(mc: &ConcreteMc) -> Result<Vec<f64>> {
    let lu = LuFactors::factorize(&mc.system_matrix(), ColumnOrder::default())?;
    let mut mu = lu.solve_transposed(mc.initial())?;
    for (s, m) in mu.iter_mut().enumerate() {
        if mc.pinned()[s] {
            *m = 0.0;
        }
    }
    Ok(mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Derivative,
    Interval,
    Uniform,
    Visits,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Derivative,
        Strategy::Interval,
        Strategy::Uniform,
        Strategy::Visits,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Derivative => "derivative",
            Strategy::Interval => "interval",
            Strategy::Uniform => "uniform",
            Strategy::Visits => "visits",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidModel(format!("unknown strategy `{s}`")))
    }
}

/// Lowest index with the largest `ε`.
pub fn widest_interval(state: &LearnState) -> usize {
    let mut best = 0;
    for i in 1..state.num_params() {
        if state.epsilon(i) > state.epsilon(best) {
            best = i;
        }
    }
    best
}

/// Skeleton instantiated at the clipped sample means.
pub fn mle_chain(skeleton: &Pmc, state: &LearnState) -> Result<ConcreteMc> {
    let u = Instantiation::new(
        (0..state.num_params())
            .map(|i| state.p_hat(i).clamp(CLIP, 1.0 - CLIP))
            .collect(),
    )?;
    skeleton.instantiate(&u)
}

/// Per-parameter weights `ε_i · Σ_{s uses v_i} μ_s`, normalized to sum one.
pub fn visit_weights(skeleton: &Pmc, state: &LearnState) -> Result<Vec<f64>> {
    let mu = expected_visits(&mle_chain(skeleton, state)?)?;
    let mut w = vec![0.0; state.num_params()];
    for (i, wi) in w.iter_mut().enumerate() {
        let mut states: Vec<usize> = skeleton
            .occurrences(ParamId(i))
            .iter()
            .map(|o| o.state)
            .collect();
        states.sort_unstable();
        states.dedup();
        *wi = states.iter().map(|&s| mu[s]).sum::<f64>() * state.epsilon(i);
    }
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        w.iter_mut()
            .for_each(|x| *x = 1.0 / state.num_params() as f64);
    }
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Choice {
    pub param: usize,
    /// The derivative strategy could not be applied and `Interval` was used.
    pub fell_back: bool,
}

/// Picks the next parameter to sample. `analysis` is the robust analysis of
/// the current learning prMC, needed by [`Strategy::Derivative`].
pub fn choose_parameter(
    strategy: Strategy,
    state: &LearnState,
    skeleton: &Pmc,
    analysis: Option<&RobustAnalysis>,
    rng: &mut impl Rng,
) -> Result<Choice> {
    let plain = |param| {
        Ok(Choice {
            param,
            fell_back: false,
        })
    };
    match strategy {
        Strategy::Interval => plain(widest_interval(state)),
        Strategy::Uniform => plain(rng.gen_range(0..state.num_params())),
        Strategy::Visits => {
            let w = visit_weights(skeleton, state)?;
            let dist = WeightedIndex::new(&w).map_err(|e| Error::Domain(e.to_string()))?;
            plain(dist.sample(rng))
        }
        Strategy::Derivative => {
            let analysis = analysis.ok_or_else(|| {
                Error::InvalidModel("derivative strategy needs an analysis".into())
            })?;
            // Highest derivative of −f⁺ is the steepest decrease of f⁺.
            match analysis.topk(1, Direction::Highest, false) {
                Ok(r) => plain(r.selected[0].0),
                Err(Error::NotDifferentiable(why)) => {
                    log::warn!("falling back to the widest interval: {why}");
                    Ok(Choice {
                        param: widest_interval(state),
                        fell_back: true,
                    })
                }
                Err(e) => Err(e),
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnConfig {
    pub strategy: Strategy,
    pub steps: usize,
    pub batch: u64,
    pub seed: u64,
    pub beta: f64,
    pub initial_samples: u64,
}

impl LearnConfig {
    pub fn new(strategy: Strategy, steps: usize, batch: u64, seed: u64) -> Self {
        LearnConfig {
            strategy,
            steps,
            batch,
            seed,
            beta: DEFAULT_CONFIDENCE,
            initial_samples: INITIAL_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub robust_bound: f64,
    /// Parameter sampled after this row; `None` on the last row.
    pub chosen: Option<usize>,
    pub fell_back: bool,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub strategy: Strategy,
    pub seed: u64,
    pub rows: Vec<TrajectoryRow>,
    /// Expected reward of the true chain.
    pub true_solution: f64,
    pub state: LearnState,
}

impl Trajectory {
    pub fn final_bound(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.robust_bound)
    }

    /// CSV with header `step,strategy,seed,robust_bound,chosen_parameter`.
    pub fn to_csv(&self, params: &ParamSet) -> String {
        let mut out = String::from("step,strategy,seed,robust_bound,chosen_parameter\n");
        for r in &self.rows {
            let chosen = r
                .chosen
                .map(|i| params.name(ParamId(i)).unwrap_or("?").to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step,
                self.strategy.name(),
                self.seed,
                format_sig(r.robust_bound, 12),
                chosen
            ));
        }
        out
    }
}

/// `x` with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-5..15).contains(&mag) {
        let decimals = (digits as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.prec$e}", prec = digits - 1)
    }
}

/// Runs the sampling loop against the chain `skeleton` at `truth`.
pub fn run_learning(
    skeleton: &Pmc,
    truth: &Instantiation,
    cfg: &LearnConfig,
) -> Result<Trajectory> {
    let true_mc = skeleton.instantiate(truth)?;
    let true_solution = {
        let lu = LuFactors::factorize(&true_mc.system_matrix(), ColumnOrder::default())?;
        let x = lu.solve(&true_mc.reward_vector())?;
        true_mc.initial().iter().zip(&x).map(|(a, b)| a * b).sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = LearnState::sampled(
        truth.values(),
        cfg.initial_samples,
        cfg.beta,
        cfg.seed,
        &mut rng,
    )?;
    run_from(skeleton, truth, cfg, &mut state, &mut rng).map(|rows| Trajectory {
        strategy: cfg.strategy,
        seed: cfg.seed,
        rows,
        true_solution,
        state,
    })
}

fn run_from(
    skeleton: &Pmc,
    truth: &Instantiation,
    cfg: &LearnConfig,
    state: &mut LearnState,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::with_capacity(cfg.steps + 1);
    let mut warm: Option<Vec<Vec<f64>>> = None;
    for step in 0..=cfg.steps {
        let at_step = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let (prmc, n) = build_learning_prmc(skeleton, state).map_err(at_step)?;
        let opts = SolveOptions {
            cold_lp: false,
            warm_policy: warm.take(),
        };
        let analysis = RobustAnalysis::with_options(&prmc, &n, &opts).map_err(at_step)?;
        let bound = -analysis.solution().sol;
        state.trajectory.push((step, bound));
        let mut row = TrajectoryRow {
            step,
            robust_bound: bound,
            chosen: None,
            fell_back: false,
        };
        if step < cfg.steps {
            let c = choose_parameter(cfg.strategy, state, skeleton, Some(&analysis), rng)
                .map_err(at_step)?;
            let p = truth.values()[c.param];
            let k = draw(rng, p, cfg.batch);
            state.observe(c.param, k, cfg.batch);
            row.chosen = Some(c.param);
            row.fell_back = c.fell_back;
        }
        warm = Some(analysis.solution().policy.clone());
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::models::Pmc;
    use proptest::prelude::*;

    fn at(v: &[f64]) -> Instantiation {
        Instantiation::new(v.to_vec()).unwrap()
    }

    #[test]
    fn interval_at_hundred_samples() {
        let (lo, hi) = hoeffding_interval(0.5, 100, 0.9);
        assert!((lo - 0.377_612_658_465_959_2).abs() < 1e-12);
        assert!((hi - 0.622_387_341_534_040_8).abs() < 1e-12);
        let e = hoeffding_epsilon(100.0, 0.9);
        assert!((hoeffding_epsilon(400.0, 0.9) - e / 2.0).abs() < 1e-15);
        let inf = (2f64.ln() / 200.0).sqrt();
        assert!((hoeffding_epsilon(100.0, 1e-12) - inf).abs() < 1e-12);
        assert_eq!(
            hoeffding_interval(0.0, 1, 0.9),
            (CLIP, hoeffding_interval(0.0, 1, 0.9).1)
        );
    }

    /// Two states: `s0` slips back to itself with probability `v`.
    fn slip_chain() -> Pmc {
        let ps = ParamSet::from_names(["v"]).unwrap();
        let v = Expr::param(ParamId(0));
        Pmc::new(
            ps,
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            &[1],
            vec![vec![(0, v.clone()), (1, Expr::one().sub(&v))], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn learning_prmc_bounds_follow_hoeffding() {
        let sk = slip_chain();
        let st = LearnState::new(vec![100], vec![50], 0.9, 0).unwrap();
        let (m, n) = build_learning_prmc(&sk, &st).unwrap();
        let c = m.instantiate(&n).unwrap();
        let iv = c.polytope(0).unwrap().intervals().unwrap();
        let (lo, hi) = st.interval(0);
        assert!((iv[0].0 - lo).abs() < 1e-12 && (iv[0].1 - hi).abs() < 1e-12);
        // Complement transition carries [1 − hi, 1 − lo].
        assert!((iv[1].0 - (1.0 - hi)).abs() < 1e-12 && (iv[1].1 - (1.0 - lo)).abs() < 1e-12);
        // Upper bound of the slip probability: d/dN (p̂ + ε) = −ε / 2N.
        let poly = m.polytope(0).unwrap();
        let d = poly.b()[0].diff(ParamId(0)).eval(&n).unwrap();
        assert!((d + st.epsilon(0) / 200.0).abs() < 1e-15);
        assert!((d + 6.119e-4).abs() < 1e-7);
        // The worst case slips as much as possible: f⁺ = 1 / (1 − hi).
        let a = RobustAnalysis::new(&m, &n).unwrap();
        assert!((-a.solution().sol - 1.0 / (1.0 - hi)).abs() < 1e-10);
        assert!(a.gradient(ParamId(0)).unwrap() > 0.0);
    }

    #[test]
    fn visits_of_a_self_loop() {
        let sk = slip_chain();
        let mc = sk.instantiate(&at(&[0.5])).unwrap();
        let mu = expected_visits(&mc).unwrap();
        assert!((mu[0] - 2.0).abs() < 1e-12);
        // One absorption per run.
        assert!((mu[0] * 0.5 - 1.0).abs() < 1e-12);
        let imm = Pmc::new(
            ParamSet::new(),
            vec![1.0, 0.0],
            vec![0.0; 2],
            &[1],
            vec![vec![(1, Expr::one())], vec![]],
        )
        .unwrap();
        let mu = expected_visits(&imm.instantiate(&Instantiation::empty()).unwrap()).unwrap();
        assert_eq!(mu, vec![1.0, 0.0]);
    }

    fn two_param_chain() -> Pmc {
        let ps = ParamSet::from_names(["a", "b"]).unwrap();
        let a = Expr::param(ParamId(0));
        let b = Expr::param(ParamId(1));
        let half = Expr::fraction(1, 2);
        Pmc::new(
            ps,
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
            &[2],
            vec![
                vec![
                    (0, a.mul(&half)),
                    (1, half.clone()),
                    (2, half.sub(&a.mul(&half))),
                ],
                vec![(1, b.clone()), (2, Expr::one().sub(&b))],
                vec![],
            ],
        )
        .unwrap()
    }

    #[test]
    fn strategies_without_analysis() {
        let sk = two_param_chain();
        let st = LearnState::new(vec![100, 100], vec![30, 60], 0.9, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = choose_parameter(Strategy::Interval, &st, &sk, None, &mut rng).unwrap();
        assert_eq!(c.param, 0);
        let st2 = LearnState::new(vec![100, 50], vec![30, 30], 0.9, 0).unwrap();
        assert_eq!(widest_interval(&st2), 1);
        let w = visit_weights(&sk, &st).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let draws: Vec<usize> = (0..20)
            .map(|_| {
                choose_parameter(Strategy::Uniform, &st, &sk, None, &mut rng)
                    .unwrap()
                    .param
            })
            .collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        choose_parameter(Strategy::Interval, &st, &sk, None, &mut rng2).unwrap();
        let again: Vec<usize> = (0..20)
            .map(|_| {
                choose_parameter(Strategy::Uniform, &st, &sk, None, &mut rng2)
                    .unwrap()
                    .param
            })
            .collect();
        assert_eq!(draws, again);
        assert!(choose_parameter(Strategy::Derivative, &st, &sk, None, &mut rng).is_err());
    }

    #[test]
    fn runs_are_reproducible_and_shrink_the_bound() {
        let sk = two_param_chain();
        let truth = at(&[0.3, 0.4]);
        for s in Strategy::ALL {
            let cfg = LearnConfig::new(s, 8, 200, 7);
            let t1 = run_learning(&sk, &truth, &cfg).unwrap();
            let t2 = run_learning(&sk, &truth, &cfg).unwrap();
            assert_eq!(t1.rows, t2.rows);
            assert_eq!(t1.to_csv(sk.params()), t2.to_csv(sk.params()));
            assert_eq!(t1.rows.len(), 9);
            assert!(t1.final_bound() < t1.rows[0].robust_bound);
            assert!(t1.final_bound() >= t1.true_solution - 0.5);
        }
        let still = run_learning(
            &sk,
            &truth,
            &LearnConfig::new(Strategy::Derivative, 5, 0, 3),
        )
        .unwrap();
        assert!(still
            .rows
            .iter()
            .all(|r| r.robust_bound == still.rows[0].robust_bound));
    }

    #[test]
    fn warm_started_steps_match_cold_solves() {
        let sk = two_param_chain();
        let truth = at(&[0.3, 0.4]);
        let t = run_learning(&sk, &truth, &LearnConfig::new(Strategy::Uniform, 4, 50, 11)).unwrap();
        let (m, n) = build_learning_prmc(&sk, &t.state).unwrap();
        let cold = crate::prmc::solve_concrete(
            &m.instantiate(&n).unwrap(),
            &SolveOptions {
                cold_lp: true,
                warm_policy: None,
            },
        )
        .unwrap();
        assert!((-cold.sol - t.final_bound()).abs() < 1e-9);
    }

    #[test]
    fn csv_format() {
        assert_eq!(format_sig(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_sig(12.5, 12), "12.5000000000");
        assert_eq!(format_sig(-2.0e-7, 3), "-2.00e-7");
    }

    proptest! {
        #[test]
        fn interval_contains_mean(p in 0.0f64..1.0, n in 1u64..10_000, beta in 0.01f64..0.99) {
            let (lo, hi) = hoeffding_interval(p, n, beta);
            let e = hoeffding_epsilon(n as f64, beta);
            prop_assert!(lo <= hi);
            prop_assert!(p - e <= p && p <= p + e);
            if p - e > CLIP && p + e < 1.0 - CLIP {
                prop_assert!(((hi - lo) - 2.0 * e).abs() < 1e-12);
            }
        }

        #[test]
        fn sample_mean_bookkeeping(obs in proptest::collection::vec((0u64..50, 0u64..50), 1..30)) {
            let mut st = LearnState::new(vec![10], vec![5], 0.9, 0).unwrap();
            let (mut k, mut n) = (5u64, 10u64);
            for (a, b) in obs {
                let (succ, trials) = (a.min(b), a.max(b));
                st.observe(0, succ, trials);
                k += succ;
                n += trials;
            }
            prop_assert!((st.p_hat(0) - k as f64 / n as f64).abs() <= 1e-12);
        }
    }
}
