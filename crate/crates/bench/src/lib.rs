//! Shared fixtures for the benchmarks.

use prmc_core::benchgen::{gridworld, gridworld_prmc, GridSpec};
use prmc_core::{Instantiation, Pmc, Prmc};

/// Square-ish grid with `states` cells and `terrains` slip parameters.
pub fn spec(states: usize, terrains: usize) -> GridSpec {
    let rows = (states as f64).sqrt().round().max(2.0) as usize;
    let cols = states.div_ceil(rows).max(2);
    GridSpec::new(rows, cols, terrains, 17)
}

pub fn grid_pmc(states: usize, terrains: usize) -> (Pmc, Instantiation) {
    let g = gridworld(&spec(states, terrains), 3).expect("valid grid");
    (g.pmc().expect("valid pmc"), g.true_instantiation())
}

pub fn grid_prmc(states: usize, terrains: usize) -> (Prmc, Instantiation) {
    gridworld_prmc(&spec(states, terrains), 3).expect("valid prmc")
}
