//! Data-parallel helpers. With the `parallel` feature the batch functions
//! fan out over rayon's pool; without it they run in order. Results always
//! come back in input order, so output is identical either way.

use crate::flow::{run_scenario, Scenario, ScenarioError, ScenarioReport};

/// Applies `f` to every item, in parallel when the feature is enabled.
#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

/// Applies `f` to every item on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Whether [`map`] runs on a thread pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Runs every scenario on its own fresh state.
pub fn run_all(scenarios: &[Scenario], seed: Option<u64>) -> Vec<Result<ScenarioReport, ScenarioError>> {
    map(scenarios, |s| run_scenario(s, seed))
}

/// [`run_all`] on the calling thread.
pub fn run_all_sequential(scenarios: &[Scenario], seed: Option<u64>) -> Vec<Result<ScenarioReport, ScenarioError>> {
    map_sequential(scenarios, |s| run_scenario(s, seed))
}
