//! Wall-clock timing and parallel multi-seed experiments.

use std::time::Instant;

use flexgad_core::train::{self, Clock};
use flexgad_core::{AnomalyReport, AttributedGraph, ExperimentSummary, ModelConfig, TrainConfig};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Runs `run` for every seed on up to `jobs` threads. Results keep the
/// order of `seeds` regardless of completion order.
pub fn run_parallel<F>(seeds: &[u64], jobs: usize, run: F) -> anyhow::Result<ExperimentSummary>
where
    F: Fn(u64) -> flexgad_core::Result<AnomalyReport> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let runs = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run(s))
            .collect::<flexgad_core::Result<Vec<_>>>()
    })?;
    Ok(ExperimentSummary::from_runs(runs)?)
}

/// `n_runs` independent trainings of `g`, seeds derived from `root`.
pub fn experiment(
    g: &AttributedGraph,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    root: u64,
    n_runs: usize,
    jobs: usize,
) -> anyhow::Result<ExperimentSummary> {
    let seeds = train::run_seeds(root, n_runs);
    run_parallel(&seeds, jobs, |s| {
        let r = train::single_run(g, cfg, tcfg, s, &mut WallClock::default());
        if let Ok(rep) = &r {
            log::info!("seed {s}: AUC {:?}", rep.auc);
        }
        r
    })
}
