//! Training loop, optimizers, multi-seed experiments and grid search.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::community::{CommunityAlgorithm, CommunityAssignment};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::matrix::Matrix;
use crate::model::{self, ForwardOutput, ModelConfig, ModelInputs, ModelParams};
use crate::scoring::{AnomalyReport, ExperimentSummary, RunMeta};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
    pub seed: u64,
    pub community: CommunityAlgorithm,
    pub checkpoint_path: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 5e-3,
            optimizer: Optimizer::default(),
            weight_decay: 0.0,
            seed: 0,
            community: CommunityAlgorithm::default(),
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be finite and non-negative".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            let unit = |b: f64| (0.0..1.0).contains(&b);
            if !(unit(beta1) && unit(beta2) && eps > 0.0) {
                return Err(Error::InvalidConfig(
                    "adam needs betas in [0, 1) and a positive eps".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    /// Sums over nodes of the two per-node loss components.
    pub feat_loss: f64,
    pub h_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            0.0
        } else {
            self.total_seconds() / self.epochs.len() as f64
        }
    }
}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

/// Deterministic clock advancing a fixed step per reading.
#[derive(Debug, Clone, Default)]
pub struct TickClock {
    pub elapsed: f64,
    pub tick: f64,
}

impl TickClock {
    pub fn new(tick: f64) -> Self {
        Self { elapsed: 0.0, tick }
    }
}

impl Clock for TickClock {
    fn now(&mut self) -> f64 {
        self.elapsed += self.tick;
        self.elapsed
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone)]
struct OptimizerState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: i32,
}

impl OptimizerState {
    fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Matrix> = params
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn apply(&mut self, cfg: &TrainConfig, params: &mut ModelParams, grads: &[Matrix]) {
        self.step += 1;
        for (i, p) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[i].as_slice();
            let p = p.as_mut_slice();
            match cfg.optimizer {
                Optimizer::Sgd => sgd_update(p, g, cfg.learning_rate, cfg.weight_decay),
                Optimizer::Adam { beta1, beta2, eps } => adam_update(
                    p,
                    g,
                    self.m[i].as_mut_slice(),
                    self.v[i].as_mut_slice(),
                    AdamStep {
                        step: self.step,
                        lr: cfg.learning_rate,
                        weight_decay: cfg.weight_decay,
                        beta1,
                        beta2,
                        eps,
                    },
                ),
            }
        }
    }
}

/// `p -= lr (g + wd p)`.
pub fn sgd_update(p: &mut [f64], g: &[f64], lr: f64, weight_decay: f64) {
    for (w, &gi) in p.iter_mut().zip(g) {
        *w -= lr * (gi + weight_decay * *w);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamStep {
    /// 1-based step count, for bias correction.
    pub step: i32,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One Adam update with L2 weight decay folded into the gradient.
pub fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], s: AdamStep) {
    let bc1 = 1.0 - libm::pow(s.beta1, s.step as f64);
    let bc2 = 1.0 - libm::pow(s.beta2, s.step as f64);
    for j in 0..p.len() {
        let gj = g[j] + s.weight_decay * p[j];
        m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * gj;
        v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * gj * gj;
        let m_hat = m[j] / bc1;
        let v_hat = v[j] / bc2;
        p[j] -= s.lr * m_hat / (libm::sqrt(v_hat) + s.eps);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    /// Forward pass with the final parameters; source of scores and
    /// attention weights.
    pub final_output: ForwardOutput,
    pub communities: CommunityAssignment,
}

impl TrainOutcome {
    pub fn report(&self, g: &AttributedGraph, cfg: &ModelConfig, tcfg: &TrainConfig) -> Result<AnomalyReport> {
        let meta = RunMeta {
            seed: tcfg.seed,
            model: cfg.clone(),
            train: tcfg.clone(),
            epochs_run: self.history.epochs.len(),
            total_seconds: self.history.total_seconds(),
            mean_epoch_seconds: self.history.mean_epoch_seconds(),
            sigma_clamps: self.final_output.sigma_clamps,
        };
        AnomalyReport::from_output(&self.final_output, g.labels(), meta)
    }
}

fn all_finite(ms: &[Matrix]) -> bool {
    ms.iter().all(Matrix::is_finite)
}

/// Detects communities once, then trains.
pub fn train(
    g: &AttributedGraph,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    clock: &mut dyn Clock,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let communities = tcfg.community.detect(g, tcfg.seed);
    train_with_communities(g, communities, cfg, tcfg, clock, on_epoch)
}

/// Full-batch training for `tcfg.epochs` epochs on a fixed partition.
pub fn train_with_communities(
    g: &AttributedGraph,
    communities: CommunityAssignment,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    clock: &mut dyn Clock,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tcfg.validate()?;
    let inputs = ModelInputs::new(g, &communities)?;
    let mut params = ModelParams::init(g.num_features(), cfg);
    let mut state = OptimizerState::new(&params);
    let mut history = TrainHistory::default();
    for epoch in 0..tcfg.epochs {
        let start = clock.now();
        let (out, grads) = match model::forward_backward(&inputs, cfg, &params) {
            Ok(r) => r,
            Err(Error::NonFinite { .. }) => {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    param_norms: params.norms(),
                })
            }
            Err(e) => return Err(e),
        };
        if !out.total_loss.is_finite() || !all_finite(&grads) {
            return Err(Error::NonFiniteLoss {
                epoch,
                param_norms: params.norms(),
            });
        }
        state.apply(tcfg, &mut params, &grads);
        let record = EpochRecord {
            epoch,
            total_loss: out.total_loss,
            feat_loss: out.feature_loss.iter().sum(),
            h_loss: out.h_loss.iter().sum(),
            seconds: clock.now() - start,
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    let final_output = model::forward_inputs(&inputs, cfg, &params)?;
    if !final_output.total_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: tcfg.epochs,
            param_norms: params.norms(),
        });
    }
    Ok(TrainOutcome {
        params,
        history,
        final_output,
        communities,
    })
}

/// Per-run seeds derived from one root seed.
pub fn run_seeds(root: u64, n_runs: usize) -> Vec<u64> {
    (0..n_runs as u64)
        .map(|i| seed::derive(root, Stream::Run, i))
        .collect()
}

/// One trained-and-scored run per seed. `run` is injected so callers can
/// parallelize or attach logging.
pub fn run_experiment<F>(seeds: &[u64], mut run: F) -> Result<ExperimentSummary>
where
    F: FnMut(u64) -> Result<AnomalyReport>,
{
    let runs = seeds.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    ExperimentSummary::from_runs(runs)
}

/// Trains and scores `g` once with both configs reseeded to `seed`.
pub fn single_run(
    g: &AttributedGraph,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    seed: u64,
    clock: &mut dyn Clock,
) -> Result<AnomalyReport> {
    let cfg = ModelConfig { seed, ..cfg.clone() };
    let tcfg = TrainConfig {
        seed,
        ..tcfg.clone()
    };
    let outcome = train(g, &cfg, &tcfg, clock, &mut |_| {})?;
    outcome.report(g, &cfg, &tcfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchGrid {
    pub lambda_x: Vec<f64>,
    pub lambda_n: Vec<f64>,
    pub hidden_dim: Vec<usize>,
}

impl Default for SearchGrid {
    fn default() -> Self {
        Self {
            lambda_x: alloc::vec![0.5, 1.0],
            lambda_n: alloc::vec![0.1, 0.5, 1.0],
            hidden_dim: alloc::vec![16, 32],
        }
    }
}

impl SearchGrid {
    pub fn configs(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &lambda_x in &self.lambda_x {
            for &lambda_n in &self.lambda_n {
                for &hidden_dim in &self.hidden_dim {
                    out.push(ModelConfig {
                        lambda_x,
                        lambda_n,
                        hidden_dim,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub config: ModelConfig,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub trials: Vec<GridTrial>,
    pub best: ModelConfig,
    /// Evaluation of `best` on seeds disjoint from the search seeds.
    pub evaluation: ExperimentSummary,
}

/// Picks the grid point with the best mean AUC over `search_seeds`, then
/// re-runs it on `eval_seeds`. Ties keep the earlier grid point.
pub fn grid_search<F>(
    grid: &SearchGrid,
    base: &ModelConfig,
    search_seeds: &[u64],
    eval_seeds: &[u64],
    mut run: F,
) -> Result<GridResult>
where
    F: FnMut(&ModelConfig, u64) -> Result<AnomalyReport>,
{
    if search_seeds.iter().any(|s| eval_seeds.contains(s)) {
        return Err(Error::InvalidConfig(
            "search and evaluation seeds must be disjoint".into(),
        ));
    }
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::InvalidConfig("empty search grid".into()));
    }
    let mut trials = Vec::with_capacity(configs.len());
    for cfg in configs {
        let summary = run_experiment(search_seeds, |s| run(&cfg, s))?;
        trials.push(GridTrial {
            config: cfg,
            mean_auc: summary.mean_auc,
        });
    }
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.mean_auc > trials[best].mean_auc {
            best = i;
        }
    }
    let best_cfg = trials[best].config.clone();
    let evaluation = run_experiment(eval_seeds, |s| run(&best_cfg, s)).map_err(|e| match e {
        Error::InvalidConfig(m) => Error::InvalidConfig(format!("evaluation: {m}")),
        e => e,
    })?;
    Ok(GridResult {
        trials,
        best: best_cfg,
        evaluation,
    })
}
