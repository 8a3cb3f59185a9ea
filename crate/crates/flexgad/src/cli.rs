//! Subcommands of the `flexgad` binary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flexgad_core::community::modularity;
use flexgad_core::model::{forward_inputs, ModelInputs};
use flexgad_core::scoring::RunMeta;
use flexgad_core::synthetic::{inject_anomalies, InjectionConfig};
use flexgad_core::train::train;
use flexgad_core::{AnomalyReport, CommunityAlgorithm};
use serde::Serialize;

use crate::checkpoint;
use crate::config::{Overrides, RunConfig};
use crate::convert::{self, ConvertReport};
use crate::formats::{self, FeatureFormat};
use crate::output::Staged;
use crate::report::{self, CommunitySummary, JsonlLog};
use crate::runner::{self, WallClock};

pub const REPORT_FILE: &str = "report.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const TAPE_FILE: &str = "tape.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const COMMUNITIES_FILE: &str = "communities.csv";
pub const COMMUNITY_SUMMARY_FILE: &str = "communities.json";
pub const INJECTION_FILE: &str = "injection.json";
pub const CONVERT_FILE: &str = "convert.json";

#[derive(Debug, Parser)]
#[command(name = "flexgad", version, about = "Community-aware graph anomaly detection")]
pub struct Cli {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true, value_name = "INT")]
    pub seed: Option<u64>,
    /// Worker threads for `experiment`.
    #[arg(long, global = true, value_name = "INT")]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    #[arg(long, value_name = "PATH")]
    pub edges: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub features: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Algo {
    Louvain,
    #[value(alias = "label-propagation")]
    Labelprop,
}

impl From<Algo> for CommunityAlgorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Louvain => CommunityAlgorithm::Louvain,
            Algo::Labelprop => CommunityAlgorithm::Labelprop,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutFormat {
    Csv,
    Binary,
}

impl From<OutFormat> for FeatureFormat {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => FeatureFormat::Csv,
            OutFormat::Binary => FeatureFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DumpKind {
    /// `<name>.content` and `<name>.cites`.
    Linqs,
    Graphml,
    /// Directory with `x.npy`, `edge_index.npy` and optional `y.npy`.
    Npy,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on one graph and write the anomaly report and ranked scores.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        /// Also write the operation tape of the final forward pass.
        #[arg(long)]
        dump_tape: bool,
        /// Write the trained parameters to this file name in the output directory.
        #[arg(long, value_name = "NAME")]
        checkpoint: Option<String>,
        /// Score with saved parameters instead of training.
        #[arg(long, value_name = "PATH")]
        load_checkpoint: Option<PathBuf>,
    },
    /// Repeated training under derived seeds; reports mean, std and best AUC.
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Print the feature homophily ratio.
    Homophily {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Detect communities and write the assignment with its modularity.
    Communities {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum)]
        algo: Option<Algo>,
    },
    /// Plant structural and contextual anomalies and write the labeled graph.
    Inject {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        structural: Option<usize>,
        #[arg(long)]
        contextual: Option<usize>,
        #[arg(long)]
        clique_size: Option<usize>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
    /// Convert a benchmark dump to the native formats.
    Convert {
        #[arg(value_enum)]
        from: DumpKind,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// GraphML attribute holding the anomaly label.
        #[arg(long, default_value = "anomaly")]
        label_key: String,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
}

impl Cli {
    fn config(&self, data: Option<&DataArgs>) -> anyhow::Result<RunConfig> {
        let d = data.cloned().unwrap_or_default();
        let o = Overrides {
            seed: self.seed,
            jobs: self.jobs,
            output: self.output.clone(),
            edges: d.edges,
            features: d.features,
            labels: d.labels,
        };
        Ok(RunConfig::load(self.config.as_deref(), &o)?)
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Detect {
            data,
            dump_tape,
            checkpoint,
            load_checkpoint,
        } => {
            let mut cfg = cli.config(Some(data))?;
            if let Some(name) = checkpoint {
                cfg.train.checkpoint_path = Some(name.clone());
            }
            cfg.validate()?;
            if let Some(p) = load_checkpoint {
                if !p.is_file() {
                    bail!("checkpoint {} not found", p.display());
                }
            }
            detect(&cfg, *dump_tape, load_checkpoint.as_deref())
        }
        Command::Experiment { data, runs } => {
            let mut cfg = cli.config(Some(data))?;
            if let Some(r) = runs {
                cfg.experiment.runs = *r;
            }
            cfg.validate()?;
            experiment(&cfg)
        }
        Command::Homophily { data } => {
            let cfg = cli.config(Some(data))?;
            cfg.validate()?;
            let (g, _) = cfg.graph()?;
            let h = g.homophily_ratio()?;
            println!("{h}");
            Ok(())
        }
        Command::Communities { data, algo } => {
            let mut cfg = cli.config(Some(data))?;
            if let Some(a) = algo {
                cfg.train.community = (*a).into();
            }
            cfg.validate()?;
            communities(&cfg)
        }
        Command::Inject {
            data,
            structural,
            contextual,
            clique_size,
            candidates,
            format,
        } => {
            let mut cfg = cli.config(Some(data))?;
            let mut ic = cfg.injection.take().unwrap_or_default();
            ic.n_structural = structural.unwrap_or(ic.n_structural);
            ic.n_contextual = contextual.unwrap_or(ic.n_contextual);
            ic.clique_size = clique_size.unwrap_or(ic.clique_size);
            ic.swap_candidates = candidates.unwrap_or(ic.swap_candidates);
            if let Some(s) = cfg.seed {
                ic.seed = s;
            }
            if let Some(f) = format {
                cfg.output.feature_format = (*f).into();
            }
            cfg.validate()?;
            inject(&cfg, &ic)
        }
        Command::Convert {
            from,
            inputs,
            label_key,
            format,
        } => {
            let mut cfg = cli.config(None)?;
            if let Some(f) = format {
                cfg.output.feature_format = (*f).into();
            }
            convert_dump(&cfg, *from, inputs, label_key)
        }
    }
}

fn detect(cfg: &RunConfig, dump_tape: bool, load: Option<&Path>) -> anyhow::Result<()> {
    let (g, _) = cfg.graph()?;
    let mut out = Staged::new(&cfg.output.dir)?;
    let (report, params, model_cfg, communities) = match load {
        Some(p) => {
            let (header, params) = checkpoint::load(p)?;
            if header.num_features != g.num_features() {
                bail!(
                    "checkpoint {} expects {} features, graph has {}",
                    p.display(),
                    header.num_features,
                    g.num_features()
                );
            }
            let communities = cfg.train.community.detect(&g, cfg.train.seed);
            let inputs = ModelInputs::new(&g, &communities)?;
            let fo = forward_inputs(&inputs, &header.config, &params)?;
            let meta = RunMeta {
                seed: header.seed,
                model: header.config.clone(),
                train: cfg.train.clone(),
                epochs_run: 0,
                total_seconds: 0.0,
                mean_epoch_seconds: 0.0,
                sigma_clamps: fo.sigma_clamps,
            };
            let report = AnomalyReport::from_output(&fo, g.labels(), meta)?;
            (report, params, header.config, communities)
        }
        None => {
            let mut log = JsonlLog::create(&out.file(LOG_FILE))?;
            let outcome = train(&g, &cfg.model, &cfg.train, &mut WallClock::default(), &mut |r| {
                log::debug!("epoch {} loss {}", r.epoch, r.total_loss);
                log.record(r)
            })?;
            log.finish()?;
            let report = outcome.report(&g, &cfg.model, &cfg.train)?;
            (report, outcome.params, cfg.model.clone(), outcome.communities)
        }
    };
    report::write_json(&out.file(REPORT_FILE), &report)?;
    report::write_scores_csv(&out.file(SCORES_FILE), &report, g.labels())?;
    if let Some(name) = &cfg.train.checkpoint_path {
        checkpoint::save(&out.file(name), &params, &model_cfg, g.num_features())?;
    }
    if dump_tape {
        let inputs = ModelInputs::new(&g, &communities)?;
        let dump = report::tape_dump(&inputs, &model_cfg, &params)?;
        report::write_json(&out.file(TAPE_FILE), &dump)?;
    }
    let dir = out.dir().to_path_buf();
    out.commit()?;
    match report.auc {
        Some(a) => println!("AUC {a:.4}; results in {}", dir.display()),
        None => println!("results in {}", dir.display()),
    }
    Ok(())
}

fn experiment(cfg: &RunConfig) -> anyhow::Result<()> {
    let (g, _) = cfg.graph()?;
    if g.labels().is_none() {
        bail!("experiment needs anomaly labels (set data.labels or [injection])");
    }
    let mut out = Staged::new(&cfg.output.dir)?;
    let summary = runner::experiment(
        &g,
        &cfg.model,
        &cfg.train,
        cfg.root_seed(),
        cfg.experiment.runs,
        cfg.experiment.jobs,
    )?;
    report::write_json(&out.file(SUMMARY_FILE), &summary)?;
    out.commit()?;
    println!("{}", report::summary_line(&summary));
    Ok(())
}

fn communities(cfg: &RunConfig) -> anyhow::Result<()> {
    let (g, _) = cfg.graph()?;
    let algorithm = cfg.train.community;
    let seed = cfg.root_seed();
    let a = algorithm.detect(&g, seed);
    let summary = CommunitySummary {
        algorithm,
        seed,
        num_nodes: g.num_nodes(),
        num_communities: a.num_communities(),
        modularity: (g.num_edges() > 0).then(|| modularity(&g, &a)).transpose()?,
        sizes: a.sizes(),
    };
    let mut out = Staged::new(&cfg.output.dir)?;
    report::write_communities_csv(&out.file(COMMUNITIES_FILE), &a)?;
    report::write_json(&out.file(COMMUNITY_SUMMARY_FILE), &summary)?;
    out.commit()?;
    match summary.modularity {
        Some(q) => println!("K={} modularity={q}", summary.num_communities),
        None => println!("K={}", summary.num_communities),
    }
    Ok(())
}

#[derive(Serialize)]
struct InjectionSummary<'a> {
    config: &'a InjectionConfig,
    num_nodes: usize,
    num_anomalies: usize,
    anomaly_ratio: f64,
    undirected_edges: usize,
}

fn inject(cfg: &RunConfig, ic: &InjectionConfig) -> anyhow::Result<()> {
    let (g, _) = cfg.source_graph()?;
    let injected = inject_anomalies(&g, ic).context("injection failed")?;
    let labels = injected.labels().expect("injection labels every node");
    let num_anomalies = labels.iter().filter(|&&l| l == 1).count();
    let summary = InjectionSummary {
        config: ic,
        num_nodes: injected.num_nodes(),
        num_anomalies,
        anomaly_ratio: num_anomalies as f64 / injected.num_nodes() as f64,
        undirected_edges: injected.num_edges(),
    };
    let mut out = Staged::new(&cfg.output.dir)?;
    let format = cfg.output.feature_format;
    formats::write_edges(&out.file(formats::EDGES_FILE), injected.edges())?;
    formats::write_features(&out.file(format.file_name()), injected.features(), format)?;
    formats::write_labels(&out.file(formats::LABELS_FILE), labels)?;
    report::write_json(&out.file(INJECTION_FILE), &summary)?;
    out.commit()?;
    println!(
        "{} anomalies on {} nodes ({:.2}%)",
        num_anomalies,
        summary.num_nodes,
        100.0 * summary.anomaly_ratio
    );
    Ok(())
}

fn convert_dump(cfg: &RunConfig, from: DumpKind, inputs: &[PathBuf], label_key: &str) -> anyhow::Result<()> {
    let (g, report): (_, ConvertReport) = match (from, inputs) {
        (DumpKind::Linqs, [content, cites]) => convert::linqs(content, cites)?,
        (DumpKind::Linqs, _) => bail!("linqs needs two inputs: <name>.content <name>.cites"),
        (DumpKind::Graphml, [p]) => convert::graphml(p, label_key)?,
        (DumpKind::Npy, [dir]) => convert::npy_dir(dir)?,
        (_, _) => bail!("expected exactly one input path"),
    };
    let mut out = Staged::new(&cfg.output.dir)?;
    let format = cfg.output.feature_format;
    formats::write_edges(&out.file(formats::EDGES_FILE), g.edges())?;
    formats::write_features(&out.file(format.file_name()), g.features(), format)?;
    if let Some(l) = g.labels() {
        formats::write_labels(&out.file(formats::LABELS_FILE), l)?;
    }
    report::write_json(&out.file(CONVERT_FILE), &report)?;
    out.commit()?;
    println!(
        "{} nodes, {} features, {} undirected edges ({} directed)",
        report.num_nodes, report.num_features, report.undirected_edges, report.directed_edges
    );
    Ok(())
}
