use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gazenet::graph::{CollapsePolicy, PiSource};
use gazenet::pipeline::{self, KSetting, PipelineConfig, StageReport};
use gazenet::tsc::NormalizeMode;
use gazenet::{Error, ErrorKind};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "gazenet",
    version,
    about = "Gaze transition networks, trajectory clustering and mixed models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-trial network metrics (metrics.csv)
    Metrics(Opts),
    /// DTW k-means of per-participant metric trajectories
    Cluster(Opts),
    /// One-way ANOVA of scores across clusters
    Anova(Opts),
    /// REML mixed model of scores on network metrics
    Lmm(Opts),
    /// Synthetic cohort with ground truth
    Synth(Opts),
    /// Metrics, clustering, ANOVA and mixed model in one run
    Pipeline(Opts),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PiArg {
    Counts,
    Durations,
}

#[derive(Args, Debug)]
struct Opts {
    /// Fixation log CSV
    #[arg(long)]
    fixations: Option<PathBuf>,
    /// Trial outcomes CSV
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// TOML configuration file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core)
    #[arg(long)]
    jobs: Option<usize>,
    /// Keep repeated fixations on one AOI as self-loops
    #[arg(long)]
    keep_self_loops: bool,
    /// Weights of the stationary distribution
    #[arg(long, value_enum)]
    pi_source: Option<PiArg>,
    /// Number of clusters, or `auto` to choose by silhouette
    #[arg(long, value_parser = parse_k)]
    k: Option<KSetting>,
    #[arg(long, value_parser = parse_normalize)]
    normalize: Option<NormalizeMode>,
    /// Fixed-effect predictor left out of the mixed model (repeatable)
    #[arg(long = "drop-predictor")]
    drop_predictor: Vec<String>,
}

fn parse_k(s: &str) -> Result<KSetting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_normalize(s: &str) -> Result<NormalizeMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Opts {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.fixations {
            cfg.input.fixations = Some(p.clone());
        }
        if let Some(p) = &self.outcomes {
            cfg.input.outcomes = Some(p.clone());
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if self.keep_self_loops {
            cfg.network.collapse_policy = CollapsePolicy::KeepSelfLoops;
        }
        if let Some(p) = self.pi_source {
            cfg.network.pi_source = match p {
                PiArg::Counts => PiSource::Counts,
                PiArg::Durations => PiSource::Durations,
            };
        }
        if let Some(k) = self.k {
            cfg.clustering.k = k;
        }
        if let Some(n) = self.normalize {
            cfg.clustering.normalize = n;
        }
        if !self.drop_predictor.is_empty() {
            cfg.lmm.drop_predictors = self.drop_predictor.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<StageReport, Error> {
    let (stage, opts): (fn(&PipelineConfig) -> gazenet::Result<StageReport>, Opts) = match command {
        Command::Metrics(o) => (pipeline::cmd_metrics, o),
        Command::Cluster(o) => (pipeline::cmd_cluster, o),
        Command::Anova(o) => (pipeline::cmd_anova, o),
        Command::Lmm(o) => (pipeline::cmd_lmm, o),
        Command::Synth(o) => (pipeline::cmd_synth, o),
        Command::Pipeline(o) => (pipeline::cmd_pipeline, o),
    };
    stage(&opts.config()?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("note: {note}");
            }
            for path in &report.written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Numerical => EXIT_NUMERICAL,
                ErrorKind::Data => EXIT_DATA,
            })
        }
    }
}
