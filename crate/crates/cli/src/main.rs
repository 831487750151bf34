//! `binfac`: train and audit LeNet-300-100 variants with binary-factorized layers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use binfac::data::Dataset;
use binfac::experiment::{self, ExperimentConfig, TABLE_CONFIGS};
use binfac::metrics::NetworkAudit;
use binfac::report::{format_significant, render_report};
use binfac::{load_checkpoint, sparsity, Network32, ReportFormat};

#[derive(Parser)]
#[command(name = "binfac", version, about = "Binary-factorized MLP experiments on MNIST")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, evaluate and audit one or more layer-mask configurations
    Run {
        #[command(flatten)]
        common: Common,

        /// Layer mask such as 1-0-0; repeatable
        #[arg(long = "config", value_name = "MASK", conflicts_with_all = ["table", "baseline"])]
        configs: Vec<String>,

        /// Run every configuration of the study table
        #[arg(long)]
        table: bool,

        /// Force the all-dense network
        #[arg(long)]
        baseline: bool,

        /// Inner ranks, one per factorized matrix (or one per weight matrix)
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
    },

    /// Train one configuration per common dimension r, applied as min(r, n) to every factorized layer
    Sweep {
        #[command(flatten)]
        common: Common,

        #[arg(long = "config", value_name = "MASK", default_value = "1-1-1")]
        config: String,

        /// Common dimensions to sweep
        #[arg(long, value_delimiter = ',', required = true)]
        ranks: Vec<usize>,
    },

    /// Print parameter, memory and FLOP counts without training
    Audit {
        /// Layer mask such as 1-0-0; repeatable
        #[arg(long = "config", value_name = "MASK", conflicts_with = "checkpoint")]
        configs: Vec<String>,

        #[arg(long, value_delimiter = ',', conflicts_with = "checkpoint")]
        ranks: Option<Vec<usize>>,

        /// Audit a saved network instead
        #[arg(long)]
        checkpoint: Option<PathBuf>,

        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,

        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 300)]
    epochs: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 100)]
    batch_size: usize,

    /// Initial Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    /// Peak L1 penalty weight on the real factors
    #[arg(long, default_value_t = 1.0)]
    lambda0: f64,

    /// Skip the least-squares refit of A when the sign factors are frozen
    #[arg(long)]
    no_refit: bool,

    /// Directory holding the MNIST IDX files
    #[arg(long, env = "BINFAC_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Use only the first N training images
    #[arg(long, value_name = "N")]
    train_limit: Option<usize>,

    /// Use only the first N test images
    #[arg(long, value_name = "N")]
    test_limit: Option<usize>,

    /// Report path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Where to write checkpoints; defaults to the report's directory
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,

    /// Configurations trained concurrently
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Markdown => ReportFormat::Markdown,
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, configs, table, baseline, ranks } => {
            let labels: Vec<String> = if baseline {
                vec!["0-0-0".into()]
            } else if table {
                TABLE_CONFIGS.iter().map(|s| s.to_string()).collect()
            } else if configs.is_empty() {
                bail!("give at least one --config, or --table, or --baseline");
            } else {
                configs
            };
            let cfgs = labels
                .iter()
                .map(|label| {
                    let mut cfg = common.experiment(label)?;
                    cfg.inner_ranks = ranks.clone();
                    cfg.spec().with_context(|| format!("configuration {label}"))?;
                    cfg.checkpoint = common.checkpoint_path(label);
                    Ok(cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            train_and_report(&common, &cfgs)
        }
        Command::Sweep { common, config, ranks } => {
            let base = common.experiment(&config)?;
            let mut cfgs = experiment::rank_sweep(&base, &ranks)?;
            for (cfg, r) in cfgs.iter_mut().zip(&ranks) {
                cfg.checkpoint = common.checkpoint_path(&format!("{config}-r{r}"));
            }
            train_and_report(&common, &cfgs)
        }
        Command::Audit { configs, ranks, checkpoint, format, out } => {
            let rows = match checkpoint {
                Some(path) => {
                    let net: Network32 = load_checkpoint(&path)
                        .with_context(|| format!("loading checkpoint {}", path.display()))?;
                    let label = experiment::mask_label(net.spec().factorize_mask());
                    vec![AuditRow::new(label, NetworkAudit::of_network(&net), Some(sparsity(&net, 0.0)?))]
                }
                None => {
                    let labels = if configs.is_empty() {
                        std::iter::once("0-0-0").chain(TABLE_CONFIGS).map(String::from).collect()
                    } else {
                        configs
                    };
                    labels
                        .into_iter()
                        .map(|label| {
                            let mut cfg = ExperimentConfig::new(&label, 300, "");
                            cfg.inner_ranks = ranks.clone();
                            let spec = cfg.spec().with_context(|| format!("configuration {label}"))?;
                            Ok(AuditRow::new(label, NetworkAudit::of_spec(&spec), None))
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            write_output(out.as_deref(), &render_audit(&rows, format.into()))
        }
    }
}

impl Common {
    fn experiment(&self, label: &str) -> Result<ExperimentConfig> {
        let data_dir = self.data_dir.clone().unwrap_or_default();
        let mut cfg = ExperimentConfig::new(label, self.epochs, data_dir);
        cfg.train.seed = self.seed;
        cfg.train.batch_size = self.batch_size;
        cfg.train.lr0 = self.lr;
        cfg.train.lambda0 = self.lambda0;
        cfg.train.refit_on_binarize = !self.no_refit;
        cfg.train.validate()?;
        cfg.spec().with_context(|| format!("configuration {label}"))?;
        Ok(cfg)
    }

    fn checkpoint_path(&self, label: &str) -> Option<PathBuf> {
        let dir = match (&self.checkpoint_dir, &self.out) {
            (Some(dir), _) => dir.clone(),
            (None, Some(out)) => out.parent().map(Path::to_path_buf).unwrap_or_default(),
            (None, None) => return None,
        };
        Some(dir.join(format!("{label}.bmf")))
    }

    fn datasets(&self) -> Result<(Dataset<f32>, Dataset<f32>)> {
        let Some(dir) = &self.data_dir else {
            bail!("no MNIST directory: pass --data-dir or set BINFAC_DATA_DIR");
        };
        let (mut train, mut test) = experiment::load_mnist(dir)
            .with_context(|| format!("loading MNIST from {}", dir.display()))?;
        if let Some(n) = self.train_limit {
            train = train.take(n);
        }
        if let Some(n) = self.test_limit {
            test = test.take(n);
        }
        info!("{} training and {} test images", train.len(), test.len());
        Ok((train, test))
    }
}

fn train_and_report(common: &Common, cfgs: &[ExperimentConfig]) -> Result<()> {
    if let Some(dir) = &common.checkpoint_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let (train, test) = common.datasets()?;
    let outcomes = experiment::run_all(cfgs, &train, &test, common.threads)?;
    let rows: Vec<_> = outcomes.into_iter().map(|o| o.report).collect();
    write_output(common.out.as_deref(), &render_report(&rows, common.format.into())?)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

struct AuditRow {
    label: String,
    audit: NetworkAudit,
    sparsity: Option<f64>,
}

impl AuditRow {
    fn new(label: String, audit: NetworkAudit, sparsity: Option<f64>) -> Self {
        Self { label, audit, sparsity }
    }
}

fn render_audit(rows: &[AuditRow], format: ReportFormat) -> String {
    let header = ["config", "real_params", "binary_params", "memory_bits", "flop_equivalents", "sparsity"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            let (real, binary) = r.audit.params();
            [
                r.label.clone(),
                real.to_string(),
                binary.to_string(),
                r.audit.memory_bits().to_string(),
                format_significant(r.audit.flop_equivalents(), 6),
                r.sparsity.map_or(String::new(), |s| format_significant(s, 6)),
            ]
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for c in &cells {
                out.push_str(&c.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str("|---|---:|---:|---:|---:|---:|\n");
            for c in &cells {
                out.push_str(&format!("| {} |\n", c.join(" | ")));
            }
        }
    }
    out
}
