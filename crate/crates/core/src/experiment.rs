//! LeNet-300-100 experiments: mask parsing, train-evaluate-audit runs and rank sweeps.

use std::path::{Path, PathBuf};
use std::thread;

use log::info;

use crate::checkpoint::save_checkpoint;
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::ResourceReport;
use crate::nn::{train, History, Network, NetworkSpec, TrainConfig, LENET_300_100};
use crate::tensor::Scalar;

/// Layer masks of the configuration study, in table order.
pub const TABLE_CONFIGS: [&str; 7] = ["1-1-1", "1-1-0", "1-0-1", "0-1-1", "0-1-0", "0-0-1", "1-0-0"];

/// `"1-0-0"` → `[true, false, false]`.
pub fn parse_config_mask(label: &str, num_layers: usize) -> Result<Vec<bool>> {
    let mask = label
        .split('-')
        .map(|tok| match tok.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::Config(format!("mask token {other:?} in {label:?} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if mask.len() != num_layers {
        return Err(Error::Config(format!(
            "mask {label:?} has {} entries, network has {num_layers} weight matrices",
            mask.len()
        )));
    }
    Ok(mask)
}

pub fn mask_label(mask: &[bool]) -> String {
    mask.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join("-")
}

/// One LeNet-300-100 run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mask_label: String,
    /// Name of the report row.
    pub label: String,
    /// One rank per factorized matrix or per weight matrix; `None` for defaults.
    pub inner_ranks: Option<Vec<usize>>,
    pub train: TrainConfig,
    pub data_dir: PathBuf,
    /// Where to write the trained network, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(mask_label: &str, epochs: usize, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            mask_label: mask_label.to_string(),
            label: mask_label.to_string(),
            inner_ranks: None,
            train: TrainConfig::new(epochs),
            data_dir: data_dir.into(),
            checkpoint: None,
        }
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        let mask = parse_config_mask(&self.mask_label, LENET_300_100.len() - 1)?;
        NetworkSpec::lenet_300_100(mask, self.inner_ranks.as_deref())
    }
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ResourceReport,
    pub network: Network<f32>,
    pub history: History,
}

/// Loads the standard training and test splits from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset<f32>, Dataset<f32>)> {
    let train = Dataset::load_mnist(dir, Split::Train)?;
    let test = Dataset::load_mnist(dir, Split::Test)?;
    Ok((train, test))
}

/// Loads MNIST from `cfg.data_dir` and runs [`run_on_datasets`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.spec()?;
    let (train_set, test_set) = load_mnist(&cfg.data_dir)?;
    run_on_datasets(cfg, &train_set, &test_set)
}

/// Trains on `train_set`, reports the error on `test_set` and writes the checkpoint.
pub fn run_on_datasets<T: Scalar>(
    cfg: &ExperimentConfig,
    train_set: &Dataset<T>,
    test_set: &Dataset<T>,
) -> Result<ExperimentOutcome> {
    let spec = cfg.spec()?;
    if train_set.feature_dim() != spec.input_dim() || test_set.feature_dim() != spec.input_dim() {
        return Err(Error::dims(format!(
            "datasets have {} / {} features, network expects {}",
            train_set.feature_dim(),
            test_set.feature_dim(),
            spec.input_dim()
        )));
    }
    info!("config {}: ranks {:?}, {} epochs", cfg.mask_label, spec.inner_ranks(), cfg.train.epochs);
    let (net, history) = train(&spec, &cfg.train, train_set, Some(test_set))?;
    let error = history
        .epochs
        .last()
        .and_then(|e| e.val_error)
        .expect("validation runs every epoch");
    let network: Network<f32> = net.cast();
    let report = ResourceReport::audit(&cfg.label, &network, error)?;
    if let Some(path) = &cfg.checkpoint {
        save_checkpoint(&network, path)?;
    }
    Ok(ExperimentOutcome { report, network, history })
}

/// Runs `configs` on separate threads; results keep the input order.
pub fn run_all<T: Scalar>(
    configs: &[ExperimentConfig],
    train_set: &Dataset<T>,
    test_set: &Dataset<T>,
    threads: usize,
) -> Result<Vec<ExperimentOutcome>> {
    let threads = threads.max(1);
    let mut out = Vec::with_capacity(configs.len());
    for chunk in configs.chunks(threads) {
        let results: Vec<Result<ExperimentOutcome>> = thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|cfg| s.spawn(move || run_on_datasets(cfg, train_set, test_set)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::invalid("experiment thread panicked"))))
                .collect()
        });
        for r in results {
            out.push(r?);
        }
    }
    Ok(out)
}

/// Configurations for a common-dimension sweep: `r` is applied as `min(r, n)` to
/// every factorized matrix of `base`, one configuration per rank.
pub fn rank_sweep(base: &ExperimentConfig, ranks: &[usize]) -> Result<Vec<ExperimentConfig>> {
    let mask = parse_config_mask(&base.mask_label, LENET_300_100.len() - 1)?;
    if !mask.contains(&true) {
        return Err(Error::Config("rank sweep needs at least one factorized layer".into()));
    }
    ranks
        .iter()
        .map(|&r| {
            if r == 0 {
                return Err(Error::Config("sweep ranks must be positive".into()));
            }
            let per_layer: Vec<usize> = (0..mask.len()).map(|l| r.min(LENET_300_100[l + 1])).collect();
            let mut cfg = base.clone();
            cfg.inner_ranks = Some(per_layer);
            cfg.label = format!("{} r={r}", base.mask_label);
            cfg.checkpoint = base.checkpoint.as_ref().map(|p| with_suffix(p, &format!("r{r}")));
            Ok(cfg)
        })
        .collect()
}

/// `dir/name.ext` → `dir/name-suffix.ext`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_parsing() {
        assert_eq!(parse_config_mask("1-1-1", 3).unwrap(), vec![true; 3]);
        assert_eq!(parse_config_mask("1-0-0", 3).unwrap(), vec![true, false, false]);
        assert_eq!(parse_config_mask("0-0-0", 3).unwrap(), vec![false; 3]);
        assert!(matches!(parse_config_mask("1-0", 3), Err(Error::Config(_))));
        assert!(matches!(parse_config_mask("1-2-0", 3), Err(Error::Config(_))));
        assert!(parse_config_mask("", 3).is_err());
        for label in TABLE_CONFIGS {
            let mask = parse_config_mask(label, 3).unwrap();
            assert_eq!(mask_label(&mask), label);
        }
    }

    #[test]
    fn sweep_clips_ranks_per_layer() {
        let base = ExperimentConfig::new("1-1-1", 8, "data");
        let cfgs = rank_sweep(&base, &[5, 50, 200]).unwrap();
        let ranks: Vec<_> = cfgs.iter().map(|c| c.spec().unwrap().inner_ranks().to_vec()).collect();
        assert_eq!(ranks, vec![vec![5, 5, 5], vec![50, 50, 10], vec![200, 100, 10]]);
        assert_eq!(cfgs[1].label, "1-1-1 r=50");

        let base = ExperimentConfig::new("0-1-0", 8, "data");
        let cfgs = rank_sweep(&base, &[150]).unwrap();
        assert_eq!(cfgs[0].spec().unwrap().inner_ranks(), &[100]);
        assert!(rank_sweep(&ExperimentConfig::new("0-0-0", 8, "d"), &[5]).is_err());
        assert!(rank_sweep(&base, &[0]).is_err());
    }

    #[test]
    fn suffixes() {
        assert_eq!(with_suffix(Path::new("out/net.bmf"), "r5"), PathBuf::from("out/net-r5.bmf"));
        assert_eq!(with_suffix(Path::new("net"), "r5"), PathBuf::from("net-r5"));
    }
}
