use log::{debug, info};

use super::{
    lambda_schedule, learning_rate, Adam, Network, NetworkSpec, ProjectionMode, TrainConfig,
    TrainPhase,
};
use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Scalar};

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Sample-weighted mean of the penalized training loss.
    pub loss: f64,
    pub val_error: Option<f64>,
    pub lambda: f64,
    pub lr: f64,
    /// Mean `1 − |z|` over relaxed sign entries at the end of the epoch.
    pub distance_to_binary: f64,
    pub phase: TrainPhase,
    /// Hash of the frozen sign bits, once binarized.
    pub sign_fingerprint: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

/// Initializes a network from `cfg.seed` and trains it with [`train_network`].
pub fn train<T: Scalar>(
    spec: &NetworkSpec,
    cfg: &TrainConfig,
    train_set: &Dataset<T>,
    val_set: Option<&Dataset<T>>,
) -> Result<(Network<T>, History)> {
    let net = Network::init(spec, &mut Rng::new(cfg.seed))?;
    train_network(net, cfg, train_set, val_set)
}

/// Two-phase schedule over `cfg.epochs` epochs.
///
/// Epochs `t ≤ ⌊3T/4⌋` update every parameter, clip sign factors to `[-1, 1]`
/// after each step and rescale them toward `‖Z‖_F² = n·r` at the end of the
/// epoch. At the start of the first later epoch the sign factors are binarized
/// to `{0,1}` and frozen; only real factors, biases and dense weights train after.
pub fn train_network<T: Scalar>(
    mut net: Network<T>,
    cfg: &TrainConfig,
    train_set: &Dataset<T>,
    val_set: Option<&Dataset<T>>,
) -> Result<(Network<T>, History)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let reg: Vec<f64> = (0..net.layers().len()).map(|l| cfg.layer_scale(l)).collect();
    let mut adam = Adam::new(cfg.adam);
    let mut history = History::default();

    for t in 1..=cfg.epochs {
        if t > cfg.relaxed_epochs() && net.phase() == TrainPhase::Relaxed {
            info!("epoch {t}: binarizing sign factors");
            net.binarize(cfg.refit_on_binarize)?;
        }
        let relaxed = net.phase() == TrainPhase::Relaxed;
        let lambda = lambda_schedule(t, cfg);
        let lr = learning_rate(t, cfg);

        let mut loss_sum = 0.0;
        for batch in batches(train_set, cfg.batch_size, cfg.seed, t as u64)? {
            let (loss, grads) = net.loss_and_gradients(&batch.images, &batch.labels, lambda, &reg)?;
            adam.step(&mut net, &grads, lr)?;
            if relaxed {
                net.project_sign_factors(ProjectionMode::ClampOnly);
                debug_assert!(net.max_abs_sign_entry() <= 1.0);
            }
            loss_sum += loss * batch.labels.len() as f64;
        }
        if relaxed {
            net.project_sign_factors(ProjectionMode::NormThenClamp);
        }

        let val_error = val_set.map(|v| evaluate(&net, v)).transpose()?;
        let record = EpochRecord {
            epoch: t,
            loss: loss_sum / train_set.len() as f64,
            val_error,
            lambda,
            lr,
            distance_to_binary: net.distance_to_binary(),
            phase: net.phase(),
            sign_fingerprint: net.sign_fingerprint(),
        };
        debug!("{record:?}");
        info!(
            "epoch {t}/{}: loss {:.5} val_error {} lr {lr:.1e} λ {lambda:.3}",
            cfg.epochs,
            record.loss,
            val_error.map_or("-".into(), |e| format!("{:.4}", e))
        );
        history.epochs.push(record);
    }
    Ok((net, history))
}

/// Fraction of samples whose arg-max logit (lowest index on ties) is wrong.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset<T>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    const CHUNK: usize = 1000;
    let mut wrong = 0usize;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let batch = data.gather(chunk);
        let logits = net.forward(&batch.images)?;
        for (row, &label) in batch.labels.iter().enumerate() {
            if argmax(logits.row(row)) != label as usize {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
