use crate::error::{Error, Result};

/// Per-layer regularization scales used when none are given.
pub const DEFAULT_LAYER_REG: [f64; 3] = [0.00001, 0.000025, 0.00015];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Training schedule and optimizer settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Total epochs `T`.
    pub epochs: usize,
    /// Peak penalty weight `λ0`.
    pub lambda0: f64,
    /// Epoch at which the penalty ramp starts.
    pub t0: usize,
    /// Length of the penalty ramp in epochs.
    pub t1: usize,
    pub lr0: f64,
    /// Multiplier applied at epochs `⌈T/2⌉` and `⌈3T/4⌉`.
    pub lr_decay: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub seed: u64,
    /// Scale of the L1 penalty on each weight matrix's real factor.
    pub layer_reg: Vec<f64>,
    /// At binarization, refit each real factor by least squares so that the
    /// binary product stays as close as possible to the relaxed one.
    pub refit_on_binarize: bool,
}

impl TrainConfig {
    /// Defaults for `epochs` epochs: `t0 = T/10`, `t1 = T/2`, Adam at `1e-3`.
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            lambda0: 1.0,
            t0: epochs / 10,
            t1: (epochs / 2).max(1),
            lr0: 1e-3,
            lr_decay: 0.1,
            adam: AdamConfig::default(),
            batch_size: 100,
            seed: 0,
            layer_reg: DEFAULT_LAYER_REG.to_vec(),
            refit_on_binarize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 4 {
            return Err(Error::Config(format!("{} epochs; need at least 4", self.epochs)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.t1 == 0 {
            return Err(Error::Config("penalty ramp length t1 must be positive".into()));
        }
        if !(self.lr0 > 0.0) || !self.lambda0.is_finite() || self.lambda0 < 0.0 {
            return Err(Error::Config("learning rate must be positive and λ0 non-negative".into()));
        }
        Ok(())
    }

    /// Last epoch (1-based) of the relaxed phase: `⌊3T/4⌋`.
    pub fn relaxed_epochs(&self) -> usize {
        3 * self.epochs / 4
    }

    /// Penalty weight for the layer at `index`; layers past the list get the last scale.
    pub fn layer_scale(&self, index: usize) -> f64 {
        self.layer_reg
            .get(index)
            .or(self.layer_reg.last())
            .copied()
            .unwrap_or(0.0)
    }
}

/// `λ0 · g((t − T0) / T1)` with the linear ramp `g(u) = clamp(u, 0, 1)`.
pub fn lambda_schedule(t: usize, cfg: &TrainConfig) -> f64 {
    let u = (t as f64 - cfg.t0 as f64) / cfg.t1 as f64;
    cfg.lambda0 * u.clamp(0.0, 1.0)
}

/// Step decay: `lr0`, times `lr_decay` from epoch `⌈T/2⌉`, and again from `⌈3T/4⌉`.
pub fn learning_rate(t: usize, cfg: &TrainConfig) -> f64 {
    let mut lr = cfg.lr0;
    if t >= cfg.epochs.div_ceil(2) {
        lr *= cfg.lr_decay;
    }
    if t >= (3 * cfg.epochs).div_ceil(4) {
        lr *= cfg.lr_decay;
    }
    lr
}
