use log::warn;
use sha2::{Digest, Sha256};

use super::NetworkSpec;
use crate::error::{Error, Result};
use crate::factor::{fit_real_factor, random_sign_matrix, Convention, SignMatrix};
use crate::tensor::matrix::gemm_acc;
use crate::tensor::{RealMatrix, Rng, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainPhase {
    /// Sign factors are real and boxed to `[-1, 1]`.
    Relaxed,
    /// Sign factors are packed `{0,1}` bits and no longer trained.
    FrozenBinary,
}

/// The sign factor of a factorized layer in either phase.
#[derive(Clone, Debug, PartialEq)]
pub enum SignFactor<T: Scalar> {
    Relaxed(RealMatrix<T>),
    Binary(SignMatrix),
}

impl<T: Scalar> SignFactor<T> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            SignFactor::Relaxed(z) => z.shape(),
            SignFactor::Binary(z) => (z.rows(), z.cols()),
        }
    }

    pub fn to_real(&self) -> RealMatrix<T> {
        match self {
            SignFactor::Relaxed(z) => z.clone(),
            SignFactor::Binary(z) => z.to_real(),
        }
    }

    /// `Z · u`.
    fn mul(&self, u: &RealMatrix<T>) -> RealMatrix<T> {
        match self {
            SignFactor::Relaxed(z) => mm(z, u),
            SignFactor::Binary(z) => z.left_mul(u).expect("layer shapes validated"),
        }
    }

    /// `Zᵀ · g`.
    fn transpose_mul(&self, g: &RealMatrix<T>) -> RealMatrix<T> {
        match self {
            SignFactor::Relaxed(z) => mm(&z.transpose(), g),
            SignFactor::Binary(z) => z.transpose_mul(g).expect("layer shapes validated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T: Scalar> {
    Dense {
        w: RealMatrix<T>,
        bias: Vec<T>,
    },
    Factorized {
        z: SignFactor<T>,
        a: RealMatrix<T>,
        bias: Vec<T>,
    },
}

impl<T: Scalar> Layer<T> {
    pub fn out_dim(&self) -> usize {
        self.bias().len()
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Dense { w, .. } => w.cols(),
            Layer::Factorized { a, .. } => a.cols(),
        }
    }

    pub fn bias(&self) -> &[T] {
        match self {
            Layer::Dense { bias, .. } | Layer::Factorized { bias, .. } => bias,
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Layer::Dense { .. } => None,
            Layer::Factorized { a, .. } => Some(a.rows()),
        }
    }

    /// The effective `n × m` weight matrix.
    pub fn weight(&self) -> RealMatrix<T> {
        match self {
            Layer::Dense { w, .. } => w.clone(),
            Layer::Factorized { z, a, .. } => z.mul(a),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.out_dim();
        match self {
            Layer::Dense { w, .. } if w.rows() != n => {
                Err(Error::dims(format!("dense weight has {} rows, bias {n}", w.rows())))
            }
            Layer::Factorized { z, a, .. } => {
                let (zn, zr) = z.shape();
                if zn != n || zr != a.rows() {
                    return Err(Error::dims(format!(
                        "factors {zn}x{zr} and {}x{} with bias {n}",
                        a.rows(),
                        a.cols()
                    )));
                }
                if let SignFactor::Binary(bits) = z {
                    if bits.convention() != Convention::ZeroOne {
                        return Err(Error::invalid("frozen sign factor must use {0,1}"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Pre-activation `W·h + b` for feature-major `h` (`m × B`), plus `A·h` for
    /// factorized layers.
    fn pre_activation(&self, h: &RealMatrix<T>) -> (RealMatrix<T>, Option<RealMatrix<T>>) {
        let (mut pre, inner) = match self {
            Layer::Dense { w, .. } => (mm(w, h), None),
            Layer::Factorized { z, a, .. } => {
                let u = mm(a, h);
                (z.mul(&u), Some(u))
            }
        };
        for (i, &b) in self.bias().iter().enumerate() {
            pre.row_mut(i).iter_mut().for_each(|v| *v += b);
        }
        (pre, inner)
    }
}

/// Gradient of the loss for one layer, mirroring [`Layer`].
#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrads<T: Scalar> {
    Dense {
        w: RealMatrix<T>,
        bias: Vec<T>,
    },
    Factorized {
        /// Absent once the sign factor is frozen.
        z: Option<RealMatrix<T>>,
        a: RealMatrix<T>,
        bias: Vec<T>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Scalar> {
    pub layers: Vec<LayerGrads<T>>,
}

/// Slot of a trainable tensor: `3·layer + {0: W or A, 1: bias, 2: Z}`.
pub(crate) fn slot(layer: usize, kind: usize) -> usize {
    3 * layer + kind
}

/// Cached activations from a forward pass, all feature-major.
struct Trace<T: Scalar> {
    /// `inputs[l]` is the input to layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<RealMatrix<T>>,
    /// `A·h` for factorized layers.
    inner: Vec<Option<RealMatrix<T>>>,
    logits: RealMatrix<T>,
}

/// Dense MLP whose weight matrices may be factorized as `Z·A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar> {
    spec: NetworkSpec,
    layers: Vec<Layer<T>>,
    phase: TrainPhase,
}

impl<T: Scalar> Network<T> {
    /// Random initialization: sign factors uniform on `{-1,+1}`, real factors
    /// `N(0, 2/(m·r))` so the product has He variance, dense weights He, biases zero.
    pub fn init(spec: &NetworkSpec, rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::with_capacity(spec.num_layers());
        for i in 0..spec.num_layers() {
            let (n, m) = spec.weight_shape(i);
            let bias = vec![T::zero(); n];
            let layer = match spec.rank_of(i) {
                None => {
                    let std = (2.0 / m as f64).sqrt();
                    let w = RealMatrix::from_fn(n, m, |_, _| T::of(rng.normal(0.0, std)));
                    Layer::Dense { w, bias }
                }
                Some(r) => {
                    let z = random_sign_matrix(n, r, 0.5, rng)?.to_real();
                    let std = (2.0 / (m * r) as f64).sqrt();
                    let a = RealMatrix::from_fn(r, m, |_, _| T::of(rng.normal(0.0, std)));
                    Layer::Factorized {
                        z: SignFactor::Relaxed(z),
                        a,
                        bias,
                    }
                }
            };
            layers.push(layer);
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            phase: TrainPhase::Relaxed,
        })
    }

    /// Assembles a network from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer<T>>, phase: TrainPhase) -> Result<Self> {
        if layers.len() != spec.num_layers() {
            return Err(Error::dims(format!(
                "{} layers for a spec with {}",
                layers.len(),
                spec.num_layers()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            let (n, m) = spec.weight_shape(i);
            if layer.out_dim() != n || layer.in_dim() != m || layer.rank() != spec.rank_of(i) {
                return Err(Error::dims(format!("layer {} does not match the spec", i + 1)));
            }
            if let Layer::Factorized { z, .. } = layer {
                let frozen = matches!(z, SignFactor::Binary(_));
                if frozen != (phase == TrainPhase::FrozenBinary) {
                    return Err(Error::Phase(format!(
                        "layer {} sign factor disagrees with phase {phase:?}",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { spec, layers, phase })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn phase(&self) -> TrainPhase {
        self.phase
    }

    /// Logits (`B × classes`) for a batch of rows (`B × inputs`).
    pub fn forward(&self, batch: &RealMatrix<T>) -> Result<RealMatrix<T>> {
        self.check_input(batch)?;
        Ok(self.trace(batch.transpose()).logits.transpose())
    }

    fn check_input(&self, batch: &RealMatrix<T>) -> Result<()> {
        if batch.cols() != self.spec.input_dim() {
            return Err(Error::dims(format!(
                "batch has {} features, network expects {}",
                batch.cols(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: RealMatrix<T>) -> Trace<T> {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut inner = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let (mut pre, u) = layer.pre_activation(&h);
            if l < last {
                pre.as_mut_slice().iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            inputs.push(h);
            inner.push(u);
            h = pre;
        }
        Trace {
            inputs,
            inner,
            logits: h,
        }
    }

    /// Mean softmax cross-entropy plus `λ · Σ layer_reg[i] · ‖A_i‖₁`, and its
    /// gradient by backpropagation. Sign factors get a gradient only while relaxed.
    pub fn loss_and_gradients(
        &self,
        batch: &RealMatrix<T>,
        labels: &[u8],
        lambda: f64,
        layer_reg: &[f64],
    ) -> Result<(f64, Gradients<T>)> {
        self.check_input(batch)?;
        let b = batch.rows();
        if labels.len() != b || b == 0 {
            return Err(Error::dims(format!("{} labels for a batch of {b}", labels.len())));
        }
        let classes = self.spec.output_dim();
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::invalid(format!("label {bad} for {classes} classes")));
        }

        let trace = self.trace(batch.transpose());
        let (ce, mut grad) = softmax_cross_entropy(&trace.logits, labels);
        let mut loss = ce;

        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let h = &trace.inputs[l];
            let bias: Vec<T> = (0..grad.rows()).map(|i| grad.row(i).iter().copied().sum()).collect();
            let (layer_grads, dh) = match layer {
                Layer::Dense { w, .. } => {
                    let dw = mm(&grad, &h.transpose());
                    let dh = (l > 0).then(|| mm(&w.transpose(), &grad));
                    (LayerGrads::Dense { w: dw, bias }, dh)
                }
                Layer::Factorized { z, a, .. } => {
                    let u = trace.inner[l].as_ref().expect("factorized layers cache A·h");
                    let dz = match z {
                        SignFactor::Relaxed(_) => Some(mm(&grad, &u.transpose())),
                        SignFactor::Binary(_) => None,
                    };
                    let du = z.transpose_mul(&grad);
                    let mut da = mm(&du, &h.transpose());
                    let coef = lambda * layer_reg.get(l).copied().unwrap_or(0.0);
                    if coef != 0.0 {
                        loss += coef * a.as_slice().iter().map(|v| v.as_f64().abs()).sum::<f64>();
                        let c = T::of(coef);
                        for (g, &v) in da.as_mut_slice().iter_mut().zip(a.as_slice()) {
                            if v > T::zero() {
                                *g += c;
                            } else if v < T::zero() {
                                *g -= c;
                            }
                        }
                    }
                    let dh = (l > 0).then(|| mm(&a.transpose(), &du));
                    (LayerGrads::Factorized { z: dz, a: da, bias }, dh)
                }
            };
            grads.push(layer_grads);
            if let Some(mut dh) = dh {
                for (g, &x) in dh.as_mut_slice().iter_mut().zip(h.as_slice()) {
                    if x <= T::zero() {
                        *g = T::zero();
                    }
                }
                grad = dh;
            }
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    /// Visits every trainable tensor with its gradient, tagged by [`slot`].
    pub(crate) fn for_each_trainable(
        &mut self,
        grads: &Gradients<T>,
        mut f: impl FnMut(usize, &mut [T], &[T]),
    ) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::dims("gradient layer count differs from network"));
        }
        for (l, (layer, g)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            match (layer, g) {
                (Layer::Dense { w, bias }, LayerGrads::Dense { w: gw, bias: gb }) => {
                    check_len(w.len(), gw.len())?;
                    check_len(bias.len(), gb.len())?;
                    f(slot(l, 0), w.as_mut_slice(), gw.as_slice());
                    f(slot(l, 1), bias, gb);
                }
                (
                    Layer::Factorized { z, a, bias },
                    LayerGrads::Factorized {
                        z: gz,
                        a: ga,
                        bias: gb,
                    },
                ) => {
                    check_len(a.len(), ga.len())?;
                    check_len(bias.len(), gb.len())?;
                    f(slot(l, 0), a.as_mut_slice(), ga.as_slice());
                    f(slot(l, 1), bias, gb);
                    match (z, gz) {
                        (SignFactor::Relaxed(z), Some(gz)) => {
                            check_len(z.len(), gz.len())?;
                            f(slot(l, 2), z.as_mut_slice(), gz.as_slice());
                        }
                        (SignFactor::Binary(_), None) => {}
                        _ => return Err(Error::Phase("sign-factor gradient does not match phase".into())),
                    }
                }
                _ => return Err(Error::dims(format!("gradient kind differs at layer {}", l + 1))),
            }
        }
        Ok(())
    }

    /// Applies `mode` to every relaxed sign factor. No-op once frozen.
    pub fn project_sign_factors(&mut self, mode: ProjectionMode) {
        for layer in &mut self.layers {
            if let Layer::Factorized {
                z: SignFactor::Relaxed(z),
                ..
            } = layer
            {
                project_in_place(z, mode);
            }
        }
    }

    /// One-time switch to the frozen phase: every relaxed entry is snapped to its
    /// sign (`0` goes to `+1`) and mapped by `(z + 1)/2` onto `{0,1}`.
    ///
    /// With `refit`, each real factor is then replaced by the least-squares
    /// solution of `Z01·A' ≈ Z_relaxed·A`. On the output layer the fit is taken up
    /// to a shift shared by all logits, which the softmax ignores: for exact `±1`
    /// entries `A' = 2A` and the logits move by `(1ᵀA)·h` in every class.
    pub fn binarize(&mut self, refit: bool) -> Result<()> {
        if self.phase == TrainPhase::FrozenBinary {
            return Err(Error::Phase("sign factors are already binarized".into()));
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::Factorized { z, a, .. } = layer {
                let SignFactor::Relaxed(relaxed) = z else {
                    return Err(Error::Phase("binary sign factor in relaxed network".into()));
                };
                let bits = SignMatrix::from_fn(relaxed.rows(), relaxed.cols(), Convention::PlusMinusOne, |i, k| {
                    relaxed.get(i, k) >= T::zero()
                })
                .relabel(Convention::ZeroOne);
                if refit {
                    let target = mm(relaxed, a);
                    *a = if l == last {
                        fit_up_to_shift(&bits, &target)?
                    } else {
                        fit_real_factor(&bits, &target)?
                    };
                }
                *z = SignFactor::Binary(bits);
            }
        }
        self.phase = TrainPhase::FrozenBinary;
        Ok(())
    }

    /// Mean of `1 − |z|` over relaxed sign entries (0 when frozen or unfactorized).
    pub fn distance_to_binary(&self) -> f64 {
        let (mut total, mut count) = (0.0, 0usize);
        for layer in &self.layers {
            if let Layer::Factorized {
                z: SignFactor::Relaxed(z),
                ..
            } = layer
            {
                total += z.as_slice().iter().map(|v| 1.0 - v.as_f64().abs()).sum::<f64>();
                count += z.len();
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    /// Largest `|z|` over relaxed sign factors.
    pub fn max_abs_sign_entry(&self) -> f64 {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Factorized {
                    z: SignFactor::Relaxed(z),
                    ..
                } => Some(z.max_abs().as_f64()),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// SHA-256 over the packed bits of every frozen sign factor, or `None` while relaxed.
    pub fn sign_fingerprint(&self) -> Option<String> {
        if self.phase != TrainPhase::FrozenBinary {
            return None;
        }
        let mut hasher = Sha256::new();
        for layer in &self.layers {
            if let Layer::Factorized {
                z: SignFactor::Binary(bits),
                ..
            } = layer
            {
                hasher.update(bits.fingerprint().as_bytes());
            }
        }
        Some(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let cast_vec = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Dense { w, bias } => Layer::Dense {
                    w: w.cast(),
                    bias: cast_vec(bias),
                },
                Layer::Factorized { z, a, bias } => Layer::Factorized {
                    z: match z {
                        SignFactor::Relaxed(z) => SignFactor::Relaxed(z.cast()),
                        SignFactor::Binary(b) => SignFactor::Binary(b.clone()),
                    },
                    a: a.cast(),
                    bias: cast_vec(bias),
                },
            })
            .collect();
        Network {
            spec: self.spec.clone(),
            layers,
            phase: self.phase,
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::dims(format!("gradient of {got} entries for {expected} parameters")));
    }
    Ok(())
}

fn mm<T: Scalar>(a: &RealMatrix<T>, b: &RealMatrix<T>) -> RealMatrix<T> {
    debug_assert_eq!(a.cols(), b.rows());
    let mut out = RealMatrix::zeros(a.rows(), b.cols());
    gemm_acc(a.as_slice(), b.as_slice(), out.as_mut_slice(), a.rows(), a.cols(), b.cols());
    out
}

/// Mean cross-entropy over the columns of feature-major `logits`, and
/// `∂/∂logits = (softmax − onehot) / B`.
fn softmax_cross_entropy<T: Scalar>(logits: &RealMatrix<T>, labels: &[u8]) -> (f64, RealMatrix<T>) {
    let (classes, b) = logits.shape();
    let inv_b = T::of(1.0 / b as f64);
    let mut grad = RealMatrix::zeros(classes, b);
    let mut total = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        let max = (0..classes).map(|c| logits.get(c, j)).fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = (0..classes).map(|c| (logits.get(c, j) - max).exp()).collect();
        let sum: T = exps.iter().copied().sum();
        let label = label as usize;
        total += (sum.ln() - (logits.get(label, j) - max)).as_f64();
        for c in 0..classes {
            let mut p = exps[c] / sum;
            if c == label {
                p -= T::one();
            }
            grad.set(c, j, p * inv_b);
        }
    }
    (total / b as f64, grad)
}

/// How relaxed sign factors are pulled back onto the feasible set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Clip entries to `[-1, 1]`.
    ClampOnly,
    /// Rescale to `‖Z‖_F² = n·r`, then clip.
    NormThenClamp,
}

pub fn project_z<T: Scalar>(z: &RealMatrix<T>, mode: ProjectionMode) -> RealMatrix<T> {
    let mut out = z.clone();
    project_in_place(&mut out, mode);
    out
}

fn project_in_place<T: Scalar>(z: &mut RealMatrix<T>, mode: ProjectionMode) {
    if mode == ProjectionMode::NormThenClamp {
        let norm = z.frobenius_norm();
        if norm == T::zero() {
            warn!("norm projection skipped: sign factor {:?} is all zero", z.shape());
        } else {
            let scale = T::of((z.len() as f64).sqrt()) / norm;
            z.as_mut_slice().iter_mut().for_each(|v| *v = *v * scale);
        }
    }
    let one = T::one();
    z.as_mut_slice().iter_mut().for_each(|v| *v = v.max(-one).min(one));
}

/// `argmin_A' min_c ‖Z·A' − (target + 1·c)‖_F`: least squares against `[Z | 1]`,
/// keeping the rows that multiply `Z`.
fn fit_up_to_shift<T: Scalar>(z: &SignMatrix, target: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    let (n, r) = (z.rows(), z.cols());
    let augmented = SignMatrix::from_fn(n, r + 1, Convention::ZeroOne, |i, k| k == r || z.bit(i, k));
    let full = fit_real_factor(&augmented, target)?;
    Ok(RealMatrix::from_fn(r, target.cols(), |k, j| full.get(k, j)))
}

/// Free-function form of [`Network::binarize`].
pub fn binarize_phase_transition<T: Scalar>(mut net: Network<T>, refit: bool) -> Result<Network<T>> {
    net.binarize(refit)?;
    Ok(net)
}
