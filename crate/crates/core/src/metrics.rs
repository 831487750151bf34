//! Memory, FLOP-equivalent and sparsity accounting for dense and factorized networks.

use crate::error::{Error, Result};
use crate::nn::{Layer, Network, NetworkSpec, SignFactor};
use crate::tensor::Scalar;

/// Bits per stored real parameter.
pub const REAL_BITS: u64 = 32;
/// Bits per stored binary parameter.
pub const BINARY_BITS: u64 = 1;
/// Cost of a binary-real multiply-accumulate relative to a real one.
pub const BINARY_FLOP_DISCOUNT: f64 = 16.0;

/// Audit of a single layer, single-sample basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerAudit {
    pub real_params: u64,
    pub binary_params: u64,
    /// FLOPs spent in weight products (2 per multiply-accumulate, binary ones discounted).
    pub weight_flops: f64,
    /// Bias additions plus activations, `n` each.
    pub elementwise_flops: f64,
}

impl LayerAudit {
    /// Dense `n×m` layer with bias.
    pub fn dense(n: usize, m: usize) -> Self {
        let (n64, m64) = (n as u64, m as u64);
        Self {
            real_params: n64 * m64 + n64,
            binary_params: 0,
            weight_flops: 2.0 * n as f64 * m as f64,
            elementwise_flops: 2.0 * n as f64,
        }
    }

    /// Factorized `n×m` layer with inner dimension `r`: binary `Z` (`n×r`), real `A` (`r×m`) and bias.
    pub fn factorized(n: usize, m: usize, r: usize) -> Self {
        let (n64, m64, r64) = (n as u64, m as u64, r as u64);
        let (nf, mf, rf) = (n as f64, m as f64, r as f64);
        Self {
            real_params: r64 * m64 + n64,
            binary_params: n64 * r64,
            weight_flops: 2.0 * rf * mf + 2.0 * nf * rf / BINARY_FLOP_DISCOUNT,
            elementwise_flops: 2.0 * nf,
        }
    }

    pub fn memory_bits(&self) -> u64 {
        REAL_BITS * self.real_params + BINARY_BITS * self.binary_params
    }

    pub fn flop_equivalents(&self) -> f64 {
        self.weight_flops + self.elementwise_flops
    }
}

/// Per-layer audits with whole-network totals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkAudit {
    pub layers: Vec<LayerAudit>,
}

impl NetworkAudit {
    /// Audit from the architecture alone; every factorized layer uses its inner rank.
    pub fn of_spec(spec: &NetworkSpec) -> Self {
        let layers = (0..spec.num_layers())
            .map(|l| {
                let (n, m) = spec.weight_shape(l);
                match spec.rank_of(l) {
                    Some(r) => LayerAudit::factorized(n, m, r),
                    None => LayerAudit::dense(n, m),
                }
            })
            .collect();
        Self { layers }
    }

    /// Audit from the stored tensors, in either training phase.
    pub fn of_network<T: Scalar>(net: &Network<T>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Dense { w, .. } => LayerAudit::dense(w.rows(), w.cols()),
                Layer::Factorized { z, a, .. } => {
                    let (n, r) = z.shape();
                    LayerAudit::factorized(n, a.cols(), r)
                }
            })
            .collect();
        Self { layers }
    }

    /// `(real, binary)` parameter counts.
    pub fn params(&self) -> (u64, u64) {
        self.layers
            .iter()
            .fold((0, 0), |(r, b), l| (r + l.real_params, b + l.binary_params))
    }

    pub fn memory_bits(&self) -> u64 {
        self.layers.iter().map(LayerAudit::memory_bits).sum()
    }

    pub fn flop_equivalents(&self) -> f64 {
        self.layers.iter().map(LayerAudit::flop_equivalents).sum()
    }
}

/// `(real_count, binary_count)` for a network.
pub fn count_params<T: Scalar>(net: &Network<T>) -> (u64, u64) {
    NetworkAudit::of_network(net).params()
}

/// `32·real + 1·binary`.
pub fn memory_bits<T: Scalar>(net: &Network<T>) -> u64 {
    NetworkAudit::of_network(net).memory_bits()
}

pub fn flop_equivalents<T: Scalar>(net: &Network<T>) -> f64 {
    NetworkAudit::of_network(net).flop_equivalents()
}

/// Total parameters over parameters with `|value| > tol`; stored binary zeros count as zeros.
pub fn sparsity<T: Scalar>(net: &Network<T>, tol: f64) -> Result<f64> {
    if !(tol >= 0.0) {
        return Err(Error::invalid(format!("sparsity tolerance {tol} must be non-negative")));
    }
    let mut total = 0u64;
    let mut nonzero = 0u64;
    let scan = |values: &[T], total: &mut u64, nonzero: &mut u64| {
        *total += values.len() as u64;
        *nonzero += values.iter().filter(|v| v.as_f64().abs() > tol).count() as u64;
    };
    for layer in net.layers() {
        match layer {
            Layer::Dense { w, bias } => {
                scan(w.as_slice(), &mut total, &mut nonzero);
                scan(bias, &mut total, &mut nonzero);
            }
            Layer::Factorized { z, a, bias } => {
                scan(a.as_slice(), &mut total, &mut nonzero);
                scan(bias, &mut total, &mut nonzero);
                match z {
                    SignFactor::Relaxed(z) => scan(z.as_slice(), &mut total, &mut nonzero),
                    SignFactor::Binary(bits) => {
                        total += (bits.rows() * bits.cols()) as u64;
                        nonzero += bits_nonzero(bits);
                    }
                }
            }
        }
    }
    if nonzero == 0 {
        return Err(Error::invalid("network has no nonzero parameters"));
    }
    Ok(total as f64 / nonzero as f64)
}

fn bits_nonzero(bits: &crate::factor::SignMatrix) -> u64 {
    match bits.convention() {
        crate::factor::Convention::ZeroOne => bits.count_ones() as u64,
        crate::factor::Convention::PlusMinusOne => (bits.rows() * bits.cols()) as u64,
    }
}

/// One row of an experiment report.
#[derive(Clone, Debug, PartialEq)]
pub struct ResourceReport {
    pub config_label: String,
    pub memory_bits: u64,
    pub flop_equivalents: f64,
    pub sparsity: f64,
    pub error_rate: f64,
}

impl ResourceReport {
    /// Audits `net` and attaches the given error rate.
    pub fn audit<T: Scalar>(label: &str, net: &Network<T>, error_rate: f64) -> Result<Self> {
        let audit = NetworkAudit::of_network(net);
        Ok(Self {
            config_label: label.to_string(),
            memory_bits: audit.memory_bits(),
            flop_equivalents: audit.flop_equivalents(),
            sparsity: sparsity(net, 0.0)?,
            error_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Network, NetworkSpec, TrainPhase};
    use crate::tensor::{RealMatrix, Rng};

    fn lenet(mask: [bool; 3], ranks: Option<&[usize]>) -> NetworkSpec {
        NetworkSpec::lenet_300_100(mask.to_vec(), ranks).unwrap()
    }

    #[test]
    fn dense_lenet_counts() {
        let net = Network::<f32>::init(&lenet([false; 3], None), &mut Rng::new(0)).unwrap();
        let expected_real = 784 * 300 + 300 + 300 * 100 + 100 + 100 * 10 + 10;
        assert_eq!(expected_real, 266_610);
        assert_eq!(count_params(&net), (266_610, 0));
        assert_eq!(memory_bits(&net), 8_531_520);
    }

    #[test]
    fn factorized_layer_example() {
        let layer = LayerAudit::factorized(300, 784, 100);
        assert_eq!((layer.binary_params, layer.real_params), (30_000, 78_700));
        assert_eq!(layer.memory_bits(), 2_548_400);
        assert_eq!(LayerAudit::dense(300, 784).memory_bits() - 300 * 32, 7_526_400);
        assert_eq!(layer.weight_flops, 160_550.0);
        assert_eq!(LayerAudit::dense(300, 784).weight_flops, 470_400.0);
        assert_eq!(layer.elementwise_flops, 600.0);
    }

    #[test]
    fn empty_network_has_no_cost() {
        let audit = NetworkAudit::default();
        assert_eq!(audit.params(), (0, 0));
        assert_eq!(audit.memory_bits(), 0);
        assert_eq!(audit.flop_equivalents(), 0.0);
    }

    #[test]
    fn totals_are_sums_of_layers() {
        let spec = lenet([true, false, true], Some(&[64, 7]));
        let audit = NetworkAudit::of_spec(&spec);
        let bits: u64 = audit.layers.iter().map(|l| l.memory_bits()).sum();
        let flops: f64 = audit.layers.iter().map(|l| l.flop_equivalents()).sum();
        assert_eq!(audit.memory_bits(), bits);
        assert_eq!(audit.flop_equivalents(), flops);
        let net = Network::<f32>::init(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(NetworkAudit::of_network(&net), audit);
    }

    #[test]
    fn audit_survives_binarization() {
        let spec = lenet([true, true, true], None);
        let mut net = Network::<f32>::init(&spec, &mut Rng::new(2)).unwrap();
        let before = NetworkAudit::of_network(&net);
        net.binarize(true).unwrap();
        assert_eq!(net.phase(), TrainPhase::FrozenBinary);
        assert_eq!(NetworkAudit::of_network(&net), before);
    }

    #[test]
    fn default_ranks_are_cheaper_than_dense() {
        let dense = NetworkAudit::of_spec(&lenet([false; 3], None));
        for mask in [[true, false, false], [false, true, false], [false, false, true]] {
            for l in 0..3 {
                let audit = NetworkAudit::of_spec(&lenet(mask, None));
                if mask[l] {
                    assert!(audit.layers[l].memory_bits() < dense.layers[l].memory_bits());
                    assert!(audit.layers[l].flop_equivalents() < dense.layers[l].flop_equivalents());
                }
            }
        }
    }

    #[test]
    fn sparsity_cases() {
        let spec = NetworkSpec::new(vec![2, 2], vec![false], None).unwrap();
        let make = |w: Vec<f64>, b: Vec<f64>| {
            Network::from_layers(
                spec.clone(),
                vec![Layer::Dense { w: RealMatrix::new(2, 2, w).unwrap(), bias: b }],
                TrainPhase::Relaxed,
            )
            .unwrap()
        };
        assert_eq!(sparsity(&make(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 1.0]), 0.0).unwrap(), 1.0);
        assert_eq!(sparsity(&make(vec![1.0, 0.0, 3.0, 0.0], vec![0.0, 1.0]), 0.0).unwrap(), 2.0);
        assert_eq!(sparsity(&make(vec![1.0, 1e-4, 3.0, 1e-4], vec![1e-5, 1.0]), 1e-3).unwrap(), 2.0);
        assert!(sparsity(&make(vec![0.0; 4], vec![0.0; 2]), 0.0).is_err());
        assert!(sparsity(&make(vec![1.0; 4], vec![0.0; 2]), -1.0).is_err());
    }

    #[test]
    fn sparsity_matches_entry_scan() {
        let spec = lenet([true, false, true], Some(&[20, 5]));
        let mut net = Network::<f64>::init(&spec, &mut Rng::new(5)).unwrap();
        net.binarize(false).unwrap();
        let mut total = 0usize;
        let mut nonzero = 0usize;
        for layer in net.layers() {
            let mut tensors = vec![layer.bias().to_vec()];
            match layer {
                Layer::Dense { w, .. } => tensors.push(w.as_slice().to_vec()),
                Layer::Factorized { z, a, .. } => {
                    tensors.push(a.as_slice().to_vec());
                    tensors.push(z.to_real().into_vec());
                }
            }
            for t in tensors {
                total += t.len();
                nonzero += t.iter().filter(|v| **v != 0.0).count();
            }
        }
        let s = sparsity(&net, 0.0).unwrap();
        assert_eq!(s, total as f64 / nonzero as f64);
        // Binary zeros are roughly half the sign entries, so the ratio rises above 1.
        assert!(s > 1.0);
    }
}
