use crate::error::{Error, Result};

/// Hidden-layer nonlinearity. The output layer is always raw logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Relu,
}

/// Architecture of a dense network and which weight matrices are factorized.
///
/// Weight matrix `i` maps `layer_dims[i]` inputs to `layer_dims[i + 1]` outputs
/// and has shape `n × m = layer_dims[i + 1] × layer_dims[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layer_dims: Vec<usize>,
    factorize_mask: Vec<bool>,
    /// One entry per factorized matrix, in layer order.
    inner_ranks: Vec<usize>,
    activation: Activation,
}

pub const LENET_300_100: [usize; 4] = [784, 300, 100, 10];

/// `⌈min(n, m) / 2⌉`.
pub fn default_rank(n: usize, m: usize) -> usize {
    n.min(m).div_ceil(2)
}

impl NetworkSpec {
    /// `ranks` may list one rank per factorized matrix or one per weight matrix
    /// (entries for dense layers are then ignored); `None` uses [`default_rank`].
    pub fn new(layer_dims: Vec<usize>, factorize_mask: Vec<bool>, ranks: Option<&[usize]>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config("need at least an input and an output width".into()));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let layers = layer_dims.len() - 1;
        if factorize_mask.len() != layers {
            return Err(Error::Config(format!(
                "mask has {} entries for {layers} weight matrices",
                factorize_mask.len()
            )));
        }
        let shapes: Vec<(usize, usize)> = (0..layers).map(|i| (layer_dims[i + 1], layer_dims[i])).collect();
        let factorized: Vec<usize> = (0..layers).filter(|&i| factorize_mask[i]).collect();
        let inner_ranks: Vec<usize> = match ranks {
            None => factorized.iter().map(|&i| default_rank(shapes[i].0, shapes[i].1)).collect(),
            Some(r) if r.len() == factorized.len() => r.to_vec(),
            Some(r) if r.len() == layers => factorized.iter().map(|&i| r[i]).collect(),
            Some(r) => {
                return Err(Error::Config(format!(
                    "{} ranks given for {} factorized of {layers} weight matrices",
                    r.len(),
                    factorized.len()
                )))
            }
        };
        for (&i, &r) in factorized.iter().zip(&inner_ranks) {
            let n = shapes[i].0;
            if r == 0 || r > n {
                return Err(Error::Config(format!(
                    "rank {r} for layer {} outside 1..={n}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            layer_dims,
            factorize_mask,
            inner_ranks,
            activation: Activation::Relu,
        })
    }

    /// LeNet-300-100 (`784-300-100-10`) with the given mask.
    pub fn lenet_300_100(mask: Vec<bool>, ranks: Option<&[usize]>) -> Result<Self> {
        Self::new(LENET_300_100.to_vec(), mask, ranks)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn factorize_mask(&self) -> &[bool] {
        &self.factorize_mask
    }

    pub fn inner_ranks(&self) -> &[usize] {
        &self.inner_ranks
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layer_dims[self.layer_dims.len() - 1]
    }

    /// `(n, m)` of weight matrix `layer`.
    pub fn weight_shape(&self, layer: usize) -> (usize, usize) {
        (self.layer_dims[layer + 1], self.layer_dims[layer])
    }

    /// Inner rank of `layer`, or `None` if it is dense.
    pub fn rank_of(&self, layer: usize) -> Option<usize> {
        if !self.factorize_mask[layer] {
            return None;
        }
        let pos = self.factorize_mask[..layer].iter().filter(|&&f| f).count();
        Some(self.inner_ranks[pos])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ranks_for_lenet() {
        let spec = NetworkSpec::lenet_300_100(vec![true, true, true], None).unwrap();
        assert_eq!(spec.inner_ranks(), &[150, 50, 5]);
        assert_eq!(spec.weight_shape(0), (300, 784));
        assert_eq!(spec.rank_of(2), Some(5));
    }

    #[test]
    fn rank_list_forms() {
        let mask = vec![true, false, true];
        let a = NetworkSpec::lenet_300_100(mask.clone(), Some(&[100, 7])).unwrap();
        let b = NetworkSpec::lenet_300_100(mask.clone(), Some(&[100, 0, 7])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rank_of(1), None);
        assert!(NetworkSpec::lenet_300_100(mask, Some(&[1])).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(NetworkSpec::lenet_300_100(vec![true, false], None).is_err());
        assert!(NetworkSpec::lenet_300_100(vec![false, false, true], Some(&[11])).is_err());
        assert!(NetworkSpec::lenet_300_100(vec![true, false, false], Some(&[0])).is_err());
        assert!(NetworkSpec::new(vec![4], vec![], None).is_err());
    }
}
