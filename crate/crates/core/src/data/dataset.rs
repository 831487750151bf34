use std::path::{Path, PathBuf};

use super::{load_idx_images, load_idx_labels};
use crate::error::{Error, Result};
use crate::tensor::{RealMatrix, Rng, Scalar};

pub const NUM_CLASSES: usize = 10;

/// Labelled images, one row per sample, pixels in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Dataset<T: Scalar> {
    images: RealMatrix<T>,
    labels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(images: RealMatrix<T>, labels: Vec<u8>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::dims(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(idx) = images
            .as_slice()
            .iter()
            .position(|&p| !(p >= T::zero() && p <= T::one()))
        {
            return Err(Error::invalid(format!("pixel {idx} outside [0, 1]")));
        }
        if let Some(idx) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::invalid(format!("label {idx} is not a digit")));
        }
        Ok(Self { images, labels })
    }

    /// Loads the official MNIST split from `dir`, accepting the usual file
    /// names with or without a `.gz` suffix.
    pub fn load_mnist(dir: impl AsRef<Path>, split: Split) -> Result<Self> {
        let dir = dir.as_ref();
        let images = find_file(dir, split, "images-idx3-ubyte")?;
        let labels = find_file(dir, split, "labels-idx1-ubyte")?;
        Self::new(load_idx_images(images)?, load_idx_labels(labels)?)
    }

    pub fn images(&self) -> &RealMatrix<T> {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.images.cols()
    }

    /// Rows `indices` gathered into a batch, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Batch<T> {
        let d = self.images.cols();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.images.row(i));
            labels.push(self.labels[i]);
        }
        Batch {
            images: RealMatrix::from_vec_unchecked(indices.len(), d, data),
            labels,
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let b = self.gather(&idx);
        Self {
            images: b.images,
            labels: b.labels,
        }
    }
}

fn find_file(dir: &Path, split: Split, stem: &str) -> Result<PathBuf> {
    let prefix = split.prefix();
    let candidates = [
        format!("{prefix}-{stem}"),
        format!("{prefix}-{}", stem.replacen('-', ".", 1)),
    ];
    for name in &candidates {
        for suffix in ["", ".gz"] {
            let path = dir.join(format!("{name}{suffix}"));
            if path.is_file() {
                return Ok(path);
            }
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("no {prefix}-{stem}[.gz] in {}", dir.display()),
    )))
}

/// One mini-batch: `B × d` images and their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Scalar> {
    pub images: RealMatrix<T>,
    pub labels: Vec<u8>,
}

/// Shuffled mini-batches for one epoch; see [`batches`].
pub struct Batches<'a, T: Scalar> {
    data: &'a Dataset<T>,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<T: Scalar> Iterator for Batches<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.data.gather(&self.order[self.pos..end]);
        self.pos = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl<T: Scalar> ExactSizeIterator for Batches<'_, T> {}

/// Mini-batches over a Fisher-Yates shuffle drawn from stream `epoch` of `seed`.
/// The last batch keeps the remainder.
pub fn batches<T: Scalar>(
    data: &Dataset<T>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Batches<'_, T>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    Rng::with_stream(seed, epoch).shuffle(&mut order);
    Ok(Batches {
        data,
        order,
        batch_size,
        pos: 0,
    })
}
