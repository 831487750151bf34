//! MNIST IDX parsing, normalization and deterministic mini-batching.

mod dataset;
mod idx;

pub use dataset::{batches, Batch, Batches, Dataset, Split};
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx_images, load_idx_labels, parse_idx_images,
    parse_idx_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC,
};
