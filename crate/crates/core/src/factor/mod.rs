//! Sign-component factorization `W = Z·A`: packed storage, decompositions and
//! the `±1 ↔ {0,1}` convention mapping.

mod decompose;
mod factorization;
mod sign;

pub use decompose::{
    fit_real_factor,    sign_decompose_full, sign_decompose_rank, RankDecomposition, DEFAULT_MAX_RETRIES,
};
pub use factorization::Factorization;
pub use sign::{random_sign_matrix, Convention, SignMatrix, WORD_BITS};
