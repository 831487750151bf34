use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{RealMatrix, Rng, Scalar};

/// Value set the entries of a [`SignMatrix`] are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Convention {
    /// A set bit is `+1`, a clear bit is `-1`.
    PlusMinusOne,
    /// A set bit is `1`, a clear bit is `0`.
    ZeroOne,
}

impl Convention {
    #[inline]
    pub fn value<T: Scalar>(self, bit: bool) -> T {
        match (self, bit) {
            (_, true) => T::one(),
            (Convention::PlusMinusOne, false) => -T::one(),
            (Convention::ZeroOne, false) => T::zero(),
        }
    }
}

pub const WORD_BITS: usize = u64::BITS as usize;

/// Bit-packed matrix with entries in `{-1, +1}` or `{0, 1}`.
///
/// Entry `(i, j)` lives at linear index `i * cols + j`, stored in word
/// `index / 64` at bit `index % 64` (least-significant bit first). Padding bits
/// in the last word are always zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignMatrix {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
    convention: Convention,
}

impl SignMatrix {
    /// All bits clear: every entry `-1` (or `0`).
    pub fn cleared(rows: usize, cols: usize, convention: Convention) -> Self {
        Self {
            rows,
            cols,
            words: vec![0; (rows * cols).div_ceil(WORD_BITS)],
            convention,
        }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        convention: Convention,
        mut bit: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut out = Self::cleared(rows, cols, convention);
        for i in 0..rows {
            for j in 0..cols {
                if bit(i, j) {
                    out.set_bit(i, j, true);
                }
            }
        }
        out
    }

    /// Packs a real matrix whose entries are exactly the two values of `convention`.
    pub fn from_real<T: Scalar>(m: &RealMatrix<T>, convention: Convention) -> Result<Self> {
        let low = convention.value::<T>(false);
        let mut out = Self::cleared(m.rows(), m.cols(), convention);
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m.get(i, j);
                if v == T::one() {
                    out.set_bit(i, j, true);
                } else if v != low {
                    return Err(Error::invalid(format!(
                        "entry ({i},{j}) = {v} is not in the {convention:?} value set"
                    )));
                }
            }
        }
        Ok(out)
    }

    /// Rebuilds from packed words, checking the word count and zero padding.
    pub fn from_words(
        rows: usize,
        cols: usize,
        convention: Convention,
        words: Vec<u64>,
    ) -> Result<Self> {
        let bits = rows * cols;
        if words.len() != bits.div_ceil(WORD_BITS) {
            return Err(Error::format(format!(
                "{} words for a {rows}x{cols} sign matrix",
                words.len()
            )));
        }
        let tail = bits % WORD_BITS;
        if tail != 0 && words[words.len() - 1] >> tail != 0 {
            return Err(Error::format("nonzero padding bits in sign matrix"));
        }
        Ok(Self {
            rows,
            cols,
            words,
            convention,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn convention(&self) -> Convention {
        self.convention
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, i: usize, j: usize) -> bool {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        let idx = i * self.cols + j;
        self.words[idx / WORD_BITS] >> (idx % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set_bit(&mut self, i: usize, j: usize, on: bool) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        let idx = i * self.cols + j;
        let mask = 1u64 << (idx % WORD_BITS);
        if on {
            self.words[idx / WORD_BITS] |= mask;
        } else {
            self.words[idx / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn value<T: Scalar>(&self, i: usize, j: usize) -> T {
        self.convention.value(self.bit(i, j))
    }

    pub fn to_real<T: Scalar>(&self) -> RealMatrix<T> {
        RealMatrix::from_fn(self.rows, self.cols, |i, j| self.value(i, j))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Same bit pattern under the other convention.
    ///
    /// Going from `±1` to `{0,1}` this is exactly the entry-wise map `(z + 1) / 2`.
    pub fn relabel(mut self, convention: Convention) -> Self {
        self.convention = convention;
        self
    }

    /// SHA-256 over shape, convention and packed words, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.rows as u64).to_le_bytes());
        hasher.update((self.cols as u64).to_le_bytes());
        hasher.update([self.convention as u8]);
        for w in &self.words {
            hasher.update(w.to_le_bytes());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `self (n×r) · u (r×m)` by accumulating rows of `u` without multiplications.
    pub fn left_mul<T: Scalar>(&self, u: &RealMatrix<T>) -> Result<RealMatrix<T>> {
        if self.cols != u.rows() {
            return Err(Error::dims(format!(
                "sign {}x{} times {}x{}",
                self.rows,
                self.cols,
                u.rows(),
                u.cols()
            )));
        }
        let m = u.cols();
        let mut out = RealMatrix::zeros(self.rows, m);
        for i in 0..self.rows {
            let out_row = out.row_mut(i);
            for k in 0..self.cols {
                let src = u.row(k);
                match (self.convention, self.bit(i, k)) {
                    (_, true) => out_row.iter_mut().zip(src).for_each(|(o, &v)| *o += v),
                    (Convention::PlusMinusOne, false) => {
                        out_row.iter_mut().zip(src).for_each(|(o, &v)| *o -= v)
                    }
                    (Convention::ZeroOne, false) => {}
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ (r×n) · g (n×m)`, accumulating over rows of `g` in ascending order.
    pub fn transpose_mul<T: Scalar>(&self, g: &RealMatrix<T>) -> Result<RealMatrix<T>> {
        if self.rows != g.rows() {
            return Err(Error::dims(format!(
                "sign transpose {}x{} times {}x{}",
                self.cols,
                self.rows,
                g.rows(),
                g.cols()
            )));
        }
        let m = g.cols();
        let mut out = RealMatrix::zeros(self.cols, m);
        for i in 0..self.rows {
            let src = g.row(i);
            for k in 0..self.cols {
                let dst = out.row_mut(k);
                match (self.convention, self.bit(i, k)) {
                    (_, true) => dst.iter_mut().zip(src).for_each(|(o, &v)| *o += v),
                    (Convention::PlusMinusOne, false) => {
                        dst.iter_mut().zip(src).for_each(|(o, &v)| *o -= v)
                    }
                    (Convention::ZeroOne, false) => {}
                }
            }
        }
        Ok(out)
    }
}

/// Draws an `n×r` `±1` matrix with each entry `+1` independently with probability `p`.
pub fn random_sign_matrix(n: usize, r: usize, p: f64, rng: &mut Rng) -> Result<SignMatrix> {
    if n == 0 || r == 0 {
        return Err(Error::invalid(format!("empty sign matrix {n}x{r}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    Ok(SignMatrix::from_fn(n, r, Convention::PlusMinusOne, |_, _| {
        rng.bernoulli(p)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    #[test]
    fn balanced_draw_has_small_mean() {
        let z = random_sign_matrix(300, 100, 0.5, &mut Rng::new(2024)).unwrap();
        let mean = z.to_real::<f64>().as_slice().iter().sum::<f64>() / 30_000.0;
        assert!(mean.abs() <= 0.05, "{mean}");
    }

    #[test]
    fn single_entry_and_determinism() {
        let z = random_sign_matrix(1, 1, 0.5, &mut Rng::new(0)).unwrap();
        let v: f64 = z.value(0, 0);
        assert!(v == 1.0 || v == -1.0);

        let a = random_sign_matrix(17, 9, 0.5, &mut Rng::new(5)).unwrap();
        let b = random_sign_matrix(17, 9, 0.5, &mut Rng::new(5)).unwrap();
        assert_eq!(a.words(), b.words());
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut rng = Rng::new(0);
        assert!(random_sign_matrix(0, 3, 0.5, &mut rng).is_err());
        assert!(random_sign_matrix(3, 0, 0.5, &mut rng).is_err());
        assert!(random_sign_matrix(3, 3, 0.0, &mut rng).is_err());
        assert!(random_sign_matrix(3, 3, 1.0, &mut rng).is_err());
    }

    #[test]
    fn from_words_validates_padding() {
        assert!(SignMatrix::from_words(3, 3, Convention::ZeroOne, vec![1 << 9]).is_err());
        assert!(SignMatrix::from_words(3, 3, Convention::ZeroOne, vec![0, 0]).is_err());
        assert!(SignMatrix::from_words(3, 3, Convention::ZeroOne, vec![0x1ff]).is_ok());
    }

    #[test]
    fn multiplication_matches_dense() {
        let mut rng = Rng::new(8);
        let z = random_sign_matrix(7, 5, 0.5, &mut rng).unwrap();
        let u = RealMatrix::from_fn(5, 3, |_, _| rng.normal(0.0, 1.0));
        let g = RealMatrix::from_fn(7, 4, |_, _| rng.normal(0.0, 1.0));
        for z in [z.clone(), z.relabel(Convention::ZeroOne)] {
            let dense = z.to_real::<f64>();
            let fast = z.left_mul(&u).unwrap();
            let slow = dense.matmul(&u).unwrap();
            assert!(fast.sub(&slow).unwrap().max_abs() <= 1e-12);
            let fast = z.transpose_mul(&g).unwrap();
            let slow = dense.transpose().matmul(&g).unwrap();
            assert!(fast.sub(&slow).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn pack_round_trip_all_shapes() {
        let mut rng = Rng::new(77);
        for rows in 1..=64 {
            for cols in 1..=64 {
                let bits: Vec<bool> = (0..rows * cols).map(|_| rng.bernoulli(0.5)).collect();
                let z = SignMatrix::from_fn(rows, cols, Convention::PlusMinusOne, |i, j| {
                    bits[i * cols + j]
                });
                let real = z.to_real::<f64>();
                let back = SignMatrix::from_real(&real, Convention::PlusMinusOne).unwrap();
                assert_eq!(back, z);
                let rebuilt =
                    SignMatrix::from_words(rows, cols, z.convention(), z.words().to_vec()).unwrap();
                assert_eq!(rebuilt, z);
                for i in 0..rows {
                    for j in 0..cols {
                        assert_eq!(z.bit(i, j), bits[i * cols + j]);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn zero_one_unpack_pack(rows in 1usize..40, cols in 1usize..40, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let real = RealMatrix::from_fn(rows, cols, |_, _| if rng.bernoulli(0.3) { 1.0f32 } else { 0.0 });
            let packed = SignMatrix::from_real(&real, Convention::ZeroOne).unwrap();
            prop_assert_eq!(packed.to_real::<f32>(), real);
            prop_assert_eq!(packed.words().len(), (rows * cols).div_ceil(64));
        }
    }
}
