use super::{Convention, SignMatrix};
use crate::error::{Error, Result};
use crate::tensor::{RealMatrix, Scalar};

/// `W = Z · A` with `Z` a packed sign matrix (`n×r`) and `A` real (`r×m`).
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization<T: Scalar> {
    z: SignMatrix,
    a: RealMatrix<T>,
}

impl<T: Scalar> Factorization<T> {
    pub fn new(z: SignMatrix, a: RealMatrix<T>) -> Result<Self> {
        if z.cols() != a.rows() {
            return Err(Error::dims(format!(
                "sign factor has {} columns but real factor has {} rows",
                z.cols(),
                a.rows()
            )));
        }
        Ok(Self { z, a })
    }

    pub fn z(&self) -> &SignMatrix {
        &self.z
    }

    pub fn a(&self) -> &RealMatrix<T> {
        &self.a
    }

    pub fn into_parts(self) -> (SignMatrix, RealMatrix<T>) {
        (self.z, self.a)
    }

    pub fn convention(&self) -> Convention {
        self.z.convention()
    }

    pub fn inner_dim(&self) -> usize {
        self.z.cols()
    }

    /// Output shape `(n, m)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.z.rows(), self.a.cols())
    }

    /// `Z · A` by signed (or masked) accumulation of the rows of `A`.
    pub fn reconstruct(&self) -> RealMatrix<T> {
        self.z
            .left_mul(&self.a)
            .expect("inner dimension checked on construction")
    }

    /// Exact `±1 → {0,1}` conversion with inner dimension `r + 1`.
    ///
    /// `Z' = [(Z + 1)/2 | 1]` and `A' = [2A ; -1ᵀA]`, so `Z'A' = ZA + 1·1ᵀA - 1·1ᵀA`.
    pub fn to_zero_one(&self) -> Result<Self> {
        if self.convention() != Convention::PlusMinusOne {
            return Err(Error::invalid("to_zero_one expects a ±1 factorization"));
        }
        let (n, r) = (self.z.rows(), self.z.cols());
        let z = SignMatrix::from_fn(n, r + 1, Convention::ZeroOne, |i, k| {
            k == r || self.z.bit(i, k)
        });
        let two = T::of(2.0);
        let a = augment(&self.a, two, -T::one());
        Self::new(z, a)
    }

    /// Exact `{0,1} → ±1` conversion with inner dimension `r + 1`.
    ///
    /// `Z01 = (Z± + 1)/2`, so `Z01·A = [Z± | 1] · [A/2 ; 1ᵀA/2]`.
    pub fn to_plus_minus_one(&self) -> Result<Self> {
        if self.convention() != Convention::ZeroOne {
            return Err(Error::invalid("to_plus_minus_one expects a {0,1} factorization"));
        }
        let (n, r) = (self.z.rows(), self.z.cols());
        let z = SignMatrix::from_fn(n, r + 1, Convention::PlusMinusOne, |i, k| {
            k == r || self.z.bit(i, k)
        });
        let half = T::of(0.5);
        let a = augment(&self.a, half, half);
        Self::new(z, a)
    }
}

/// `[scale·A ; colsum_factor·1ᵀA]`.
fn augment<T: Scalar>(a: &RealMatrix<T>, scale: T, colsum_factor: T) -> RealMatrix<T> {
    let (r, m) = a.shape();
    let mut colsum = vec![T::zero(); m];
    for k in 0..r {
        for (s, &v) in colsum.iter_mut().zip(a.row(k)) {
            *s += v;
        }
    }
    RealMatrix::from_fn(r + 1, m, |k, j| {
        if k < r {
            scale * a.get(k, j)
        } else {
            colsum_factor * colsum[j]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::random_sign_matrix;
    use crate::tensor::Rng;

    #[test]
    fn hand_mapping_example() {
        let z = SignMatrix::from_real(
            &RealMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
            Convention::PlusMinusOne,
        )
        .unwrap();
        let a = RealMatrix::from_rows(&[vec![2.0], vec![3.0]]).unwrap();
        let f = Factorization::new(z, a).unwrap();
        assert_eq!(f.reconstruct().as_slice(), &[-1.0]);

        let g = f.to_zero_one().unwrap();
        assert_eq!(g.convention(), Convention::ZeroOne);
        assert_eq!(g.z().to_real::<f64>().as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(g.a().as_slice(), &[4.0, 6.0, -5.0]);
        assert_eq!(g.reconstruct().as_slice(), &[-1.0]);
    }

    #[test]
    fn all_plus_pattern_maps_to_ones() {
        let mut rng = Rng::new(4);
        let z = SignMatrix::from_fn(4, 3, Convention::PlusMinusOne, |_, _| true);
        let a = RealMatrix::from_fn(3, 2, |_, _| rng.normal(0.0, 1.0));
        let f = Factorization::new(z, a).unwrap();
        let g = f.to_zero_one().unwrap();
        assert_eq!(g.z().count_ones(), 16);
        let diff = g.reconstruct().sub(&f.reconstruct()).unwrap().max_abs();
        assert!(diff <= 1e-12);
    }

    #[test]
    fn random_mapping_preserves_product() {
        let mut rng = Rng::new(31);
        let z = random_sign_matrix(7, 3, 0.5, &mut rng).unwrap();
        let a = RealMatrix::from_fn(3, 4, |_, _| rng.normal(0.0, 1.0));
        let f = Factorization::new(z, a).unwrap();
        let w = f.reconstruct();
        let g = f.to_zero_one().unwrap();
        assert!(g.reconstruct().sub(&w).unwrap().frobenius_norm() <= 1e-12 * w.frobenius_norm());
        let h = g.to_plus_minus_one().unwrap();
        assert_eq!(h.inner_dim(), 5);
        assert!(h.reconstruct().sub(&w).unwrap().frobenius_norm() <= 1e-12 * w.frobenius_norm());
    }

    #[test]
    fn wrong_convention_is_rejected() {
        let z = SignMatrix::cleared(2, 2, Convention::ZeroOne);
        let f = Factorization::new(z, RealMatrix::<f64>::zeros(2, 1)).unwrap();
        assert!(f.to_zero_one().is_err());
        let f = Factorization::new(
            SignMatrix::cleared(2, 2, Convention::PlusMinusOne),
            RealMatrix::<f64>::zeros(2, 1),
        )
        .unwrap();
        assert!(f.to_plus_minus_one().is_err());
    }

    #[test]
    fn rank_one_and_zero_row() {
        let a = RealMatrix::from_rows(&[vec![1.5, -2.0, 0.25]]).unwrap();
        let z = SignMatrix::from_fn(4, 1, Convention::PlusMinusOne, |_, _| true);
        let w = Factorization::new(z, a.clone()).unwrap().reconstruct();
        for i in 0..4 {
            assert_eq!(w.row(i), a.row(0));
        }

        let z = SignMatrix::from_fn(3, 2, Convention::ZeroOne, |i, _| i != 1);
        let a = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let w = Factorization::new(z, a).unwrap().reconstruct();
        assert_eq!(w.row(1), &[0.0, 0.0]);
        assert_eq!(w.row(0), &[4.0, 6.0]);
    }

    #[test]
    fn shape_mismatch() {
        let z = SignMatrix::cleared(2, 3, Convention::PlusMinusOne);
        assert!(Factorization::new(z, RealMatrix::<f64>::zeros(2, 2)).is_err());
    }
}
