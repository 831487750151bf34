use std::fmt;

use super::Scalar;
use crate::error::{Error, Result};

/// Dense row-major matrix.
///
/// Products accumulate every output entry over the inner index in ascending
/// order, so results are bitwise reproducible for a given scalar type.
#[derive(Clone, PartialEq)]
pub struct RealMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> RealMatrix<T> {
    /// Wraps external data; rejects a wrong length or any non-finite entry.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dims("ragged rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.data[i * self.cols + j]);
            }
        }
        Self::from_vec_unchecked(self.cols, self.rows, out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// Element-wise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dims(format!(
                "{:?} minus {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self::from_vec_unchecked(self.rows, self.cols, data))
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius_norm(self)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }

    /// Converts entry-wise to another scalar type.
    pub fn cast<U: Scalar>(&self) -> RealMatrix<U> {
        RealMatrix::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        )
    }

    /// Stacks `self` on top of `other` (same column count).
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::dims(format!(
                "vstack of {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self::from_vec_unchecked(self.rows + other.rows, self.cols, data))
    }
}

impl<T: Scalar> fmt::Debug for RealMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

/// `a (n×r) · b (r×m)`.
pub fn matmul<T: Scalar>(a: &RealMatrix<T>, b: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    if a.cols != b.rows {
        return Err(Error::dims(format!(
            "matmul of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = RealMatrix::zeros(a.rows, b.cols);
    gemm_acc(&a.data, &b.data, &mut out.data, a.rows, a.cols, b.cols);
    Ok(out)
}

/// `c (n×m) += a (n×r) · b (r×m)`, accumulating each entry over ascending inner index.
///
/// Four inner terms are folded per pass, evaluated left to right, which keeps the
/// summation order identical to the plain triple loop.
pub(crate) fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], n: usize, r: usize, m: usize) {
    debug_assert_eq!(a.len(), n * r);
    debug_assert_eq!(b.len(), r * m);
    debug_assert_eq!(c.len(), n * m);
    for i in 0..n {
        let a_row = &a[i * r..(i + 1) * r];
        let c_row = &mut c[i * m..(i + 1) * m];
        let mut k = 0;
        while k + 4 <= r {
            let (x0, x1, x2, x3) = (a_row[k], a_row[k + 1], a_row[k + 2], a_row[k + 3]);
            let b0 = &b[k * m..(k + 1) * m];
            let b1 = &b[(k + 1) * m..(k + 2) * m];
            let b2 = &b[(k + 2) * m..(k + 3) * m];
            let b3 = &b[(k + 3) * m..(k + 4) * m];
            for ((((cv, &y0), &y1), &y2), &y3) in
                c_row.iter_mut().zip(b0).zip(b1).zip(b2).zip(b3)
            {
                *cv = *cv + x0 * y0 + x1 * y1 + x2 * y2 + x3 * y3;
            }
            k += 4;
        }
        while k < r {
            let x = a_row[k];
            for (cv, &y) in c_row.iter_mut().zip(&b[k * m..(k + 1) * m]) {
                *cv = *cv + x * y;
            }
            k += 1;
        }
    }
}

pub fn frobenius_norm<T: Scalar>(m: &RealMatrix<T>) -> T {
    m.data.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

/// Solves `s · x = b` by Gaussian elimination with partial pivoting.
///
/// A pivot below `1e-12 · max|s|` is reported as [`Error::Singular`].
pub fn solve_linear<T: Scalar>(s: &RealMatrix<T>, b: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    let n = s.rows;
    if s.cols != n {
        return Err(Error::dims(format!("solve with non-square {}x{}", s.rows, s.cols)));
    }
    if b.rows != n {
        return Err(Error::dims(format!(
            "solve of {n}x{n} system with {} right-hand rows",
            b.rows
        )));
    }
    let m = b.cols;
    let threshold = T::of(1e-12) * s.max_abs();
    let mut lhs = s.data.clone();
    let mut rhs = b.data.clone();

    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, lhs[r * n + col].abs()))
            .fold((col, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > threshold) || pivot_abs == T::zero() {
            return Err(Error::Singular {
                column: col,
                pivot: pivot_abs.as_f64(),
            });
        }
        if pivot_row != col {
            for j in 0..n {
                lhs.swap(col * n + j, pivot_row * n + j);
            }
            for j in 0..m {
                rhs.swap(col * m + j, pivot_row * m + j);
            }
        }
        let pivot = lhs[col * n + col];
        for r in col + 1..n {
            let factor = lhs[r * n + col] / pivot;
            if factor == T::zero() {
                continue;
            }
            lhs[r * n + col] = T::zero();
            for j in col + 1..n {
                let v = lhs[col * n + j];
                lhs[r * n + j] -= factor * v;
            }
            for j in 0..m {
                let v = rhs[col * m + j];
                rhs[r * m + j] -= factor * v;
            }
        }
    }

    for col in (0..n).rev() {
        let pivot = lhs[col * n + col];
        for j in 0..m {
            let mut acc = rhs[col * m + j];
            for k in col + 1..n {
                acc -= lhs[col * n + k] * rhs[k * m + j];
            }
            rhs[col * m + j] = acc / pivot;
        }
    }
    Ok(RealMatrix::from_vec_unchecked(n, m, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> RealMatrix<f64> {
        RealMatrix::from_fn(rows, cols, |_, _| rng.uniform(-1.0, 1.0))
    }

    fn triple_loop(a: &RealMatrix<f64>, b: &RealMatrix<f64>) -> RealMatrix<f64> {
        let mut out = RealMatrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn identity_times_b_is_b() {
        let mut rng = Rng::new(1);
        let b = random(3, 5, &mut rng);
        assert_eq!(matmul(&RealMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn hand_product() {
        let a = RealMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = RealMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = Rng::new(7);
        let a = random(5, 4, &mut rng);
        let b = random(4, 3, &mut rng);
        let fast = matmul(&a, &b).unwrap();
        let slow = triple_loop(&a, &b);
        for (x, y) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((x - y).abs() <= 1e-12);
        }
        // Unrolled and remainder paths agree exactly with sequential accumulation.
        let a = random(3, 11, &mut rng);
        let b = random(11, 6, &mut rng);
        assert_eq!(matmul(&a, &b).unwrap(), triple_loop(&a, &b));
    }

    #[test]
    fn mismatch_is_error() {
        let a = RealMatrix::<f64>::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn associativity() {
        for seed in 0..20 {
            let mut rng = Rng::new(seed);
            let (a, b, c) = (random(6, 6, &mut rng), random(6, 6, &mut rng), random(6, 6, &mut rng));
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let rel = left.sub(&right).unwrap().frobenius_norm() / left.frobenius_norm();
            assert!(rel <= 1e-9, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn frobenius_cases() {
        assert_eq!(frobenius_norm(&RealMatrix::<f64>::zeros(3, 3)), 0.0);
        assert_eq!(frobenius_norm(&RealMatrix::<f64>::filled(3, 4, 1.0)), 12f64.sqrt());
        let mut rng = Rng::new(3);
        let m = random(7, 9, &mut rng);
        let mut acc = 0.0;
        for i in 0..7 {
            for j in 0..9 {
                acc += m.get(i, j) * m.get(i, j);
            }
        }
        assert!((frobenius_norm(&m) - acc.sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn solve_identity_and_hand_case() {
        let mut rng = Rng::new(5);
        let b = random(4, 2, &mut rng);
        assert_eq!(solve_linear(&RealMatrix::identity(4), &b).unwrap(), b);

        let s = RealMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let b = RealMatrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
        assert_eq!(solve_linear(&s, &b).unwrap().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn solve_random_sign_system() {
        let mut rng = Rng::new(11);
        let mut solved = 0;
        while solved < 10 {
            let s = RealMatrix::from_fn(8, 8, |_, _| if rng.bernoulli(0.5) { 1.0 } else { -1.0 });
            let b = random(8, 3, &mut rng);
            let Ok(x) = solve_linear(&s, &b) else { continue };
            let resid = matmul(&s, &x).unwrap().sub(&b).unwrap().frobenius_norm() / b.frobenius_norm();
            assert!(resid <= 1e-10, "{resid}");
            solved += 1;
        }
    }

    #[test]
    fn singular_is_reported() {
        let s = RealMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let b = RealMatrix::<f64>::zeros(2, 1);
        assert!(matches!(solve_linear(&s, &b), Err(Error::Singular { .. })));
        assert!(matches!(
            solve_linear(&RealMatrix::<f64>::zeros(2, 2), &b),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            RealMatrix::new(2, 2, vec![1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            RealMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite(1))
        ));
    }
}
