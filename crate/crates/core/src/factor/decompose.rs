use super::{random_sign_matrix, Convention, Factorization, SignMatrix};
use crate::error::{Error, Result};
use crate::tensor::{matmul, solve_linear, RealMatrix, Rng, Scalar};

/// Singular draws tolerated by [`sign_decompose_full`] before giving up.
pub const DEFAULT_MAX_RETRIES: usize = 32;

/// Ranks up to this use an exact search over all `2^r` sign patterns per row of
/// `Z`; larger ranks scan single-entry flips.
const EXHAUSTIVE_ROW_RANK: usize = 10;

/// Relative residual at which the reduced-rank search counts as exact.
const EXACT_TOLERANCE: f64 = 1e-12;

/// Full inner-dimension decomposition `B = Z·A` with `Z` an `n×n` sign matrix.
///
/// Draws `Z` uniformly and solves `Z·A = B`; a singular draw is retried up to
/// `max_retries` times.
pub fn sign_decompose_full<T: Scalar>(
    b: &RealMatrix<T>,
    rng: &mut Rng,
    max_retries: usize,
) -> Result<Factorization<T>> {
    let n = b.rows();
    let mut last_err = None;
    for _ in 0..max_retries.max(1) {
        let z = random_sign_matrix(n, n, 0.5, rng)?;
        match solve_linear(&z.to_real(), b) {
            Ok(a) => return Factorization::new(z, a),
            Err(e @ Error::Singular { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(Error::Decomposition(format!(
        "{max_retries} singular sign draws in a row for n = {n} ({})",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Result of [`sign_decompose_rank`].
#[derive(Clone, Debug)]
pub struct RankDecomposition<T: Scalar> {
    pub factorization: Factorization<T>,
    /// `‖ZA − B‖_F / max(‖B‖_F, tiny)` of the returned factorization.
    pub residual: f64,
    /// Relative residual after every least-squares step, in order. Within one
    /// descent run the sequence never increases; a new run starts after each
    /// entry of `restarts`.
    pub history: Vec<f64>,
    /// Indices into `history` where a fresh random start began.
    pub restarts: Vec<usize>,
    pub sweeps: usize,
}

/// Reduced-rank sign decomposition by alternating minimization.
///
/// Each sweep solves the least-squares problem for `A` with `Z` fixed, then
/// scans the entries of `Z` in row-major order, flipping any entry whose flip
/// strictly lowers `‖ZA − B‖_F`. A sweep without flips is a local minimum; the
/// search then restarts from a fresh random `Z` while sweeps remain. The best
/// factorization seen is returned. For `r = n` a result above `1e-9` falls back
/// to [`sign_decompose_full`].
pub fn sign_decompose_rank<T: Scalar>(
    b: &RealMatrix<T>,
    r: usize,
    iters: usize,
    rng: &mut Rng,
) -> Result<RankDecomposition<T>> {
    let (n, m) = b.shape();
    if r == 0 || r > n {
        return Err(Error::invalid(format!("inner rank {r} outside 1..={n}")));
    }
    let target: RealMatrix<f64> = b.cast();
    let b_norm = target.frobenius_norm().max(f64::MIN_POSITIVE);

    let mut z = random_signs(n, r, rng);
    let mut best: Option<(f64, Vec<f64>, RealMatrix<f64>)> = None;
    let mut history = Vec::new();
    let mut restarts = vec![0];
    let mut sweeps = 0;

    while sweeps < iters.max(1) {
        sweeps += 1;
        let a = least_squares(&z, r, &target)?;
        let mut resid = residual_matrix(&z, r, &a, &target);
        let rel = resid.frobenius_norm() / b_norm;
        history.push(rel);
        if best.as_ref().is_none_or(|(res, _, _)| rel < *res) {
            best = Some((rel, z.clone(), a.clone()));
        }
        if rel <= EXACT_TOLERANCE {
            break;
        }
        let flips = if r <= EXHAUSTIVE_ROW_RANK {
            row_search_pass(&mut z, r, &a, &mut resid, m)
        } else {
            flip_pass(&mut z, r, &a, &mut resid, m)
        };
        if flips == 0 {
            if sweeps < iters {
                z = random_signs(n, r, rng);
                restarts.push(history.len());
            }
            continue;
        }
    }

    let (mut residual, best_z, best_a) = best.expect("at least one sweep runs");
    let z_packed = SignMatrix::from_fn(n, r, Convention::PlusMinusOne, |i, k| best_z[i * r + k] > 0.0);
    let mut factorization = Factorization::new(z_packed, best_a.cast())?;

    if r == n && residual > 1e-9 {
        let full = sign_decompose_full(&target, rng, DEFAULT_MAX_RETRIES)?;
        let rel = full.reconstruct().sub(&target)?.frobenius_norm() / b_norm;
        if rel < residual {
            let (z, a) = full.into_parts();
            factorization = Factorization::new(z, a.cast())?;
            residual = rel;
        }
    }

    Ok(RankDecomposition {
        factorization,
        residual,
        history,
        restarts,
        sweeps,
    })
}

/// Least-squares real factor for a fixed sign factor: `argmin_A ‖Z·A − target‖_F`.
///
/// Solved in 64-bit through the normal equations, with a `1e-10·trace(ZᵀZ)` ridge
/// when `ZᵀZ` is singular.
pub fn fit_real_factor<T: Scalar>(z: &SignMatrix, target: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    if z.rows() != target.rows() {
        return Err(Error::dims(format!(
            "sign factor with {} rows against a {}-row target",
            z.rows(),
            target.rows()
        )));
    }
    let dense = z.to_real::<f64>();
    Ok(least_squares(dense.as_slice(), z.cols(), &target.cast())?.cast())
}

fn random_signs(n: usize, r: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n * r)
        .map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 })
        .collect()
}

/// `argmin_A ‖ZA − B‖_F` via the normal equations, with a ridge of
/// `1e-10·trace(ZᵀZ)` when `ZᵀZ` is singular.
fn least_squares(z: &[f64], r: usize, b: &RealMatrix<f64>) -> Result<RealMatrix<f64>> {
    let n = b.rows();
    let z = RealMatrix::from_vec_unchecked(n, r, z.to_vec());
    let zt = z.transpose();
    let mut gram = matmul(&zt, &z)?;
    let rhs = matmul(&zt, b)?;
    match solve_linear(&gram, &rhs) {
        Ok(a) => Ok(a),
        Err(Error::Singular { .. }) => {
            let ridge = 1e-10 * (0..r).map(|k| gram.get(k, k)).sum::<f64>();
            for k in 0..r {
                gram.set(k, k, gram.get(k, k) + ridge);
            }
            solve_linear(&gram, &rhs)
        }
        Err(e) => Err(e),
    }
}

fn residual_matrix(z: &[f64], r: usize, a: &RealMatrix<f64>, b: &RealMatrix<f64>) -> RealMatrix<f64> {
    let z = RealMatrix::from_vec_unchecked(b.rows(), r, z.to_vec());
    matmul(&z, a)
        .and_then(|za| b.sub(&za))
        .expect("shapes agree by construction")
}

/// One coordinate-descent pass over `Z` with `A` fixed; keeps `resid = B − ZA` current.
///
/// Flipping `z_jk` changes row `j` of the residual by `2·z_jk·a_k`, so the squared
/// row norm changes by `4·z_jk·(R_j·a_k) + 4·‖a_k‖²`.
fn flip_pass(z: &mut [f64], r: usize, a: &RealMatrix<f64>, resid: &mut RealMatrix<f64>, m: usize) -> usize {
    let a_sq: Vec<f64> = (0..r).map(|k| a.row(k).iter().map(|v| v * v).sum()).collect();
    let mut flips = 0;
    for j in 0..resid.rows() {
        for k in 0..r {
            let zjk = z[j * r + k];
            let a_k = a.row(k);
            let dot: f64 = resid.row(j).iter().zip(a_k).map(|(x, y)| x * y).sum();
            let delta = 4.0 * zjk * dot + 4.0 * a_sq[k];
            let row_sq: f64 = resid.row(j).iter().map(|v| v * v).sum();
            if delta < -1e-12 * (row_sq + a_sq[k]) {
                let row = resid.row_mut(j);
                for t in 0..m {
                    row[t] += 2.0 * zjk * a_k[t];
                }
                z[j * r + k] = -zjk;
                flips += 1;
            }
        }
    }
    flips
}

/// Replaces each row of `Z` by its exact minimizer over `{±1}^r` with `A` fixed.
///
/// Rows of `B − ZA` are independent given `A`, so this is the exact `Z` step. The
/// patterns are visited in Gray-code order, one flip apart, starting from the
/// current row; only a strict improvement replaces it. Returns the number of
/// entries changed.
fn row_search_pass(
    z: &mut [f64],
    r: usize,
    a: &RealMatrix<f64>,
    resid: &mut RealMatrix<f64>,
    m: usize,
) -> usize {
    let mut changed = 0;
    let mut trial = vec![0.0; m];
    for j in 0..resid.rows() {
        let start: Vec<f64> = z[j * r..(j + 1) * r].to_vec();
        let mut current = start.clone();
        trial.copy_from_slice(resid.row(j));
        let base_sq: f64 = trial.iter().map(|v| v * v).sum();
        let mut best_sq = base_sq;
        let mut best = start.clone();
        for step in 1u64..(1u64 << r) {
            let k = step.trailing_zeros() as usize;
            let zk = current[k];
            for (t, &v) in trial.iter_mut().zip(a.row(k)) {
                *t += 2.0 * zk * v;
            }
            current[k] = -zk;
            let sq: f64 = trial.iter().map(|v| v * v).sum();
            if sq < best_sq - 1e-12 * base_sq {
                best_sq = sq;
                best.copy_from_slice(&current);
            }
        }
        if best != start {
            let row = resid.row_mut(j);
            for k in 0..r {
                if best[k] != start[k] {
                    for (t, &v) in row.iter_mut().zip(a.row(k)) {
                        *t += 2.0 * start[k] * v;
                    }
                    changed += 1;
                }
            }
            z[j * r..(j + 1) * r].copy_from_slice(&best);
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relative_residual(f: &Factorization<f64>, b: &RealMatrix<f64>) -> f64 {
        f.reconstruct().sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1.0)
    }

    #[test]
    fn full_recovers_sign_matrix_as_identity() {
        let mut draw = Rng::new(12);
        let s = random_sign_matrix(5, 5, 0.5, &mut draw).unwrap().to_real::<f64>();
        // Same seed, so the first draw is `s` itself.
        let f = sign_decompose_full(&s, &mut Rng::new(12), DEFAULT_MAX_RETRIES).unwrap();
        assert_eq!(f.z().to_real::<f64>(), s);
        let eye = RealMatrix::<f64>::identity(5);
        assert!(f.a().sub(&eye).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn full_of_zero_is_zero() {
        let b = RealMatrix::<f64>::zeros(4, 3);
        let f = sign_decompose_full(&b, &mut Rng::new(1), DEFAULT_MAX_RETRIES).unwrap();
        assert!(f.a().as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(f.reconstruct(), b);
    }

    #[test]
    fn full_random_rectangular() {
        let mut rng = Rng::new(99);
        let b = RealMatrix::from_fn(8, 5, |_, _| rng.normal(0.0, 1.0));
        let f = sign_decompose_full(&b, &mut rng, DEFAULT_MAX_RETRIES).unwrap();
        assert_eq!(f.inner_dim(), 8);
        assert!(relative_residual(&f, &b) <= 1e-10);
    }

    #[test]
    fn full_single_row_never_singular() {
        let b = RealMatrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
        let f = sign_decompose_full(&b, &mut Rng::new(0), 1).unwrap();
        assert!(relative_residual(&f, &b) == 0.0);
    }

    #[test]
    fn rank_planted_solution() {
        let mut rng = Rng::new(2);
        let z0 = random_sign_matrix(6, 4, 0.5, &mut rng).unwrap();
        let a0 = RealMatrix::from_fn(4, 5, |_, _| rng.normal(0.0, 1.0));
        let b = Factorization::new(z0, a0).unwrap().reconstruct();
        let out = sign_decompose_rank(&b, 4, 200, &mut rng).unwrap();
        assert!(out.residual <= 1e-6, "{}", out.residual);
        assert!(relative_residual(&out.factorization, &b) <= 1e-6);
    }

    #[test]
    fn rank_full_matches_full_quality() {
        let mut rng = Rng::new(6);
        let b = RealMatrix::from_fn(5, 7, |_, _| rng.normal(0.0, 1.0));
        let out = sign_decompose_rank(&b, 5, 50, &mut rng).unwrap();
        assert!(out.residual <= 1e-9, "{}", out.residual);
    }

    #[test]
    fn rank_of_zero() {
        let b = RealMatrix::<f64>::zeros(4, 3);
        let out = sign_decompose_rank(&b, 2, 10, &mut Rng::new(0)).unwrap();
        assert_eq!(out.residual, 0.0);
        assert!(out.factorization.a().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_rejects_bad_rank() {
        let b = RealMatrix::<f64>::zeros(4, 3);
        assert!(sign_decompose_rank(&b, 0, 10, &mut Rng::new(0)).is_err());
        assert!(sign_decompose_rank(&b, 5, 10, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn rank_residual_monotone_within_each_run() {
        for seed in 0..20 {
            let mut rng = Rng::new(seed);
            let b = RealMatrix::from_fn(10, 6, |_, _| rng.normal(0.0, 1.0));
            let out = sign_decompose_rank(&b, 3, 60, &mut rng).unwrap();
            let mut bounds = out.restarts.clone();
            bounds.push(out.history.len());
            for run in bounds.windows(2) {
                for pair in out.history[run[0]..run[1]].windows(2) {
                    assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "seed {seed}: {pair:?}");
                }
            }
            let min = out.history.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((out.residual - min).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_flip_path_is_monotone() {
        let mut rng = Rng::new(41);
        let b = RealMatrix::from_fn(16, 9, |_, _| rng.normal(0.0, 1.0));
        let out = sign_decompose_rank(&b, 12, 40, &mut rng).unwrap();
        assert!(out.history.len() > 1);
        let mut bounds = out.restarts.clone();
        bounds.push(out.history.len());
        for run in bounds.windows(2) {
            for pair in out.history[run[0]..run[1]].windows(2) {
                assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "{pair:?}");
            }
        }
        assert!(out.residual < 1.0);
    }
}
