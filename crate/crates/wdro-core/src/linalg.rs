//! Dense linear algebra on small row-major matrices.
//!
//! Matrices are flat `Vec<f64>` or `&[f64]` slices in row-major order with
//! explicit dimensions at call sites. Every dimension in this crate is tiny
//! (the parameter dimension is 2 or 3 in all shipped experiments), so the
//! routines favor determinism and clarity over scalability: partial-pivot
//! LU, classical cyclic Jacobi sweeps, no blocking, no parallelism.

/// a (rows x cols) times x (cols), returning rows entries.
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut out = vec![0.0; rows];
    for i in 0..rows {
        let row = &a[i * cols..(i + 1) * cols];
        let mut acc = 0.0;
        for j in 0..cols {
            acc += row[j] * x[j];
        }
        out[i] = acc;
    }
    out
}

/// a' (cols x rows) times x (rows), returning cols entries.
pub fn mat_t_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        let row = &a[i * cols..(i + 1) * cols];
        let xi = x[i];
        for j in 0..cols {
            out[j] += row[j] * xi;
        }
    }
    out
}

/// a (ar x ac) times b (ac x bc).
pub fn mat_mul(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), ar * ac);
    debug_assert_eq!(b.len(), ac * bc);
    let mut out = vec![0.0; ar * bc];
    for i in 0..ar {
        for k in 0..ac {
            let aik = a[i * ac + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..bc {
                out[i * bc + j] += aik * b[k * bc + j];
            }
        }
    }
    out
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
    }
    out
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// (a + a') / 2.
pub fn symmetrize(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    out
}

/// Solves a x = rhs by LU with partial pivoting. Returns None when a pivot
/// collapses below 1e-13 relative to the matrix scale, which callers treat
/// as "matrix singular for our purposes".
pub fn lu_solve(a: &[f64], n: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(rhs.len(), n);
    let mut m = a.to_vec();
    let mut x = rhs.to_vec();
    let scale = max_abs(a).max(1e-300);
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        // Pivot selection.
        let mut best = col;
        let mut best_abs = m[perm[col] * n + col].abs();
        for row in (col + 1)..n {
            let v = m[perm[row] * n + col].abs();
            if v > best_abs {
                best = row;
                best_abs = v;
            }
        }
        if best_abs <= 1e-13 * scale {
            return None;
        }
        perm.swap(col, best);
        let pivot_row = perm[col];
        let pivot = m[pivot_row * n + col];
        for row in (col + 1)..n {
            let r = perm[row];
            let factor = m[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            m[r * n + col] = 0.0;
            for j in (col + 1)..n {
                m[r * n + j] -= factor * m[pivot_row * n + j];
            }
            x[r] -= factor * x[pivot_row];
        }
    }
    // Back substitution in permuted order.
    let mut out = vec![0.0; n];
    for col in (0..n).rev() {
        let r = perm[col];
        let mut acc = x[r];
        for j in (col + 1)..n {
            acc -= m[r * n + j] * out[j];
        }
        out[col] = acc / m[r * n + col];
    }
    Some(out)
}

/// Matrix inverse via n LU solves. None when singular.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut out = vec![0.0; n * n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = lu_solve(a, n, &e)?;
        for i in 0..n {
            out[i * n + j] = col[i];
        }
    }
    Some(out)
}

/// Lower-triangular Cholesky factor of a symmetric positive definite
/// matrix. None when a diagonal term fails to stay positive.
pub fn cholesky_lower(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i * n + j];
            for k in 0..j {
                acc -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[i * n + i] = acc.sqrt();
            } else {
                l[i * n + j] = acc / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as the columns of the returned n x n row-major matrix, so
/// a = V diag(values) V'.
pub fn jacobi_sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(a.len(), n * n);
    let mut m = symmetrize(a, n);
    let mut v = identity(n);
    let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable rotation tangent, smaller root.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Apply the rotation to rows and columns p, q.
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[i * n + i], i)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = pairs.iter().map(|(val, _)| *val).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_col, (_, old_col)) in pairs.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + new_col] = v[row * n + old_col];
        }
    }
    (values, vectors)
}

/// Applies a scalar function to the spectrum of a symmetric matrix:
/// f(a) = V diag(f(lambda)) V'.
pub fn spectral_map(a: &[f64], n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let (values, vectors) = jacobi_sym_eigen(a, n);
    let mut scaled = vec![0.0; n * n]; // columns of V scaled by f(lambda)
    for col in 0..n {
        let fv = f(values[col]);
        for row in 0..n {
            scaled[row * n + col] = vectors[row * n + col] * fv;
        }
    }
    // scaled * V'
    let vt = transpose(&vectors, n, n);
    mat_mul(&scaled, n, n, &vt, n)
}

/// Deterministic pairwise summation; order-insensitive reductions build
/// their accumulators through this.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_matrix(rng: &mut CounterRng, rows: usize, cols: usize) -> Vec<f64> {
        (0..rows * cols).map(|_| rng.next_gaussian()).collect()
    }

    // ==== products and solves ====

    #[test]
    fn mat_vec_and_transpose_agree() {
        let mut rng = CounterRng::new(1);
        let a = random_matrix(&mut rng, 3, 4);
        let x: Vec<f64> = (0..3).map(|_| rng.next_gaussian()).collect();
        let via_t = mat_t_vec(&a, 3, 4, &x);
        let explicit = mat_vec(&transpose(&a, 3, 4), 4, 3, &x);
        assert!(max_abs_diff(&via_t, &explicit) < 1e-14);
    }

    #[test]
    fn lu_solve_recovers_known_solution() {
        let mut rng = CounterRng::new(2);
        for trial in 0..50 {
            let n = 2 + (trial % 4);
            let a = random_matrix(&mut rng, n, n);
            let x_true: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
            let b = mat_vec(&a, n, n, &x_true);
            let x = lu_solve(&a, n, &b).expect("random matrix should be invertible");
            assert!(
                max_abs_diff(&x, &x_true) < 1e-9,
                "solve error {} on trial {trial}",
                max_abs_diff(&x, &x_true)
            );
        }
    }

    #[test]
    fn lu_solve_refuses_singular_matrix() {
        let a = vec![1.0, 2.0, 2.0, 4.0]; // rank 1
        assert!(lu_solve(&a, 2, &[1.0, 1.0]).is_none());
    }

    #[test]
    fn invert_round_trips() {
        let mut rng = CounterRng::new(3);
        let n = 4;
        let a = random_matrix(&mut rng, n, n);
        let inv = invert(&a, n).expect("invertible");
        let prod = mat_mul(&a, n, n, &inv, n);
        assert!(max_abs_diff(&prod, &identity(n)) < 1e-9);
    }

    // ==== factorizations ====

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        let mut rng = CounterRng::new(4);
        let n = 3;
        let b = random_matrix(&mut rng, n, n);
        // b'b + I is symmetric positive definite.
        let bt = transpose(&b, n, n);
        let mut a = mat_mul(&bt, n, n, &b, n);
        for i in 0..n {
            a[i * n + i] += 1.0;
        }
        let l = cholesky_lower(&a, n).expect("spd");
        let lt = transpose(&l, n, n);
        let back = mat_mul(&l, n, n, &lt, n);
        assert!(max_abs_diff(&back, &a) < 1e-10);
    }

    #[test]
    fn cholesky_refuses_indefinite_matrix() {
        let a = vec![1.0, 2.0, 2.0, 1.0]; // eigenvalues 3 and -1
        assert!(cholesky_lower(&a, 2).is_none());
    }

    #[test]
    fn jacobi_eigen_reconstructs_and_orders() {
        let mut rng = CounterRng::new(5);
        let n = 4;
        let b = random_matrix(&mut rng, n, n);
        let a = symmetrize(&b, n);
        let (values, vectors) = jacobi_sym_eigen(&a, n);
        for w in values.windows(2) {
            assert!(w[0] <= w[1], "eigenvalues not ascending: {values:?}");
        }
        // V diag V' = a
        let mut diag = vec![0.0; n * n];
        for i in 0..n {
            diag[i * n + i] = values[i];
        }
        let vt = transpose(&vectors, n, n);
        let back = mat_mul(&mat_mul(&vectors, n, n, &diag, n), n, n, &vt, n);
        assert!(
            max_abs_diff(&back, &a) < 1e-10,
            "reconstruction error {}",
            max_abs_diff(&back, &a)
        );
        // Orthonormal columns.
        let vtv = mat_mul(&vt, n, n, &vectors, n);
        assert!(max_abs_diff(&vtv, &identity(n)) < 1e-10);
    }

    #[test]
    fn jacobi_eigen_known_two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let (values, _) = jacobi_sym_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!((values[0] - 1.0).abs() < 1e-12, "lambda_min = {}", values[0]);
        assert!((values[1] - 3.0).abs() < 1e-12, "lambda_max = {}", values[1]);
    }

    #[test]
    fn spectral_map_square_root_squares_back() {
        let mut rng = CounterRng::new(6);
        let n = 3;
        let b = random_matrix(&mut rng, n, n);
        let bt = transpose(&b, n, n);
        let a = mat_mul(&bt, n, n, &b, n); // PSD
        let root = spectral_map(&a, n, |x| x.max(0.0).sqrt());
        let back = mat_mul(&root, n, n, &root, n);
        assert!(max_abs_diff(&back, &a) < 1e-9);
    }

    // ==== reductions ====

    #[test]
    fn pairwise_sum_matches_naive_on_benign_input() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.001).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }
}
