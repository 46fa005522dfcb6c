//! Dense linear algebra needed by PCA: a one-sided (Hestenes) Jacobi SVD.
//!
//! The Jacobi method orthogonalises the columns of the data matrix with plane
//! rotations. Singular values come out with high relative accuracy and the
//! accumulated rotation matrix stays orthonormal to working precision, which is
//! what the PCA invariants need.

use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;

/// Thin result of [`jacobi_svd`].
#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// Singular values in descending order (length `cols`).
    pub singular_values: Vec<T>,
    /// Right singular vectors, one per singular value, each of length `cols`.
    pub right_vectors: Vec<Vec<T>>,
}

/// Computes singular values and right singular vectors of a `rows x cols`
/// matrix given in row-major order.
///
/// The right singular vectors always form a full orthonormal basis of
/// `R^cols`, including directions belonging to zero singular values.
pub fn jacobi_svd<T: Scalar>(data: &[T], rows: usize, cols: usize) -> Svd<T> {
    assert_eq!(data.len(), rows * cols, "matrix shape mismatch");

    // column-major working copy
    let mut a: Vec<Vec<T>> = (0..cols)
        .map(|j| (0..rows).map(|i| data[i * cols + j]).collect())
        .collect();
    let mut v: Vec<Vec<T>> = (0..cols)
        .map(|j| {
            let mut e = vec![T::zero(); cols];
            e[j] = T::one();
            e
        })
        .collect();

    let eps = T::epsilon();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = column_products(&a[p], &a[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = a
        .iter()
        .map(|col| col.iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    // stable: equal singular values keep column order
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    Svd {
        singular_values: order.iter().map(|&i| norms[i]).collect(),
        right_vectors: order.iter().map(|&i| v[i].clone()).collect(),
    }
}

fn column_products<T: Scalar>(x: &[T], y: &[T]) -> (T, T, T) {
    let mut alpha = T::zero();
    let mut beta = T::zero();
    let mut gamma = T::zero();
    for (&xi, &yi) in x.iter().zip(y) {
        alpha += xi * xi;
        beta += yi * yi;
        gamma += xi * yi;
    }
    (alpha, beta, gamma)
}

fn rotate_pair<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let m = [3.0, 0.0, 0.0, 5.0];
        let svd = jacobi_svd(&m, 2, 2);
        assert_eq!(svd.singular_values, vec![5.0, 3.0]);
        assert_eq!(svd.right_vectors[0], vec![0.0, 1.0]);
    }

    #[test]
    fn reconstructs_gram_matrix() {
        // A^T A = V S^2 V^T
        let m: Vec<f64> = vec![1.0, 2.0, 0.5, -1.0, 0.3, 2.2, 4.0, -0.7, 1.1, 0.0, 0.9, -2.0];
        let (rows, cols) = (4, 3);
        let svd = jacobi_svd(&m, rows, cols);
        for i in 0..cols {
            for j in 0..cols {
                let gram: f64 = (0..rows).map(|r| m[r * cols + i] * m[r * cols + j]).sum();
                let rebuilt: f64 = (0..cols)
                    .map(|k| {
                        svd.singular_values[k].powi(2)
                            * svd.right_vectors[k][i]
                            * svd.right_vectors[k][j]
                    })
                    .sum();
                assert!((gram - rebuilt).abs() < 1e-12, "{gram} vs {rebuilt}");
            }
        }
    }

    #[test]
    fn rank_deficient_basis_is_complete() {
        // 2 rows in R^4: at least two zero singular values
        let m = [1.0f64, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0];
        let svd = jacobi_svd(&m, 2, 4);
        for i in 0..4 {
            for j in 0..4 {
                let d: f64 = svd.right_vectors[i]
                    .iter()
                    .zip(&svd.right_vectors[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-12);
            }
        }
        assert!(svd.singular_values[2].abs() < 1e-12);
    }
}
