//! Singular value decomposition via the smaller Gram matrix.
//!
//! The weight matrices analyzed here are short and wide (filters x kernel
//! volume), so we eigendecompose the smaller of A*A^T and A^T*A with cyclic
//! Jacobi rotations and recover the other side's vectors by projection.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Relative off-diagonal Frobenius target for the Jacobi sweep.
const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 60;

/// Decomposes `m` into singular values and right singular vectors.
///
/// Returns the singular values sorted descending and a matrix whose column
/// `i` is the right singular vector for the i-th value. Columns belonging to
/// numerically zero singular values are left as zero vectors; they carry no
/// energy, so reconstructions are unaffected.
pub fn svd_components(m: &Matrix<f64>) -> Result<(Vec<f64>, Matrix<f64>)> {
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("svd input contains non-finite entries".into()));
    }
    let (rows, cols) = (m.rows(), m.cols());
    if rows == 0 || cols == 0 {
        return Err(Error::Usage("svd input must be non-empty".into()));
    }
    let rank_bound = rows.min(cols);

    // Eigendecompose the smaller Gram matrix.
    let gram_is_rows = rows <= cols;
    let gram = if gram_is_rows {
        gram_rows(m)
    } else {
        gram_cols(m)
    };
    let (eigvals, eigvecs) = jacobi_eigen_symmetric(&gram);

    // Sort by eigenvalue descending; eigenvalues of a Gram matrix are
    // singular values squared.
    let mut order: Vec<usize> = (0..eigvals.len()).collect();
    order.sort_by(|&a, &b| eigvals[b].partial_cmp(&eigvals[a]).unwrap());

    let mut singular = Vec::with_capacity(rank_bound);
    for &i in order.iter().take(rank_bound) {
        singular.push(eigvals[i].max(0.0).sqrt());
    }
    let sigma_max = singular.first().copied().unwrap_or(0.0);
    let zero_cutoff = sigma_max * 1e-12;

    let mut right = Matrix::zeros(cols, rank_bound);
    if gram_is_rows {
        // Eigenvectors are left singular vectors; v_i = A^T u_i / sigma_i.
        for (slot, &i) in order.iter().take(rank_bound).enumerate() {
            let sigma = singular[slot];
            if sigma <= zero_cutoff || sigma == 0.0 {
                continue;
            }
            for r in 0..cols {
                let mut acc = 0.0;
                for k in 0..rows {
                    acc += m.get(k, r) * eigvecs.get(k, i);
                }
                right.set(r, slot, acc / sigma);
            }
        }
    } else {
        // Eigenvectors of A^T A are the right singular vectors directly.
        for (slot, &i) in order.iter().take(rank_bound).enumerate() {
            let sigma = singular[slot];
            if sigma <= zero_cutoff || sigma == 0.0 {
                continue;
            }
            for r in 0..cols {
                right.set(r, slot, eigvecs.get(r, i));
            }
        }
    }
    Ok((singular, right))
}

fn gram_rows(m: &Matrix<f64>) -> Matrix<f64> {
    let n = m.rows();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            let (ri, rj) = (m.row(i), m.row(j));
            for k in 0..m.cols() {
                acc += ri[k] * rj[k];
            }
            g.set(i, j, acc);
            g.set(j, i, acc);
        }
    }
    g
}

fn gram_cols(m: &Matrix<f64>) -> Matrix<f64> {
    let n = m.cols();
    let mut g = Matrix::zeros(n, n);
    for r in 0..m.rows() {
        let row = m.row(r);
        for i in 0..n {
            if row[i] == 0.0 {
                continue;
            }
            for j in i..n {
                let v = g.get(i, j) + row[i] * row[j];
                g.set(i, j, v);
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = g.get(i, j);
            g.set(j, i, v);
        }
    }
    g
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Iterates sweeps until the off-diagonal Frobenius norm falls below
/// `JACOBI_TOL` relative to the matrix norm. Returns (eigenvalues, V) with
/// column i of V the eigenvector for eigenvalue i.
fn jacobi_eigen_symmetric(g: &Matrix<f64>) -> (Vec<f64>, Matrix<f64>) {
    let n = g.rows();
    let mut a = g.clone();
    let mut v = Matrix::identity(n);
    if n == 1 {
        return (vec![a.get(0, 0)], v);
    }

    let scale = frobenius(&a).max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                rotate(&mut a, p, q, c, s);
                // Accumulate the rotation into the eigenvector matrix.
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }

    let eig = (0..n).map(|i| a.get(i, i)).collect();
    (eig, v)
}

/// Applies the two-sided Jacobi rotation J^T A J on rows/cols p and q.
fn rotate(a: &mut Matrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for r in 0..n {
        let arp = a.get(r, p);
        let arq = a.get(r, q);
        a.set(r, p, c * arp - s * arq);
        a.set(r, q, s * arp + c * arq);
    }
    for r in 0..n {
        let apr = a.get(p, r);
        let aqr = a.get(q, r);
        a.set(p, r, c * apr - s * aqr);
        a.set(q, r, s * apr + c * aqr);
    }
}

fn frobenius(a: &Matrix<f64>) -> f64 {
    a.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn off_diagonal_norm(a: &Matrix<f64>) -> f64 {
    let n = a.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = a.get(i, j);
                acc += v * v;
            }
        }
    }
    acc.sqrt()
}

/// Rank-m reconstruction A_m = A V_m V_m^T from the right singular vectors.
pub fn rank_m_reconstruction(m: &Matrix<f64>, right: &Matrix<f64>, keep: usize) -> Matrix<f64> {
    let keep = keep.min(right.cols());
    let mut out = Matrix::zeros(m.rows(), m.cols());
    // out = sum_i (A v_i) v_i^T
    for i in 0..keep {
        let mut av = vec![0.0; m.rows()];
        for (r, item) in av.iter_mut().enumerate() {
            let row = m.row(r);
            let mut acc = 0.0;
            for k in 0..m.cols() {
                acc += row[k] * right.get(k, i);
            }
            *item = acc;
        }
        for r in 0..m.rows() {
            let orow = out.row_mut(r);
            for k in 0..m.cols() {
                orow[k] += av[r] * right.get(k, i);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let (sigma, _) = svd_components(&Matrix::identity(2)).unwrap();
        assert!((sigma[0] - 1.0).abs() < 1e-12);
        assert!((sigma[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_matrix_has_one_nonzero_value() {
        // Outer product of (1,2,3) and (4,5).
        let u = [1.0, 2.0, 3.0];
        let v = [4.0, 5.0];
        let mut data = Vec::new();
        for a in u {
            for b in v {
                data.push(a * b);
            }
        }
        let m = Matrix::from_vec(3, 2, data).unwrap();
        let (sigma, _) = svd_components(&m).unwrap();
        let expected = (u.iter().map(|x| x * x).sum::<f64>()
            * v.iter().map(|x| x * x).sum::<f64>())
        .sqrt();
        assert!((sigma[0] - expected).abs() < 1e-10);
        assert!(sigma[1].abs() < 1e-10);
    }

    #[test]
    fn values_sorted_descending_and_nonnegative() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = rand_matrix(&mut rng, 6, 9);
        let (sigma, _) = svd_components(&m).unwrap();
        for w in sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(sigma.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn matches_gram_eigenvalue_oracle_and_nalgebra() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = rand_matrix(&mut rng, 5, 8);
        let (sigma, _) = svd_components(&m).unwrap();

        // Independent route: eigenvalues of A A^T via nalgebra, square-rooted.
        let na = nalgebra::DMatrix::from_row_slice(5, 8, m.data());
        let gram = &na * na.transpose();
        let mut eig: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (s, e) in sigma.iter().zip(eig.iter()) {
            assert!((s - e.max(0.0).sqrt()).abs() < 1e-8);
        }

        // And nalgebra's own SVD of the rectangular matrix.
        let na_sigma = na.svd(false, false).singular_values;
        for (s, e) in sigma.iter().zip(na_sigma.iter()) {
            assert!((s - e).abs() < 1e-8);
        }
    }

    #[test]
    fn full_reconstruction_reproduces_matrix() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for &(rows, cols) in &[(4usize, 7usize), (7, 4), (5, 5)] {
            let m = rand_matrix(&mut rng, rows, cols);
            let (sigma, right) = svd_components(&m).unwrap();
            let rebuilt = rank_m_reconstruction(&m, &right, sigma.len());
            let mut err = 0.0;
            for (a, b) in m.data().iter().zip(rebuilt.data()) {
                err += (a - b) * (a - b);
            }
            let rel = err.sqrt() / m.frobenius_norm();
            assert!(rel < 1e-8, "relative error {rel}");
        }
    }

    #[test]
    fn right_vectors_are_orthonormal_for_nonzero_values() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        let m = rand_matrix(&mut rng, 8, 5);
        let (sigma, right) = svd_components(&m).unwrap();
        for i in 0..sigma.len() {
            for j in i..sigma.len() {
                let mut dot = 0.0;
                for r in 0..right.rows() {
                    dot += right.get(r, i) * right.get(r, j);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let m = Matrix::from_vec(1, 2, vec![1.0, f64::INFINITY]).unwrap();
        assert!(matches!(svd_components(&m), Err(Error::Numeric(_))));
    }
}
