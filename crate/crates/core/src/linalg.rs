//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;

use crate::{Error, Result};

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order
/// and eigenvector columns permuted to match.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn fix_column_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0_f64;
        for x in col.iter() {
            if x.abs() > best.abs() {
                best = *x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Solves `min_G ‖Y − G Z‖_F² + ζ ‖G‖_F²` through an SVD of `Z`.
///
/// With `ζ = 0` this is the minimum-norm least-squares solution `Y Z⁺`, and
/// singular values below `rel_tol · σ_max` are discarded.
pub fn ridge_right_solve(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    zeta: f64,
    rel_tol: f64,
) -> Result<DMatrix<f64>> {
    if y.ncols() != z.ncols() {
        return Err(Error::DimensionMismatch {
            context: "regression sample count",
            expected: z.ncols(),
            found: y.ncols(),
        });
    }
    if !zeta.is_finite() || zeta < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "regularization must be a finite nonnegative number, got {zeta}"
        )));
    }
    if max_abs(z) == 0.0 {
        return Err(Error::ZeroSnapshots);
    }
    let svd = SVD::new(z.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let filter = svd.singular_values.map(|s| {
        if zeta == 0.0 {
            if s > rel_tol * s_max {
                1.0 / s
            } else {
                0.0
            }
        } else {
            s / (s * s + zeta)
        }
    });
    // G = Y V diag(filter) Uᵀ
    let mut yv = y * v_t.transpose();
    for (j, f) in filter.iter().enumerate() {
        yv.column_mut(j).scale_mut(*f);
    }
    Ok(yv * u.transpose())
}

/// Inverse of a square matrix via LU.
pub fn inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().try_inverse()
}

/// Random matrix with entries uniform in `[-1, 1]`.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Random square matrix rescaled to spectral radius `rho`.
pub fn random_stable<R: Rng + ?Sized>(rng: &mut R, n: usize, rho: f64) -> DMatrix<f64> {
    loop {
        let m = random_matrix(rng, n, n);
        let r = spectral_radius(&m);
        if r > 1e-3 {
            return m * (rho / r);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spectral_radius_of_rotation_and_diag() {
        let r = dmatrix![0.0, -0.5; 0.5, 0.0];
        assert!((spectral_radius(&r) - 0.5).abs() < 1e-14);
        let d = dmatrix![0.9, 0.0; 0.0, -0.95];
        assert!((spectral_radius(&d) - 0.95).abs() < 1e-14);
    }

    #[test]
    fn eigen_is_sorted_descending() {
        let m = dmatrix![1.0, 2.0; 2.0, 1.0];
        let (vals, vecs) = sym_eigen_desc(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] + 1.0).abs() < 1e-12);
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!(max_abs(&(recon - m)) < 1e-12);
    }

    #[test]
    fn ridge_solve_recovers_exact_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_matrix(&mut rng, 3, 4);
        let z = random_matrix(&mut rng, 4, 30);
        let y = &g * &z;
        let est = ridge_right_solve(&y, &z, 0.0, 1e-10).unwrap();
        assert!(max_abs(&(est - g)) < 1e-12);
    }

    #[test]
    fn ridge_solve_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = random_matrix(&mut rng, 4, 12);
        let y = random_matrix(&mut rng, 2, 12);
        let zeta = 0.7;
        let est = ridge_right_solve(&y, &z, zeta, 1e-10).unwrap();
        let normal = &y
            * z.transpose()
            * inverse(&(&z * z.transpose() + DMatrix::identity(4, 4) * zeta)).unwrap();
        assert!(max_abs(&(est - normal)) < 1e-12);
    }

    #[test]
    fn ridge_solve_rejects_zero_data() {
        let z = DMatrix::zeros(2, 5);
        let y = DMatrix::zeros(2, 5);
        assert!(matches!(
            ridge_right_solve(&y, &z, 0.0, 1e-10),
            Err(Error::ZeroSnapshots)
        ));
    }

    #[test]
    fn random_stable_hits_target_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_stable(&mut rng, 6, 0.8);
        assert!((spectral_radius(&a) - 0.8).abs() < 1e-10);
    }
}
