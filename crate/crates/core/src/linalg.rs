//! Dense linear-algebra helpers built on `nalgebra`: SVD pseudoinverse,
//! numerical rank, spectral radius and symmetric square roots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff `max(rows, cols) * eps`.
pub fn default_rel_tolerance(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

// Convergence threshold of the implicit QR sweeps. Tighter values make
// nalgebra's SVD stall on rank-deficient input and return wrong values.
const SVD_EPS: f64 = 5.0 * f64::EPSILON;

// Reciprocal condition number above which tall matrices skip the SVD.
const WELL_CONDITIONED: f64 = 1.490_116_119_384_765_6e-8;

struct Decomposition {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
}

fn square_svd(m: DMatrix<f64>) -> Result<Decomposition> {
    let svd = m.try_svd(true, true, SVD_EPS, 0).ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    Ok(Decomposition { u: svd.u.expect("u requested"), s: svd.singular_values, v_t: svd.v_t.expect("v_t requested") })
}

/// Moore-Penrose pseudoinverse. Singular values below
/// `rel_tolerance * sigma_max` are treated as zero.
pub fn pinv(m: &DMatrix<f64>, rel_tolerance: f64) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    // Tall input is reduced by Householder QR first so the iterative SVD
    // only sees the square triangular factor.
    if rows < cols {
        return Ok(pinv(&m.transpose(), rel_tolerance)?.transpose());
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SVD input contains non-finite entries".into()));
    }
    let d = if rows > cols {
        let qr = m.clone().qr();
        let r = qr.r();
        let inner = square_svd(r.clone())?;
        let (lo, hi) = (inner.s.min(), inner.s.max());
        // Well-conditioned and untruncated: A⁺ = R⁻¹Qᵀ exactly, and the
        // triangular solve is more accurate than the iterative SVD vectors.
        if lo > WELL_CONDITIONED * hi && lo > rel_tolerance * hi {
            return r
                .solve_upper_triangular(&qr.q().transpose())
                .ok_or_else(|| Error::Numeric("singular triangular factor".into()));
        }
        Decomposition { u: qr.q() * inner.u, s: inner.s, v_t: inner.v_t }
    } else {
        square_svd(m.clone())?
    };
    let cutoff = rel_tolerance * d.s.max();
    // V * diag(1/s) * U^T, skipping truncated directions.
    let mut scaled_v = d.v_t.transpose();
    for (j, &s) in d.s.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        scaled_v.column_mut(j).scale_mut(inv);
    }
    Ok(scaled_v * d.u.transpose())
}

/// Pseudoinverse with the default `max(rows, cols) * eps` cutoff.
pub fn pinv_default(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    pinv(m, default_rel_tolerance(m.nrows(), m.ncols()))
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.is_empty() {
        return Ok(DVector::zeros(0));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("SVD input contains non-finite entries".into()));
    }
    let tall = if m.nrows() < m.ncols() { m.transpose() } else { m.clone() };
    let square = if tall.nrows() > tall.ncols() { tall.qr().r() } else { tall };
    square
        .try_svd(false, false, SVD_EPS, 0)
        .map(|s| s.singular_values)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))
}

/// Numerical rank using the same cutoff rule as [`pinv`].
pub fn rank(m: &DMatrix<f64>, rel_tolerance: f64) -> Result<usize> {
    let s = singular_values(m)?;
    if s.is_empty() {
        return Ok(0);
    }
    let cutoff = rel_tolerance * s.max();
    Ok(s.iter().filter(|&&x| x > cutoff && x > 0.0).count())
}

pub fn rank_default(m: &DMatrix<f64>) -> Result<usize> {
    rank(m, default_rel_tolerance(m.nrows(), m.ncols()))
}

/// Largest eigenvalue modulus of a square matrix (real Schur form).
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::shape("spectral_radius", "square matrix", format!("{:?}", m.shape())));
    }
    if m.is_empty() {
        return Ok(0.0);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), SVD_EPS, 0)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Symmetric square root `S` with `S S^T = M` for a symmetric PSD `M`;
/// negative eigenvalues from round-off are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut v = eig.eigenvectors;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(l.max(0.0).sqrt());
    }
    v
}

/// Lower Cholesky factor if `m` is positive definite, otherwise the
/// eigenvalue-clamped square root. Either satisfies `L L^T ≈ m`.
pub fn sampling_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    match m.clone().cholesky() {
        Some(c) => c.l(),
        None => psd_sqrt(m),
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `‖a - b‖_F`
pub fn frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn penrose_residuals(m: &DMatrix<f64>, p: &DMatrix<f64>) -> [f64; 4] {
        let scale = m.norm().max(1.0) * p.norm().max(1.0);
        let mp = m * p;
        let pm = p * m;
        [
            (&mp * m - m).norm() / scale,
            (&pm * p - p).norm() / scale,
            (&mp - mp.transpose()).norm() / scale,
            (&pm - pm.transpose()).norm() / scale,
        ]
    }

    #[test]
    fn pinv_of_identity() {
        let i = DMatrix::<f64>::identity(4, 4);
        assert!((pinv_default(&i).unwrap() - &i).norm() < 1e-15);
    }

    #[test]
    fn pinv_of_rank_deficient_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pinv_default(&m).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!((p - expected).norm() < 1e-15);
    }

    #[test]
    fn pinv_of_zero_matrix_is_zero() {
        let p = pinv_default(&DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(p.shape(), (2, 3));
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn wide_and_tall_agree_under_transpose() {
        let m = DMatrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64).sin());
        let p = pinv_default(&m).unwrap();
        let pt = pinv_default(&m.transpose()).unwrap();
        assert!((p.transpose() - pt).norm() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_rotation_and_diagonal() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 2.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, -0.9, 0.1]));
        assert!((spectral_radius(&d).unwrap() - 0.9).abs() < 1e-14);
    }

    #[test]
    fn rank_counts_nonzero_directions() {
        let a = DMatrix::from_fn(6, 1, |i, _| i as f64 + 1.0);
        let outer = &a * a.transpose();
        assert_eq!(rank_default(&outer).unwrap(), 1);
        assert_eq!(rank_default(&DMatrix::<f64>::zeros(3, 3)).unwrap(), 0);
    }

    #[test]
    fn psd_sqrt_reconstructs() {
        let a = DMatrix::from_fn(4, 2, |i, j| (i as f64 - j as f64).cos());
        let m = &a * a.transpose();
        let s = psd_sqrt(&m);
        assert!((&s * s.transpose() - &m).norm() < 1e-12);
        let l = sampling_factor(&m);
        assert!((&l * l.transpose() - &m).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn penrose_identities_hold(
            rows in 1usize..8,
            cols in 1usize..8,
            rank_cap in 1usize..8,
            left in proptest::collection::vec(-3.0f64..3.0, 64),
            right in proptest::collection::vec(-3.0f64..3.0, 64),
        ) {
            // Product of two thin factors controls the rank profile.
            let k = rank_cap.min(rows).min(cols);
            let l = DMatrix::from_fn(rows, k, |i, j| left[i * 8 + j]);
            let r = DMatrix::from_fn(k, cols, |i, j| right[i * 8 + j]);
            let m = l * r;
            let p = pinv_default(&m).unwrap();
            let s = singular_values(&m).unwrap();
            for res in penrose_residuals(&m, &p) {
                prop_assert!(res < 1e-8, "residual {res}, singular values {s:e}, m {m:e}");
            }
        }
    }
}
