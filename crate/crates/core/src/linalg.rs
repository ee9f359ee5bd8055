//! Dense symmetric linear algebra.
//!
//! Eigendecompositions are delegated to nalgebra's symmetric solver
//! (Householder tridiagonalisation followed by implicit QR); everything
//! layered on top — ordering, sign normalisation, definiteness checks,
//! matrix functions, symmetrisation of preconditioners and Loewner
//! comparisons — lives here.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold below which a symmetric matrix counts as singular.
pub const SINGULAR_RTOL: f64 = 1e-14;
/// Relative threshold below which a symmetric matrix counts as not positive definite.
pub const PD_RTOL: f64 = 1e-12;

/// A square matrix whose stored entries satisfy `a[i][j] == a[j][i]` bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: Matrix,
}

impl SymMatrix {
    /// Wraps `m`, rejecting non-square or asymmetric input.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        for i in 0..m.nrows() {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] && !(m[(i, j)].is_nan() && m[(j, i)].is_nan()) {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { m })
    }

    /// Replaces `m` by `(m + mᵀ)/2`. Panics if `m` is not square.
    pub fn symmetrized(mut m: Matrix) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrized: matrix must be square");
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            m: Matrix::identity(d, d),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            m: Matrix::from_diagonal(&Vector::from_row_slice(diag)),
        }
    }

    /// Builds a matrix from its upper triangle given row by row
    /// (row `i` holds entries `i..d`).
    pub fn from_upper_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        let mut m = Matrix::zeros(d, d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d - i {
                return Err(Error::DimensionMismatch {
                    expected: d - i,
                    got: row.len(),
                });
            }
            for (k, &v) in row.iter().enumerate() {
                m[(i, i + k)] = v;
                m[(i + k, i)] = v;
            }
        }
        Ok(Self { m })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn diagonal(&self) -> Vector {
        self.m.diagonal()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { m: &self.m * c }
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    pub fn add_identity(&self, c: f64) -> Self {
        let mut m = self.m.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self { m }
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.m * v
    }

    pub fn quad_form(&self, v: &Vector) -> f64 {
        v.dot(&(&self.m * v))
    }

    /// `bᵀ self b`, symmetrised.
    pub fn congruence(&self, b: &Matrix) -> Self {
        Self::symmetrized(b.transpose() * &self.m * b)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }
}

/// Eigenpairs of a symmetric matrix, values descending.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// λ₁ ≥ … ≥ λ_d.
    pub values: Vector,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn vector(&self, i: usize) -> Vector {
        self.vectors.column(i).into_owned()
    }

    /// `V f(D) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        SymMatrix::symmetrized(scaled * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|v| v)
    }

    /// Smallest gap between adjacent eigenvalues (0 for d = 1).
    pub fn min_adjacent_gap(&self) -> f64 {
        if self.dim() < 2 {
            return 0.0;
        }
        self.values
            .as_slice()
            .windows(2)
            .map(|w| (w[0] - w[1]).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Extremes and condition number of a symmetric spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub spectral_norm: f64,
    pub cond: f64,
}

fn check_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Symmetric eigendecomposition with descending values and the sign of each
/// vector fixed so that its first nonzero coordinate is positive.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenDecomposition> {
    check_finite(a.as_matrix())?;
    let d = a.dim();
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, 100_000).ok_or_else(
        || Error::AssumptionViolation("symmetric eigensolver did not converge".into()),
    )?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut values = Vector::zeros(d);
    let mut vectors = Matrix::zeros(d, d);
    for (k, &src) in order.iter().enumerate() {
        values[k] = eig.eigenvalues[src];
        let mut v = eig.eigenvectors.column(src).into_owned();
        let n = v.norm();
        if n > 0.0 {
            v /= n;
        }
        // Components at roundoff level are treated as zero for the sign rule.
        let lead = v.iter().copied().find(|c| c.abs() > 1e-12);
        if matches!(lead, Some(c) if c < 0.0) {
            v = -v;
        }
        vectors.set_column(k, &v);
    }
    Ok(EigenDecomposition { values, vectors })
}

/// Eigenvalues only, descending.
pub fn sym_eigenvalues(a: &SymMatrix) -> Result<Vector> {
    Ok(sym_eigen(a)?.values)
}

/// `max|λ| / min|λ|` with the accompanying extremes.
pub fn spectral_condition_number(a: &SymMatrix) -> Result<SpectralSummary> {
    summary_from_values(&sym_eigenvalues(a)?)
}

pub(crate) fn summary_from_values(values: &Vector) -> Result<SpectralSummary> {
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_abs = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min_abs >= SINGULAR_RTOL * max_abs) || max_abs == 0.0 {
        return Err(Error::Singular { min_abs, max_abs });
    }
    Ok(SpectralSummary {
        lambda_max: values[0],
        lambda_min: values[values.len() - 1],
        spectral_norm: max_abs,
        cond: max_abs / min_abs,
    })
}

/// Fails unless every eigenvalue exceeds `PD_RTOL · λ_max`.
pub fn check_positive_definite(eig: &EigenDecomposition) -> Result<()> {
    let lmax = eig.max();
    let threshold = PD_RTOL * lmax.abs();
    let d = eig.dim();
    let lmin = eig.min();
    if !(lmax > 0.0) || !(lmin > threshold) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: lmin,
            index: d - 1,
            threshold,
        });
    }
    Ok(())
}

/// Symmetric positive definite square root.
pub fn sym_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    check_positive_definite(&eig)?;
    Ok(eig.map(f64::sqrt))
}

/// Symmetric positive definite inverse square root.
pub fn sym_inv_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    check_positive_definite(&eig)?;
    Ok(eig.map(|v| 1.0 / v.sqrt()))
}

/// Inverse of a symmetric positive definite matrix.
pub fn sym_inv(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    check_positive_definite(&eig)?;
    Ok(eig.map(|v| 1.0 / v))
}

/// Spectral norm of an arbitrary matrix (largest singular value).
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .fold(0.0f64, |a, &s| a.max(s))
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(a: &SymMatrix) -> Result<f64> {
    let v = sym_eigenvalues(a)?;
    Ok(v[0].abs().max(v[v.len() - 1].abs()))
}

/// Replaces an invertible `L = UΣVᵀ` by `VΣVᵀ`, which yields the same κ_L.
pub fn symmetrize_preconditioner(l: &Matrix) -> Result<SymMatrix> {
    if l.nrows() != l.ncols() {
        return Err(Error::DimensionMismatch {
            expected: l.nrows(),
            got: l.ncols(),
        });
    }
    check_finite(l)?;
    let svd = SVD::new(l.clone(), false, true);
    let s = &svd.singular_values;
    let smax = s.iter().fold(0.0f64, |a, &v| a.max(v));
    let smin = s.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !(smin > SINGULAR_RTOL * smax) {
        return Err(Error::NotInvertible(smin));
    }
    let vt = svd.v_t.expect("v_t requested");
    let v = vt.transpose();
    let mut scaled = v.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= s[j];
    }
    Ok(SymMatrix::symmetrized(scaled * vt))
}

/// The 2×2 rotation `[[cos θ, −sin θ], [sin θ, cos θ]]`.
pub fn givens_rotation(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// `A ⪯ B` up to `tol`: true iff `λ_min(B − A) ≥ −tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let diff = b.sub(a);
    Ok(sym_eigen(&diff)?.min() >= -tol)
}

/// Relative Frobenius distance `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(d: usize, rng: &mut impl Rng) -> SymMatrix {
        let g = Matrix::from_fn(d, d, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        SymMatrix::symmetrized(&g * g.transpose() + Matrix::identity(d, d) * 0.1)
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eigen(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_eigenpairs() {
        let e = sym_eigen(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 1.0]);
        assert!((e.vector(0) - Vector::from_row_slice(&[0.0, 1.0])).norm() < 1e-14);
        assert!((e.vector(1) - Vector::from_row_slice(&[1.0, 0.0])).norm() < 1e-14);
    }

    #[test]
    fn sign_convention_first_nonzero_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(6, &mut rng);
        let e = sym_eigen(&a).unwrap();
        for j in 0..6 {
            let lead = e.vectors.column(j).iter().copied().find(|c| c.abs() > 1e-12).unwrap();
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::identity(2, 2);
        m[(1, 1)] = f64::NAN;
        let a = SymMatrix::new(m).unwrap();
        assert!(matches!(sym_eigen(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn reconstruction_up_to_d100() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &d in &[1usize, 2, 5, 17, 50, 100] {
            let a = random_spd(d, &mut rng);
            let e = sym_eigen(&a).unwrap();
            assert!(rel_frobenius(e.reconstruct().as_matrix(), a.as_matrix()) <= 1e-10);
            let gram = e.vectors.transpose() * &e.vectors;
            for i in 0..d {
                assert!((gram[(i, i)] - 1.0).abs() <= 1e-12);
                for j in 0..i {
                    assert!(gram[(i, j)].abs() <= 1e-10);
                }
            }
            for w in e.values.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn condition_number_examples() {
        assert_eq!(spectral_condition_number(&SymMatrix::identity(4)).unwrap().cond, 1.0);
        let s = spectral_condition_number(&SymMatrix::from_diagonal(&[10.0, 0.1])).unwrap();
        assert!((s.cond - 100.0).abs() < 1e-12);
        assert!(s.spectral_norm >= s.lambda_max.abs() && s.spectral_norm >= s.lambda_min.abs());
    }

    #[test]
    fn condition_number_singular() {
        let r = spectral_condition_number(&SymMatrix::from_diagonal(&[1.0, 0.0]));
        assert!(matches!(r, Err(Error::Singular { .. })));
        let r = spectral_condition_number(&SymMatrix::from_diagonal(&[1.0, 1e-15]));
        assert!(matches!(r, Err(Error::Singular { .. })));
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(
            sym_sqrt(&SymMatrix::identity(3)).unwrap().as_matrix(),
            &Matrix::identity(3, 3)
        );
        let r = sym_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((r.as_matrix() - Matrix::from_diagonal(&Vector::from_row_slice(&[2.0, 3.0]))).norm() < 1e-14);
    }

    #[test]
    fn sqrt_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(4, &mut rng);
        let r = sym_sqrt(&a).unwrap();
        assert!(rel_frobenius(&(r.as_matrix() * r.as_matrix()), a.as_matrix()) <= 1e-9);
        let ri = sym_inv_sqrt(&a).unwrap();
        let prod = ri.as_matrix() * ri.as_matrix() * a.as_matrix();
        assert!(rel_frobenius(&prod, &Matrix::identity(4, 4)) <= 1e-9);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let e = sym_sqrt(&SymMatrix::from_diagonal(&[1.0, -0.5])).unwrap_err();
        match e {
            Error::NotPositiveDefinite { eigenvalue, .. } => assert_eq!(eigenvalue, -0.5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(sym_inv_sqrt(&SymMatrix::from_diagonal(&[1.0, 1e-13])).is_err());
    }

    #[test]
    fn symmetrize_examples() {
        let q = givens_rotation(0.7);
        let s = symmetrize_preconditioner(&q).unwrap();
        assert!((s.as_matrix() - Matrix::identity(2, 2)).norm() < 1e-12);
        let d = Matrix::from_diagonal(&Vector::from_row_slice(&[-2.0, 3.0]));
        let s = symmetrize_preconditioner(&d).unwrap();
        assert!((s.as_matrix() - Matrix::from_diagonal(&Vector::from_row_slice(&[2.0, 3.0]))).norm() < 1e-12);
        let sing = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(symmetrize_preconditioner(&sing), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn givens_examples() {
        assert_eq!(givens_rotation(0.0), Matrix::identity(2, 2));
        let g = givens_rotation(std::f64::consts::FRAC_PI_2);
        let want = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((g - want).norm() < 1e-15);
        let g = givens_rotation(std::f64::consts::FRAC_PI_4);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let want = Matrix::from_row_slice(2, 2, &[r, -r, r, r]);
        assert!((g - want).norm() < 1e-15);
    }

    #[test]
    fn loewner_examples() {
        let i = SymMatrix::identity(3);
        let two = i.scale(2.0);
        assert!(loewner_leq(&i, &two, 0.0).unwrap());
        assert!(!loewner_leq(&two, &i, 0.0).unwrap());
        assert!(loewner_leq(&SymMatrix::identity(2), &i, 0.0).is_err());
    }

    #[test]
    fn upper_rows_builds_symmetric() {
        let a = SymMatrix::from_upper_rows(&[&[1.0, 2.0], &[3.0]]).unwrap();
        assert_eq!(a.get(0, 1), 2.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert!(SymMatrix::from_upper_rows(&[&[1.0], &[3.0]]).is_err());
    }
}
