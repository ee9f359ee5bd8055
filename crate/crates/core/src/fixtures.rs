//! Fixed matrices used by the experiments and tests.

use crate::linalg::SymMatrix;

/// Upper triangle of the published 5×5 covariance, one decimal per entry.
/// As printed it is not positive definite (smallest eigenvalue ≈ −0.049).
pub const SIGMA_PI_DISPLAYED: [&[f64]; 5] = [
    &[21.5, 5.7, 18.7, 4.5, 6.9],
    &[2.0, 4.9, 1.2, 2.1],
    &[16.3, 3.9, 5.7],
    &[1.4, 1.4],
    &[2.9],
];

/// A positive-definite covariance whose entries all round to the published
/// ones at one decimal, with κ ≈ 4.42e3 and κ of its correlation ≈ 8.07e3.
pub const SIGMA_PI: [&[f64]; 5] = [
    &[21.5271, 5.7067, 18.6803, 4.4768, 6.88],
    &[1.9552, 4.8918, 1.2499, 2.0838],
    &[16.3196, 3.8878, 5.7199],
    &[1.3501, 1.4305],
    &[2.9195],
];

pub fn sigma_pi_displayed() -> SymMatrix {
    SymMatrix::from_upper_rows(&SIGMA_PI_DISPLAYED).expect("fixture is square")
}

pub fn sigma_pi() -> SymMatrix {
    SymMatrix::from_upper_rows(&SIGMA_PI).expect("fixture is square")
}

/// `C = D^{-1/2} Σ D^{-1/2}` with `D = diag(Σ)`.
pub fn correlation(sigma: &SymMatrix) -> SymMatrix {
    let d = sigma.dim();
    let s: Vec<f64> = (0..d).map(|i| sigma.get(i, i).sqrt()).collect();
    let m = crate::linalg::Matrix::from_fn(d, d, |i, j| sigma.get(i, j) / (s[i] * s[j]));
    SymMatrix::symmetrized(m)
}
