use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_norm, Vector};
use crate::preconditioners::Preconditioner;
use crate::targets::Potential;

/// Minimum adjacent eigenvalue gap below which eigenvector pairing is refused.
pub const PAIRING_GAP_TOL: f64 = 1e-10;

/// Constants describing how closely `LLᵀ` tracks `∇²U(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenStructureParams {
    /// Eigenvalue-ratio slack (or relative norm slack).
    pub epsilon: f64,
    /// Eigenvector misalignment, in `[0, 1]`.
    pub delta: f64,
    /// Eigengap of `LLᵀ`.
    pub gamma: f64,
}

fn nonempty(probes: &[Vector]) -> Result<()> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    Ok(())
}

/// Smallest ε with `(1+ε)⁻¹ ≤ λ_i(x)/σ_i² ≤ 1+ε` for every i and probe.
pub fn measure_eps_eigenvalue<T: Potential + ?Sized>(
    target: &T,
    precond: &Preconditioner,
    probes: &[Vector],
) -> Result<f64> {
    nonempty(probes)?;
    let sigma_sq = &precond.eigs().values;
    let mut eps: f64 = 0.0;
    for x in probes {
        let lam = sym_eigen(&target.hessian(x))?.values;
        for (l, s) in lam.iter().zip(sigma_sq.iter()) {
            if !(*l > 0.0) {
                return Err(Error::AssumptionViolation(format!("Hessian eigenvalue {l:e} at a probe")));
            }
            let r = l / s;
            eps = eps.max(r - 1.0).max(1.0 / r - 1.0);
        }
    }
    Ok(eps)
}

/// Inverts `a = 1 − (1 − √(1−δ))²` for δ.
pub fn delta_from_alignment(a: f64) -> f64 {
    let a = a.clamp(0.0, 1.0);
    let s = 1.0 - (1.0 - a).sqrt();
    (1.0 - s * s).clamp(0.0, 1.0)
}

/// Alignment `1 − (1 − √(1−δ))²` required by a given δ.
pub fn alignment_from_delta(delta: f64) -> f64 {
    let s = 1.0 - (1.0 - delta).sqrt();
    1.0 - s * s
}

/// Smallest δ with `v_i(x)ᵀv_i ≥ 1 − (1−√(1−δ))²` for every i and probe.
///
/// Eigenvectors of `∇²U(x)` and `LLᵀ` are paired by their rank in the
/// descending order, which is the pairing the eigenvalue assumption uses;
/// each sign is chosen to make the inner product non-negative.
pub fn measure_delta_eigenvector<T: Potential + ?Sized>(
    target: &T,
    precond: &Preconditioner,
    probes: &[Vector],
) -> Result<f64> {
    nonempty(probes)?;
    if precond.dim() > 1 && precond.eigengap() < PAIRING_GAP_TOL {
        return Err(Error::ZeroEigengap);
    }
    let v_l = &precond.eigs().vectors;
    let mut worst: f64 = 1.0;
    for (k, x) in probes.iter().enumerate() {
        let e = sym_eigen(&target.hessian(x))?;
        let gap = e.min_adjacent_gap();
        if e.dim() > 1 && gap < PAIRING_GAP_TOL {
            return Err(Error::DegeneratePairing { probe: k, gap });
        }
        for i in 0..e.dim() {
            let a = e.vectors.column(i).dot(&v_l.column(i)).abs();
            worst = worst.min(a);
        }
    }
    Ok(delta_from_alignment(worst))
}

/// Smallest ε with `‖∇²U(x) − LLᵀ‖ ≤ σ_d² ε` at every probe.
pub fn measure_eps_norm<T: Potential + ?Sized>(
    target: &T,
    precond: &Preconditioner,
    probes: &[Vector],
) -> Result<f64> {
    nonempty(probes)?;
    let llt = precond.eigs().reconstruct();
    let sd2 = precond.eigs().min();
    let mut worst: f64 = 0.0;
    for x in probes {
        worst = worst.max(sym_norm(&target.hessian(x).sub(&llt))?);
    }
    Ok(worst / sd2)
}

/// All three constants over one probe set. δ is `None` when the pairing is
/// undefined (zero eigengap or a degenerate probe spectrum).
pub fn measure_all<T: Potential + ?Sized>(
    target: &T,
    precond: &Preconditioner,
    probes: &[Vector],
) -> Result<(f64, Option<f64>, f64)> {
    let eps_eig = measure_eps_eigenvalue(target, precond, probes)?;
    let delta = match measure_delta_eigenvector(target, precond, probes) {
        Ok(d) => Some(d),
        Err(Error::ZeroEigengap | Error::DegeneratePairing { .. }) => None,
        Err(e) => return Err(e),
    };
    let eps_norm = measure_eps_norm(target, precond, probes)?;
    Ok((eps_eig, delta, eps_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Matrix, SymMatrix};
    use crate::preconditioners::{additive_base_preconditioner, dense_covariance_preconditioner, Preconditioner};
    use crate::targets::{gaussian_target, hyperbolic_regression_target, synth_regression_data, Structure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probes(d: usize, n: usize, scale: f64, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector::from_iterator(d, (0..d).map(|_| scale * (rng.random::<f64>() - 0.5))))
            .collect()
    }

    #[test]
    fn delta_inversion_round_trip() {
        for d in [0.0, 0.01, 0.3, 0.75, 1.0] {
            assert!((delta_from_alignment(alignment_from_delta(d)) - d).abs() < 1e-12);
        }
        assert_eq!(delta_from_alignment(1.0), 0.0);
        assert_eq!(delta_from_alignment(0.0), 1.0);
    }

    #[test]
    fn exact_whitening_has_zero_constants() {
        // Σ⁻¹ must have distinct eigenvalues for δ to be defined.
        let s = SymMatrix::from_upper_rows(&[&[3.0, 0.5, 0.1], &[2.0, 0.2], &[1.0]]).unwrap();
        let t = gaussian_target(Vector::zeros(3), s.clone()).unwrap();
        let inv = crate::linalg::sym_inv(&s).unwrap();
        let p = Preconditioner::from_spd("w", crate::linalg::sym_sqrt(&inv).unwrap()).unwrap();
        let pr = probes(3, 5, 2.0, 1);
        assert!(measure_eps_eigenvalue(&t, &p, &pr).unwrap() < 1e-12);
        assert!(measure_delta_eigenvector(&t, &p, &pr).unwrap() < 1e-12);
        assert!(measure_eps_norm(&t, &p, &pr).unwrap() < 1e-12);
        // L = Σ^{-1/2} itself gives LLᵀ = Σ⁻¹ as well.
        let q = dense_covariance_preconditioner(&s).unwrap();
        assert!(measure_eps_norm(&t, &q, &pr).unwrap() < 1e-10);
    }

    #[test]
    fn hyperbolic_norm_eps_within_lambda() {
        let data = synth_regression_data(3, 15, 3, false).unwrap();
        let t = hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda).unwrap();
        let Structure::Additive { a } = t.structure() else { panic!() };
        let p = additive_base_preconditioner(a).unwrap();
        let eps = measure_eps_norm(&t, &p, &probes(3, 50, 6.0, 2)).unwrap();
        assert!(eps <= data.lambda / p.eigs().min() * (1.0 + 1e-12));
    }

    #[test]
    fn norm_assumption_implies_eigenvalue_assumption() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for seed in 0..20 {
            let data = synth_regression_data(3, 12, seed, false).unwrap();
            let t = hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda).unwrap();
            let Structure::Additive { a } = t.structure() else { panic!() };
            let jitter = Matrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
            let base = a.add(&SymMatrix::symmetrized(&jitter * jitter.transpose()));
            let p = additive_base_preconditioner(&base).unwrap();
            let pr = probes(3, 30, 4.0, seed);
            let en = measure_eps_norm(&t, &p, &pr).unwrap();
            // Weyl: |λ_i(x) − σ_i²| ≤ σ_d² ε, so 1 − ε ≤ λ_i(x)/σ_i² ≤ 1 + ε.
            // The lower side is weaker than (1+ε)⁻¹, so only these two
            // inequalities are asserted.
            let s2 = &p.eigs().values;
            for x in &pr {
                let lam = crate::linalg::sym_eigenvalues(&t.hessian(x)).unwrap();
                for i in 0..3 {
                    let r = lam[i] / s2[i];
                    assert!(r <= 1.0 + en + 1e-12 && r >= 1.0 - en - 1e-12, "{r} vs {en}");
                }
            }
        }
    }

    #[test]
    fn zero_gap_refuses_pairing() {
        let t = gaussian_target(Vector::zeros(2), SymMatrix::identity(2)).unwrap();
        let p = crate::preconditioners::identity_preconditioner(2);
        assert!(matches!(
            measure_delta_eigenvector(&t, &p, &probes(2, 2, 1.0, 0)),
            Err(Error::ZeroEigengap)
        ));
        let q = Preconditioner::from_spd("q", SymMatrix::from_diagonal(&[2.0, 1.0])).unwrap();
        assert!(matches!(
            measure_delta_eigenvector(&t, &q, &probes(2, 2, 1.0, 0)),
            Err(Error::DegeneratePairing { probe: 0, .. })
        ));
    }
}
