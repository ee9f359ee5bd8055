use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{check_positive_definite, sym_eigen, sym_eigenvalues, Matrix, SymMatrix, Vector};
use crate::preconditioners::Preconditioner;
use crate::targets::{DifferentiableTarget, Model, Potential, SmoothnessEnvelope};

/// Where a condition number came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Exact value from the structure of the Hessian family.
    ClosedForm,
    /// `M/m` read off the target's smoothness envelope.
    Envelope,
    /// Supremum over finitely many points; a lower bound on the true value.
    Estimated,
}

/// `κ_L = sup‖L⁻ᵀ∇²U L⁻¹‖ · sup‖L ∇²U⁻¹ Lᵀ‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    /// `sup λ₁(L⁻ᵀ∇²U L⁻¹)`.
    pub sup_norm: f64,
    /// `sup ‖(L⁻ᵀ∇²U L⁻¹)⁻¹‖ = 1 / inf λ_d(L⁻ᵀ∇²U L⁻¹)`.
    pub sup_inv_norm: f64,
    pub provenance: Provenance,
}

impl KappaEstimate {
    fn from_extremes(sup: f64, inf: f64, provenance: Provenance) -> Self {
        Self {
            kappa: sup / inf,
            sup_norm: sup,
            sup_inv_norm: 1.0 / inf,
            provenance,
        }
    }
}

/// `L⁻ᵀ H L⁻¹` for an arbitrary invertible `L`.
pub fn whiten(h: &SymMatrix, l: &Matrix) -> Result<SymMatrix> {
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotInvertible(0.0))?;
    Ok(h.congruence(&l_inv))
}

fn extremes(h: &SymMatrix) -> Result<(f64, f64)> {
    let v = sym_eigenvalues(h)?;
    Ok((v[0], v[v.len() - 1]))
}

/// Envelope `(inf λ_d, sup λ₁)` of `L⁻ᵀ∇²U(x)L⁻¹` over all x, in closed form.
///
/// Each model's Hessian family lies between two fixed matrices in Loewner
/// order, with one end attained and the other approached, except the cosine
/// target whose diagonal entries vary independently over `[m, M]`; there
/// λ₁ is convex and λ_d concave in the diagonal, so both extremes sit at
/// the four corners.
pub fn preconditioned_envelope(target: &DifferentiableTarget, l: &Matrix) -> Result<SmoothnessEnvelope> {
    let (sup, inf, sup_att, inf_att) = match target.model() {
        Model::Gaussian { precision, .. } => {
            let (hi, lo) = extremes(&whiten(precision, l)?)?;
            (hi, lo, true, true)
        }
        Model::Cosine { m, big_m } => {
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for a in [*m, *big_m] {
                for b in [*m, *big_m] {
                    let (h, l_) = extremes(&whiten(&SymMatrix::from_diagonal(&[a, b]), l)?)?;
                    hi = hi.max(h);
                    lo = lo.min(l_);
                }
            }
            (hi, lo, true, true)
        }
        Model::Hyperbolic { a, lambda, .. } => {
            let (hi, _) = extremes(&whiten(&a.add_identity(*lambda), l)?)?;
            let (_, lo) = extremes(&whiten(a, l)?)?;
            (hi, lo, true, false)
        }
        Model::Binomial {
            xtwx, lambda_over_n, ..
        } => {
            let (hi, lo) = extremes(&whiten(xtwx, l)?)?;
            (hi * (0.25 + lambda_over_n), lo * lambda_over_n, false, false)
        }
    };
    if !(inf > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "preconditioned Hessian has non-positive eigenvalue {inf:e}"
        )));
    }
    Ok(SmoothnessEnvelope {
        m: inf,
        big_m: sup,
        m_attained: inf_att,
        big_m_attained: sup_att,
    })
}

/// κ of the target: `M/m` from its envelope, or a multistart estimate.
pub fn condition_number(target: &DifferentiableTarget) -> Result<KappaEstimate> {
    match target.envelope() {
        Some(env) => Ok(KappaEstimate::from_extremes(env.big_m, env.m, Provenance::Envelope)),
        None => estimate_kappa(target, &Matrix::identity(target.dim(), target.dim()), &SearchConfig::default()),
    }
}

/// Exact κ_L for any invertible `L` (not necessarily symmetric).
///
/// For the cosine target the corner value is cross-checked against a 64×64
/// grid over one period; a disagreement above 1e-6 relative is an error.
pub fn kappa_after(target: &DifferentiableTarget, l: &Matrix) -> Result<KappaEstimate> {
    let env = preconditioned_envelope(target, l)?;
    let k = KappaEstimate::from_extremes(env.big_m, env.m, Provenance::ClosedForm);
    if let Model::Cosine { m, big_m } = target.model() {
        let grid = cosine_grid_kappa(l, *m, *big_m, 64)?;
        if ((grid - k.kappa) / k.kappa).abs() > 1e-6 {
            return Err(Error::AssumptionViolation(format!(
                "cosine grid certificate {grid} disagrees with corner value {}",
                k.kappa
            )));
        }
    }
    Ok(k)
}

pub fn kappa_after_precond(target: &DifferentiableTarget, p: &Preconditioner) -> Result<KappaEstimate> {
    kappa_after(target, p.l().as_matrix())
}

/// κ_L of the cosine target evaluated on an `n × n` grid over `[0, 2π)²`.
pub fn cosine_grid_kappa(l: &Matrix, m: f64, big_m: f64, n: usize) -> Result<f64> {
    let f = |t: f64| 0.5 * (big_m - m) * t.cos() + 0.5 * (big_m + m);
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let x = 2.0 * PI * i as f64 / n as f64;
            let y = 2.0 * PI * j as f64 / n as f64;
            let (h, l_) = extremes(&whiten(&SymMatrix::from_diagonal(&[f(x), f(y)]), l)?)?;
            hi = hi.max(h);
            lo = lo.min(l_);
        }
    }
    Ok(hi / lo)
}

/// κ_L restricted to a finite probe set.
pub fn kappa_over_probes<T: Potential + ?Sized>(target: &T, l: &Matrix, probes: &[Vector]) -> Result<KappaEstimate> {
    if probes.is_empty() {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    let l_inv = l.clone().try_inverse().ok_or(Error::NotInvertible(0.0))?;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for x in probes {
        let (h, l_) = extremes(&target.hessian(x).congruence(&l_inv))?;
        hi = hi.max(h);
        lo = lo.min(l_);
    }
    if !(lo > 0.0) {
        return Err(Error::AssumptionViolation(format!("Hessian eigenvalue {lo:e} at a probe")));
    }
    Ok(KappaEstimate::from_extremes(hi, lo, Provenance::Estimated))
}

/// Settings of the multistart search for the Hessian extremes.
#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub starts: usize,
    /// Starts are drawn from `N(center, start_sd² I)`.
    pub start_sd: f64,
    pub center: Option<Vector>,
    /// Central-difference step for eigenvalue gradients.
    pub fd_step: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            start_sd: 2.0,
            center: None,
            fd_step: 1e-5,
            max_iter: 100,
            seed: 0,
        }
    }
}

/// Multistart local search (the first start at `center`) for `sup λ₁` and `inf λ_d` of `L⁻ᵀ∇²U(x)L⁻¹`.
///
/// Each start runs normalised-gradient ascent (resp. descent) with an
/// adaptive step; gradients are central differences of the eigenvalue. The
/// result is a lower bound on the true κ_L.
pub fn estimate_kappa<T: Potential + ?Sized>(target: &T, l: &Matrix, cfg: &SearchConfig) -> Result<KappaEstimate> {
    let d = target.dim();
    let l_inv = l.clone().try_inverse().ok_or(Error::NotInvertible(0.0))?;
    let center = cfg.center.clone().unwrap_or_else(|| Vector::zeros(d));
    let eval = |x: &Vector| -> Result<(f64, f64)> {
        let e = sym_eigen(&target.hessian(x).congruence(&l_inv))?;
        Ok((e.max(), e.min()))
    };
    let results: Vec<Result<(f64, f64)>> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            // Start 0 is the centre itself.
            let sd = if s == 0 { 0.0 } else { cfg.start_sd };
            let x0 = &center + Vector::from_iterator(d, (0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)));
            let hi = climb(&x0, cfg, |x| eval(x).map(|v| v.0))?;
            let lo = -climb(&x0, cfg, |x| eval(x).map(|v| -v.1))?;
            Ok((hi, lo))
        })
        .collect();
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for r in results {
        let (h, l_) = r?;
        hi = hi.max(h);
        lo = lo.min(l_);
    }
    if !(lo > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "Hessian eigenvalue {lo:e} found: potential is not strongly convex"
        )));
    }
    Ok(KappaEstimate::from_extremes(hi, lo, Provenance::Estimated))
}

/// Maximises `f` from `x0`; returns the best value seen. Fails as soon as
/// `f` is evaluated where the Hessian is not positive definite.
fn climb(x0: &Vector, cfg: &SearchConfig, f: impl Fn(&Vector) -> Result<f64>) -> Result<f64> {
    let d = x0.len();
    let mut x = x0.clone();
    let mut fx = f(&x)?;
    let mut radius = 1.0;
    for _ in 0..cfg.max_iter {
        let h = cfg.fd_step * (1.0 + x.norm());
        let mut g = Vector::zeros(d);
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(&xp)? - f(&xm)?) / (2.0 * h);
        }
        let gn = g.norm();
        if !(gn > 0.0) {
            break;
        }
        loop {
            let cand = &x + &g * (radius / gn);
            let fc = f(&cand)?;
            if fc > fx {
                x = cand;
                fx = fc;
                radius *= 1.5;
                break;
            }
            radius *= 0.5;
            if radius < 1e-8 {
                return Ok(fx);
            }
        }
    }
    Ok(fx)
}

/// Verifies positive definiteness at one point; used by callers that need
/// the strong-convexity precondition before measuring constants.
pub fn check_hessian_pd<T: Potential + ?Sized>(target: &T, x: &Vector) -> Result<()> {
    let e = sym_eigen(&target.hessian(x))?;
    check_positive_definite(&e).map_err(|_| {
        Error::AssumptionViolation(format!("Hessian not positive definite (λ_d = {:e})", e.min()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{correlation, sigma_pi};
    use crate::linalg::{spectral_condition_number, symmetrize_preconditioner, sym_inv_sqrt};
    use crate::preconditioners::{diag_covariance_preconditioner, additive_base_preconditioner};
    use crate::targets::{
        cosine_hard_target, gaussian_target, hyperbolic_regression_target, synth_regression_data,
    };
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_whitening_is_one() {
        let s = sigma_pi();
        let t = gaussian_target(Vector::zeros(5), s.clone()).unwrap();
        let l = sym_inv_sqrt(&s).unwrap();
        let k = kappa_after(&t, l.as_matrix()).unwrap();
        assert!((k.kappa - 1.0).abs() < 1e-8);
        assert_eq!(k.provenance, Provenance::ClosedForm);
    }

    #[test]
    fn diagonal_preconditioning_equals_correlation_condition() {
        let s = sigma_pi();
        let t = gaussian_target(Vector::zeros(5), s.clone()).unwrap();
        let p = diag_covariance_preconditioner(&s).unwrap();
        let k = kappa_after(&t, p.l().as_matrix()).unwrap().kappa;
        let kc = spectral_condition_number(&correlation(&s)).unwrap().cond;
        assert!((k / kc - 1.0).abs() < 1e-9);
        assert!(k > condition_number(&t).unwrap().kappa);
    }

    #[test]
    fn cosine_condition_number() {
        let t = cosine_hard_target(1.0, 4.0).unwrap();
        assert_eq!(condition_number(&t).unwrap().kappa, 4.0);
        let k = kappa_after(&t, &Matrix::from_diagonal(&Vector::from_row_slice(&[2.0, 1.0]))).unwrap();
        assert!((k.kappa - 16.0).abs() < 1e-12);
    }

    #[test]
    fn symmetrized_l_gives_same_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = {
            let a = Matrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
            SymMatrix::symmetrized(&a * a.transpose() + Matrix::identity(3, 3) * 0.2)
        };
        let t = gaussian_target(Vector::zeros(3), s).unwrap();
        let l = Matrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5);
        let lt = symmetrize_preconditioner(&l).unwrap();
        let a = kappa_after(&t, &l).unwrap().kappa;
        let b = kappa_after(&t, lt.as_matrix()).unwrap().kappa;
        assert!((a / b - 1.0).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn hyperbolic_additive_base_closed_form() {
        let data = synth_regression_data(3, 15, 2, false).unwrap();
        let t = hyperbolic_regression_target(data.x.clone(), data.y, 1.0, data.lambda).unwrap();
        let crate::targets::Structure::Additive { a } = t.structure() else { panic!() };
        let p = additive_base_preconditioner(a).unwrap();
        let k = kappa_after(&t, p.l().as_matrix()).unwrap().kappa;
        let xtx = SymMatrix::symmetrized(data.x.transpose() * &data.x);
        let sd = sym_eigen(&xtx).unwrap().min();
        assert!((k - (1.0 + data.lambda / sd)).abs() < 1e-10);
        assert!(k <= condition_number(&t).unwrap().kappa);
    }

    #[test]
    fn estimator_agrees_with_closed_form_on_hyperbolic() {
        let data = synth_regression_data(2, 6, 7, false).unwrap();
        let t = hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda).unwrap();
        let l = Matrix::identity(2, 2);
        let exact = kappa_after(&t, &l).unwrap();
        let est = estimate_kappa(&t, &l, &SearchConfig { start_sd: 20.0, ..SearchConfig::default() }).unwrap();
        assert!(est.kappa <= exact.kappa * (1.0 + 1e-9));
        // sup λ₁ is attained at β = 0, so the search must find it.
        assert!((est.sup_norm / exact.sup_norm - 1.0).abs() < 1e-6);
        assert!(est.kappa > 0.9 * exact.kappa, "{} vs {}", est.kappa, exact.kappa);
    }

    #[test]
    fn estimator_on_cosine_matches_corners() {
        let t = cosine_hard_target(1.0, 4.0).unwrap();
        let l = Matrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]);
        let exact = kappa_after(&t, &l).unwrap().kappa;
        let est = estimate_kappa(&t, &l, &SearchConfig::default()).unwrap().kappa;
        assert!((est / exact - 1.0).abs() < 1e-6, "{est} {exact}");
    }

    #[test]
    fn probes_lower_bound_exact() {
        let data = synth_regression_data(3, 9, 1, false).unwrap();
        let t = hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda).unwrap();
        let probes: Vec<Vector> = (0..10).map(|k| Vector::from_element(3, k as f64)).collect();
        let l = Matrix::identity(3, 3);
        let p = kappa_over_probes(&t, &l, &probes).unwrap();
        assert!(p.kappa <= kappa_after(&t, &l).unwrap().kappa);
    }
}
