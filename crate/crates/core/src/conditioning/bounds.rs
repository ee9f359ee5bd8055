use std::collections::BTreeMap;

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{givens_rotation, spectral_condition_number, sym_eigen, Matrix, SymMatrix, Vector};
use crate::targets::{DifferentiableTarget, LambdaExtremes, Structure};

/// Constant of the RWM spectral-gap lower bound.
pub const GAP_CONSTANT: f64 = 1.972e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundKind {
    Thm1,
    Thm2,
    Thm3,
    Prop3,
    Prop4,
    Prop5,
    Prop5Cor,
    Prop6,
    FisherCor,
    GapSandwich,
    ImprovedGapThreshold,
    OUGap,
    CovLocalise,
    CovLocaliseAdditive,
    DiagDominance,
    HardLower,
}

/// A bound together with the constants that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub inputs: BTreeMap<String, f64>,
    pub values: BTreeMap<String, f64>,
    /// True when the inputs were measured or derived from the target's
    /// structure; false when they were supplied by the caller.
    pub certified: bool,
}

impl BoundReport {
    pub fn new(kind: BoundKind) -> Self {
        Self {
            kind,
            inputs: BTreeMap::new(),
            values: BTreeMap::new(),
            certified: false,
        }
    }

    pub fn input(mut self, k: &str, v: f64) -> Self {
        self.inputs.insert(k.to_string(), v);
        self
    }

    pub fn value(mut self, k: &str, v: f64) -> Self {
        self.values.insert(k.to_string(), v);
        self
    }

    pub fn certified(mut self, c: bool) -> Self {
        self.certified = c;
        self
    }

    pub fn get(&self, k: &str) -> Option<f64> {
        self.values.get(k).copied()
    }

    pub fn upper(&self) -> Option<f64> {
        self.get("upper")
    }

    pub fn lower(&self) -> Option<f64> {
        self.get("lower")
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

/// `κ(LLᵀ)·M/m`, the floor on κ_L for the cosine target.
pub fn hard_target_lower(l: &Matrix, m: f64, big_m: f64) -> Result<BoundReport> {
    check_pos("m", m)?;
    let sv = SVD::new(l.clone(), false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) {
        return Err(Error::NotInvertible(smin));
    }
    let k_llt = (smax / smin).powi(2);
    Ok(BoundReport::new(BoundKind::HardLower)
        .input("m", m)
        .input("M", big_m)
        .input("kappa_LLt", k_llt)
        .value("lower", k_llt * big_m / m)
        .certified(true))
}

/// `(1+ε)²(1 + δ√(Σσ_i² Σσ_i⁻²))⁴`.
pub fn bound_thm1(eps: f64, delta: f64, sigmas: &[f64]) -> Result<BoundReport> {
    check_nonneg("eps", eps)?;
    check_nonneg("delta", delta)?;
    if delta > 1.0 {
        return Err(Error::InvalidArgument(format!("delta must be <= 1, got {delta}")));
    }
    if sigmas.is_empty() {
        return Err(Error::InvalidArgument("no singular values".into()));
    }
    for &s in sigmas {
        check_pos("sigma", s)?;
    }
    let tr: f64 = sigmas.iter().map(|s| s * s).sum();
    let tr_inv: f64 = sigmas.iter().map(|s| 1.0 / (s * s)).sum();
    let factor = (tr * tr_inv).sqrt();
    let smax = sigmas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let smin = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let cap = sigmas.len() as f64 * (smax / smin);
    let value = (1.0 + eps).powi(2) * (1.0 + delta * factor).powi(4);
    Ok(BoundReport::new(BoundKind::Thm1)
        .input("eps", eps)
        .input("delta", delta)
        .value("upper", value)
        .value("trace_factor", factor)
        .value("trace_factor_cap", cap))
}

fn thm2_with_delta(eps: f64, gamma: f64, sigma_d: f64, sigmas: &[f64], t: f64) -> Result<BoundReport> {
    if !(t <= 1.0) {
        return Err(Error::Inapplicable(format!(
            "Davis-Kahan ratio {t} exceeds 1 (eps={eps}, gamma={gamma}, sigma_d={sigma_d})"
        )));
    }
    let delta = 1.0 - (1.0 - t).powi(2);
    let inner = bound_thm1(eps, delta, sigmas)?;
    let mut r = BoundReport::new(BoundKind::Thm2)
        .input("eps", eps)
        .input("gamma", gamma)
        .input("sigma_d", sigma_d)
        .value("delta", delta);
    r.values.extend(inner.values);
    Ok(r)
}

fn thm2_checks(eps: f64, gamma: f64, sigma_d: f64) -> Result<()> {
    check_nonneg("eps", eps)?;
    check_pos("sigma_d", sigma_d)?;
    if gamma == 0.0 {
        return Err(Error::ZeroEigengap);
    }
    check_pos("gamma", gamma)
}

/// Theorem 1 with `δ = 1 − (1 − 2γ⁻¹σ_d⁻²ε)²`, the displayed form.
pub fn bound_thm2(eps: f64, gamma: f64, sigma_d: f64, sigmas: &[f64]) -> Result<BoundReport> {
    thm2_checks(eps, gamma, sigma_d)?;
    thm2_with_delta(eps, gamma, sigma_d, sigmas, 2.0 * eps / (gamma * sigma_d * sigma_d))
}

/// Theorem 1 with `δ = 1 − (1 − 2γ⁻¹σ_d²ε)²`, the form the Davis–Kahan step
/// yields when `‖∇²U(x) − LLᵀ‖ ≤ σ_d²ε`. Unlike the displayed form it is
/// invariant under `L ↦ cL`.
pub fn bound_thm2_scale_consistent(eps: f64, gamma: f64, sigma_d: f64, sigmas: &[f64]) -> Result<BoundReport> {
    thm2_checks(eps, gamma, sigma_d)?;
    thm2_with_delta(eps, gamma, sigma_d, sigmas, 2.0 * sigma_d * sigma_d * eps / gamma)
}

/// `(1+ε)(1 + σ₁²ε/m)`.
pub fn bound_thm3(eps: f64, sigma1: f64, m: f64) -> Result<BoundReport> {
    check_nonneg("eps", eps)?;
    check_pos("m", m)?;
    Ok(BoundReport::new(BoundKind::Thm3)
        .input("eps", eps)
        .input("sigma1", sigma1)
        .input("m", m)
        .value("upper", (1.0 + eps) * (1.0 + sigma1 * sigma1 * eps / m)))
}

/// The two-dimensional misaligned-eigenvector example.
#[derive(Clone, Debug)]
pub struct GivensDelta {
    /// `κ_L = λ₁(M)²` from the trace/determinant formula.
    pub kappa: f64,
    /// `¼(l−2)²` with `l = λ₁/λ₂ + λ₂/λ₁`.
    pub delta4_coefficient: f64,
    pub m: Matrix,
    /// Covariance `D = diag(λ₁, λ₂)` of the Gaussian target.
    pub sigma: SymMatrix,
    /// `L = G D^{-1/2} Gᵀ`.
    pub l: Matrix,
}

/// Builds `G` at angle `arccos(1−δ)`, `M = D^{1/2}GᵀD⁻¹GD^{1/2}` and
/// returns `λ₁(M)²` together with the δ⁴ coefficient `¼(l−2)²`.
pub fn givens_delta_kappa(lambda1: f64, lambda2: f64, delta: f64) -> Result<GivensDelta> {
    check_pos("lambda1", lambda1)?;
    check_pos("lambda2", lambda2)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0,1], got {delta}")));
    }
    if lambda1 == lambda2 {
        return Err(Error::InvalidArgument("lambda1 == lambda2: covariance is isotropic".into()));
    }
    let g = givens_rotation((1.0 - delta).acos());
    let dh = Matrix::from_diagonal(&Vector::from_row_slice(&[lambda1.sqrt(), lambda2.sqrt()]));
    let dinv = Matrix::from_diagonal(&Vector::from_row_slice(&[1.0 / lambda1, 1.0 / lambda2]));
    let dmh = Matrix::from_diagonal(&Vector::from_row_slice(&[1.0 / lambda1.sqrt(), 1.0 / lambda2.sqrt()]));
    let m = &dh * g.transpose() * dinv * &g * &dh;
    let l = &g * dmh * g.transpose();
    let ratio = lambda1 / lambda2 + lambda2 / lambda1;
    let tr = 2.0 * (1.0 - delta).powi(2) + delta * (2.0 - delta) * ratio;
    let lam1 = 0.5 * (tr + (tr * tr - 4.0).max(0.0).sqrt());
    Ok(GivensDelta {
        kappa: lam1 * lam1,
        delta4_coefficient: 0.25 * (ratio - 2.0).powi(2),
        m,
        sigma: SymMatrix::from_diagonal(&[lambda1, lambda2]),
        l,
    })
}

/// Leading coefficient of the least-squares quartic fit of δ ↦ κ_L(δ) over
/// `points` equispaced δ in `[0, 1]`.
pub fn fit_delta4_coefficient(lambda1: f64, lambda2: f64, points: usize) -> Result<f64> {
    let n = points.max(5);
    let mut a = Matrix::zeros(n, 5);
    let mut b = Vector::zeros(n);
    for i in 0..n {
        let d = i as f64 / (n - 1) as f64;
        for p in 0..5 {
            a[(i, p)] = d.powi(p as i32);
        }
        b[i] = givens_delta_kappa(lambda1, lambda2, d)?.kappa;
    }
    let coef = SVD::new(a, true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(coef[4])
}

fn mult_parts(target: &DifferentiableTarget) -> Result<(&Matrix, LambdaExtremes)> {
    match target.structure() {
        Structure::Multiplicative { x, extremes: Some(e) } => Ok((x, e)),
        Structure::Multiplicative { extremes: None, .. } => {
            Err(Error::Inapplicable("multiplicative structure without Λ extremes".into()))
        }
        _ => Err(Error::Inapplicable("target has no multiplicative Hessian".into())),
    }
}

/// Ostrowski sandwich on κ for `∇²U = XᵀΛ(x)X`. The upper bound divides by
/// `inf λ_n(Λ)`, the smallest diagonal value.
pub fn mult_kappa_bounds(target: &DifferentiableTarget) -> Result<BoundReport> {
    let (x, e) = mult_parts(target)?;
    let (n, d) = x.shape();
    let k_xtx = spectral_condition_number(&SymMatrix::symmetrized(x.transpose() * x))?.cond;
    let sup1 = e.sup_lambda(1);
    let sup_nd1 = e.sup_lambda(n - d + 1);
    let inf_d = e.inf_lambda(d);
    let inf_n = e.inf_lambda(n);
    Ok(BoundReport::new(BoundKind::Prop3)
        .input("kappa_XtX", k_xtx)
        .input("sup_lambda_1", sup1)
        .input("sup_lambda_n_minus_d_plus_1", sup_nd1)
        .input("inf_lambda_d", inf_d)
        .input("inf_lambda_n", inf_n)
        .value("lower", sup_nd1 / (inf_d * k_xtx))
        .value("upper", k_xtx * sup1 / inf_n)
        .certified(true))
}

/// Whether every diagonal entry of Λ ranges over the same `[c, C]`.
pub fn assumption6_holds(e: &LambdaExtremes) -> bool {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    e.lower.iter().all(|&v| close(v, e.c())) && e.upper.iter().all(|&v| close(v, e.big_c()))
}

/// `κ = (C/c)κ(XᵀX)`, valid when every Λ_ii shares the range `[c, C]`.
pub fn mult_kappa_exact(target: &DifferentiableTarget) -> Result<BoundReport> {
    let (x, e) = mult_parts(target)?;
    if !assumption6_holds(&e) {
        return Err(Error::Inapplicable("diagonal entries of Λ do not share one range".into()));
    }
    let k_xtx = spectral_condition_number(&SymMatrix::symmetrized(x.transpose() * x))?.cond;
    Ok(BoundReport::new(BoundKind::Prop4)
        .input("c", e.c())
        .input("C", e.big_c())
        .input("kappa_XtX", k_xtx)
        .value("value", e.big_c() / e.c() * k_xtx)
        .certified(true))
}

/// Sandwich on κ_L for `L = (XᵀX)^{1/2}`, and the ratio `C/c` which equals
/// κ_L when every Λ_ii shares one range (`certified` records whether it does).
pub fn mult_dalalyan(target: &DifferentiableTarget) -> Result<(BoundReport, BoundReport)> {
    let (x, e) = mult_parts(target)?;
    let (n, d) = x.shape();
    let sup1 = e.sup_lambda(1);
    let sup_nd1 = e.sup_lambda(n - d + 1);
    let inf_d = e.inf_lambda(d);
    let inf_n = e.inf_lambda(n);
    let prop5 = BoundReport::new(BoundKind::Prop5)
        .input("sup_lambda_1", sup1)
        .input("sup_lambda_n_minus_d_plus_1", sup_nd1)
        .input("inf_lambda_d", inf_d)
        .input("inf_lambda_n", inf_n)
        .value("lower", sup_nd1 / inf_d)
        .value("upper", sup1 / inf_n)
        .certified(true);
    let holds = assumption6_holds(&e);
    let cor = BoundReport::new(BoundKind::Prop5Cor)
        .input("c", e.c())
        .input("C", e.big_c())
        .input("shared_range", if holds { 1.0 } else { 0.0 })
        .value("value", e.big_c() / e.c())
        .certified(holds);
    Ok((prop5, cor))
}

/// Upper bounds on κ_L for `L = (XᵀΛ(x*)X)^{1/2}`: the ratio of the extremes
/// of `Λ(x*)^{-1/2}Λ(x)Λ(x*)^{-1/2}`, and its cap `(C/c)²`.
pub fn mult_mode_bound(target: &DifferentiableTarget, x_star: &Vector) -> Result<BoundReport> {
    let (_, e) = mult_parts(target)?;
    let lam_star = target
        .lambda_diag(x_star)
        .ok_or_else(|| Error::Inapplicable("Λ(x) unavailable".into()))?;
    if let Some(i) = lam_star.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::AssumptionViolation(format!("Λ(x*)[{i}] = {} is not positive", lam_star[i])));
    }
    let sup = e.upper.iter().zip(lam_star.iter()).map(|(u, s)| u / s).fold(f64::NEG_INFINITY, f64::max);
    let inf = e.lower.iter().zip(lam_star.iter()).map(|(l, s)| l / s).fold(f64::INFINITY, f64::min);
    let first = sup / inf;
    let cap = (e.big_c() / e.c()).powi(2);
    Ok(BoundReport::new(BoundKind::Prop6)
        .input("c", e.c())
        .input("C", e.big_c())
        .value("upper", first)
        .value("cap", cap)
        .certified(true))
}

/// `‖∇²U − 𝓘‖ ≤ 2σ_d²ε` and `κ_{𝓘^{1/2}} ≤ (1+2ε)(1 + 2σ₁²ε/m)`.
pub fn fisher_bound(eps: f64, sigma1: f64, sigma_d: f64, m: f64) -> Result<BoundReport> {
    check_nonneg("eps", eps)?;
    check_pos("m", m)?;
    Ok(BoundReport::new(BoundKind::FisherCor)
        .input("eps", eps)
        .input("sigma1", sigma1)
        .input("sigma_d", sigma_d)
        .input("m", m)
        .value("norm_bound", 2.0 * sigma_d * sigma_d * eps)
        .value("upper", (1.0 + 2.0 * eps) * (1.0 + 2.0 * sigma1 * sigma1 * eps / m)))
}

/// Sandwich on the RWM spectral gap at `σ² = ξ/(Md)`.
pub fn rwm_gap_bounds(kappa: f64, d: usize, xi: f64, eps: f64, big_m: Option<f64>) -> Result<BoundReport> {
    if !(kappa >= 1.0) || d == 0 {
        return Err(Error::InvalidArgument(format!("need kappa >= 1 and d >= 1, got {kappa}, {d}")));
    }
    check_pos("xi", xi)?;
    check_nonneg("eps", eps)?;
    let kd = kappa * d as f64;
    let mut r = BoundReport::new(BoundKind::GapSandwich)
        .input("kappa", kappa)
        .input("d", d as f64)
        .input("xi", xi)
        .input("eps", eps)
        .value("lower", GAP_CONSTANT * xi * (-2.0 * xi).exp() / kd)
        .value("upper", (1.0 + 2.0 * eps) * 0.5 * xi / kd);
    if let Some(mm) = big_m {
        check_pos("M", mm)?;
        r = r.input("M", mm).value("sigma2", xi / (mm * d as f64));
    }
    Ok(r)
}

/// κ above which preconditioning provably increases the RWM spectral gap.
pub fn improved_gap_threshold(eps_prime: f64, eps: f64, sigma1: f64, m: f64, xi: f64) -> Result<BoundReport> {
    check_nonneg("eps_prime", eps_prime)?;
    check_nonneg("eps", eps)?;
    check_pos("m", m)?;
    check_nonneg("xi", xi)?;
    let t = 0.5 / GAP_CONSTANT
        * (2.0 * xi).exp()
        * (1.0 + 2.0 * eps_prime)
        * (1.0 + eps)
        * (1.0 + sigma1 * sigma1 * eps / m);
    Ok(BoundReport::new(BoundKind::ImprovedGapThreshold)
        .input("eps_prime", eps_prime)
        .input("eps", eps)
        .input("sigma1", sigma1)
        .input("m", m)
        .input("xi", xi)
        .value("threshold", t))
}

/// Bounds for a single preconditioner given measured constants: Theorems
/// 1–3 where applicable, with `certified` set.
pub fn theorem_bounds(
    eps_eig: f64,
    delta: Option<f64>,
    eps_norm: f64,
    sigmas: &[f64],
    gamma: f64,
    m: f64,
) -> Vec<Result<BoundReport>> {
    let sigma1 = sigmas[0];
    let sigma_d = sigmas[sigmas.len() - 1];
    let mut out = Vec::new();
    out.push(match delta {
        Some(dl) => bound_thm1(eps_eig, dl, sigmas).map(|r| r.certified(true)),
        None => Err(Error::ZeroEigengap),
    });
    out.push(bound_thm2(eps_norm, gamma, sigma_d, sigmas).map(|r| r.certified(true)));
    out.push(bound_thm3(eps_norm, sigma1, m).map(|r| r.certified(true)));
    out
}

/// Eigenvalues of a symmetric matrix, exposed for report tables.
pub fn eigen_summary(a: &SymMatrix) -> Result<Vector> {
    Ok(sym_eigen(a)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::{condition_number, kappa_after};
    use crate::targets::{binomial_gprior_target, gaussian_target, synth_binomial_data};

    #[test]
    fn thm1_examples() {
        assert_eq!(bound_thm1(0.0, 0.0, &[3.0, 1.0]).unwrap().upper(), Some(1.0));
        let v = bound_thm1(0.0, 0.1, &[1.0, 1.0]).unwrap().upper().unwrap();
        assert!((v - 2.0736).abs() < 1e-12);
        assert!(bound_thm1(0.0, 1.5, &[1.0]).is_err());
        let r = bound_thm1(0.0, 0.0, &[4.0, 1.0]).unwrap();
        assert!(r.get("trace_factor").unwrap() <= r.get("trace_factor_cap").unwrap());
    }

    #[test]
    fn thm2_examples() {
        assert_eq!(bound_thm2(0.0, 1.0, 1.0, &[1.0, 2.0]).unwrap().upper(), Some(1.0));
        let r = bound_thm2(0.25, 1.0, 1.0, &[1.0, 2.0]).unwrap();
        assert!((r.get("delta").unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(bound_thm2(0.1, 0.0, 1.0, &[1.0]), Err(Error::ZeroEigengap)));
        assert!(matches!(bound_thm2(1.0, 1.0, 1.0, &[1.0]), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn thm3_and_fisher_examples() {
        assert_eq!(bound_thm3(0.0, 3.0, 1.0).unwrap().upper(), Some(1.0));
        let f = fisher_bound(0.1, 1.0, 1.0, 1.0).unwrap();
        assert!((f.upper().unwrap() - 1.44).abs() < 1e-12);
        assert!((f.get("norm_bound").unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(fisher_bound(0.0, 2.0, 1.0, 1.0).unwrap().upper(), Some(1.0));
    }

    #[test]
    fn gap_examples() {
        let r = rwm_gap_bounds(1.0, 1, 1.0, 0.0, Some(1.0)).unwrap();
        assert!((r.lower().unwrap() - 2.6688e-5).abs() < 1e-8);
        assert_eq!(r.upper(), Some(0.5));
        assert_eq!(r.get("sigma2"), Some(1.0));
        let t = improved_gap_threshold(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert!((t.get("threshold").unwrap() - 2535.5).abs() < 0.1);
    }

    #[test]
    fn hard_lower_examples() {
        let l = Matrix::from_diagonal(&Vector::from_row_slice(&[2.0, 1.0]));
        assert_eq!(hard_target_lower(&l, 1.0, 4.0).unwrap().lower(), Some(16.0));
        let q = givens_rotation(0.7);
        let v = hard_target_lower(&q, 1.0, 4.0).unwrap().lower().unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn givens_examples() {
        let g = givens_delta_kappa(2.0, 1.0, 0.0).unwrap();
        assert!((g.kappa - 1.0).abs() < 1e-12);
        assert!((givens_delta_kappa(2.0, 1.0, 0.3).unwrap().delta4_coefficient - 0.0625).abs() < 1e-15);
        // det(M) = 1 and λ₁(M)² from the explicit eigenvalues.
        let g = givens_delta_kappa(50.0, 1.0, 0.3).unwrap();
        assert!((g.m.determinant() - 1.0).abs() < 1e-10);
        let e = sym_eigen(&SymMatrix::symmetrized(g.m.clone())).unwrap();
        assert!((e.max().powi(2) / g.kappa - 1.0).abs() < 1e-10);
        let t = gaussian_target(Vector::zeros(2), g.sigma.clone()).unwrap();
        let k = kappa_after(&t, &g.l).unwrap().kappa;
        assert!((k / g.kappa - 1.0).abs() < 1e-6);
    }

    #[test]
    fn multiplicative_bounds_on_binomial() {
        let data = synth_binomial_data(3, 15, 5.0, 3).unwrap();
        let lon = 0.01 / 15.0;
        let t = binomial_gprior_target(data.x.clone(), data.y.clone(), data.w.clone(), lon).unwrap();
        let k = kappa_after(&t, &Matrix::identity(3, 3)).unwrap().kappa;
        let p3 = mult_kappa_bounds(&t).unwrap();
        assert!(p3.lower().unwrap() <= k && k <= p3.upper().unwrap() * (1.0 + 1e-12));
        // The upper bound is the displayed closed form for κ.
        let env = condition_number(&t).unwrap().kappa;
        assert!((p3.upper().unwrap() / env - 1.0).abs() < 1e-10);
        assert!(mult_kappa_exact(&t).is_err());
        let (p5, cor) = mult_dalalyan(&t).unwrap();
        assert!(!cor.certified);
        let l = crate::preconditioners::design_preconditioner(&data.x).unwrap();
        let kd = kappa_after(&t, l.l().as_matrix()).unwrap().kappa;
        assert!(p5.lower().unwrap() <= kd * (1.0 + 1e-12) && kd <= p5.upper().unwrap() * (1.0 + 1e-12));

        let uniform = binomial_gprior_target(data.x.clone(), data.y, Vector::from_element(15, 1.0), lon).unwrap();
        let (_, cor) = mult_dalalyan(&uniform).unwrap();
        assert!(cor.certified);
        let kd = kappa_after(&uniform, l.l().as_matrix()).unwrap().kappa;
        assert!((kd / cor.get("value").unwrap() - 1.0).abs() < 1e-9);
        let p4 = mult_kappa_exact(&uniform).unwrap();
        let k = kappa_after(&uniform, &Matrix::identity(3, 3)).unwrap().kappa;
        assert!((p4.get("value").unwrap() / k - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prop6_on_binomial() {
        let data = synth_binomial_data(2, 10, 1.0, 9).unwrap();
        let lon = 0.01 / 10.0;
        let t = binomial_gprior_target(data.x, data.y, data.w, lon).unwrap();
        let x_star = Vector::from_row_slice(&[0.1, -0.2]);
        let r = mult_mode_bound(&t, &x_star).unwrap();
        let l = crate::preconditioners::hessian_at_mode_preconditioner(&t, &x_star).unwrap();
        let k = kappa_after(&t, l.l().as_matrix()).unwrap().kappa;
        assert!(k <= r.upper().unwrap() * (1.0 + 1e-10));
        assert!(r.upper().unwrap() <= r.get("cap").unwrap());
        // Mode formula: ((¼+λ/n)/(λ/n))·max(p*q*+λ/n)/min(p*q*+λ/n).
        let Some(lam) = t.lambda_diag(&x_star) else { panic!() };
        let crate::targets::Model::Binomial { w, .. } = t.model() else { panic!() };
        let pq: Vec<f64> = lam.iter().zip(w.iter()).map(|(a, b)| a / b).collect();
        let mx = pq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mn = pq.iter().copied().fold(f64::INFINITY, f64::min);
        let want = (0.25 + lon) / lon * mx / mn;
        assert!((r.upper().unwrap() / want - 1.0).abs() < 1e-12);
    }
}
