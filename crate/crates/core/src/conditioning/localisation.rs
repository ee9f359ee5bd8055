use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixtures::correlation;
use crate::linalg::{
    check_positive_definite, loewner_leq, spectral_condition_number, sym_eigen, sym_eigenvalues, sym_norm,
    Matrix, SymMatrix, Vector,
};

use super::bounds::{BoundKind, BoundReport};

/// Spectral gap of the preconditioned Ornstein–Uhlenbeck process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OuGap {
    /// `min_i |λ_i(−L⁻¹L⁻ᵀΣ⁻¹)|`.
    pub gap: f64,
    /// `|det(−L⁻¹L⁻ᵀΣ⁻¹)|`.
    pub det: f64,
    /// Whether `|det| = 1` within 1e-9.
    pub det_constraint_satisfied: bool,
}

/// The drift matrix `−L⁻¹L⁻ᵀΣ⁻¹` is similar to `−L⁻ᵀΣ⁻¹L⁻¹`, which is
/// symmetric, so its spectrum comes from the symmetric solver.
pub fn ou_spectral_gap(l: &Matrix, sigma: &SymMatrix) -> Result<OuGap> {
    let l_inv = l.clone().try_inverse().ok_or(Error::NotInvertible(0.0))?;
    let prec = crate::linalg::sym_inv(sigma)?;
    let k = sym_eigenvalues(&prec.congruence(&l_inv))?;
    let gap = k.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let det = k.iter().map(|v| v.abs()).product::<f64>();
    Ok(OuGap {
        gap,
        det,
        det_constraint_satisfied: (det - 1.0).abs() <= 1e-9,
    })
}

/// Output of the covariance localisation.
#[derive(Clone, Debug)]
pub struct CovLocalisation {
    pub p_minus: SymMatrix,
    pub p_plus: SymMatrix,
    /// `√(det Δ₋ / det Δ₊)`.
    pub c: f64,
    /// `max{‖Δ₊ − P₋‖, ‖P₊ − Δ₋‖}`.
    pub norm_bound: f64,
    pub report: BoundReport,
}

fn log_det_spd(a: &SymMatrix) -> Result<f64> {
    let e = sym_eigen(a)?;
    check_positive_definite(&e)?;
    Ok(e.values.iter().map(|v| v.ln()).sum())
}

/// `Δ + (1 − aᵀΔa)⁻¹ Δaaᵀ Δ`, i.e. `(I + (1−Tr D)⁻¹D)Δ` with `D = Δaaᵀ`.
fn rank_one_update(delta: &SymMatrix, a: &Vector, which: &str) -> Result<(SymMatrix, f64)> {
    let da = delta.mul_vec(a);
    let t = a.dot(&da);
    if !(1.0 - t > 0.0) {
        return Err(Error::Inapplicable(format!(
            "1 − (x*−μ)ᵀΔ{which}(x*−μ) = {} is not positive",
            1.0 - t
        )));
    }
    let outer = &da * da.transpose() / (1.0 - t);
    Ok((SymMatrix::symmetrized(delta.as_matrix() + outer), t))
}

/// `P₋ ⪯ Σ⁻¹ ⪯ P₊` from a Loewner sandwich `Δ₋ ⪯ ∇²U ⪯ Δ₊`, and the
/// resulting bound on `‖∇²U(x) − Σ⁻¹‖`.
///
/// Both denominators `1 − (x*−μ)ᵀΔ±(x*−μ)` are checked.
pub fn covariance_localisation(
    delta_minus: &SymMatrix,
    delta_plus: &SymMatrix,
    x_star: &Vector,
    mu: &Vector,
) -> Result<CovLocalisation> {
    let d = delta_plus.dim();
    if delta_minus.dim() != d || x_star.len() != d || mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: delta_minus.dim().min(x_star.len()).min(mu.len()) });
    }
    let ld_minus = log_det_spd(delta_minus)?;
    let ld_plus = log_det_spd(delta_plus)?;
    let tol = 1e-10 * sym_norm(delta_plus)?;
    if !loewner_leq(delta_minus, delta_plus, tol)? {
        return Err(Error::AssumptionViolation("Δ₋ ⪯ Δ₊ does not hold".into()));
    }
    let a = x_star - mu;
    let (up, t_plus) = rank_one_update(delta_plus, &a, "₊")?;
    let (um, t_minus) = rank_one_update(delta_minus, &a, "₋")?;
    let c = (0.5 * (ld_minus - ld_plus)).exp();
    let p_plus = up.scale(1.0 / c);
    let p_minus = um.scale(c);
    let norm_bound = sym_norm(&delta_plus.sub(&p_minus))?.max(sym_norm(&p_plus.sub(delta_minus))?);
    let report = BoundReport::new(BoundKind::CovLocalise)
        .input("c", c)
        .input("trace_plus", t_plus)
        .input("trace_minus", t_minus)
        .value("upper", norm_bound)
        .certified(true);
    Ok(CovLocalisation {
        p_minus,
        p_plus,
        c,
        norm_bound,
        report,
    })
}

/// Bound on `‖∇²U(x) − Σ⁻¹‖` for `∇²U = A + B(x)` with `‖B(x)‖ ≤ ε ≺ λ_d(A)`.
pub fn covariance_localisation_additive(a: &SymMatrix, eps: f64, x_star: &Vector, mu: &Vector) -> Result<BoundReport> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    let ea = sym_eigen(a)?;
    if !(ea.min() > eps) {
        return Err(Error::Inapplicable(format!("εI ≺ A fails: λ_d(A) = {} <= ε = {eps}", ea.min())));
    }
    let plus = a.add_identity(eps);
    let minus = a.add_identity(-eps);
    let c = (0.5 * (log_det_spd(&minus)? - log_det_spd(&plus)?)).exp();
    let v = x_star - mu;
    let tilde = |m: &SymMatrix, scale: f64, which: &str| -> Result<(f64, f64)> {
        let mv = m.mul_vec(&v);
        let t = v.dot(&mv);
        if !(1.0 - t > 0.0) {
            return Err(Error::Inapplicable(format!(
                "1 − (x*−μ)ᵀ(A{which}εI)(x*−μ) = {} is not positive",
                1.0 - t
            )));
        }
        // ‖s (1−t)⁻¹ m v vᵀ m‖ = s (1−t)⁻¹ ‖m v‖².
        Ok((scale / (1.0 - t) * mv.norm_squared(), t))
    };
    let (pp, t_plus) = tilde(&plus, 1.0 / c, "+")?;
    let (pm, t_minus) = tilde(&minus, c, "−")?;
    let norm_a = ea.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let bound = (1.0 / c + 1.0) * eps + (1.0 / c - 1.0) * norm_a + pp.max(pm);
    Ok(BoundReport::new(BoundKind::CovLocaliseAdditive)
        .input("eps", eps)
        .input("c", c)
        .input("norm_A", norm_a)
        .input("trace_plus", t_plus)
        .input("trace_minus", t_minus)
        .value("norm_P_plus", pp)
        .value("norm_P_minus", pm)
        .value("upper", bound)
        .certified(true))
}

/// `d((1−α)/(1+α))² (min Σ_ii / max Σ_ii) κ(Σ)` with α the largest value
/// satisfying `α Σ_{j≠i} |C_ij| ≤ 1` for every row of the correlation C.
///
/// When C is diagonal every α works and the factor is taken at its limit 1.
pub fn diag_dominance_bound(sigma: &SymMatrix) -> Result<BoundReport> {
    let d = sigma.dim();
    let c = correlation(sigma);
    let max_row = (0..d)
        .map(|i| (0..d).filter(|&j| j != i).map(|j| c.get(i, j).abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    if !max_row.is_finite() {
        return Err(Error::Inapplicable("correlation has non-finite entries".into()));
    }
    let (alpha, factor) = if max_row == 0.0 {
        (f64::INFINITY, 1.0)
    } else {
        let a = 1.0 / max_row;
        (a, ((1.0 - a) / (1.0 + a)).powi(2))
    };
    let diag = sigma.diagonal();
    let k_sigma = spectral_condition_number(sigma)?.cond;
    let k_c = spectral_condition_number(&c)?.cond;
    let bound = d as f64 * factor * diag.min() / diag.max() * k_sigma;
    Ok(BoundReport::new(BoundKind::DiagDominance)
        .input("alpha", alpha)
        .input("kappa_sigma", k_sigma)
        .value("kappa_correlation", k_c)
        .value("upper", bound)
        .certified(true))
}
