//! Target distributions π ∝ exp(−U) with analytic gradients and Hessians,
//! structural metadata, and the synthetic data generators used by the
//! experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_inv, Matrix, SymMatrix, Vector};

/// Anything with a twice-differentiable potential.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn potential(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> SymMatrix;

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        (self.potential(x), self.gradient(x))
    }
}

/// Smoothness constants `m I ⪯ ∇²U ⪯ M I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEnvelope {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    /// Whether some x attains `m` (otherwise it is an infimum).
    pub m_attained: bool,
    /// Whether some x attains `M` (otherwise it is a supremum).
    pub big_m_attained: bool,
}

impl SmoothnessEnvelope {
    pub fn kappa(&self) -> f64 {
        self.big_m / self.m
    }
}

/// Joint extremes of a diagonal Λ(x): entry i ranges over `[lower_i, upper_i]`,
/// with all upper values attained together and all lower values approached together.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaExtremes {
    pub lower: Vector,
    pub upper: Vector,
}

impl LambdaExtremes {
    /// `c = inf_x min_i Λ_ii(x)`.
    pub fn c(&self) -> f64 {
        self.lower.min()
    }

    /// `C = sup_x max_i Λ_ii(x)`.
    pub fn big_c(&self) -> f64 {
        self.upper.max()
    }

    /// `sup_x λ_k(Λ(x))`, k counted from 1 in descending order.
    pub fn sup_lambda(&self, k: usize) -> f64 {
        kth_largest(&self.upper, k)
    }

    /// `inf_x λ_k(Λ(x))`, k counted from 1 in descending order.
    pub fn inf_lambda(&self, k: usize) -> f64 {
        kth_largest(&self.lower, k)
    }
}

fn kth_largest(v: &Vector, k: usize) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s[k - 1]
}

/// Structural form of the Hessian.
#[derive(Clone, Debug)]
pub enum Structure<'a> {
    None,
    /// `∇²U(x) = A + B(x)`.
    Additive { a: &'a SymMatrix },
    /// `∇²U(x) = Xᵀ Λ(x) X` with diagonal Λ.
    Multiplicative {
        x: &'a Matrix,
        extremes: Option<LambdaExtremes>,
    },
}

#[derive(Clone, Debug)]
pub enum Model {
    Gaussian {
        mu: Vector,
        covariance: SymMatrix,
        precision: SymMatrix,
    },
    Cosine {
        m: f64,
        big_m: f64,
    },
    Hyperbolic {
        x: Matrix,
        y: Vector,
        sigma2: f64,
        lambda: f64,
        a: SymMatrix,
    },
    Binomial {
        x: Matrix,
        y: Vector,
        w: Vector,
        lambda_over_n: f64,
        xtwx: SymMatrix,
    },
}

/// A concrete target with analytic derivatives and metadata.
#[derive(Clone, Debug)]
pub struct DifferentiableTarget {
    model: Model,
    envelope: Option<SmoothnessEnvelope>,
}

impl DifferentiableTarget {
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn envelope(&self) -> Option<SmoothnessEnvelope> {
        self.envelope
    }

    pub fn label(&self) -> &'static str {
        match self.model {
            Model::Gaussian { .. } => "gaussian",
            Model::Cosine { .. } => "cosine",
            Model::Hyperbolic { .. } => "hyperbolic",
            Model::Binomial { .. } => "binomial",
        }
    }

    pub fn structure(&self) -> Structure<'_> {
        match &self.model {
            Model::Gaussian { precision, .. } => Structure::Additive { a: precision },
            Model::Cosine { .. } => Structure::None,
            Model::Hyperbolic { a, .. } => Structure::Additive { a },
            Model::Binomial {
                x, w, lambda_over_n, ..
            } => Structure::Multiplicative {
                x,
                extremes: Some(LambdaExtremes {
                    lower: w * *lambda_over_n,
                    upper: w * (0.25 + lambda_over_n),
                }),
            },
        }
    }

    /// `B(x)` for additive targets.
    pub fn additive_b(&self, x: &Vector) -> Option<SymMatrix> {
        match &self.model {
            Model::Gaussian { mu, .. } => Some(SymMatrix::from_diagonal(&vec![0.0; mu.len()])),
            Model::Hyperbolic { lambda, .. } => {
                let diag: Vec<f64> = x.iter().map(|b| lambda * (1.0 + b * b).powf(-1.5)).collect();
                Some(SymMatrix::from_diagonal(&diag))
            }
            _ => None,
        }
    }

    /// Diagonal of Λ(x) for multiplicative targets.
    pub fn lambda_diag(&self, beta: &Vector) -> Option<Vector> {
        match &self.model {
            Model::Binomial {
                x, w, lambda_over_n, ..
            } => {
                let t = x * beta;
                Some(Vector::from_iterator(
                    w.len(),
                    (0..w.len()).map(|i| {
                        let p = logistic(t[i]);
                        w[i] * (p * (1.0 - p) + lambda_over_n)
                    }),
                ))
            }
            _ => None,
        }
    }

    pub fn exact_covariance(&self) -> Option<&SymMatrix> {
        match &self.model {
            Model::Gaussian { covariance, .. } => Some(covariance),
            _ => None,
        }
    }

    pub fn exact_mode(&self) -> Option<Vector> {
        match &self.model {
            Model::Gaussian { mu, .. } => Some(mu.clone()),
            Model::Cosine { .. } => Some(Vector::zeros(2)),
            _ => None,
        }
    }

    /// Design matrix for the regression targets.
    pub fn design(&self) -> Option<&Matrix> {
        match &self.model {
            Model::Hyperbolic { x, .. } | Model::Binomial { x, .. } => Some(x),
            _ => None,
        }
    }
}

/// `1 / (1 + e^{−t})`, evaluated without overflow.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^{−t})`, evaluated without overflow.
fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

impl Potential for DifferentiableTarget {
    fn dim(&self) -> usize {
        match &self.model {
            Model::Gaussian { mu, .. } => mu.len(),
            Model::Cosine { .. } => 2,
            Model::Hyperbolic { x, .. } | Model::Binomial { x, .. } => x.ncols(),
        }
    }

    fn potential(&self, x: &Vector) -> f64 {
        self.value_and_gradient_impl(x, false).0
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.value_and_gradient_impl(x, true).1
    }

    fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        self.value_and_gradient_impl(x, true)
    }

    fn hessian(&self, x: &Vector) -> SymMatrix {
        match &self.model {
            Model::Gaussian { precision, .. } => precision.clone(),
            Model::Cosine { m, big_m } => {
                let f = |t: f64| 0.5 * (big_m - m) * t.cos() + 0.5 * (big_m + m);
                SymMatrix::from_diagonal(&[f(x[0]), f(x[1])])
            }
            Model::Hyperbolic { a, .. } => a.add(&self.additive_b(x).expect("additive")),
            Model::Binomial { x: design, .. } => {
                let lam = self.lambda_diag(x).expect("multiplicative");
                let mut scaled = design.clone();
                for (i, mut row) in scaled.row_iter_mut().enumerate() {
                    row *= lam[i];
                }
                SymMatrix::symmetrized(design.transpose() * scaled)
            }
        }
    }
}

impl DifferentiableTarget {
    fn value_and_gradient_impl(&self, x: &Vector, want_grad: bool) -> (f64, Vector) {
        match &self.model {
            Model::Gaussian { mu, precision, .. } => {
                let r = x - mu;
                let g = precision.mul_vec(&r);
                (0.5 * r.dot(&g), g)
            }
            Model::Cosine { m, big_m } => {
                let (a, b) = (x[0], x[1]);
                let u = 0.5 * (m - big_m) * (a.cos() + b.cos())
                    + 0.5 * (big_m + m) * (0.5 * a * a + 0.5 * b * b);
                let gx = |t: f64| 0.5 * (big_m - m) * t.sin() + 0.5 * (big_m + m) * t;
                (u, Vector::from_row_slice(&[gx(a), gx(b)]))
            }
            Model::Hyperbolic {
                x: design,
                y,
                sigma2,
                lambda,
                ..
            } => {
                let r = y - design * x;
                let prior: f64 = x.iter().map(|b| (1.0 + b * b).sqrt()).sum();
                let u = r.norm_squared() / (2.0 * sigma2) + lambda * prior;
                if !want_grad {
                    return (u, Vector::zeros(0));
                }
                let mut g = -(design.transpose() * r) / *sigma2;
                for (gi, b) in g.iter_mut().zip(x.iter()) {
                    *gi += lambda * b / (1.0 + b * b).sqrt();
                }
                (u, g)
            }
            Model::Binomial {
                x: design,
                y,
                w,
                lambda_over_n,
                ..
            } => {
                let t = design * x;
                let mut u = 0.0;
                let mut coef = Vector::zeros(t.len());
                for i in 0..t.len() {
                    let ti = t[i];
                    u += w[i] * ((1.0 - y[i]) * ti + softplus_neg(ti))
                        + 0.5 * lambda_over_n * w[i] * ti * ti;
                    coef[i] = w[i] * (logistic(ti) - y[i] + lambda_over_n * ti);
                }
                if !want_grad {
                    return (u, Vector::zeros(0));
                }
                (u, design.transpose() * coef)
            }
        }
    }
}

/// `U(x) = ½ (x−μ)ᵀ Σ⁻¹ (x−μ)`.
pub fn gaussian_target(mu: Vector, sigma: SymMatrix) -> Result<DifferentiableTarget> {
    if mu.len() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma.dim(),
            got: mu.len(),
        });
    }
    let eig = sym_eigen(&sigma)?;
    let precision = sym_inv(&sigma)?;
    let envelope = SmoothnessEnvelope {
        m: 1.0 / eig.max(),
        big_m: 1.0 / eig.min(),
        m_attained: true,
        big_m_attained: true,
    };
    Ok(DifferentiableTarget {
        model: Model::Gaussian {
            mu,
            covariance: sigma,
            precision,
        },
        envelope: Some(envelope),
    })
}

/// The two-dimensional cosine potential whose Hessian `diag{f(x), f(y)}`
/// sweeps every value in `[m, M]` along each axis.
pub fn cosine_hard_target(m: f64, big_m: f64) -> Result<DifferentiableTarget> {
    if !(m > 0.0) || !(big_m >= m) || !big_m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cosine target needs 0 < m <= M, got m={m}, M={big_m}"
        )));
    }
    Ok(DifferentiableTarget {
        model: Model::Cosine { m, big_m },
        envelope: Some(SmoothnessEnvelope {
            m,
            big_m,
            m_attained: true,
            big_m_attained: true,
        }),
    })
}

/// Bayesian linear regression with a hyperbolic prior:
/// `U(β) = ‖Y − Xβ‖²/(2σ²) + λ Σ √(1+β_i²)`.
pub fn hyperbolic_regression_target(
    x: Matrix,
    y: Vector,
    sigma2: f64,
    lambda: f64,
) -> Result<DifferentiableTarget> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < d {
        return Err(Error::InvalidArgument(format!("need n >= d, got n={n}, d={d}")));
    }
    if !(sigma2 > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidArgument("sigma2 and lambda must be positive".into()));
    }
    let xtx = SymMatrix::symmetrized(x.transpose() * &x);
    let eig = sym_eigen(&xtx)?;
    crate::linalg::check_positive_definite(&eig)?;
    let a = xtx.scale(1.0 / sigma2);
    let envelope = SmoothnessEnvelope {
        m: eig.min() / sigma2,
        big_m: eig.max() / sigma2 + lambda,
        m_attained: false,
        big_m_attained: true,
    };
    Ok(DifferentiableTarget {
        model: Model::Hyperbolic {
            x,
            y,
            sigma2,
            lambda,
            a,
        },
        envelope: Some(envelope),
    })
}

/// Binomial regression with a logistic link and generalised g-prior, with
/// `(gφc)⁻¹ = lambda_over_n`. The prior term carries a factor ½ so that the
/// Hessian is exactly `Xᵀ W diag{p(1−p) + (gφc)⁻¹} X`.
pub fn binomial_gprior_target(
    x: Matrix,
    y: Vector,
    w: Vector,
    lambda_over_n: f64,
) -> Result<DifferentiableTarget> {
    let (n, d) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if y.len() != n { y.len() } else { w.len() },
        });
    }
    if n < d {
        return Err(Error::InvalidArgument(format!("need n >= d, got n={n}, d={d}")));
    }
    if let Some(i) = w.iter().position(|&wi| !(wi > 0.0)) {
        return Err(Error::InvalidArgument(format!("weight w[{i}] = {} is not positive", w[i])));
    }
    if !(lambda_over_n > 0.0) {
        return Err(Error::InvalidArgument("lambda_over_n must be positive".into()));
    }
    let xtx = SymMatrix::symmetrized(x.transpose() * &x);
    let eig = sym_eigen(&xtx)?;
    crate::linalg::check_positive_definite(&eig)?;
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let xtwx = SymMatrix::symmetrized(x.transpose() * xw);
    let (wmin, wmax) = (w.min(), w.max());
    let envelope = SmoothnessEnvelope {
        m: lambda_over_n * wmin * eig.min(),
        big_m: (0.25 + lambda_over_n) * wmax * eig.max(),
        m_attained: false,
        big_m_attained: false,
    };
    Ok(DifferentiableTarget {
        model: Model::Binomial {
            x,
            y,
            w,
            lambda_over_n,
            xtwx,
        },
        envelope: Some(envelope),
    })
}

/// Synthetic data for the hyperbolic regression experiment.
#[derive(Clone, Debug)]
pub struct RegressionData {
    pub x: Matrix,
    pub y: Vector,
    pub lambda: f64,
    pub beta0: Vector,
}

/// Draws `X` (iid N(0,1), row-major), `β₀` from the hyperbolic prior, and
/// `Y = Xβ₀ + ε` with ε ∼ N(0, I); `λ = √n/d`. With `standardize`, each column
/// of `X` is centred and scaled to unit sample variance before `Y` is formed.
pub fn synth_regression_data(d: usize, n: usize, seed: u64, standardize: bool) -> Result<RegressionData> {
    if d == 0 || n < d {
        return Err(Error::InvalidArgument(format!("need n >= d >= 1, got d={d}, n={n}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let lambda = (n as f64).sqrt() / d as f64;
    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = rng.sample(StandardNormal);
        }
    }
    if standardize && n > 1 {
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
    let beta0 = Vector::from_iterator(d, (0..d).map(|_| sample_hyperbolic_prior(lambda, &mut rng)));
    let noise = Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = &x * &beta0 + noise;
    Ok(RegressionData { x, y, lambda, beta0 })
}

/// One draw from the density ∝ exp(−λ√(1+β²)) by rejection from a Laplace
/// proposal. With `t = λ^{-1/2}`, `√(1+β²) ≥ (1 + t|β|)/√(1+t²)` gives an
/// envelope of rate `λt/√(1+t²)`; acceptance stays above 0.75 for every λ.
pub fn sample_hyperbolic_prior(lambda: f64, rng: &mut impl Rng) -> f64 {
    let t = lambda.sqrt().recip();
    let s = (1.0 + t * t).sqrt();
    let rate = lambda * t / s;
    loop {
        let e = -(1.0 - rng.random::<f64>()).ln() / rate;
        let b = if rng.random::<bool>() { e } else { -e };
        let log_accept = -lambda * ((1.0 + b * b).sqrt() - (1.0 + t * e) / s);
        if (1.0 - rng.random::<f64>()).ln() <= log_accept {
            return b;
        }
    }
}

/// Synthetic data for the binomial regression experiment.
#[derive(Clone, Debug)]
pub struct BinomialData {
    pub x: Matrix,
    pub y: Vector,
    pub w: Vector,
    pub g: Matrix,
    pub beta0: Vector,
}

/// `X = G + μ`, `w_i = i²`, `β₀ ∼ N(0, I)`, `Y_i = S_i/w_i` with
/// `S_i ∼ Bin(w_i, logistic(X_iᵀβ₀))`.
pub fn synth_binomial_data(d: usize, n: usize, mu: f64, seed: u64) -> Result<BinomialData> {
    if d == 0 || n < d || !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need n >= d >= 1 and mu >= 0, got d={d}, n={n}, mu={mu}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let x = g.add_scalar(mu);
    let w = Vector::from_iterator(n, (1..=n).map(|i| (i * i) as f64));
    let beta0 = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let t = &x * &beta0;
    let y = Vector::from_iterator(
        n,
        (0..n).map(|i| {
            let trials = (i + 1) * (i + 1);
            sample_binomial(trials as u64, logistic(t[i]), &mut rng) as f64 / trials as f64
        }),
    );
    Ok(BinomialData { x, y, w, g, beta0 })
}

/// Exact binomial draw by inversion of a probability table built outward
/// from the mode; terms below 1e-300 of the modal mass are dropped.
pub fn sample_binomial(trials: u64, p: f64, rng: &mut impl Rng) -> u64 {
    if p <= 0.0 || trials == 0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    let nf = trials as f64;
    let mode = (((nf + 1.0) * p).floor() as u64).min(trials);
    let ratio_up = |k: u64| (nf - k as f64) / (k as f64 + 1.0) * p / (1.0 - p);
    let mut lo_terms = Vec::new();
    let mut term = 1.0;
    let mut k = mode;
    while k > 0 {
        term /= ratio_up(k - 1);
        if term < 1e-300 {
            break;
        }
        lo_terms.push(term);
        k -= 1;
    }
    let start = mode - lo_terms.len() as u64;
    let mut table: Vec<f64> = lo_terms.into_iter().rev().collect();
    table.push(1.0);
    let mut term = 1.0;
    let mut k = mode;
    while k < trials {
        term *= ratio_up(k);
        if term < 1e-300 {
            break;
        }
        table.push(term);
        k += 1;
    }
    let total: f64 = table.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (offset, t) in table.iter().enumerate() {
        acc += t;
        if u < acc {
            return start + offset as u64;
        }
    }
    start + table.len() as u64 - 1
}

/// Relative errors of the analytic gradient and Hessian against central
/// differences with step `step·(1+‖x‖)`; each error is normalised by
/// `max(‖analytic‖, 1)`.
pub fn finite_diff_check<T: Potential + ?Sized>(target: &T, x: &Vector, step: f64) -> (f64, f64) {
    let d = target.dim();
    let h = step * (1.0 + x.norm());
    let g = target.gradient(x);
    let hess = target.hessian(x);
    let mut g_num = Vector::zeros(d);
    let mut h_num = Matrix::zeros(d, d);
    for i in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g_num[i] = (target.potential(&xp) - target.potential(&xm)) / (2.0 * h);
        let col = (target.gradient(&xp) - target.gradient(&xm)) / (2.0 * h);
        h_num.set_column(i, &col);
    }
    let h_num = SymMatrix::symmetrized(h_num);
    let grad_err = (&g_num - &g).norm() / g.norm().max(1.0);
    let hess_err = (h_num.as_matrix() - hess.as_matrix()).norm() / hess.frobenius_norm().max(1.0);
    (grad_err, hess_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectral_condition_number, sym_norm};
    use std::f64::consts::PI;

    fn small_regression() -> DifferentiableTarget {
        let data = synth_regression_data(2, 10, 11, false).unwrap();
        hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda).unwrap()
    }

    fn small_binomial() -> DifferentiableTarget {
        let data = synth_binomial_data(2, 10, 0.0, 5).unwrap();
        binomial_gprior_target(data.x, data.y, data.w, 0.01 / 10.0).unwrap()
    }

    #[test]
    fn gaussian_identity_kappa_one() {
        let t = gaussian_target(Vector::zeros(3), SymMatrix::identity(3)).unwrap();
        assert_eq!(t.envelope().unwrap().kappa(), 1.0);
    }

    #[test]
    fn gaussian_diag_hessian() {
        let t = gaussian_target(Vector::zeros(2), SymMatrix::from_diagonal(&[2.0, 1.0])).unwrap();
        let h = t.hessian(&Vector::from_row_slice(&[0.3, -1.0]));
        assert!((h.get(0, 0) - 0.5).abs() < 1e-15 && (h.get(1, 1) - 1.0).abs() < 1e-15);
        assert!(gaussian_target(Vector::zeros(2), SymMatrix::from_diagonal(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn cosine_hessian_extremes() {
        let t = cosine_hard_target(1.0, 4.0).unwrap();
        let h0 = t.hessian(&Vector::zeros(2));
        assert_eq!(h0.as_matrix(), SymMatrix::from_diagonal(&[4.0, 4.0]).as_matrix());
        let hp = t.hessian(&Vector::from_row_slice(&[PI, PI]));
        assert!((hp.as_matrix() - Matrix::identity(2, 2)).norm() < 1e-14);
        assert_eq!(t.envelope().unwrap().kappa(), 4.0);
        assert!(cosine_hard_target(0.0, 1.0).is_err());
        assert!(cosine_hard_target(2.0, 1.0).is_err());
    }

    #[test]
    fn hyperbolic_structure() {
        let t = small_regression();
        let b0 = t.additive_b(&Vector::zeros(2)).unwrap();
        let lambda = match t.model() {
            Model::Hyperbolic { lambda, .. } => *lambda,
            _ => unreachable!(),
        };
        assert!((lambda - 10f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((b0.as_matrix() - Matrix::identity(2, 2) * lambda).norm() < 1e-15);
        let env = t.envelope().unwrap();
        let Structure::Additive { a } = t.structure() else { panic!() };
        assert!((env.big_m - sym_norm(a).unwrap() - lambda).abs() < 1e-10);
    }

    #[test]
    fn binomial_logistic_at_zero() {
        let t = small_binomial();
        let lam = t.lambda_diag(&Vector::zeros(2)).unwrap();
        let Model::Binomial { w, lambda_over_n, .. } = t.model() else { panic!() };
        for i in 0..w.len() {
            assert!((lam[i] / w[i] - 0.25 - lambda_over_n).abs() < 1e-15);
        }
    }

    #[test]
    fn binomial_envelope_matches_display() {
        let data = synth_binomial_data(3, 15, 5.0, 2).unwrap();
        let n = 15.0;
        let lam = 0.01;
        let t = binomial_gprior_target(data.x.clone(), data.y, data.w.clone(), lam / n).unwrap();
        let xtx = SymMatrix::symmetrized(data.x.transpose() * &data.x);
        let k_xtx = spectral_condition_number(&xtx).unwrap().cond;
        let want = (n / 4.0 + lam) / lam * (data.w.max() / data.w.min()) * k_xtx;
        assert!((t.envelope().unwrap().kappa() / want - 1.0).abs() < 1e-10);
        let w_bad = Vector::from_element(15, 1.0).map(|v| v - 1.0);
        assert!(binomial_gprior_target(data.x, Vector::zeros(15), w_bad, 0.1).is_err());
    }

    #[test]
    fn finite_differences_all_targets() {
        let g = gaussian_target(
            Vector::from_row_slice(&[1.0, -2.0]),
            SymMatrix::from_upper_rows(&[&[2.0, 0.3], &[1.0]]).unwrap(),
        )
        .unwrap();
        let (ge, he) = finite_diff_check(&g, &Vector::from_row_slice(&[0.5, 0.1]), 1e-5);
        assert!(ge <= 1e-7 && he <= 1e-7, "{ge} {he}");

        let c = cosine_hard_target(1.0, 4.0).unwrap();
        let (ge, he) = finite_diff_check(&c, &Vector::from_row_slice(&[1.0, -2.0]), 1e-5);
        assert!(ge <= 1e-5 && he <= 1e-5, "{ge} {he}");

        let h = small_regression();
        let (ge, he) = finite_diff_check(&h, &Vector::from_row_slice(&[0.7, -1.3]), 1e-5);
        assert!(ge <= 1e-5 && he <= 1e-5, "{ge} {he}");

        let b = small_binomial();
        let (ge, he) = finite_diff_check(&b, &Vector::from_row_slice(&[0.2, -0.4]), 1e-5);
        assert!(ge <= 1e-5 && he <= 1e-5, "{ge} {he}");
    }

    #[test]
    fn regression_data_determinism_and_moments() {
        let a = synth_regression_data(2, 10, 99, false).unwrap();
        let b = synth_regression_data(2, 10, 99, false).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        let big = synth_regression_data(3, 20_000, 1, false).unwrap();
        for col in big.x.column_iter() {
            let mean = col.mean();
            let var = col.map(|v| (v - mean).powi(2)).sum() / (col.len() - 1) as f64;
            assert!(mean.abs() < 0.03 && (var - 1.0).abs() < 0.05, "{mean} {var}");
        }
        let s = synth_regression_data(3, 50, 1, true).unwrap();
        for col in s.x.column_iter() {
            assert!(col.mean().abs() < 1e-12);
            assert!((col.norm_squared() / 49.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hyperbolic_prior_sampler_matches_density() {
        // Compare P(|β| < 1) with numerical integration of the density.
        let lambda = 1.5;
        let dens = |b: f64| (-lambda * (1.0 + b * b).sqrt()).exp();
        let integrate = |a: f64, b: f64| {
            let n = 20_000;
            let h = (b - a) / n as f64;
            (0..n).map(|i| dens(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
        };
        let p_inner = integrate(-1.0, 1.0) / integrate(-40.0, 40.0);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let n = 200_000;
        let hits = (0..n).filter(|_| sample_hyperbolic_prior(lambda, &mut rng).abs() < 1.0).count();
        let phat = hits as f64 / n as f64;
        let se = (p_inner * (1.0 - p_inner) / n as f64).sqrt();
        assert!((phat - p_inner).abs() < 4.0 * se, "{phat} vs {p_inner}");
    }

    #[test]
    fn binomial_data_weights_and_inequality() {
        let data = synth_binomial_data(2, 3, 0.0, 1).unwrap();
        assert_eq!(data.w.as_slice(), &[1.0, 4.0, 9.0]);
        assert_eq!(data.x, data.g);
        for mu in [0.0, 5.0, 50.0] {
            let data = synth_binomial_data(2, 40, mu, 8).unwrap();
            let xtx = SymMatrix::symmetrized(data.x.transpose() * &data.x);
            let k = spectral_condition_number(&xtx).unwrap().cond;
            let num: f64 = data.g.column(0).iter().map(|g| (g + mu).powi(2)).sum();
            let den: f64 = 0.5
                * data
                    .g
                    .row_iter()
                    .map(|r| (r[0] - r[1]).powi(2))
                    .sum::<f64>();
            assert!(k >= num / den, "mu={mu}: {k} < {}", num / den);
            for (yi, wi) in data.y.iter().zip(data.w.iter()) {
                let s = yi * wi;
                assert!((s - s.round()).abs() < 1e-9 && s >= 0.0 && s <= *wi);
            }
        }
    }

    #[test]
    fn binomial_sampler_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for &(n, p) in &[(10u64, 0.3), (2500, 0.5), (250_000, 0.999), (40, 1e-6)] {
            let draws: Vec<f64> = (0..20_000).map(|_| sample_binomial(n, p, &mut rng) as f64).collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let var_true = n as f64 * p * (1.0 - p);
            let se = (var_true / draws.len() as f64).sqrt().max(1e-3);
            assert!((mean - n as f64 * p).abs() < 5.0 * se, "n={n} p={p}: {mean}");
        }
        assert_eq!(sample_binomial(7, 0.0, &mut rng), 0);
        assert_eq!(sample_binomial(7, 1.0, &mut rng), 7);
    }

    #[test]
    fn binomial_exact_pmf_small_case() {
        // Bin(3, 0.4) frequencies against the closed-form pmf.
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let pmf = [0.216, 0.432, 0.288, 0.064];
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_binomial(3, 0.4, &mut rng) as usize] += 1;
        }
        for k in 0..4 {
            let se = (pmf[k] * (1.0 - pmf[k]) / n as f64).sqrt();
            assert!((counts[k] as f64 / n as f64 - pmf[k]).abs() < 4.0 * se);
        }
    }
}
