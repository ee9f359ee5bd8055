//! Preconditioner constructors and the pushforward target `Ũ(y) = U(L⁻¹y)`.
//!
//! Every constructor returns the symmetric positive-definite representative
//! of its matrix, so `LLᵀ = L²` and the singular values of `L` are its
//! eigenvalues.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    check_positive_definite, sym_eigen, sym_inv, sym_inv_sqrt, sym_sqrt,
    symmetrize_preconditioner, EigenDecomposition, Matrix, SymMatrix, Vector,
};
use crate::targets::{DifferentiableTarget, Potential, SmoothnessEnvelope};

/// A symmetric positive-definite `L` together with the spectrum of `LLᵀ`.
#[derive(Clone, Debug)]
pub struct Preconditioner {
    label: String,
    l: SymMatrix,
    l_inv: SymMatrix,
    eigs: EigenDecomposition,
    eigengap: f64,
}

/// Compact description for reports.
#[derive(Clone, Debug, Serialize)]
pub struct PreconditionerSummary {
    pub label: String,
    pub dim: usize,
    /// σ₁² ≥ … ≥ σ_d², the eigenvalues of LLᵀ.
    pub sigma_sq: Vec<f64>,
    pub eigengap: f64,
}

impl Preconditioner {
    /// Wraps an SPD matrix; fails if it is not positive definite.
    pub fn from_spd(label: impl Into<String>, l: SymMatrix) -> Result<Self> {
        let eig_l = sym_eigen(&l)?;
        check_positive_definite(&eig_l)?;
        let l_inv = sym_inv(&l)?;
        let eigs = EigenDecomposition {
            values: eig_l.values.map(|s| s * s),
            vectors: eig_l.vectors,
        };
        let eigengap = eigs.min_adjacent_gap();
        Ok(Self {
            label: label.into(),
            l,
            l_inv,
            eigs,
            eigengap,
        })
    }

    /// Accepts any invertible `L` and stores its symmetric representative.
    pub fn from_matrix(label: impl Into<String>, l: &Matrix) -> Result<Self> {
        Self::from_spd(label, symmetrize_preconditioner(l)?)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn l(&self) -> &SymMatrix {
        &self.l
    }

    pub fn l_inv(&self) -> &SymMatrix {
        &self.l_inv
    }

    /// Eigendecomposition of `LLᵀ`.
    pub fn eigs(&self) -> &EigenDecomposition {
        &self.eigs
    }

    /// `min_i |σ_i² − σ_{i+1}²|`.
    pub fn eigengap(&self) -> f64 {
        self.eigengap
    }

    /// σ₁ ≥ … ≥ σ_d.
    pub fn sigmas(&self) -> Vec<f64> {
        self.eigs.values.iter().map(|v| v.sqrt()).collect()
    }

    /// `cL` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {c}")));
        }
        Self::from_spd(self.label.clone(), self.l.scale(c))
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        self.l.mul_vec(x)
    }

    pub fn apply_inv(&self, y: &Vector) -> Vector {
        self.l_inv.mul_vec(y)
    }

    pub fn summary(&self) -> PreconditionerSummary {
        PreconditionerSummary {
            label: self.label.clone(),
            dim: self.dim(),
            sigma_sq: self.eigs.values.iter().copied().collect(),
            eigengap: self.eigengap,
        }
    }

    /// Row-major CSV: a `label,dim` header record followed by `dim` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        wr.write_record([self.label.as_str(), &self.dim().to_string()])?;
        for i in 0..self.dim() {
            wr.write_record((0..self.dim()).map(|j| format!("{:e}", self.l.get(i, j))))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(r);
        let mut records = rd.records();
        let header = records
            .next()
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })??;
        if header.len() != 2 {
            return Err(Error::Parse { line: 1, msg: "header must be `label,dim`".into() });
        }
        let label = header[0].to_string();
        let dim: usize = header[1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse { line: 1, msg: format!("bad dim `{}`", &header[1]) })?;
        let mut m = Matrix::zeros(dim, dim);
        for i in 0..dim {
            let line = i + 2;
            let rec = records
                .next()
                .ok_or_else(|| Error::Parse { line, msg: "missing row".into() })??;
            if rec.len() != dim {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {dim} columns, got {}", rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                m[(i, j)] = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: format!("bad number `{field}`") })?;
            }
        }
        Self::from_matrix(label, &m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

pub fn identity_preconditioner(d: usize) -> Preconditioner {
    Preconditioner::from_spd("identity", SymMatrix::identity(d)).expect("identity is SPD")
}

/// `L = Σ̂^{-1/2}`.
pub fn dense_covariance_preconditioner(sigma_hat: &SymMatrix) -> Result<Preconditioner> {
    Preconditioner::from_spd("dense-cov", sym_inv_sqrt(sigma_hat)?)
}

/// `L = diag(Σ̂)^{-1/2}`.
pub fn diag_covariance_preconditioner(sigma_hat: &SymMatrix) -> Result<Preconditioner> {
    let diag = sigma_hat.diagonal();
    if let Some(i) = diag.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            eigenvalue: diag[i],
            index: i,
            threshold: 0.0,
        });
    }
    let inv: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    Preconditioner::from_spd("diag-cov", SymMatrix::from_diagonal(&inv))
}

/// `(1/N) Σ g gᵀ`.
pub fn second_moment(samples: &[Vector]) -> Result<SymMatrix> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    let d = first.len();
    let mut acc = Matrix::zeros(d, d);
    for g in samples {
        if g.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: g.len() });
        }
        acc.ger(1.0, g, g, 1.0);
    }
    Ok(SymMatrix::symmetrized(acc / samples.len() as f64))
}

/// Unbiased sample covariance with mean subtraction.
pub fn sample_covariance(samples: &[Vector]) -> Result<SymMatrix> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    let mut mean = Vector::zeros(d);
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: s.len() });
        }
        mean += s;
    }
    mean /= n as f64;
    let mut acc = Matrix::zeros(d, d);
    for s in samples {
        let c = s - &mean;
        acc.ger(1.0, &c, &c, 1.0);
    }
    Ok(SymMatrix::symmetrized(acc / (n - 1) as f64))
}

pub fn sample_mean(samples: &[Vector]) -> Vector {
    let mut mean = Vector::zeros(samples[0].len());
    for s in samples {
        mean += s;
    }
    mean / samples.len() as f64
}

/// `L = (𝔼̂[∇U ∇Uᵀ])^{1/2}`.
pub fn fisher_preconditioner(gradient_samples: &[Vector]) -> Result<Preconditioner> {
    let d = gradient_samples.first().map_or(0, |g| g.len());
    if gradient_samples.len() < d {
        return Err(Error::InvalidArgument(format!(
            "need at least {d} gradient samples, got {}",
            gradient_samples.len()
        )));
    }
    let fisher = second_moment(gradient_samples)?;
    Preconditioner::from_spd("fisher", sym_sqrt(&fisher)?)
}

/// `L = ∇²U(x*)^{1/2}`.
pub fn hessian_at_mode_preconditioner<T: Potential + ?Sized>(
    target: &T,
    x_star: &Vector,
) -> Result<Preconditioner> {
    Preconditioner::from_spd("mode-hessian", sym_sqrt(&target.hessian(x_star))?)
}

/// `L = (n⁻¹XᵀX)^{1/2}`.
pub fn design_preconditioner(x: &Matrix) -> Result<Preconditioner> {
    let n = x.nrows() as f64;
    let xtx = SymMatrix::symmetrized(x.transpose() * x);
    Preconditioner::from_spd("design", sym_sqrt(&xtx.scale(1.0 / n))?)
}

/// `L = (XᵀX)^{1/2}`; equals [`design_preconditioner`] up to the factor √n.
pub fn design_preconditioner_unscaled(x: &Matrix) -> Result<Preconditioner> {
    let xtx = SymMatrix::symmetrized(x.transpose() * x);
    Preconditioner::from_spd("design-unscaled", sym_sqrt(&xtx)?)
}

/// `L = A^{1/2}` for an additive Hessian `A + B(x)`.
pub fn additive_base_preconditioner(a: &SymMatrix) -> Result<Preconditioner> {
    Preconditioner::from_spd("additive-base", sym_sqrt(a)?)
}

/// The target seen in the coordinates `y = Lx`.
#[derive(Clone, Debug)]
pub struct PreconditionedTarget<'a, T: Potential + ?Sized> {
    base: &'a T,
    precond: &'a Preconditioner,
    envelope: Option<SmoothnessEnvelope>,
}

impl<'a, T: Potential + ?Sized> PreconditionedTarget<'a, T> {
    /// Pushforward of an arbitrary potential; no envelope is derived.
    pub fn new(base: &'a T, precond: &'a Preconditioner) -> Result<Self> {
        if base.dim() != precond.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: precond.dim(),
            });
        }
        Ok(Self {
            base,
            precond,
            envelope: None,
        })
    }

    pub fn base(&self) -> &T {
        self.base
    }

    pub fn preconditioner(&self) -> &Preconditioner {
        self.precond
    }

    pub fn envelope(&self) -> Option<SmoothnessEnvelope> {
        self.envelope
    }

    pub fn to_base(&self, y: &Vector) -> Vector {
        self.precond.apply_inv(y)
    }

    pub fn from_base(&self, x: &Vector) -> Vector {
        self.precond.apply(x)
    }
}

/// Pushforward of a concrete target, with the envelope of `L⁻ᵀ∇²U L⁻¹`
/// recomputed whenever the Hessian family admits a closed form.
pub fn pushforward<'a>(
    target: &'a DifferentiableTarget,
    precond: &'a Preconditioner,
) -> Result<PreconditionedTarget<'a, DifferentiableTarget>> {
    let mut p = PreconditionedTarget::new(target, precond)?;
    p.envelope = crate::conditioning::preconditioned_envelope(target, precond.l().as_matrix()).ok();
    Ok(p)
}

impl<T: Potential + ?Sized> Potential for PreconditionedTarget<'_, T> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn potential(&self, y: &Vector) -> f64 {
        self.base.potential(&self.to_base(y))
    }

    fn gradient(&self, y: &Vector) -> Vector {
        self.precond.apply_inv(&self.base.gradient(&self.to_base(y)))
    }

    fn value_and_gradient(&self, y: &Vector) -> (f64, Vector) {
        let (u, g) = self.base.value_and_gradient(&self.to_base(y));
        (u, self.precond.apply_inv(&g))
    }

    fn hessian(&self, y: &Vector) -> SymMatrix {
        self.base
            .hessian(&self.to_base(y))
            .congruence(self.precond.l_inv().as_matrix())
    }
}
