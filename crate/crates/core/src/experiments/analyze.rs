//! Condition numbers, measured perturbation constants and applicable bounds
//! for one target under a list of preconditioners.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::verify::hyperbolic_probes;
use super::NamedReport;
use crate::conditioning::{
    bound_thm2_scale_consistent, condition_number, covariance_localisation_additive, diag_dominance_bound,
    improved_gap_threshold, kappa_after, measure_all, mult_dalalyan, mult_kappa_bounds, mult_kappa_exact,
    mult_mode_bound, theorem_bounds, KappaEstimate,
};
use crate::error::{Error, Result};
use crate::fixtures::sigma_pi;
use crate::linalg::{sym_eigen, sym_norm, Vector};
use crate::model_file::read_model_file;
use crate::preconditioners::{
    additive_base_preconditioner, dense_covariance_preconditioner, design_preconditioner,
    diag_covariance_preconditioner, hessian_at_mode_preconditioner, identity_preconditioner, sample_covariance,
    sample_mean, Preconditioner,
};
use crate::samplers::{find_mode, newton_mode, run_chain, ChainConfig, SamplerKind};
use crate::targets::{gaussian_target, DifferentiableTarget, Model, Potential, Structure};

use super::ExperimentConfig;

/// Probes used to measure ε, δ and ε′.
pub const ANALYZE_PROBES: usize = 64;
/// Steps of the run that estimates the covariance of a non-Gaussian target.
pub const COVARIANCE_RUN_STEPS: usize = 50_000;
/// ξ of the RWM step `σ² = ξ/(Md)` in the gap threshold.
pub const GAP_XI: f64 = 1.0;

/// A parsed preconditioner spec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PreconditionerSpec {
    Identity,
    /// Inverse square root of the covariance.
    Dense,
    /// Inverse square root of the covariance diagonal.
    Diag,
    /// `(n⁻¹XᵀX)^{1/2}` of a regression model.
    Design,
    /// `A^{1/2}` of an additive Hessian.
    Additive,
    /// Hessian at the mode.
    Mode,
    /// A preconditioner CSV written by [`Preconditioner::save`].
    File(PathBuf),
}

/// Parses `identity`, `dense`, `diag`, `design`, `additive`, `mode` or `file:<path>`.
pub fn parse_preconditioner_spec(s: &str) -> Result<PreconditionerSpec> {
    Ok(match s.trim() {
        "identity" => PreconditionerSpec::Identity,
        "dense" => PreconditionerSpec::Dense,
        "diag" => PreconditionerSpec::Diag,
        "design" => PreconditionerSpec::Design,
        "additive" => PreconditionerSpec::Additive,
        "mode" => PreconditionerSpec::Mode,
        other => match other.strip_prefix("file:") {
            Some(p) if !p.is_empty() => PreconditionerSpec::File(PathBuf::from(p)),
            _ => return Err(Error::Config(format!("unknown preconditioner `{other}`"))),
        },
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PreconditionerAnalysis {
    pub spec: String,
    pub label: String,
    pub sigmas: Vec<f64>,
    pub eigengap: f64,
    pub kappa_l: KappaEstimate,
    pub eps_eig: f64,
    pub delta: Option<f64>,
    pub eps_norm: f64,
    /// Theorem bounds (printed exponent), the scale-consistent variant, the
    /// improved-gap threshold and model-specific reports.
    pub bounds: Vec<NamedReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalyzeReport {
    pub model: String,
    pub dim: usize,
    pub kappa: KappaEstimate,
    pub mode: Vec<f64>,
    /// `min λ_d(∇²U)` over the probes.
    pub m_probe: f64,
    /// `sup ‖∇²U(x) − ∇²U(y)‖ / m` over probe pairs.
    pub eps_prime: f64,
    pub model_bounds: Vec<NamedReport>,
    pub preconditioners: Vec<PreconditionerAnalysis>,
    /// Specs that could not be built, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl AnalyzeReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }
}

fn fmt_report(f: &mut fmt::Formatter<'_>, r: &NamedReport) -> fmt::Result {
    match (&r.report, &r.error) {
        (Some(b), _) => {
            let vals: Vec<String> = b.values.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
            writeln!(f, "    {:<22} {}", r.name, vals.join(" "))
        }
        (None, Some(e)) => writeln!(f, "    {:<22} n/a ({e})", r.name),
        _ => Ok(()),
    }
}

impl fmt::Display for AnalyzeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model {} (d = {})", self.model, self.dim)?;
        writeln!(f, "  kappa = {:.6e} ({:?})", self.kappa.kappa, self.kappa.provenance)?;
        writeln!(f, "  m over probes = {:.6e}, eps' = {:.6e}", self.m_probe, self.eps_prime)?;
        for r in &self.model_bounds {
            fmt_report(f, r)?;
        }
        for p in &self.preconditioners {
            writeln!(f, "preconditioner {} [{}]", p.spec, p.label)?;
            writeln!(f, "  kappa_L = {:.6e} ({:?})", p.kappa_l.kappa, p.kappa_l.provenance)?;
            let delta = p.delta.map_or("undefined".to_string(), |d| format!("{d:.6e}"));
            writeln!(
                f,
                "  eps_eig = {:.6e}, delta = {delta}, eps_norm = {:.6e}, eigengap = {:.6e}",
                p.eps_eig, p.eps_norm, p.eigengap
            )?;
            for r in &p.bounds {
                fmt_report(f, r)?;
            }
        }
        for (s, e) in &self.skipped {
            writeln!(f, "preconditioner {s}: skipped ({e})")?;
        }
        Ok(())
    }
}

struct Context<'a> {
    target: &'a DifferentiableTarget,
    mode: Vector,
    covariance: Option<crate::linalg::SymMatrix>,
    mean: Option<Vector>,
    seed: u64,
}

impl Context<'_> {
    /// Exact covariance for Gaussians, otherwise a mode-preconditioned RWM estimate.
    fn covariance(&mut self) -> Result<crate::linalg::SymMatrix> {
        if let Some(c) = &self.covariance {
            return Ok(c.clone());
        }
        let c = match self.target.exact_covariance() {
            Some(c) => {
                self.mean = Some(self.mode.clone());
                c.clone()
            }
            None => {
                let pre = hessian_at_mode_preconditioner(self.target, &self.mode)?;
                let d = self.target.dim();
                let cc = ChainConfig::new(SamplerKind::Rwm, 2.38 / (d as f64).sqrt(), pre, COVARIANCE_RUN_STEPS, self.seed);
                let tr = run_chain(self.target, &self.mode, &cc)?;
                self.mean = Some(sample_mean(&tr.states));
                sample_covariance(&tr.states)?
            }
        };
        self.covariance = Some(c.clone());
        Ok(c)
    }

    fn build(&mut self, spec: &PreconditionerSpec) -> Result<Preconditioner> {
        let d = self.target.dim();
        match spec {
            PreconditionerSpec::Identity => Ok(identity_preconditioner(d)),
            PreconditionerSpec::Dense => dense_covariance_preconditioner(&self.covariance()?),
            PreconditionerSpec::Diag => diag_covariance_preconditioner(&self.covariance()?),
            PreconditionerSpec::Design => match self.target.design() {
                Some(x) => design_preconditioner(x),
                None => Err(Error::Inapplicable("target has no design matrix".into())),
            },
            PreconditionerSpec::Additive => match self.target.structure() {
                Structure::Additive { a } => additive_base_preconditioner(a),
                _ => Err(Error::Inapplicable("target has no additive Hessian".into())),
            },
            PreconditionerSpec::Mode => hessian_at_mode_preconditioner(self.target, &self.mode),
            PreconditionerSpec::File(p) => {
                let pre = Preconditioner::load(p)?;
                if pre.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: pre.dim() });
                }
                Ok(pre)
            }
        }
    }
}

fn locate_mode(target: &DifferentiableTarget) -> Result<Vector> {
    if let Some(m) = target.exact_mode() {
        return Ok(m);
    }
    let d = target.dim();
    let x0 = Vector::zeros(d);
    let tol = 1e-9 * target.gradient(&x0).norm().max(1.0);
    match find_mode(target, &identity_preconditioner(d), &x0, tol) {
        Ok(x) => Ok(x),
        Err(Error::IterationCap(_)) => newton_mode(target, &x0, tol),
        Err(e) => Err(e),
    }
}

fn model_name(t: &DifferentiableTarget) -> &'static str {
    match t.model() {
        Model::Gaussian { .. } => "gaussian",
        Model::Cosine { .. } => "cosine",
        Model::Hyperbolic { .. } => "hyperbolic",
        Model::Binomial { .. } => "binomial",
    }
}

/// Analyses the configured model (the 5-dimensional Gaussian fixture when
/// no model file is set) under each configured preconditioner.
pub fn analyze(config: &ExperimentConfig) -> Result<AnalyzeReport> {
    let target = match &config.model_file {
        Some(p) => read_model_file(p)?,
        None => {
            let s = sigma_pi();
            gaussian_target(Vector::zeros(s.dim()), s)?
        }
    };
    let specs: Vec<(String, PreconditionerSpec)> = config
        .preconditioners
        .iter()
        .map(|s| parse_preconditioner_spec(s).map(|p| (s.clone(), p)))
        .collect::<Result<_>>()?;
    analyze_target(&target, &specs, config.master_seed)
}

/// [`analyze`] for an in-memory target.
pub fn analyze_target(
    target: &DifferentiableTarget,
    specs: &[(String, PreconditionerSpec)],
    seed: u64,
) -> Result<AnalyzeReport> {
    let d = target.dim();
    let kappa = condition_number(target)?;
    let mode = locate_mode(target)?;
    let probes = hyperbolic_probes(&mode, ANALYZE_PROBES, seed);
    let hessians: Vec<_> = probes.iter().map(|x| target.hessian(x)).collect();
    let mut m_probe = f64::INFINITY;
    for h in &hessians {
        m_probe = m_probe.min(sym_eigen(h)?.min());
    }
    if !(m_probe > 0.0) {
        return Err(Error::AssumptionViolation(format!("Hessian eigenvalue {m_probe:e} at a probe")));
    }
    let mut spread = 0.0f64;
    for (i, a) in hessians.iter().enumerate() {
        for b in &hessians[i + 1..] {
            spread = spread.max(sym_norm(&a.sub(b))?);
        }
    }
    let eps_prime = spread / m_probe;

    let mut ctx = Context { target, mode: mode.clone(), covariance: None, mean: None, seed };
    let mut model_bounds = Vec::new();
    match target.model() {
        Model::Gaussian { covariance, .. } => {
            model_bounds.push(NamedReport::from_result("diag-dominance", diag_dominance_bound(covariance)));
        }
        Model::Binomial { .. } => {
            model_bounds.push(NamedReport::from_result("prop3", mult_kappa_bounds(target)));
            model_bounds.push(NamedReport::from_result("prop4", mult_kappa_exact(target)));
            match mult_dalalyan(target) {
                Ok((p5, cor)) => {
                    model_bounds.push(NamedReport::from_result("prop5", Ok(p5)));
                    model_bounds.push(NamedReport::from_result("prop5-cor", Ok(cor)));
                }
                Err(e) => model_bounds.push(NamedReport::from_result("prop5", Err(e))),
            }
            model_bounds.push(NamedReport::from_result("prop6-mode", mult_mode_bound(target, &mode)));
        }
        Model::Hyperbolic { a, lambda, .. } => {
            let r = ctx.covariance().and_then(|_| {
                let mean = ctx.mean.clone().unwrap_or_else(|| mode.clone());
                covariance_localisation_additive(a, *lambda, &mode, &mean)
            });
            model_bounds.push(NamedReport::from_result("cor13-additive", r));
        }
        Model::Cosine { .. } => {}
    }

    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (name, spec) in specs {
        let pre = match ctx.build(spec) {
            Ok(p) => p,
            Err(e) if matches!(spec, PreconditionerSpec::File(_)) => return Err(e),
            Err(e) => {
                skipped.push((name.clone(), e.to_string()));
                continue;
            }
        };
        let l = pre.l().as_matrix();
        let kappa_l = match kappa_after(target, l) {
            Ok(k) => k,
            Err(e) => {
                skipped.push((name.clone(), e.to_string()));
                continue;
            }
        };
        let sigmas = pre.sigmas();
        let gamma = pre.eigengap();
        let (eps_eig, delta, eps_norm) = measure_all(target, &pre, &probes)?;
        let mut bounds: Vec<NamedReport> = ["thm1", "thm2", "thm3"]
            .into_iter()
            .zip(theorem_bounds(eps_eig, delta, eps_norm, &sigmas, gamma, m_probe))
            .map(|(n, r)| NamedReport::from_result(n, r))
            .collect();
        bounds.push(NamedReport::from_result(
            "thm2-scale-consistent",
            bound_thm2_scale_consistent(eps_norm, gamma, sigmas[d - 1], &sigmas),
        ));
        bounds.push(NamedReport::from_result(
            "gap-threshold",
            improved_gap_threshold(eps_prime, eps_norm, sigmas[0], m_probe, GAP_XI),
        ));
        out.push(PreconditionerAnalysis {
            spec: name.clone(),
            label: pre.label().to_string(),
            sigmas,
            eigengap: gamma,
            kappa_l,
            eps_eig,
            delta,
            eps_norm,
            bounds,
        });
    }
    Ok(AnalyzeReport {
        model: model_name(target).to_string(),
        dim: d,
        kappa,
        mode: mode.iter().copied().collect(),
        m_probe,
        eps_prime,
        model_bounds,
        preconditioners: out,
        skipped,
    })
}
