//! Bound-verification sweep over seeded model instances.
//!
//! The perturbation bounds are proved pointwise in `x`, so the constants
//! measured on a probe set bound κ_L restricted to the same probes. Those
//! `*-probe` checks are the primary ones. The `*-global` checks use the
//! exact global constants available for the hyperbolic model.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binomial::{binomial_mode, PRIOR_LAMBDA};
use super::{cell_seed, CellBounds, ExperimentConfig, ExperimentResult};
use crate::conditioning::{
    bound_thm1, bound_thm2, bound_thm2_scale_consistent, bound_thm3, cosine_grid_kappa, hard_target_lower,
    kappa_after, kappa_over_probes, measure_all, mult_dalalyan, mult_kappa_bounds, mult_kappa_exact,
    mult_mode_bound, BoundReport,
};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, sym_sqrt, Matrix, Vector};
use crate::preconditioners::{
    additive_base_preconditioner, design_preconditioner, hessian_at_mode_preconditioner, Preconditioner,
};
use crate::samplers::find_mode;
use crate::targets::{
    binomial_gprior_target, cosine_hard_target, hyperbolic_regression_target, synth_binomial_data,
    synth_regression_data, DifferentiableTarget, Model, Potential, Structure,
};

/// Relative slack allowed when comparing a κ value with an upper bound.
pub const BOUND_RTOL: f64 = 1e-9;
/// Relative tolerance of the exact-equality checks.
pub const EQUALITY_RTOL: f64 = 1e-6;
/// Absolute slack of the hard-target floor.
pub const HARD_FLOOR_ATOL: f64 = 1e-6;
/// Grid resolution for the cosine target.
pub const COSINE_GRID: usize = 64;
/// Random L matrices for the cosine target.
pub const COSINE_CASES: usize = 50;
/// Probes per hyperbolic instance.
pub const PROBES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// The bound does not apply (e.g. a Davis–Kahan ratio above 1).
    Skip,
}

impl CheckOutcome {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Skip => "skip",
        }
    }
}

/// One check: `outcome` is pass when `value ≤ reference` (up to slack).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub instance: usize,
    pub family: String,
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub mu: f64,
    pub preconditioner: String,
    pub check: String,
    pub value: f64,
    pub reference: f64,
    pub outcome: CheckOutcome,
    pub note: String,
}

struct Meta<'a> {
    instance: usize,
    family: &'a str,
    seed: u64,
    d: usize,
    n: usize,
    mu: f64,
}

impl Meta<'_> {
    fn row(&self, pre: &str, check: &str, value: f64, reference: f64, outcome: CheckOutcome, note: String) -> VerifyRow {
        VerifyRow {
            instance: self.instance,
            family: self.family.to_string(),
            seed: self.seed,
            d: self.d,
            n: self.n,
            mu: self.mu,
            preconditioner: pre.to_string(),
            check: check.to_string(),
            value,
            reference,
            outcome,
            note,
        }
    }

    /// `value ≤ reference`, with relative slack.
    fn leq(&self, pre: &str, check: &str, value: f64, reference: f64) -> VerifyRow {
        let ok = value <= reference * (1.0 + BOUND_RTOL) + 1e-12;
        self.row(pre, check, value, reference, if ok { CheckOutcome::Pass } else { CheckOutcome::Fail }, String::new())
    }

    /// `value ≤ upper` of a bound, or a skip when the bound is inapplicable.
    fn against(&self, pre: &str, check: &str, value: f64, bound: &Result<BoundReport>) -> VerifyRow {
        match bound {
            Ok(b) => match b.upper() {
                Some(u) => self.leq(pre, check, value, u),
                None => self.row(pre, check, value, f64::NAN, CheckOutcome::Skip, "no upper value".into()),
            },
            Err(e) => self.row(pre, check, value, f64::NAN, CheckOutcome::Skip, e.to_string()),
        }
    }

    /// `|a − b| ≤ EQUALITY_RTOL·|b|`, reported as the relative error.
    fn equal(&self, pre: &str, check: &str, a: f64, b: f64) -> VerifyRow {
        let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        let ok = rel <= EQUALITY_RTOL;
        self.row(pre, check, rel, EQUALITY_RTOL, if ok { CheckOutcome::Pass } else { CheckOutcome::Fail }, format!("{a} vs {b}"))
    }
}

/// Probe set around the mode, including `β = 0` where the Hessian peaks.
pub fn hyperbolic_probes(mode: &Vector, n: usize, seed: u64) -> Vec<Vector> {
    let d = mode.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scales = [0.1, 0.5, 2.0, 8.0];
    let mut probes = vec![Vector::zeros(d), mode.clone()];
    let mut k = 0;
    while probes.len() < n {
        let z = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        probes.push(mode + z * scales[k % scales.len()]);
        k += 1;
    }
    probes
}

/// Hyperbolic instance `k`: `d ∈ 2..=10`, `n/d ∈ {2, 5, 20}`.
pub fn hyperbolic_instance(master: u64, k: usize) -> Result<(DifferentiableTarget, u64)> {
    let d = 2 + k % 9;
    let n = [2, 5, 20][(k / 9) % 3] * d;
    let seed = cell_seed(master, k);
    let data = synth_regression_data(d, n, seed, false)?;
    Ok((hyperbolic_regression_target(data.x, data.y, 1.0, data.lambda)?, seed))
}

fn verify_hyperbolic(master: u64, k: usize) -> Result<(Vec<VerifyRow>, CellBounds)> {
    let (t, seed) = hyperbolic_instance(master, k)?;
    let d = t.dim();
    let (n, lambda) = match t.model() {
        Model::Hyperbolic { x, lambda, .. } => (x.nrows(), *lambda),
        _ => unreachable!(),
    };
    let Structure::Additive { a } = t.structure() else { unreachable!() };
    let a = a.clone();
    let meta = Meta { instance: k, family: "hyperbolic", seed, d, n, mu: 0.0 };
    let base = additive_base_preconditioner(&a)?;
    let mode = find_mode(&t, &base, &Vector::zeros(d), 1e-9 * t.gradient(&Vector::zeros(d)).norm().max(1.0))?;
    let probes = hyperbolic_probes(&mode, PROBES, seed ^ 0x5eed);
    let m_probe = probes
        .iter()
        .map(|x| sym_eigen(&t.hessian(x)).map(|e| e.min()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let m_global = t.envelope().map(|e| e.m).ok_or_else(|| Error::Inapplicable("no envelope".into()))?;

    let mut rows = Vec::new();
    let mut bounds = CellBounds::new(k, format!("hyperbolic d={d} n={n}"));
    bounds.scalar("lambda", lambda);
    bounds.scalar("m_probe", m_probe);
    // LLᵀ = A + cI for c ∈ {0, λ/2}.
    for (label, shift) in [("additive-base", 0.0), ("shifted-base", 0.5 * lambda)] {
        let p = Preconditioner::from_spd(label, sym_sqrt(&a.add_identity(shift))?)?;
        let l = p.l().as_matrix();
        let sig = p.sigmas();
        let (s1, sd) = (sig[0], sig[d - 1]);
        let gamma = p.eigengap();
        let kp = kappa_over_probes(&t, l, &probes)?.kappa;
        let kg = kappa_after(&t, l)?.kappa;
        let (eps_eig, delta, eps_norm) = measure_all(&t, &p, &probes)?;
        bounds.scalar(&format!("{label}:kappa_probe"), kp);
        bounds.scalar(&format!("{label}:kappa_global"), kg);
        bounds.scalar(&format!("{label}:eps_eig"), eps_eig);
        bounds.scalar(&format!("{label}:eps_norm"), eps_norm);
        if let Some(dl) = delta {
            bounds.scalar(&format!("{label}:delta"), dl);
        }

        let thm1 = match delta {
            Some(dl) => bound_thm1(eps_eig, dl, &sig),
            None => Err(Error::ZeroEigengap),
        };
        let thm2 = bound_thm2_scale_consistent(eps_norm, gamma, sd, &sig);
        let thm2_printed = bound_thm2(eps_norm, gamma, sd, &sig);
        let thm3 = bound_thm3(eps_norm, s1, m_probe);
        rows.push(meta.against(label, "thm1-probe", kp, &thm1));
        rows.push(meta.against(label, "thm2-probe", kp, &thm2));
        rows.push(meta.against(label, "thm2-printed-probe", kp, &thm2_printed));
        rows.push(meta.against(label, "thm3-probe", kp, &thm3));

        // sup_β ‖λD(β) − cI‖ = max(c, λ − c) with D ranging over (0, 1]^d.
        let eps_global = shift.max(lambda - shift) / (sd * sd);
        let thm2g = bound_thm2_scale_consistent(eps_global, gamma, sd, &sig);
        let thm3g = bound_thm3(eps_global, s1, m_global);
        rows.push(meta.against(label, "thm2-global", kg, &thm2g));
        rows.push(meta.against(label, "thm3-global", kg, &thm3g));
        for (name, r) in [("thm1", thm1), ("thm2", thm2), ("thm2-printed", thm2_printed), ("thm3", thm3), ("thm2-global", thm2g), ("thm3-global", thm3g)] {
            bounds.report(&format!("{label}:{name}"), r);
        }
    }
    Ok((rows, bounds))
}

/// Binomial instance `k`: `d ∈ 2..=6`, `n = 5d`, `μ ∈ {0, 1, 5}`, `w_i = i²`.
pub fn binomial_instance(master: u64, k: usize) -> Result<(DifferentiableTarget, f64, u64)> {
    let d = 2 + k % 5;
    let n = 5 * d;
    let mu = [0.0, 1.0, 5.0][(k / 5) % 3];
    let seed = cell_seed(master, 1_000 + k);
    let data = synth_binomial_data(d, n, mu, seed)?;
    Ok((binomial_gprior_target(data.x, data.y, data.w, PRIOR_LAMBDA / n as f64)?, mu, seed))
}

fn verify_binomial(master: u64, k: usize) -> Result<(Vec<VerifyRow>, CellBounds)> {
    let (t, mu, seed) = binomial_instance(master, k)?;
    let d = t.dim();
    let (x, y, w, lon) = match t.model() {
        Model::Binomial { x, y, w, lambda_over_n, .. } => (x.clone(), y.clone(), w.clone(), *lambda_over_n),
        _ => unreachable!(),
    };
    let n = x.nrows();
    let meta = Meta { instance: k, family: "binomial", seed, d, n, mu };
    let mut rows = Vec::new();
    let mut bounds = CellBounds::new(k, format!("binomial d={d} mu={mu}"));
    let id = Matrix::identity(d, d);

    let kappa = kappa_after(&t, &id)?.kappa;
    let p3 = mult_kappa_bounds(&t)?;
    rows.push(meta.leq("identity", "prop3-upper", kappa, p3.upper().unwrap_or(f64::NAN)));
    rows.push(meta.leq("identity", "prop3-lower", p3.lower().unwrap_or(f64::NAN), kappa));

    let design = design_preconditioner(&x)?;
    let kd = kappa_after(&t, design.l().as_matrix())?.kappa;
    let (p5, cor) = mult_dalalyan(&t)?;
    rows.push(meta.leq("design", "prop5-upper", kd, p5.upper().unwrap_or(f64::NAN)));
    rows.push(meta.leq("design", "prop5-lower", p5.lower().unwrap_or(f64::NAN), kd));
    let lam = lon * n as f64;
    let wmax = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
    let display = (n as f64 / 4.0 + lam) / lam * wmax / wmin;
    rows.push(meta.equal("design", "prop5cor-display", cor.get("value").unwrap_or(f64::NAN), display));

    // Uniform-weight twin: every Λ_ii shares one range, so the corollary
    // and the exact formula for κ apply.
    let twin = binomial_gprior_target(x.clone(), y, Vector::from_element(n, 1.0), lon)?;
    let (_, cor_t) = mult_dalalyan(&twin)?;
    let kd_t = kappa_after(&twin, design.l().as_matrix())?.kappa;
    rows.push(meta.equal("design", "prop5cor-uniform", kd_t, cor_t.get("value").unwrap_or(f64::NAN)));
    let p4 = mult_kappa_exact(&twin)?;
    rows.push(meta.equal("identity", "prop4-uniform", kappa_after(&twin, &id)?.kappa, p4.get("value").unwrap_or(f64::NAN)));

    let mode = binomial_mode(&t, &design)?;
    let mp = hessian_at_mode_preconditioner(&t, &mode)?;
    let km = kappa_after(&t, mp.l().as_matrix())?.kappa;
    let p6 = mult_mode_bound(&t, &mode)?;
    rows.push(meta.leq("mode", "prop6", km, p6.upper().unwrap_or(f64::NAN)));
    rows.push(meta.leq("mode", "prop6-cap", km, p6.get("cap").unwrap_or(f64::NAN)));

    bounds.scalar("kappa", kappa);
    bounds.scalar("kappa_L_design", kd);
    bounds.scalar("kappa_L_mode", km);
    for (name, r) in [("prop3", p3), ("prop5", p5), ("prop5-cor", cor), ("prop4-uniform", p4), ("prop6", p6)] {
        bounds.report(name, Ok(r));
    }
    Ok((rows, bounds))
}

/// A random non-orthogonal L for cosine case `k`.
pub fn cosine_case(master: u64, k: usize) -> Matrix {
    let mut rng = ChaCha20Rng::seed_from_u64(cell_seed(master, 2_000 + k));
    loop {
        let l = Matrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = l.singular_values();
        let gram = (l.transpose() * &l - Matrix::identity(2, 2) * (s[0] * s[0])).norm();
        if s.min() > 1e-3 * s.max() && gram > 1e-6 {
            return l;
        }
    }
}

fn verify_cosine(master: u64) -> Result<(Vec<VerifyRow>, CellBounds)> {
    let t = cosine_hard_target(1.0, 4.0)?;
    let mut rows = Vec::new();
    let mut bounds = CellBounds::new(0, "cosine m=1 M=4");
    for k in 0..COSINE_CASES {
        let meta = Meta { instance: k, family: "cosine", seed: master, d: 2, n: 0, mu: 0.0 };
        let l = cosine_case(master, k);
        let grid = cosine_grid_kappa(&l, 1.0, 4.0, COSINE_GRID)?;
        let floor = hard_target_lower(&l, 1.0, 4.0)?.lower().unwrap_or(f64::NAN);
        rows.push(meta.leq("random", "hard-lower", floor - HARD_FLOOR_ATOL, grid));
        let exact = kappa_after(&t, &l)?.kappa;
        rows.push(meta.leq("random", "grid-vs-closed-form", grid, exact));
        if k == 0 {
            bounds.scalar("kappa_LLt_floor_0", floor);
        }
    }
    Ok((rows, bounds))
}

pub fn run_verify_bounds(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let master = config.master_seed;
    let mut parts: Vec<(Vec<VerifyRow>, CellBounds)> = (0..config.instances)
        .into_par_iter()
        .map(|k| verify_hyperbolic(master, k))
        .collect::<Result<_>>()?;
    let bin: Vec<(Vec<VerifyRow>, CellBounds)> = (0..config.instances)
        .into_par_iter()
        .map(|k| verify_binomial(master, k))
        .collect::<Result<_>>()?;
    parts.extend(bin);
    parts.push(verify_cosine(master)?);
    let mut verify = Vec::new();
    let mut bounds = Vec::new();
    for (i, (r, mut b)) in parts.into_iter().enumerate() {
        b.cell = i;
        verify.extend(r);
        bounds.push(b);
    }
    Ok(ExperimentResult { config: config.clone(), rows: Vec::new(), bounds, verify })
}

/// Counts of failing checks per check name.
pub fn failures(rows: &[VerifyRow]) -> std::collections::BTreeMap<String, usize> {
    let mut m = std::collections::BTreeMap::new();
    for r in rows.iter().filter(|r| r.outcome == CheckOutcome::Fail) {
        *m.entry(format!("{}:{}", r.family, r.check)).or_insert(0) += 1;
    }
    m
}

pub(crate) fn write_verify_csv<W: Write>(rows: &[VerifyRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "instance", "family", "seed", "d", "n", "mu", "preconditioner", "check", "value", "reference", "outcome", "note",
    ])?;
    for r in rows {
        wr.write_record([
            r.instance.to_string(),
            r.family.clone(),
            r.seed.to_string(),
            r.d.to_string(),
            r.n.to_string(),
            format!("{}", r.mu),
            r.preconditioner.clone(),
            r.check.clone(),
            format!("{}", r.value),
            format!("{}", r.reference),
            r.outcome.name().to_string(),
            r.note.clone(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
