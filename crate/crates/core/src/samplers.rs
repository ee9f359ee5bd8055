//! Metropolised chains: preconditioned random-walk Metropolis and MALA,
//! Robbins–Monro step-size adaptation, and preconditioned mode finding.
//!
//! MALA uses drift `σ²∇U/2` and proposal variance `σ²` in the preconditioned
//! coordinates. The alternative convention with drift `σ'²∇log π` and
//! variance `2σ'²` corresponds to `σ'² = σ²/2`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::preconditioners::{PreconditionedTarget, Preconditioner};
use crate::targets::Potential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Rwm,
    Mala,
}

/// Robbins–Monro adaptation of `log σ` towards a target acceptance rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub target_rate: f64,
    pub decay_exponent: f64,
}

impl AdaptConfig {
    pub fn new(target_rate: f64) -> Self {
        Self {
            target_rate,
            decay_exponent: 0.6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub kind: SamplerKind,
    /// σ, the proposal scale in preconditioned coordinates.
    pub step_size: f64,
    /// ξ when σ² was set to ξ/(Md).
    pub xi: Option<f64>,
    pub preconditioner: Preconditioner,
    pub n_steps: usize,
    pub seed: u64,
    /// Stream index within `seed`; chains with distinct streams are independent.
    pub stream: u64,
    pub adapt: Option<AdaptConfig>,
}

impl ChainConfig {
    pub fn new(kind: SamplerKind, step_size: f64, preconditioner: Preconditioner, n_steps: usize, seed: u64) -> Self {
        Self {
            kind,
            step_size,
            xi: None,
            preconditioner,
            n_steps,
            seed,
            stream: 0,
            adapt: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {}", self.step_size)));
        }
        if let Some(a) = self.adapt {
            if !(a.target_rate > 0.0 && a.target_rate < 1.0) {
                return Err(Error::InvalidArgument(format!("target rate must lie in (0,1), got {}", a.target_rate)));
            }
            if !(a.decay_exponent > 0.0) {
                return Err(Error::InvalidArgument("decay exponent must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Ordered chain output. `states[t]` is the state after step `t + 1`.
#[derive(Clone, Debug)]
pub struct Trace {
    pub states: Vec<Vector>,
    pub accepted: Vec<bool>,
    /// `U(states[t])`.
    pub log_potentials: Vec<f64>,
    pub config: ChainConfig,
    /// σ after the last step (differs from the configured σ only when adapting).
    pub final_step_size: f64,
    /// Proposals rejected because U or the MH ratio was not finite.
    pub nonfinite_rejections: usize,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> Option<&Vector> {
        self.states.last()
    }

    /// Coordinate `i` of every state.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    /// CSV with columns `step, accepted, x_1..x_d, logU`, keeping every
    /// `thin`-th step.
    pub fn write_csv<W: Write>(&self, w: W, thin: usize) -> Result<()> {
        let thin = thin.max(1);
        let d = self.states.first().map_or(0, |s| s.len());
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["step".to_string(), "accepted".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.push("logU".to_string());
        wr.write_record(&header)?;
        for t in (0..self.len()).step_by(thin) {
            let mut rec = vec![(t + 1).to_string(), u8::from(self.accepted[t]).to_string()];
            rec.extend(self.states[t].iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", self.log_potentials[t]));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// RNG for chain `index` under `master`: ChaCha20 seeded with `master`,
/// switched to stream `index`.
pub fn chain_rng(master: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Metropolis–Hastings decision: accept iff `log u ≤ min{0, log π-ratio + log q-ratio}`.
/// Non-finite ratios reject.
pub fn mh_accept(log_pi_ratio: f64, log_q_ratio: f64, u: f64) -> bool {
    let r = log_pi_ratio + log_q_ratio;
    if r.is_nan() || r == f64::NEG_INFINITY {
        return false;
    }
    u.ln() <= r.min(0.0)
}

/// One Robbins–Monro update: `log σ ← log σ + t^{−decay}(α_t − target)`.
pub fn adapt_step_size(step_size: f64, t: usize, accept_prob: f64, adapt: &AdaptConfig) -> f64 {
    let gain = (t.max(1) as f64).powf(-adapt.decay_exponent);
    (step_size.ln() + gain * (accept_prob - adapt.target_rate)).exp()
}

fn normal_vec(d: usize, rng: &mut impl Rng) -> Vector {
    Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn uniform_open(rng: &mut impl Rng) -> f64 {
    // [0,1) with 0 mapped away so that ln(u) is finite.
    let u: f64 = rng.random();
    if u == 0.0 { f64::MIN_POSITIVE } else { u }
}

fn check_start<T: Potential + ?Sized>(target: &T, x0: &Vector, kind: SamplerKind) -> Result<(f64, Vector)> {
    if x0.len() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: x0.len() });
    }
    let (u, g) = target.value_and_gradient(x0);
    if !u.is_finite() {
        return Err(Error::NonFiniteValue(format!("potential at the initial state is {u}")));
    }
    if kind == SamplerKind::Mala && g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("gradient at the initial state".into()));
    }
    Ok((u, g))
}

/// Runs RWM or MALA from `x0` with the proposal written directly in the
/// original coordinates:
/// RWM `x' = x + σL⁻¹ξ`; MALA `x' = x − (σ²/2)L⁻¹L⁻ᵀ∇U(x) + σL⁻¹ξ`.
pub fn run_chain<T: Potential + ?Sized>(target: &T, x0: &Vector, config: &ChainConfig) -> Result<Trace> {
    config.validate()?;
    let p = &config.preconditioner;
    if p.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: p.dim() });
    }
    let (mut u, mut g) = check_start(target, x0, config.kind)?;
    let mut rng = chain_rng(config.seed, config.stream);
    let d = target.dim();
    let mut x = x0.clone();
    // L⁻ᵀ∇U(x) = ∇Ũ(y), kept for MALA.
    let mut gt = p.apply_inv(&g);
    let mut sigma = config.step_size;
    let mut out = TraceBuilder::new(config.n_steps);
    for t in 1..=config.n_steps {
        let xi = normal_vec(d, &mut rng);
        let uu = uniform_open(&mut rng);
        let (xp, log_q, up, gp, gtp) = match config.kind {
            SamplerKind::Rwm => {
                let xp = &x + p.apply_inv(&xi) * sigma;
                let up = target.potential(&xp);
                (xp, 0.0, up, None, None)
            }
            SamplerKind::Mala => {
                let s2 = sigma * sigma;
                let move_y = &xi * sigma - &gt * (0.5 * s2);
                let xp = &x + p.apply_inv(&move_y);
                let (up, gp) = target.value_and_gradient(&xp);
                let gtp = p.apply_inv(&gp);
                // y' − y = move_y; reverse residual y − y' + (σ²/2)∇Ũ(y').
                let fwd = xi.norm_squared() * s2;
                let back = (-&move_y + &gtp * (0.5 * s2)).norm_squared();
                let log_q = (fwd - back) / (2.0 * s2);
                (xp, log_q, up, Some(gp), Some(gtp))
            }
        };
        let log_pi = u - up;
        let ratio = log_pi + log_q;
        let finite = ratio.is_finite() || ratio == f64::INFINITY;
        let accept = finite && mh_accept(log_pi, log_q, uu);
        if !finite {
            out.nonfinite += 1;
        }
        if accept {
            x = xp;
            u = up;
            if let (Some(a), Some(b)) = (gp, gtp) {
                g = a;
                gt = b;
            }
        }
        if let Some(ad) = &config.adapt {
            let alpha = if finite { ratio.min(0.0).exp() } else { 0.0 };
            sigma = adapt_step_size(sigma, t, alpha, ad);
        }
        out.push(&x, accept, u);
    }
    let _ = g;
    Ok(out.finish(config.clone(), sigma))
}

/// The same chain computed as a plain (unpreconditioned) chain on the
/// pushforward `Ũ(y) = U(L⁻¹y)` started at `y₀ = Lx₀`, with states mapped
/// back by `L⁻¹`. Consumes the RNG stream identically to [`run_chain`].
pub fn run_chain_pushforward<T: Potential + ?Sized>(target: &T, x0: &Vector, config: &ChainConfig) -> Result<Trace> {
    let p = &config.preconditioner;
    let pushed = PreconditionedTarget::new(target, p)?;
    let mut plain = config.clone();
    plain.preconditioner = crate::preconditioners::identity_preconditioner(target.dim());
    let mut tr = run_chain(&pushed, &p.apply(x0), &plain)?;
    for s in tr.states.iter_mut() {
        *s = p.apply_inv(s);
    }
    tr.config = config.clone();
    Ok(tr)
}

pub fn rwm_chain<T: Potential + ?Sized>(target: &T, x0: &Vector, config: &ChainConfig) -> Result<Trace> {
    if config.kind != SamplerKind::Rwm {
        return Err(Error::InvalidArgument("rwm_chain needs kind = RWM".into()));
    }
    run_chain(target, x0, config)
}

pub fn mala_chain<T: Potential + ?Sized>(target: &T, x0: &Vector, config: &ChainConfig) -> Result<Trace> {
    if config.kind != SamplerKind::Mala {
        return Err(Error::InvalidArgument("mala_chain needs kind = MALA".into()));
    }
    run_chain(target, x0, config)
}

struct TraceBuilder {
    states: Vec<Vector>,
    accepted: Vec<bool>,
    log_potentials: Vec<f64>,
    nonfinite: usize,
}

impl TraceBuilder {
    fn new(n: usize) -> Self {
        Self {
            states: Vec::with_capacity(n),
            accepted: Vec::with_capacity(n),
            log_potentials: Vec::with_capacity(n),
            nonfinite: 0,
        }
    }

    fn push(&mut self, x: &Vector, a: bool, u: f64) {
        self.states.push(x.clone());
        self.accepted.push(a);
        self.log_potentials.push(u);
    }

    fn finish(self, config: ChainConfig, sigma: f64) -> Trace {
        Trace {
            states: self.states,
            accepted: self.accepted,
            log_potentials: self.log_potentials,
            config,
            final_step_size: sigma,
            nonfinite_rejections: self.nonfinite,
        }
    }
}

/// Iteration cap of [`find_mode`].
pub const MODE_MAX_ITER: usize = 10_000;

/// Gradient descent on `Ũ(y) = U(L⁻¹y)` with Barzilai–Borwein trial steps
/// and Armijo backtracking, stopped once `‖∇U(x)‖ ≤ tol`.
pub fn find_mode<T: Potential + ?Sized>(target: &T, precond: &Preconditioner, x0: &Vector, tol: f64) -> Result<Vector> {
    let pushed = PreconditionedTarget::new(target, precond)?;
    let mut y = precond.apply(x0);
    let (mut f, mut g) = pushed.value_and_gradient(&y);
    if !f.is_finite() {
        return Err(Error::NonFiniteValue("potential at the starting point".into()));
    }
    let mut step = 1.0 / g.norm().max(1.0);
    for _ in 0..MODE_MAX_ITER {
        let x = precond.apply_inv(&y);
        if target.gradient(&x).norm() <= tol {
            return Ok(x);
        }
        let gg = g.norm_squared();
        let mut t = step;
        let (yn, fn_, gn) = loop {
            let cand = &y - &g * t;
            let (fc, gc) = pushed.value_and_gradient(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * gg {
                break (cand, fc, gc);
            }
            t *= 0.5;
            if t < 1e-300 {
                // No further decrease is representable: report where we are.
                return if target.gradient(&x).norm() <= tol {
                    Ok(x)
                } else {
                    Err(Error::IterationCap(MODE_MAX_ITER))
                };
            }
        };
        let s = &yn - &y;
        let dg = &gn - &g;
        let sy = s.dot(&dg);
        step = if sy > 0.0 { s.norm_squared() / sy } else { t * 2.0 };
        y = yn;
        f = fn_;
        g = gn;
    }
    let x = precond.apply_inv(&y);
    if target.gradient(&x).norm() <= tol {
        Ok(x)
    } else {
        Err(Error::IterationCap(MODE_MAX_ITER))
    }
}

/// Damped Newton iteration with Armijo backtracking on `U`, stopped once
/// `‖∇U(x)‖ ≤ tol`. Used to finish [`find_mode`] on badly conditioned
/// targets where plain gradient steps stall.
pub fn newton_mode<T: Potential + ?Sized>(target: &T, x0: &Vector, tol: f64) -> Result<Vector> {
    let mut x = x0.clone();
    let (mut f, mut g) = target.value_and_gradient(&x);
    if !f.is_finite() {
        return Err(Error::NonFiniteValue("potential at the starting point".into()));
    }
    for _ in 0..MODE_MAX_ITER {
        if g.norm() <= tol {
            return Ok(x);
        }
        let h = target.hessian(&x);
        let dir = h
            .as_matrix()
            .clone()
            .cholesky()
            .map(|c| c.solve(&g))
            .unwrap_or_else(|| g.clone());
        let slope = g.dot(&dir);
        let mut t = 1.0;
        loop {
            let cand = &x - &dir * t;
            let (fc, gc) = target.value_and_gradient(&cand);
            if fc.is_finite() && fc <= f - 1e-4 * t * slope {
                x = cand;
                f = fc;
                g = gc;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return if g.norm() <= tol { Ok(x) } else { Err(Error::IterationCap(MODE_MAX_ITER)) };
            }
        }
    }
    if g.norm() <= tol {
        Ok(x)
    } else {
        Err(Error::IterationCap(MODE_MAX_ITER))
    }
}
