//! Chain diagnostics: effective sample size, autocorrelation, empirical
//! spectral-gap upper bounds and rank tests for comparing arms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::samplers::Trace;

/// Shortest series accepted by [`ess`].
pub const MIN_SERIES_LEN: usize = 100;

/// Sum that gives the bit-identical result for a slice and its reversal.
fn sym_sum(v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n / 2 {
        s += v[i] + v[n - 1 - i];
    }
    if n % 2 == 1 {
        s += v[n / 2];
    }
    s
}

fn centred(series: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue(format!("series contains {v}")));
    }
    let mean = sym_sum(series) / series.len() as f64;
    Ok(series.iter().map(|v| v - mean).collect())
}

fn autocov(c: &[f64], k: usize, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(c.iter().zip(&c[k..]).map(|(a, b)| a * b));
    sym_sum(buf) / c.len() as f64
}

/// Lag-`k` autocorrelation with the biased (divide by n) autocovariance.
pub fn lag_autocorrelation(series: &[f64], k: usize) -> Result<f64> {
    if k >= series.len() {
        return Err(Error::SeriesTooShort { len: series.len(), min: k + 1 });
    }
    let c = centred(series)?;
    let mut buf = Vec::new();
    let c0 = autocov(&c, 0, &mut buf);
    if c0 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(autocov(&c, k, &mut buf) / c0)
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
///
/// Pairs `Γ_m = ρ_{2m} + ρ_{2m+1}` are summed while positive, each clipped
/// to the previous pair, giving `τ = −1 + 2ΣΓ_m` and `ESS = n/τ`. The result
/// is invariant under reversal of the series.
pub fn ess(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort { len: n, min: MIN_SERIES_LEN });
    }
    let c = centred(series)?;
    let mut buf = Vec::with_capacity(n);
    let c0 = autocov(&c, 0, &mut buf);
    if c0 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let r0 = if m == 0 { 1.0 } else { autocov(&c, 2 * m, &mut buf) / c0 };
        let r1 = autocov(&c, 2 * m + 1, &mut buf) / c0;
        let gamma = r0 + r1;
        if gamma <= 0.0 {
            break;
        }
        let g = gamma.min(prev);
        tau += 2.0 * g;
        prev = g;
        m += 1;
    }
    // τ can only drop below 1/n through a wildly antithetic series.
    let tau = tau.max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// ESS of every coordinate of a trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EssReport {
    /// `None` where a coordinate never moved.
    pub per_dimension: Vec<Option<f64>>,
    pub n: usize,
}

impl EssReport {
    pub fn from_trace(trace: &Trace) -> Result<Self> {
        let d = trace.states.first().map_or(0, |s| s.len());
        let mut per = Vec::with_capacity(d);
        for i in 0..d {
            per.push(match ess(&trace.coordinate(i)) {
                Ok(v) => Some(v),
                Err(Error::ZeroVariance) => None,
                Err(e) => return Err(e),
            });
        }
        Ok(Self { per_dimension: per, n: trace.len() })
    }

    /// ESS with frozen coordinates counted as zero.
    pub fn values(&self) -> Vec<f64> {
        self.per_dimension.iter().map(|v| v.unwrap_or(0.0)).collect()
    }

    pub fn median(&self) -> f64 {
        median(&self.values())
    }

    pub fn min(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

pub fn acceptance_rate(trace: &Trace) -> f64 {
    if trace.is_empty() {
        return f64::NAN;
    }
    trace.accepted.iter().filter(|&&a| a).count() as f64 / trace.len() as f64
}

/// Ratio estimate of `E(P,g)/Var(g)` for `g = ⟨v, X⟩`, an upper bound on the
/// spectral gap, with a batch-means standard error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GapEstimate {
    pub estimate: f64,
    pub se: f64,
    pub batches: usize,
}

/// Number of batches used for the standard error of [`empirical_gap_upper`].
pub const GAP_BATCHES: usize = 50;

/// `½ mean((g_{t+1} − g_t)²) / mean((g_t − ḡ)²)` along the series of `⟨v, x_t⟩`.
pub fn empirical_gap_upper(states: &[Vector], v: &Vector) -> Result<GapEstimate> {
    let g: Vec<f64> = states.iter().map(|x| x.dot(v)).collect();
    gap_from_series(&g)
}

pub fn gap_from_series(g: &[f64]) -> Result<GapEstimate> {
    let n = g.len();
    if n < 2 * GAP_BATCHES + 1 {
        return Err(Error::SeriesTooShort { len: n, min: 2 * GAP_BATCHES + 1 });
    }
    let c = centred(g)?;
    let m = n - 1;
    let a: Vec<f64> = (0..m).map(|t| 0.5 * (g[t + 1] - g[t]).powi(2)).collect();
    let b: Vec<f64> = c[..m].iter().map(|v| v * v).collect();
    let (sa, sb) = (sym_sum(&a), sym_sum(&b));
    if sb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let r = sa / sb;
    let bmean = sb / m as f64;
    let len = m / GAP_BATCHES;
    let z: Vec<f64> = (0..GAP_BATCHES)
        .map(|k| {
            let s = k * len;
            (s..s + len).map(|t| a[t] - r * b[t]).sum::<f64>() / len as f64
        })
        .collect();
    let zm = z.iter().sum::<f64>() / GAP_BATCHES as f64;
    let var = z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / (GAP_BATCHES - 1) as f64;
    Ok(GapEstimate {
        estimate: r,
        se: (var / GAP_BATCHES as f64).sqrt() / bmean,
        batches: GAP_BATCHES,
    })
}

/// One-sided Mann–Whitney test of `x` stochastically larger than `y`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RankTest {
    pub u: f64,
    pub z: f64,
    /// One-sided p-value from the normal approximation.
    pub p_value: f64,
}

fn ranks_with_ties(all: &[(f64, bool)]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..all.len()).collect();
    idx.sort_by(|&a, &b| all[a].0.total_cmp(&all[b].0));
    let mut ranks = vec![0.0; all.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && all[idx[j + 1]].0 == all[idx[i]].0 {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// U statistic, its null mean and null variance (tie corrected).
fn u_moments(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("rank test needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::NonFiniteValue("NaN in rank test sample".into()));
    }
    let all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    let (ranks, ties) = ranks_with_ties(&all);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let n = n1 + n2;
    let r1: f64 = ranks.iter().zip(&all).filter(|(_, a)| a.1).map(|(r, _)| r).sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    Ok((u, n1 * n2 / 2.0, var))
}

fn upper_tail(z: f64) -> f64 {
    let n = Normal::standard();
    1.0 - n.cdf(z)
}

pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> Result<RankTest> {
    let (u, mean, var) = u_moments(x, y)?;
    if var <= 0.0 {
        return Ok(RankTest { u, z: 0.0, p_value: 0.5 });
    }
    let z = (u - mean) / var.sqrt();
    Ok(RankTest { u, z, p_value: upper_tail(z) })
}

/// Van Elteren stratified test: per-stratum U statistics weighted by
/// `1/(N_s + 1)` and pooled into one normal approximation.
pub fn stratified_rank_test(strata: &[(Vec<f64>, Vec<f64>)]) -> Result<RankTest> {
    let (mut num, mut den, mut u_tot) = (0.0, 0.0, 0.0);
    for (x, y) in strata {
        let (u, mean, var) = u_moments(x, y)?;
        let w = 1.0 / ((x.len() + y.len()) as f64 + 1.0);
        num += w * (u - mean);
        den += w * w * var;
        u_tot += u;
    }
    if den <= 0.0 {
        return Ok(RankTest { u: u_tot, z: 0.0, p_value: 0.5 });
    }
    let z = num / den.sqrt();
    Ok(RankTest { u: u_tot, z, p_value: upper_tail(z) })
}
