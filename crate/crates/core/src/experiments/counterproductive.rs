//! RWM on `N(0, Σ_π)` with no, dense and diagonal preconditioning, each
//! chain started at equilibrium.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{measure_chain, stream_id, CellBounds, ExperimentConfig, ExperimentKind, ExperimentResult, RunRow, RunStatus};
use crate::conditioning::{condition_number, diag_dominance_bound, kappa_after};
use crate::error::Result;
use crate::fixtures::sigma_pi;
use crate::linalg::{sym_sqrt, Vector};
use crate::preconditioners::{dense_covariance_preconditioner, diag_covariance_preconditioner, identity_preconditioner};
use crate::samplers::{chain_rng, ChainConfig, SamplerKind};
use crate::targets::gaussian_target;

/// Arm labels in output order.
pub const COUNTERPRODUCTIVE_ARMS: [&str; 3] = ["none", "dense", "diag"];

pub fn run_counterproductive(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let sigma = sigma_pi();
    let d = sigma.dim();
    let target = gaussian_target(Vector::zeros(d), sigma.clone())?;
    let arms = [
        identity_preconditioner(d),
        dense_covariance_preconditioner(&sigma)?,
        diag_covariance_preconditioner(&sigma)?,
    ];
    let root = sym_sqrt(&sigma)?;
    let step = 2.38 / (d as f64).sqrt();

    let jobs: Vec<(usize, usize)> = (0..arms.len())
        .flat_map(|a| (0..config.chains_per_cell).map(move |c| (a, c)))
        .collect();
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|&(a, c)| {
            let mut rng = chain_rng(config.master_seed, stream_id(0, a, c, 1));
            let z = Vector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x0 = root.mul_vec(&z);
            let mut cc = ChainConfig::new(SamplerKind::Rwm, step, arms[a].clone(), config.measure, config.master_seed);
            cc.stream = stream_id(0, a, c, 0);
            let row = RunRow {
                experiment: ExperimentKind::Counterproductive,
                cell: 0,
                d,
                n: 0,
                mu: 0.0,
                arm: COUNTERPRODUCTIVE_ARMS[a].to_string(),
                arm_index: a,
                in_figure: true,
                chain: c,
                stream: cc.stream,
                status: RunStatus::Ok,
                acceptance: f64::NAN,
                ess: Vec::new(),
                n_steps: config.measure,
                wall_time_s: 0.0,
            };
            measure_chain(&target, &x0, &cc, row)
        })
        .collect::<Result<_>>()?;

    let mut b = CellBounds::new(0, "d=5");
    b.scalar("kappa", condition_number(&target)?.kappa);
    for (p, name) in arms.iter().zip(COUNTERPRODUCTIVE_ARMS) {
        b.scalar(&format!("kappa_L_{name}"), kappa_after(&target, p.l().as_matrix())?.kappa);
    }
    b.report("diag-dominance", diag_dominance_bound(&sigma));
    Ok(ExperimentResult::sorted(config.clone(), rows, vec![b]))
}
