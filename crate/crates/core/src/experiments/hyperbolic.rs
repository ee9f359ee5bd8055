//! MALA on the hyperbolic-prior linear regression with `L = A^{1/2}`,
//! `L = Σ̂^{-1/2}` and `L = I`.

use rayon::prelude::*;

use super::{cell_seed, measure_chain, stream_id, CellBounds, ExperimentConfig, ExperimentKind, ExperimentResult, RunRow, RunStatus};
use crate::conditioning::{bound_thm3, condition_number, covariance_localisation_additive, kappa_after};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymMatrix, Vector};
use crate::preconditioners::{
    additive_base_preconditioner, dense_covariance_preconditioner, identity_preconditioner, sample_covariance,
    sample_mean, Preconditioner,
};
use crate::samplers::{find_mode, run_chain, AdaptConfig, ChainConfig, SamplerKind};
use crate::targets::{hyperbolic_regression_target, synth_regression_data, DifferentiableTarget, Potential, Structure};

/// Arm labels in output order.
pub const HYPERBOLIC_ARMS: [&str; 3] = ["design", "covariance", "identity"];

/// Acceptance rate targeted during burn-in.
pub const MALA_TARGET_RATE: f64 = 0.574;

/// Steps of the auxiliary run that estimates the posterior mean for the
/// covariance-localisation bound.
const MEAN_RUN_STEPS: usize = 20_000;

struct Cell {
    index: usize,
    d: usize,
    n: usize,
    target: DifferentiableTarget,
    a: SymMatrix,
    x_ls: Vector,
}

fn build_cell(config: &ExperimentConfig, index: usize, d: usize, k: usize) -> Result<Cell> {
    let n = k * d;
    let data = synth_regression_data(d, n, cell_seed(config.master_seed, index), false)?;
    let target = hyperbolic_regression_target(data.x.clone(), data.y.clone(), 1.0, data.lambda)?;
    let Structure::Additive { a } = target.structure() else {
        return Err(Error::InvalidArgument("hyperbolic target lost its additive structure".into()));
    };
    let a = a.clone();
    let xty = data.x.transpose() * &data.y;
    let x_ls = (data.x.transpose() * &data.x)
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::Singular { min_abs: 0.0, max_abs: 0.0 })?;
    Ok(Cell { index, d, n, target, a, x_ls })
}

fn step_size(d: usize) -> f64 {
    (d as f64).powf(-1.0 / 6.0)
}

fn run_job(config: &ExperimentConfig, cell: &Cell, arm: usize, chain: usize) -> Result<RunRow> {
    let d = cell.d;
    let mut row = RunRow {
        experiment: ExperimentKind::Hyperbolic,
        cell: cell.index,
        d,
        n: cell.n,
        mu: 0.0,
        arm: HYPERBOLIC_ARMS[arm].to_string(),
        arm_index: arm,
        in_figure: true,
        chain,
        stream: stream_id(cell.index, arm, chain, 0),
        status: RunStatus::Ok,
        acceptance: f64::NAN,
        ess: Vec::new(),
        n_steps: config.measure,
        wall_time_s: 0.0,
    };
    let mut burn = ChainConfig::new(SamplerKind::Mala, step_size(d), identity_preconditioner(d), config.burn_in, config.master_seed);
    burn.stream = stream_id(cell.index, arm, chain, 1);
    burn.adapt = Some(AdaptConfig::new(MALA_TARGET_RATE));
    let burn_trace = run_chain(&cell.target, &cell.x_ls, &burn)?;
    let start = burn_trace.last_state().cloned().unwrap_or_else(|| cell.x_ls.clone());
    let precond: Result<Preconditioner> = match arm {
        0 => additive_base_preconditioner(&cell.a),
        1 => sample_covariance(&burn_trace.states).and_then(|s| dense_covariance_preconditioner(&s)),
        _ => Ok(identity_preconditioner(d)),
    };
    let precond = match precond {
        Ok(p) => p,
        Err(e) if e.is_assumption_violation() || matches!(e, Error::InvalidArgument(_)) => {
            row.status = RunStatus::Failed(e.to_string());
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let mut cc = ChainConfig::new(SamplerKind::Mala, step_size(d), precond, config.measure, config.master_seed);
    cc.stream = row.stream;
    measure_chain(&cell.target, &start, &cc, row)
}

fn cell_bounds(config: &ExperimentConfig, cell: &Cell) -> Result<CellBounds> {
    let t = &cell.target;
    let mut b = CellBounds::new(cell.index, format!("d={},n={}", cell.d, cell.n));
    let lambda = match t.model() {
        crate::targets::Model::Hyperbolic { lambda, .. } => *lambda,
        _ => unreachable!("hyperbolic cell"),
    };
    let design = additive_base_preconditioner(&cell.a)?;
    let ea = sym_eigen(&cell.a)?;
    b.scalar("lambda", lambda);
    b.scalar("kappa", condition_number(t)?.kappa);
    b.scalar("kappa_L_design", kappa_after(t, design.l().as_matrix())?.kappa);
    // σ = 1, so A = XᵀX.
    b.scalar("kappa_L_design_display", 1.0 + lambda / ea.min());
    b.scalar("kappa_L_identity", kappa_after(t, &crate::linalg::Matrix::identity(cell.d, cell.d))?.kappa);
    b.report("thm3-design", bound_thm3(lambda / ea.min(), ea.max().sqrt(), ea.min()));

    let tol = 1e-8 * t.gradient(&cell.x_ls).norm().max(1.0);
    let mode = find_mode(t, &design, &cell.x_ls, tol)?;
    let mut mc = ChainConfig::new(SamplerKind::Mala, step_size(cell.d), design.clone(), MEAN_RUN_STEPS, config.master_seed);
    mc.stream = stream_id(cell.index, 15, 0, 2);
    let trace = run_chain(t, &mode, &mc)?;
    let mean = sample_mean(&trace.states);
    b.scalar("mode_mean_distance", (&mode - &mean).norm());
    b.report("cor13-additive", covariance_localisation_additive(&cell.a, lambda, &mode, &mean));
    Ok(b)
}

pub fn run_hyperbolic(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut specs = Vec::new();
    for &d in &config.dims {
        for &k in &config.n_multipliers {
            specs.push((specs.len(), d, k));
        }
    }
    let cells: Vec<Cell> = specs
        .par_iter()
        .map(|&(i, d, k)| build_cell(config, i, d, k))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..HYPERBOLIC_ARMS.len()).flat_map(move |a| (0..config.chains_per_cell).map(move |r| (c, a, r))))
        .collect();
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|&(c, a, r)| run_job(config, &cells[c], a, r))
        .collect::<Result<_>>()?;
    let bounds: Vec<CellBounds> = cells.par_iter().map(|c| cell_bounds(config, c)).collect::<Result<_>>()?;
    Ok(ExperimentResult::sorted(config.clone(), rows, bounds))
}
