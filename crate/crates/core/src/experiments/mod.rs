//! Experiment harness: configuration and presets, the experiment runners,
//! and deterministic result persistence.
//!
//! Each experiment writes three files into the output directory:
//! - `<experiment>.csv`: long-format ESS data, one row per chain and coordinate;
//! - `<experiment>_timing.csv`: wall time per chain, kept apart so that the
//!   main CSV is byte-identical across reruns;
//! - `<experiment>_bounds.json`: condition numbers and bound reports per cell.
//!
//! `verify-bounds` writes `verify-bounds.csv` (one row per check) instead of
//! the ESS file.

mod analyze;
mod binomial;
mod counterproductive;
mod hyperbolic;
mod verify;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::conditioning::BoundReport;
use crate::diagnostics::{acceptance_rate, median, EssReport};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::samplers::{run_chain, ChainConfig, Trace};
use crate::targets::Potential;

pub use analyze::{analyze, analyze_target, parse_preconditioner_spec, AnalyzeReport, PreconditionerAnalysis, PreconditionerSpec};
pub use binomial::{run_binomial, BINOMIAL_ARMS};
pub use counterproductive::{run_counterproductive, COUNTERPRODUCTIVE_ARMS};
pub use hyperbolic::{run_hyperbolic, HYPERBOLIC_ARMS};
pub use verify::{cosine_case, failures, hyperbolic_probes, run_verify_bounds, CheckOutcome, VerifyRow};

/// Version of the config schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "paper-4.1",
    "paper-4.2-small",
    "paper-4.2",
    "paper-4.3-small",
    "paper-4.3",
    "verify-bounds",
    "analyze",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Counterproductive,
    Hyperbolic,
    Binomial,
    VerifyBounds,
    Analyze,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Counterproductive => "counterproductive",
            Self::Hyperbolic => "hyperbolic",
            Self::Binomial => "binomial",
            Self::VerifyBounds => "verify-bounds",
            Self::Analyze => "analyze",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Self::Counterproductive, Self::Hyperbolic, Self::Binomial, Self::VerifyBounds, Self::Analyze]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    /// Dimensions of the regression experiments.
    #[serde(default)]
    pub dims: Vec<usize>,
    /// `n/d` ratios of the hyperbolic experiment.
    #[serde(default)]
    pub n_multipliers: Vec<usize>,
    /// Design offsets μ of the binomial experiment.
    #[serde(default)]
    pub mu_list: Vec<f64>,
    #[serde(default = "default_one")]
    pub chains_per_cell: usize,
    /// Adaptive burn-in steps per chain.
    #[serde(default)]
    pub burn_in: usize,
    /// Fixed-step measurement steps per chain.
    #[serde(default = "default_measure")]
    pub measure: usize,
    /// Length of the long mode-preconditioned runs of the binomial experiment.
    #[serde(default)]
    pub long_run: usize,
    /// Seeded instances per model family in `verify-bounds`.
    #[serde(default)]
    pub instances: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Model file for `analyze`; the 5-dimensional Gaussian fixture when absent.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    /// Preconditioner specs for `analyze` (see [`parse_preconditioner_spec`]).
    #[serde(default)]
    pub preconditioners: Vec<String>,
}

fn default_one() -> usize {
    1
}

fn default_measure() -> usize {
    10_000
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.chains_per_cell == 0 {
            return bad("chains_per_cell must be >= 1".into());
        }
        match self.experiment {
            ExperimentKind::Counterproductive | ExperimentKind::Hyperbolic | ExperimentKind::Binomial => {
                if self.measure < crate::diagnostics::MIN_SERIES_LEN {
                    return bad(format!("measure must be >= {}", crate::diagnostics::MIN_SERIES_LEN));
                }
            }
            _ => {}
        }
        match self.experiment {
            ExperimentKind::Hyperbolic => {
                if self.dims.is_empty() || self.n_multipliers.is_empty() {
                    return bad("hyperbolic needs non-empty dims and n_multipliers".into());
                }
                if self.burn_in < 2 {
                    return bad("hyperbolic needs burn_in >= 2 to estimate a covariance".into());
                }
                if self.dims.contains(&0) || self.n_multipliers.contains(&0) {
                    return bad("dims and n_multipliers must be >= 1".into());
                }
            }
            ExperimentKind::Binomial => {
                if self.dims.is_empty() || self.mu_list.is_empty() {
                    return bad("binomial needs non-empty dims and mu_list".into());
                }
                if self.burn_in < 2 || self.long_run < 2 {
                    return bad("binomial needs burn_in >= 2 and long_run >= 2".into());
                }
                if self.dims.contains(&0) || self.mu_list.iter().any(|m| !(*m >= 0.0)) {
                    return bad("dims must be >= 1 and every mu >= 0".into());
                }
            }
            ExperimentKind::VerifyBounds => {
                if self.instances == 0 {
                    return bad("instances must be >= 1".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Creates the output directory and checks that it is writable.
    pub fn prepare_output(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", self.output_dir.display())))?;
        let probe = self.output_dir.join(".write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| Error::Config(format!("{} is not writable: {e}", self.output_dir.display())))
    }
}

/// A named preset at desk scale, or at the full published scale.
pub fn preset(name: &str, paper_scale: bool) -> Result<ExperimentConfig> {
    let base = |experiment| ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        experiment,
        dims: Vec::new(),
        n_multipliers: Vec::new(),
        mu_list: Vec::new(),
        chains_per_cell: 1,
        burn_in: 0,
        measure: 10_000,
        long_run: 0,
        instances: 0,
        master_seed: 20_240_601,
        output_dir: PathBuf::from("results"),
        model_file: None,
        preconditioners: Vec::new(),
    };
    let cfg = match name {
        "paper-4.1" => ExperimentConfig {
            dims: vec![5],
            chains_per_cell: if paper_scale { 100 } else { 20 },
            measure: if paper_scale { 10_000 } else { 5_000 },
            ..base(ExperimentKind::Counterproductive)
        },
        "paper-4.2-small" | "paper-4.2" => {
            let full = paper_scale || name == "paper-4.2";
            ExperimentConfig {
                dims: if full { vec![2, 5, 10, 20, 100] } else { vec![2, 5, 10] },
                n_multipliers: vec![1, 5, 20],
                chains_per_cell: if full { 15 } else { 5 },
                burn_in: 10_000,
                measure: 10_000,
                ..base(ExperimentKind::Hyperbolic)
            }
        }
        "paper-4.3-small" | "paper-4.3" => {
            let full = paper_scale || name == "paper-4.3";
            ExperimentConfig {
                dims: if full { vec![2, 5, 10, 20] } else { vec![2, 5, 10] },
                mu_list: vec![0.0, 5.0, 50.0, 200.0],
                chains_per_cell: if full { 15 } else { 5 },
                burn_in: 10_000,
                measure: 10_000,
                long_run: 100_000,
                ..base(ExperimentKind::Binomial)
            }
        }
        "verify-bounds" => ExperimentConfig {
            instances: 100,
            ..base(ExperimentKind::VerifyBounds)
        },
        "analyze" => ExperimentConfig {
            preconditioners: vec!["identity".into(), "dense".into(), "diag".into()],
            ..base(ExperimentKind::Analyze)
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// Builds a config from an optional JSON file and an optional preset.
///
/// The file may name a preset in a `"preset"` field; `preset` overrides it.
/// With a preset, the file's remaining fields override the preset's.
pub fn load_config(file: Option<&Path>, preset_name: Option<&str>, paper_scale: bool) -> Result<ExperimentConfig> {
    let mut file_value = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if !v.is_object() {
                return Err(Error::Config("config must be a JSON object".into()));
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    let obj = file_value.as_object_mut().expect("checked object");
    let file_preset = match obj.remove("preset") {
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(Error::Config("`preset` must be a string".into())),
        None => None,
    };
    let name = preset_name.map(str::to_string).or(file_preset);
    let merged = match name {
        Some(n) => {
            let mut base = serde_json::to_value(preset(&n, paper_scale)?)?;
            let b = base.as_object_mut().expect("struct serialises to an object");
            for (k, v) in obj.iter() {
                b.insert(k.clone(), v.clone());
            }
            base
        }
        None => {
            if file.is_none() {
                return Err(Error::Config("either --config or --preset is required".into()));
            }
            file_value
        }
    };
    let cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

/// Outcome of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    /// The arm's preconditioner could not be built (e.g. a non-SPD estimate).
    Failed(String),
}

/// One chain of one arm in one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub experiment: ExperimentKind,
    pub cell: usize,
    pub d: usize,
    pub n: usize,
    pub mu: f64,
    pub arm: String,
    pub arm_index: usize,
    /// Whether the arm is one of the labelled arms of the published figure.
    pub in_figure: bool,
    pub chain: usize,
    /// RNG stream of the measurement chain under the master seed.
    pub stream: u64,
    pub status: RunStatus,
    pub acceptance: f64,
    /// ESS per coordinate; `None` where the coordinate never moved.
    pub ess: Vec<Option<f64>>,
    pub n_steps: usize,
    pub wall_time_s: f64,
}

impl RunRow {
    pub fn run_id(&self) -> String {
        format!("{}-c{}-{}-r{}", self.experiment.name(), self.cell, self.arm, self.chain)
    }

    /// Median ESS with frozen coordinates counted as zero; NaN for failed arms.
    pub fn median_ess(&self) -> f64 {
        if self.ess.is_empty() {
            return f64::NAN;
        }
        median(&self.ess.iter().map(|v| v.unwrap_or(0.0)).collect::<Vec<_>>())
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Condition numbers and bound reports of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellBounds {
    pub cell: usize,
    pub label: String,
    pub scalars: BTreeMap<String, f64>,
    pub reports: Vec<NamedReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl NamedReport {
    pub fn from_result(name: impl Into<String>, r: Result<BoundReport>) -> Self {
        let (report, error) = match r {
            Ok(b) => (Some(b), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self { name: name.into(), report, error }
    }
}

impl CellBounds {
    pub fn new(cell: usize, label: impl Into<String>) -> Self {
        Self { cell, label: label.into(), scalars: BTreeMap::new(), reports: Vec::new() }
    }

    pub fn scalar(&mut self, k: &str, v: f64) {
        self.scalars.insert(k.to_string(), v);
    }

    pub fn report(&mut self, name: &str, r: Result<BoundReport>) {
        self.reports.push(NamedReport::from_result(name, r));
    }

    pub fn get(&self, name: &str) -> Option<&BoundReport> {
        self.reports.iter().find(|r| r.name == name).and_then(|r| r.report.as_ref())
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    pub bounds: Vec<CellBounds>,
    pub verify: Vec<VerifyRow>,
}

impl ExperimentResult {
    pub(crate) fn sorted(config: ExperimentConfig, mut rows: Vec<RunRow>, mut bounds: Vec<CellBounds>) -> Self {
        rows.sort_by(|a, b| (a.cell, a.arm_index, a.chain).cmp(&(b.cell, b.arm_index, b.chain)));
        bounds.sort_by_key(|b| b.cell);
        Self { config, rows, bounds, verify: Vec::new() }
    }

    /// Rows of one arm in one cell.
    pub fn arm_rows<'a>(&'a self, cell: usize, arm: &'a str) -> impl Iterator<Item = &'a RunRow> + 'a {
        self.rows.iter().filter(move |r| r.cell == cell && r.arm == arm)
    }

    /// Median ESS of every chain of one arm in one cell.
    pub fn arm_medians(&self, cell: usize, arm: &str) -> Vec<f64> {
        self.arm_rows(cell, arm).map(RunRow::median_ess).collect()
    }

    pub fn cells(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.rows.iter().map(|r| r.cell).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

/// Runs the experiment named by the config.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    match config.experiment {
        ExperimentKind::Counterproductive => run_counterproductive(config),
        ExperimentKind::Hyperbolic => run_hyperbolic(config),
        ExperimentKind::Binomial => run_binomial(config),
        ExperimentKind::VerifyBounds => run_verify_bounds(config),
        ExperimentKind::Analyze => Err(Error::Config("use `analyze` for the analyze experiment".into())),
    }
}

/// Column documentation printed by `--help`.
pub const CSV_COLUMNS_HELP: &str = "\
ESS file <experiment>.csv, one row per chain and coordinate:
  run_id, experiment, cell, d, n, mu, preconditioner, arm_index, in_figure,
  chain, stream, status, note, acceptance, median_ess, n_steps, dim, ess,
  frozen, median_flag
  (status is ok|failed; failed runs have one row with empty dim/ess;
  frozen=1 marks a coordinate that never moved, reported with ess 0;
  median_flag=1 marks the coordinates whose ESS is a middle order statistic)
Timing file <experiment>_timing.csv: run_id, n_steps, wall_time_s
Check file verify-bounds.csv: instance, family, seed, d, n, mu,
  preconditioner, check, value, reference, outcome, note";

const ESS_HEADER: &[&str] = &[
    "run_id", "experiment", "cell", "d", "n", "mu", "preconditioner", "arm_index", "in_figure", "chain", "stream",
    "status", "note", "acceptance", "median_ess", "n_steps", "dim", "ess", "frozen", "median_flag",
];

/// Coordinates holding a middle order statistic of the ESS vector.
fn median_flags(ess: &[f64]) -> Vec<bool> {
    let n = ess.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| ess[a].total_cmp(&ess[b]).then(a.cmp(&b)));
    let mut flags = vec![false; n];
    if n > 0 {
        flags[idx[(n - 1) / 2]] = true;
        flags[idx[n / 2]] = true;
    }
    flags
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn write_ess_csv<W: Write>(rows: &[RunRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(ESS_HEADER)?;
    for r in rows {
        let (status, note) = match &r.status {
            RunStatus::Ok => ("ok", String::new()),
            RunStatus::Failed(m) => ("failed", m.clone()),
        };
        let head = vec![
            r.run_id(),
            r.experiment.name().to_string(),
            r.cell.to_string(),
            r.d.to_string(),
            r.n.to_string(),
            fmt_f(r.mu),
            r.arm.clone(),
            r.arm_index.to_string(),
            u8::from(r.in_figure).to_string(),
            r.chain.to_string(),
            r.stream.to_string(),
            status.to_string(),
            note,
            fmt_f(r.acceptance),
            fmt_f(r.median_ess()),
            r.n_steps.to_string(),
        ];
        if r.ess.is_empty() {
            let mut rec = head.clone();
            rec.extend(["", "", "", ""].map(String::from));
            wr.write_record(&rec)?;
            continue;
        }
        let vals: Vec<f64> = r.ess.iter().map(|v| v.unwrap_or(0.0)).collect();
        let flags = median_flags(&vals);
        for (i, v) in r.ess.iter().enumerate() {
            let mut rec = head.clone();
            rec.push((i + 1).to_string());
            rec.push(fmt_f(vals[i]));
            rec.push(u8::from(v.is_none()).to_string());
            rec.push(u8::from(flags[i]).to_string());
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, line: usize) -> Result<&'a str> {
    rec.get(i).ok_or_else(|| Error::Parse { line, msg: format!("missing column {}", ESS_HEADER[i]) })
}

fn num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    let s = field(rec, i, line)?;
    s.parse().map_err(|_| Error::Parse { line, msg: format!("bad {} `{s}`", ESS_HEADER[i]) })
}

/// Reads rows written by [`write_ess_csv`]; wall times are zero until
/// merged with [`read_timing_csv`].
pub fn read_ess_csv<R: Read>(r: R) -> Result<Vec<RunRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ESS_HEADER {
        return Err(Error::Parse { line: 1, msg: "unexpected header".into() });
    }
    let mut rows: Vec<RunRow> = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let run_id = field(&rec, 0, line)?.to_string();
        let status = match field(&rec, 11, line)? {
            "ok" => RunStatus::Ok,
            "failed" => RunStatus::Failed(field(&rec, 12, line)?.to_string()),
            s => return Err(Error::Parse { line, msg: format!("bad status `{s}`") }),
        };
        let same_run = rows.last().is_some_and(|r| r.run_id() == run_id);
        if !same_run {
            rows.push(RunRow {
                experiment: ExperimentKind::parse(field(&rec, 1, line)?)
                    .map_err(|e| Error::Parse { line, msg: e.to_string() })?,
                cell: num(&rec, 2, line)?,
                d: num(&rec, 3, line)?,
                n: num(&rec, 4, line)?,
                mu: num(&rec, 5, line)?,
                arm: field(&rec, 6, line)?.to_string(),
                arm_index: num(&rec, 7, line)?,
                in_figure: num::<u8>(&rec, 8, line)? == 1,
                chain: num(&rec, 9, line)?,
                stream: num(&rec, 10, line)?,
                status,
                acceptance: num(&rec, 13, line)?,
                ess: Vec::new(),
                n_steps: num(&rec, 15, line)?,
                wall_time_s: 0.0,
            });
        }
        if field(&rec, 16, line)?.is_empty() {
            continue;
        }
        let dim: usize = num(&rec, 16, line)?;
        let row = rows.last_mut().expect("pushed above");
        if dim != row.ess.len() + 1 {
            return Err(Error::Parse { line, msg: format!("dim {dim} out of order") });
        }
        let frozen = num::<u8>(&rec, 18, line)? == 1;
        row.ess.push(if frozen { None } else { Some(num(&rec, 17, line)?) });
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[RunRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["run_id", "n_steps", "wall_time_s"])?;
    for r in rows {
        wr.write_record([r.run_id(), r.n_steps.to_string(), fmt_f(r.wall_time_s)])?;
    }
    wr.flush()?;
    Ok(())
}

/// Fills `wall_time_s` from a timing file.
pub fn read_timing_csv<R: Read>(r: R, rows: &mut [RunRow]) -> Result<()> {
    let mut rd = csv::Reader::from_reader(r);
    let mut times = BTreeMap::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let t: f64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse { line, msg: "bad wall_time_s".into() })?;
        times.insert(rec.get(0).unwrap_or_default().to_string(), t);
    }
    for r in rows.iter_mut() {
        if let Some(t) = times.get(&r.run_id()) {
            r.wall_time_s = *t;
        }
    }
    Ok(())
}

/// Writes every output file of a result; returns the paths written.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = result.config.experiment.name();
    let mut written = Vec::new();
    let mut create = |file: String| -> Result<(PathBuf, std::io::BufWriter<std::fs::File>)> {
        let p = dir.join(file);
        let f = std::fs::File::create(&p)?;
        written.push(p.clone());
        Ok((p, std::io::BufWriter::new(f)))
    };
    if result.config.experiment == ExperimentKind::VerifyBounds {
        let (_, w) = create(format!("{name}.csv"))?;
        verify::write_verify_csv(&result.verify, w)?;
    } else {
        let (_, w) = create(format!("{name}.csv"))?;
        write_ess_csv(&result.rows, w)?;
        let (_, w) = create(format!("{name}_timing.csv"))?;
        write_timing_csv(&result.rows, w)?;
    }
    let (_, mut w) = create(format!("{name}_bounds.json"))?;
    serde_json::to_writer_pretty(&mut w, &result.bounds)?;
    writeln!(w)?;
    w.flush()?;
    Ok(written)
}

/// Runs a measurement chain and summarises it into a row.
pub(crate) fn measure_chain<T: Potential + ?Sized>(
    target: &T,
    x0: &Vector,
    config: &ChainConfig,
    row: RunRow,
) -> Result<RunRow> {
    let start = Instant::now();
    let trace: Trace = run_chain(target, x0, config)?;
    let wall = start.elapsed().as_secs_f64();
    let ess = EssReport::from_trace(&trace)?;
    Ok(RunRow {
        status: RunStatus::Ok,
        acceptance: acceptance_rate(&trace),
        ess: ess.per_dimension,
        n_steps: config.n_steps,
        wall_time_s: wall,
        stream: config.stream,
        ..row
    })
}

/// Deterministic per-cell data seed.
pub(crate) fn cell_seed(master: u64, cell: usize) -> u64 {
    // SplitMix64 finaliser.
    let mut z = master ^ (cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream index of phase `phase` of chain `chain` of arm `arm` in cell `cell`.
pub(crate) fn stream_id(cell: usize, arm: usize, chain: usize, phase: u64) -> u64 {
    (((cell as u64 * 16 + arm as u64) * 100_000 + chain as u64) << 3) | phase
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(chain: usize, ess: Vec<Option<f64>>, status: RunStatus) -> RunRow {
        RunRow {
            experiment: ExperimentKind::Binomial,
            cell: 3,
            d: ess.len(),
            n: 10,
            mu: 5.0,
            arm: "covariance-ii".into(),
            arm_index: 1,
            in_figure: true,
            chain,
            stream: 77,
            status,
            acceptance: 0.234_567_890_123,
            ess,
            n_steps: 1000,
            wall_time_s: 0.125,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            row(0, vec![Some(1.5), None, Some(1e-3 / 3.0)], RunStatus::Ok),
            row(1, vec![], RunStatus::Failed("not SPD, eigenvalue -1e-3".into())),
            row(2, vec![Some(123.456)], RunStatus::Ok),
        ];
        let mut buf = Vec::new();
        write_ess_csv(&rows, &mut buf).unwrap();
        let mut tbuf = Vec::new();
        write_timing_csv(&rows, &mut tbuf).unwrap();
        let mut back = read_ess_csv(buf.as_slice()).unwrap();
        read_timing_csv(tbuf.as_slice(), &mut back).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn median_flag_marks_middle() {
        assert_eq!(median_flags(&[3.0, 1.0, 2.0]), vec![false, false, true]);
        assert_eq!(median_flags(&[4.0, 1.0, 2.0, 3.0]), vec![false, false, true, true]);
    }

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            for scale in [false, true] {
                preset(p, scale).unwrap().validate().unwrap();
            }
        }
        assert!(matches!(preset("nope", false), Err(Error::Config(_))));
    }

    #[test]
    fn config_merging() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"preset": "paper-4.2-small", "chains_per_cell": 2, "dims": [3]}"#).unwrap();
        let c = load_config(Some(&p), None, false).unwrap();
        assert_eq!(c.chains_per_cell, 2);
        assert_eq!(c.dims, vec![3]);
        assert_eq!(c.experiment, ExperimentKind::Hyperbolic);
        let c = load_config(Some(&p), Some("paper-4.1"), false).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Counterproductive);

        std::fs::write(&p, r#"{"schema_version": 1, "experiment": "binomial", "master_seed": 1, "output_dir": "x", "bogus": 3}"#).unwrap();
        assert!(matches!(load_config(Some(&p), None, false), Err(Error::Config(_))));
        std::fs::write(&p, r#"{"preset": "paper-4.1", "schema_version": 9}"#).unwrap();
        assert!(load_config(Some(&p), None, false).unwrap().validate().is_err());
        assert!(load_config(None, None, false).is_err());
    }

    #[test]
    fn stream_ids_distinct() {
        let mut seen = std::collections::HashSet::new();
        for c in 0..4 {
            for a in 0..7 {
                for ch in 0..20 {
                    for ph in 0..4 {
                        assert!(seen.insert(stream_id(c, a, ch, ph)));
                    }
                }
            }
        }
    }
}
