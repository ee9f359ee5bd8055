//! Plain-text model files.
//!
//! A model file is a list of `key = value` header lines followed by named
//! matrix blocks. A block starts with a `[name]` line and holds row-major
//! comma-separated rows. Vectors may be written as one row or one column.
//! Lines starting with `#` and blank lines are ignored.
//!
//! ```text
//! model = gaussian
//! dim = 2
//! [mu]
//! 0, 0
//! [sigma]
//! 2.0, 0.5
//! 0.5, 1.0
//! ```
//!
//! Keys per model:
//! - `gaussian`: blocks `mu`, `sigma`.
//! - `cosine`: keys `m`, `M` (dimension is 2).
//! - `hyperbolic`: keys `sigma2`, `lambda`; blocks `X`, `Y`.
//! - `binomial`: key `lambda_over_n`; blocks `X`, `Y`, `w`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix, Vector};
use crate::targets::{
    binomial_gprior_target, cosine_hard_target, gaussian_target, hyperbolic_regression_target,
    DifferentiableTarget, Model,
};

#[derive(Clone, Debug)]
struct Block {
    line: usize,
    rows: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default)]
struct RawModel {
    keys: BTreeMap<String, (usize, String)>,
    blocks: BTreeMap<String, Block>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_raw(text: &str) -> Result<RawModel> {
    let mut raw = RawModel::default();
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(rest) = t.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| perr(ln, "unterminated block header"))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(perr(ln, "empty block name"));
            }
            if raw.blocks.contains_key(&name) {
                return Err(perr(ln, format!("duplicate block [{name}]")));
            }
            raw.blocks.insert(name.clone(), Block { line: ln, rows: Vec::new() });
            current = Some(name);
            continue;
        }
        match &current {
            None => {
                let (k, v) = t.split_once('=').ok_or_else(|| perr(ln, "expected `key = value`"))?;
                let k = k.trim().to_string();
                if raw.keys.contains_key(&k) {
                    return Err(perr(ln, format!("duplicate key `{k}`")));
                }
                raw.keys.insert(k, (ln, v.trim().to_string()));
            }
            Some(name) => {
                let row = t
                    .split(',')
                    .map(|f| {
                        let f = f.trim();
                        f.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| perr(ln, format!("bad number `{f}` in [{name}]")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let block = raw.blocks.get_mut(name).expect("current block exists");
                if let Some(first) = block.rows.first() {
                    if first.len() != row.len() {
                        return Err(perr(
                            ln,
                            format!("row has {} fields, expected {} in [{name}]", row.len(), first.len()),
                        ));
                    }
                }
                block.rows.push(row);
            }
        }
    }
    Ok(raw)
}

impl RawModel {
    fn key(&self, k: &str) -> Result<(usize, &str)> {
        self.keys
            .get(k)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| perr(0, format!("missing key `{k}`")))
    }

    fn num(&self, k: &str) -> Result<f64> {
        let (l, v) = self.key(k)?;
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| perr(l, format!("`{k}` is not a finite number")))
    }

    fn block(&self, k: &str) -> Result<&Block> {
        let b = self.blocks.get(k).ok_or_else(|| perr(0, format!("missing block [{k}]")))?;
        if b.rows.is_empty() {
            return Err(perr(b.line, format!("block [{k}] is empty")));
        }
        Ok(b)
    }

    fn matrix(&self, k: &str) -> Result<(usize, Matrix)> {
        let b = self.block(k)?;
        let (r, c) = (b.rows.len(), b.rows[0].len());
        Ok((b.line, Matrix::from_row_iterator(r, c, b.rows.iter().flatten().copied())))
    }

    fn vector(&self, k: &str) -> Result<(usize, Vector)> {
        let b = self.block(k)?;
        if b.rows.len() > 1 && b.rows[0].len() > 1 {
            return Err(perr(b.line, format!("block [{k}] must be a single row or column")));
        }
        Ok((b.line, Vector::from_iterator(b.rows.iter().map(Vec::len).sum(), b.rows.iter().flatten().copied())))
    }

    fn check_dim(&self, got: usize, line: usize) -> Result<()> {
        if let Ok((l, v)) = self.key("dim") {
            let d: usize = v.parse().map_err(|_| perr(l, "`dim` is not a count"))?;
            if d != got {
                return Err(perr(line, format!("dimension {got} does not match dim = {d}")));
            }
        }
        Ok(())
    }
}

/// Parses a model file into a target. Parse errors carry 1-based line
/// numbers; line 0 marks a missing key or block.
pub fn parse_model(text: &str) -> Result<DifferentiableTarget> {
    let raw = parse_raw(text)?;
    let (ml, model) = raw.key("model")?;
    let at = |e: Error, line: usize| match e {
        Error::Parse { .. } => e,
        other if other.is_assumption_violation() => Error::AssumptionViolation(format!("line {line}: {other}")),
        other => perr(line, other.to_string()),
    };
    match model {
        "gaussian" => {
            let (l1, mu) = raw.vector("mu")?;
            let (l2, s) = raw.matrix("sigma")?;
            raw.check_dim(mu.len(), l1)?;
            if s.nrows() != mu.len() || s.ncols() != mu.len() {
                return Err(perr(l2, format!("[sigma] must be {0}x{0}", mu.len())));
            }
            let s = SymMatrix::new(s).map_err(|e| at(e, l2))?;
            gaussian_target(mu, s).map_err(|e| at(e, l2))
        }
        "cosine" => {
            raw.check_dim(2, ml)?;
            cosine_hard_target(raw.num("m")?, raw.num("M")?).map_err(|e| at(e, ml))
        }
        "hyperbolic" => {
            let (lx, x) = raw.matrix("X")?;
            let (ly, y) = raw.vector("Y")?;
            raw.check_dim(x.ncols(), lx)?;
            if y.len() != x.nrows() {
                return Err(perr(ly, format!("[Y] has {} entries, [X] has {} rows", y.len(), x.nrows())));
            }
            hyperbolic_regression_target(x, y, raw.num("sigma2")?, raw.num("lambda")?).map_err(|e| at(e, lx))
        }
        "binomial" => {
            let (lx, x) = raw.matrix("X")?;
            let (ly, y) = raw.vector("Y")?;
            let (lw, w) = raw.vector("w")?;
            raw.check_dim(x.ncols(), lx)?;
            if y.len() != x.nrows() {
                return Err(perr(ly, format!("[Y] has {} entries, [X] has {} rows", y.len(), x.nrows())));
            }
            if w.len() != x.nrows() {
                return Err(perr(lw, format!("[w] has {} entries, [X] has {} rows", w.len(), x.nrows())));
            }
            binomial_gprior_target(x, y, w, raw.num("lambda_over_n")?).map_err(|e| at(e, lx))
        }
        other => Err(perr(ml, format!("unknown model `{other}`"))),
    }
}

pub fn read_model_file(path: &Path) -> Result<DifferentiableTarget> {
    parse_model(&std::fs::read_to_string(path)?)
}

fn write_rows<W: Write>(w: &mut W, name: &str, m: &Matrix) -> Result<()> {
    writeln!(w, "[{name}]")?;
    for r in m.row_iter() {
        let fields: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

fn write_row<W: Write>(w: &mut W, name: &str, v: &Vector) -> Result<()> {
    write_rows(w, name, &Matrix::from_row_slice(1, v.len(), v.as_slice()))
}

/// Writes a target in the format read by [`parse_model`]. Values use
/// shortest round-trip formatting, so reading back is exact.
pub fn write_model<W: Write>(target: &DifferentiableTarget, mut w: W) -> Result<()> {
    match target.model() {
        Model::Gaussian { mu, covariance, .. } => {
            writeln!(w, "model = gaussian\ndim = {}", mu.len())?;
            write_row(&mut w, "mu", mu)?;
            write_rows(&mut w, "sigma", covariance.as_matrix())?;
        }
        Model::Cosine { m, big_m } => {
            writeln!(w, "model = cosine\ndim = 2\nm = {m:e}\nM = {big_m:e}")?;
        }
        Model::Hyperbolic { x, y, sigma2, lambda, .. } => {
            writeln!(w, "model = hyperbolic\ndim = {}\nsigma2 = {sigma2:e}\nlambda = {lambda:e}", x.ncols())?;
            write_rows(&mut w, "X", x)?;
            write_row(&mut w, "Y", y)?;
        }
        Model::Binomial { x, y, w: wt, lambda_over_n, .. } => {
            writeln!(w, "model = binomial\ndim = {}\nlambda_over_n = {lambda_over_n:e}", x.ncols())?;
            write_rows(&mut w, "X", x)?;
            write_row(&mut w, "Y", y)?;
            write_row(&mut w, "w", wt)?;
        }
    }
    Ok(())
}

pub fn write_model_file(target: &DifferentiableTarget, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_model(target, std::io::BufWriter::new(f))
}
