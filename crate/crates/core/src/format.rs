//! Versioned plain-text model files.
//!
//! ```text
//! apportion-model
//! format_version=1
//! kind=<linear|kernel|csova|cscs|csovo>
//! k=<classes>
//! d=<features>
//! theta=<c_0>,<c_1>,...
//! [kernel=<linear|rbf|polynomial>]        kernel models only
//! [gamma=<g>] [degree=<p>] [coef0=<c>]    kernel models only
//! [lambda=<l>] [iterations=<T>]           kernel models only
//! [pair_votes=<v>,...]                    csovo only; v is T, A or F<class>
//! scaler=<none|present>
//! [class=<index> <name>]                  zero or k lines
//! matrix <name> <rows> <cols>
//! <rows lines of cols space-separated numbers>
//! ...
//! end
//! ```
//!
//! Header lines are `key=value` and must appear in the order above. Numbers
//! use the shortest decimal form that parses back to the same `f64`, so a
//! save/load cycle is bit-exact. Matrices: `weights` (linear and baseline
//! models), `alpha_bar` and `support_points` (kernel models, support points
//! include the bias column), and `scaler_mean`, `scaler_scale` (1×d) when a
//! scaler is present. In class names, `\\` and `\n` escape a backslash and a
//! newline.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::baselines::{BaselineKind, BaselineModel, PairVote};
use crate::error::{Error, Result};
use crate::eval::TrainedModel;
use crate::model::{KernelKind, KernelModel, KernelSpec, LinearModel, Matrix, PriorityVector, Scaler};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "apportion-model";

/// A model plus the class names it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: TrainedModel,
    pub class_names: Option<Vec<String>>,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn write_matrix<W: Write>(out: &mut W, name: &str, m: &Matrix) -> Result<()> {
    writeln!(out, "matrix {} {} {}", name, m.rows(), m.cols())?;
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn vote_token(v: PairVote) -> String {
    match v {
        PairVote::Trained => "T".into(),
        PairVote::Abstain => "A".into(),
        PairVote::Fixed(c) => format!("F{}", c),
    }
}

pub fn write_model<W: Write>(model: &TrainedModel, class_names: Option<&[String]>, mut out: W) -> Result<()> {
    let (kind, k, d, theta, scaler) = match model {
        TrainedModel::Linear(m) => ("linear", m.k(), m.d(), m.theta(), m.scaler()),
        TrainedModel::Kernel(m) => ("kernel", m.k(), m.d(), m.theta(), m.scaler()),
        TrainedModel::Baseline(m) => (m.kind().name(), m.k(), m.d(), m.theta(), m.scaler()),
    };
    writeln!(out, "{}", MAGIC)?;
    writeln!(out, "format_version={}", FORMAT_VERSION)?;
    writeln!(out, "kind={}", kind)?;
    writeln!(out, "k={}", k)?;
    writeln!(out, "d={}", d)?;
    writeln!(out, "theta={}", join(theta.costs()))?;
    if let TrainedModel::Kernel(m) = model {
        let ks = m.kernel();
        writeln!(out, "kernel={}", ks.kind.name())?;
        writeln!(out, "gamma={}", ks.gamma)?;
        writeln!(out, "degree={}", ks.degree)?;
        writeln!(out, "coef0={}", ks.coef0)?;
        writeln!(out, "lambda={}", m.lambda())?;
        writeln!(out, "iterations={}", m.iterations())?;
    }
    if let TrainedModel::Baseline(m) = model {
        if m.kind() == BaselineKind::Csovo {
            let v: Vec<String> = m.pair_votes().iter().map(|v| vote_token(*v)).collect();
            writeln!(out, "pair_votes={}", v.join(","))?;
        }
    }
    writeln!(out, "scaler={}", if scaler.is_some() { "present" } else { "none" })?;
    if let Some(names) = class_names {
        if names.len() != k {
            return Err(Error::Format(format!("{} class names for {} classes", names.len(), k)));
        }
        for (j, n) in names.iter().enumerate() {
            writeln!(out, "class={} {}", j, escape(n))?;
        }
    }
    match model {
        TrainedModel::Linear(m) => write_matrix(&mut out, "weights", m.weights())?,
        TrainedModel::Baseline(m) => write_matrix(&mut out, "weights", m.weights())?,
        TrainedModel::Kernel(m) => {
            write_matrix(&mut out, "alpha_bar", m.alpha_bar())?;
            write_matrix(&mut out, "support_points", m.support_points())?;
        }
    }
    if let Some(s) = scaler {
        write_matrix(&mut out, "scaler_mean", &Matrix::from_vec(1, d, s.mean.clone())?)?;
        write_matrix(&mut out, "scaler_scale", &Matrix::from_vec(1, d, s.scale.clone())?)?;
    }
    writeln!(out, "end")?;
    out.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
    peeked: Option<String>,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        if let Some(l) = self.peeked.take() {
            return Ok(l);
        }
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(self.err("unexpected end of file")),
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Format(format!("line {}: {}", self.line, msg))
    }

    fn key(&mut self, key: &str) -> Result<String> {
        let l = self.next()?;
        match l.split_once('=') {
            Some((k, v)) if k == key => Ok(v.to_string()),
            _ => Err(self.err(format!("expected '{}=...', found '{}'", key, l))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.key(key)?;
        v.parse().map_err(|_| self.err(format!("bad value '{}' for {}", v, key)))
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let head = self.next()?;
        let expected = format!("matrix {} {} {}", name, rows, cols);
        if head != expected {
            return Err(self.err(format!("expected '{}', found '{}'", expected, head)));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let l = self.next()?;
            let before = data.len();
            for tok in l.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| self.err(format!("bad number '{}'", tok)))?);
            }
            if data.len() - before != cols {
                return Err(self.err(format!("expected {} values", cols)));
            }
        }
        Matrix::from_vec(rows, cols, data)
    }
}

fn fmt_err(e: Error) -> Error {
    match e {
        Error::Format(_) => e,
        other => Error::Format(other.to_string()),
    }
}

pub fn read_model<R: BufRead>(reader: R) -> Result<SavedModel> {
    let mut lines = Lines {
        inner: reader.lines(),
        line: 0,
        peeked: None,
    };
    if lines.next()? != MAGIC {
        return Err(lines.err("not a model file"));
    }
    let version: u32 = lines.parsed("format_version")?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported format_version {}", version)));
    }
    let kind = lines.key("kind")?;
    let k: usize = lines.parsed("k")?;
    let d: usize = lines.parsed("d")?;
    let theta: PriorityVector = lines.parsed("theta")?;
    if theta.len() != k {
        return Err(lines.err("theta length differs from k"));
    }
    let mut kernel = None;
    if kind == "kernel" {
        let kk: KernelKind = lines.parsed("kernel")?;
        let spec = KernelSpec {
            kind: kk,
            gamma: lines.parsed("gamma")?,
            degree: lines.parsed("degree")?,
            coef0: lines.parsed("coef0")?,
        };
        let lambda: f64 = lines.parsed("lambda")?;
        let iterations: u64 = lines.parsed("iterations")?;
        kernel = Some((spec, lambda, iterations));
    }
    let mut votes = Vec::new();
    if kind == "csovo" {
        for tok in lines.key("pair_votes")?.split(',') {
            votes.push(match tok {
                "T" => PairVote::Trained,
                "A" => PairVote::Abstain,
                t if t.starts_with('F') => PairVote::Fixed(
                    t[1..].parse().ok().filter(|c| *c < k).ok_or_else(|| lines.err("bad pair vote"))?,
                ),
                _ => return Err(lines.err(format!("bad pair vote '{}'", tok))),
            });
        }
    }
    let has_scaler = match lines.key("scaler")?.as_str() {
        "present" => true,
        "none" => false,
        other => return Err(lines.err(format!("bad scaler flag '{}'", other))),
    };

    let mut names = Vec::new();
    let mut next = lines.next()?;
    while let Some(rest) = next.strip_prefix("class=") {
        let (idx, name) = rest.split_once(' ').ok_or_else(|| lines.err("bad class line"))?;
        if idx.parse::<usize>().ok() != Some(names.len()) {
            return Err(lines.err("class lines out of order"));
        }
        names.push(unescape(name));
        next = lines.next()?;
    }
    if !names.is_empty() && names.len() != k {
        return Err(lines.err(format!("{} class names for {} classes", names.len(), k)));
    }
    lines.peeked = Some(next);

    let model = match kind.as_str() {
        "linear" => {
            let w = lines.matrix("weights", k, d + 1)?;
            TrainedModel::Linear(LinearModel::new(w, theta).map_err(fmt_err)?)
        }
        "kernel" => {
            let (spec, lambda, iterations) = kernel.expect("parsed above");
            let first = lines.peeked.as_deref().unwrap_or("");
            let n: usize = first
                .strip_prefix("matrix alpha_bar ")
                .and_then(|r| r.split_whitespace().next())
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| lines.err("expected alpha_bar matrix"))?;
            let a = lines.matrix("alpha_bar", n, k)?;
            let sp = lines.matrix("support_points", n, d + 1)?;
            TrainedModel::Kernel(KernelModel::new(a, sp, lambda, iterations, theta, spec).map_err(fmt_err)?)
        }
        other => {
            let bk: BaselineKind = other.parse().map_err(|_| lines.err(format!("unknown kind '{}'", other)))?;
            let rows = if bk == BaselineKind::Csovo { k * (k - 1) / 2 } else { k };
            let w = lines.matrix("weights", rows, d + 1)?;
            TrainedModel::Baseline(BaselineModel::new(bk, w, theta, votes).map_err(fmt_err)?)
        }
    };
    let scaler = if has_scaler {
        let mean = lines.matrix("scaler_mean", 1, d)?;
        let scale = lines.matrix("scaler_scale", 1, d)?;
        Some(Scaler::new(mean.row(0).to_vec(), scale.row(0).to_vec()).map_err(fmt_err)?)
    } else {
        None
    };
    let model = match model {
        TrainedModel::Linear(m) => TrainedModel::Linear(m.with_scaler(scaler).map_err(fmt_err)?),
        TrainedModel::Kernel(m) => TrainedModel::Kernel(m.with_scaler(scaler).map_err(fmt_err)?),
        TrainedModel::Baseline(m) => TrainedModel::Baseline(m.with_scaler(scaler).map_err(fmt_err)?),
    };
    if lines.next()? != "end" {
        return Err(lines.err("expected 'end'"));
    }
    Ok(SavedModel {
        model,
        class_names: (!names.is_empty()).then_some(names),
    })
}

pub fn save_model(path: &Path, model: &TrainedModel, class_names: Option<&[String]>) -> Result<()> {
    write_model(model, class_names, BufWriter::new(File::create(path)?))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    read_model(BufReader::new(File::open(path)?))
}
