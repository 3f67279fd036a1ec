//! Dataset ingestion: LIBSVM sparse text, CSV, synthetic Gaussian blobs and
//! per-feature standardization.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{input, Error, Result};
use crate::geometry::csv_err;
use crate::model::{LabeledDataset, Matrix, Scaler};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum LabelKey {
    Num(u64),
    Text(String),
}

fn label_key(token: &str) -> LabelKey {
    match token.parse::<f64>() {
        // +0.0 and -0.0 must land on the same class.
        Ok(v) if v.is_finite() => LabelKey::Num((v + 0.0).to_bits()),
        _ => LabelKey::Text(token.to_string()),
    }
}

/// Dense label indices assigned by first appearance, or by a preset order.
#[derive(Debug, Default)]
struct LabelMap {
    index: HashMap<LabelKey, usize>,
    names: Vec<String>,
    frozen: bool,
}

impl LabelMap {
    fn preset(tokens: &[String]) -> Self {
        let mut m = LabelMap::default();
        for t in tokens {
            m.index.entry(label_key(t)).or_insert_with(|| {
                m.names.push(t.clone());
                m.names.len() - 1
            });
        }
        m.frozen = true;
        m
    }

    fn get(&mut self, token: &str) -> Option<usize> {
        let key = label_key(token);
        if let Some(&i) = self.index.get(&key) {
            return Some(i);
        }
        if self.frozen {
            return None;
        }
        self.names.push(token.to_string());
        self.index.insert(key, self.names.len() - 1);
        Some(self.names.len() - 1)
    }
}

/// Options shared by the text readers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LibsvmOptions {
    /// Feature count; inferred from the largest index when absent.
    pub num_features: Option<usize>,
    /// Label tokens in class order. Lines whose label is not listed fail.
    /// Needed to read a test file with the class numbering of a training file.
    pub labels: Option<Vec<String>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn build_dataset(rows: Vec<Vec<(usize, f64)>>, labels: Vec<usize>, d: usize, names: Vec<String>) -> Result<LabeledDataset> {
    if rows.is_empty() {
        return input("dataset contains no data lines");
    }
    let mut features = Matrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        for &(c, v) in r {
            features.set(i, c, v);
        }
    }
    let k = names.len().max(2);
    let mut names = names;
    while names.len() < k {
        names.push(format!("class{}", names.len()));
    }
    LabeledDataset::new(features, labels, k)?.with_class_names(names)
}

/// Reads `<label> (<index>:<value>)*` lines. Indices are 1-based and strictly
/// increasing; absent entries are zero. Text after `#` is ignored and blank
/// lines are skipped. Labels are numeric tokens, numbered by first
/// appearance unless `opts.labels` fixes the order; the tokens become the
/// dataset's class names. Errors carry 1-based line numbers.
pub fn parse_libsvm<R: BufRead>(reader: R, opts: &LibsvmOptions) -> Result<LabeledDataset> {
    let mut map = opts.labels.as_deref().map(LabelMap::preset).unwrap_or_default();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("");
        let mut tokens = body.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        if !label.parse::<f64>().is_ok_and(f64::is_finite) {
            return Err(parse_err(lineno, format!("label '{}' is not a number", label)));
        }
        let y = map
            .get(label)
            .ok_or_else(|| parse_err(lineno, format!("label '{}' is not among the known classes", label)))?;

        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected index:value, found '{}'", tok)))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index '{}'", idx)))?;
            if idx == 0 {
                return Err(parse_err(lineno, "feature indices start at 1"));
            }
            if idx <= last {
                return Err(parse_err(
                    lineno,
                    format!("feature indices must be strictly increasing ({} after {})", idx, last),
                ));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(lineno, format!("bad feature value '{}'", val)))?;
            if let Some(d) = opts.num_features {
                if idx > d {
                    return Err(parse_err(lineno, format!("feature index {} exceeds {} features", idx, d)));
                }
            }
            last = idx;
            row.push((idx - 1, val));
        }
        max_index = max_index.max(last);
        rows.push(row);
        labels.push(y);
    }
    let d = opts.num_features.unwrap_or(max_index);
    if d == 0 {
        return input("dataset has no features");
    }
    build_dataset(rows, labels, d, map.names)
}

pub fn parse_libsvm_str(text: &str, opts: &LibsvmOptions) -> Result<LabeledDataset> {
    parse_libsvm(text.as_bytes(), opts)
}

/// Writes one line per point with nonzero features only, values in shortest
/// round-trip decimal form. Class names that are numbers are used as label
/// tokens; other classes are written as their index.
pub fn write_libsvm<W: Write>(data: &LabeledDataset, mut out: W) -> Result<()> {
    let tokens: Vec<String> = (0..data.k())
        .map(|j| {
            let name = data.class_name(j);
            if name.parse::<f64>().is_ok_and(f64::is_finite) {
                name
            } else {
                j.to_string()
            }
        })
        .collect();
    for i in 0..data.n() {
        let mut line = tokens[data.y(i)].clone();
        for (c, v) in data.x(i).iter().enumerate() {
            if *v != 0.0 {
                line.push_str(&format!(" {}:{}", c + 1, v));
            }
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvOptions {
    /// 0-based label column; the last column when absent.
    pub label_column: Option<usize>,
    /// Header presence; detected from the first row when absent.
    pub has_header: Option<bool>,
    pub labels: Option<Vec<String>>,
}

/// Reads a dense CSV file. Labels may be any token.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut map = opts.labels.as_deref().map(LabelMap::preset).unwrap_or_default();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (n, rec) in rdr.records().enumerate() {
        let lineno = n + 1;
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let cols = rec.len();
        if cols < 2 {
            return Err(parse_err(lineno, "need at least one feature column and a label column"));
        }
        let lc = opts.label_column.unwrap_or(cols - 1);
        if lc >= cols {
            return Err(parse_err(lineno, format!("label column {} out of range", lc)));
        }
        let features = rec.iter().enumerate().filter(|(c, _)| *c != lc).map(|(_, v)| v);
        if width.is_none() {
            let header = opts
                .has_header
                .unwrap_or_else(|| features.clone().any(|v| v.parse::<f64>().is_err()));
            width = Some(cols);
            if header {
                continue;
            }
        }
        if Some(cols) != width {
            return Err(parse_err(lineno, format!("expected {} columns, found {}", width.unwrap_or(0), cols)));
        }
        let row = features
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(|x| (c, x))
                    .ok_or_else(|| parse_err(lineno, format!("bad feature value '{}'", v)))
            })
            .collect::<Result<Vec<_>>>()?;
        let token = &rec[lc];
        let y = map
            .get(token)
            .ok_or_else(|| parse_err(lineno, format!("label '{}' is not among the known classes", token)))?;
        rows.push(row);
        labels.push(y);
    }
    let d = width.map_or(0, |w| w - 1);
    build_dataset(rows, labels, d, map.names)
}

/// Isotropic Gaussian blobs, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub means: Vec<Vec<f64>>,
    /// Standard deviation per class. Zero puts every point on its mean.
    pub stddev: Vec<f64>,
    pub points_per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Four classes centred at `(-3, 3)`, `(-3, -3)`, `(3, 3)`, `(3, -3)`.
    pub fn quadrants(stddev: f64, points_per_class: usize, seed: u64) -> Self {
        SynthSpec {
            means: vec![vec![-3.0, 3.0], vec![-3.0, -3.0], vec![3.0, 3.0], vec![3.0, -3.0]],
            stddev: vec![stddev; 4],
            points_per_class,
            seed,
        }
    }

    /// Two classes centred at `(-c, 0)` and `(c, 0)`.
    pub fn two_blobs(center: f64, stddev: f64, points_per_class: usize, seed: u64) -> Self {
        SynthSpec {
            means: vec![vec![-center, 0.0], vec![center, 0.0]],
            stddev: vec![stddev; 2],
            points_per_class,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }
}

/// Class-major sample: all points of class 0, then class 1, and so on.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<LabeledDataset> {
    let k = spec.k();
    if k < 2 {
        return input("synthetic data needs at least 2 classes");
    }
    if spec.stddev.len() != k {
        return input(format!("{} standard deviations for {} classes", spec.stddev.len(), k));
    }
    if spec.stddev.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return input("standard deviations must be finite and nonnegative");
    }
    if spec.points_per_class == 0 {
        return input("points_per_class must be positive");
    }
    let d = spec.means[0].len();
    if d == 0 || spec.means.iter().any(|m| m.len() != d || m.iter().any(|v| !v.is_finite())) {
        return input("class means must be finite and share one dimension");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = k * spec.points_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (j, mean) in spec.means.iter().enumerate() {
        let noise = Normal::new(0.0, spec.stddev[j]).map_err(|e| Error::Input(e.to_string()))?;
        for _ in 0..spec.points_per_class {
            for &m in mean {
                data.push(m + noise.sample(&mut rng));
            }
            labels.push(j);
        }
    }
    LabeledDataset::new(Matrix::from_vec(n, d, data)?, labels, k)
}

/// Population mean and standard deviation of each feature. Columns with
/// variance below `1e-12` keep mean 0 and scale 1, i.e. pass unchanged.
pub fn fit_scaler(data: &LabeledDataset) -> Result<Scaler> {
    if data.n() < 2 {
        return input("standardization needs at least 2 points");
    }
    let n = data.n() as f64;
    let d = data.d();
    let mut mean = vec![0.0; d];
    for row in data.features().iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in data.features().iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut scale = vec![1.0; d];
    for f in 0..d {
        let v = var[f] / n;
        if v < 1e-12 {
            mean[f] = 0.0;
        } else {
            scale[f] = v.sqrt();
        }
    }
    Scaler::new(mean, scale)
}

/// Standardized copy of `data` and the scaler that produced it.
pub fn standardize(data: &LabeledDataset) -> Result<(LabeledDataset, Scaler)> {
    let s = fit_scaler(data)?;
    Ok((s.apply_dataset(data)?, s))
}
