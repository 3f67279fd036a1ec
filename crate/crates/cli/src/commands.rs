use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use apportion::data::{generate_synthetic, parse_libsvm, read_csv, write_libsvm, CsvOptions, LibsvmOptions, SynthSpec};
use apportion::eval::{
    default_c_grid, default_gamma_grid, grid_search, kfold_cv, IterationBudget, Method, MethodSpec, Regularization,
    TrainedModel,
};
use apportion::fisher::fisher_check;
use apportion::format::{load_model, save_model};
use apportion::geometry::{bisector, margin_report, pairwise_norm_check, project_to_hyperplane, scaled_distance_ratio};
use apportion::kernel::reconstruct_primal;
use apportion::loss::surrogate_loss;
use apportion::model::{argmax, KernelKind, KernelSpec, LabeledDataset, LinearModel, PriorityVector};
use log::{info, warn};

use crate::config::{pick, Config};
use crate::{Cli, Command, DataArgs, DataFormat, GridArgs, ModelArgs, Preset};

const DATA_DIR_ENV: &str = "APPORTION_DATA_DIR";
const DEFAULT_EPOCHS: u64 = 50;
const DEFAULT_GRID_FOLDS: usize = 5;
const DEFAULT_CV_FOLDS: usize = 10;

struct Ctx {
    config: Config,
    seed: u64,
    data_dir: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
        let data_dir = cli
            .data_dir
            .clone()
            .or(env_dir)
            .or_else(|| config.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from("data"));
        Ok(Ctx {
            seed: pick(cli.seed, config.seed, 0),
            config,
            data_dir,
        })
    }

    /// `path` itself if it exists, otherwise the same name in the data directory.
    fn resolve(&self, path: &Path) -> Option<PathBuf> {
        if path.exists() {
            return Some(path.to_path_buf());
        }
        let alt = self.data_dir.join(path);
        alt.exists().then_some(alt)
    }

    fn theta(&self, args: &ModelArgs) -> Result<PriorityVector> {
        let text = args
            .theta
            .clone()
            .or_else(|| self.config.theta.as_ref().map(|t| t.to_text()))
            .ok_or_else(|| anyhow!("--theta is required (or set theta in the config file)"))?;
        Ok(text.parse()?)
    }

    fn kernel(&self, args: &ModelArgs, default: &str, d: usize) -> Result<KernelSpec> {
        let kind: KernelKind = pick(args.kernel.clone(), self.config.kernel.clone(), default.to_string()).parse()?;
        let spec = KernelSpec {
            kind,
            gamma: pick(args.gamma, self.config.gamma, 1.0 / d as f64),
            degree: pick(args.degree, self.config.degree, 3),
            coef0: pick(args.coef0, self.config.coef0, 1.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Regularization given on the command line or in the config, if any.
    fn regularization(&self, args: &ModelArgs) -> Option<Regularization> {
        if let Some(l) = args.lambda {
            return Some(Regularization::Lambda(l));
        }
        if let Some(c) = args.c {
            return Some(Regularization::C(c));
        }
        self.config
            .lambda
            .map(Regularization::Lambda)
            .or(self.config.c.map(Regularization::C))
    }

    fn budget(&self, args: &ModelArgs) -> IterationBudget {
        if let Some(t) = args.iterations {
            return IterationBudget::Fixed(t);
        }
        if let Some(e) = args.epochs {
            return IterationBudget::Epochs(e);
        }
        match (self.config.iterations, self.config.epochs) {
            (Some(t), _) => IterationBudget::Fixed(t),
            (None, Some(e)) => IterationBudget::Epochs(e),
            (None, None) => IterationBudget::Epochs(DEFAULT_EPOCHS),
        }
    }

    fn spec(&self, args: &ModelArgs, method: Method, kernel: KernelSpec) -> Result<MethodSpec> {
        let mut spec = MethodSpec::new(method);
        spec.kernel = kernel;
        if let Some(r) = self.regularization(args) {
            spec.regularization = r;
        }
        spec.budget = self.budget(args);
        spec.seed = self.seed;
        spec.standardize = !args.no_standardize && self.config.standardize.unwrap_or(true);
        spec.validate()?;
        Ok(spec)
    }

    fn grids(&self, args: &GridArgs) -> (Vec<f64>, Vec<f64>) {
        (
            args.c_grid.clone().or(self.config.c_grid.clone()).unwrap_or_else(default_c_grid),
            args.gamma_grid.clone().or(self.config.gamma_grid.clone()).unwrap_or_else(default_gamma_grid),
        )
    }
}

fn format_of(path: &Path, flag: Option<DataFormat>) -> DataFormat {
    flag.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
        _ => DataFormat::Libsvm,
    })
}

/// Reads a dataset, numbering classes as in `labels` and fixing the feature
/// count when given.
fn read_dataset(path: &Path, format: Option<DataFormat>, labels: Option<Vec<String>>, d: Option<usize>) -> Result<LabeledDataset> {
    let file = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let data = match format_of(path, format) {
        DataFormat::Libsvm => parse_libsvm(BufReader::new(file), &LibsvmOptions { num_features: d, labels }),
        DataFormat::Csv => read_csv(file, &CsvOptions { labels, ..Default::default() }),
    }
    .with_context(|| format!("cannot parse {}", path.display()))?;
    if let Some(d) = d {
        if data.d() != d {
            bail!("{} has {} features, the model expects {}", path.display(), data.d(), d);
        }
    }
    Ok(data)
}

fn load_data(ctx: &Ctx, args: &DataArgs, labels: Option<Vec<String>>, d: Option<usize>) -> Result<LabeledDataset> {
    let path = ctx
        .resolve(&args.data)
        .ok_or_else(|| anyhow!("cannot find {} (data directory {})", args.data.display(), ctx.data_dir.display()))?;
    read_dataset(&path, args.format, labels, d)
}

fn check_theta(theta: &PriorityVector, data: &LabeledDataset) -> Result<()> {
    if theta.len() != data.k() {
        bail!("theta has {} entries but the data has {} classes", theta.len(), data.k());
    }
    Ok(())
}

fn describe(spec: &MethodSpec, n: usize) -> String {
    let mut s = format!("method={} kernel={}", spec.method.name(), spec.kernel.kind.name());
    if spec.kernel.kind != KernelKind::Linear {
        s.push_str(&format!(" gamma={}", spec.kernel.gamma));
    }
    if let Regularization::C(c) = spec.regularization {
        s.push_str(&format!(" C={}", c));
    }
    s.push_str(&format!(
        " lambda={} iterations={}",
        spec.regularization.lambda(n),
        spec.budget.iterations(n).max(1)
    ));
    s
}

/// The primal linear model behind `model`, when there is one.
fn as_linear(model: &TrainedModel) -> Option<LinearModel> {
    match model {
        TrainedModel::Linear(m) => Some(m.clone()),
        TrainedModel::Kernel(m) if m.kernel().kind == KernelKind::Linear => reconstruct_primal(m).ok(),
        _ => None,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Train { data, model, grid, out } => train(&ctx, &data, &model, &grid, &out),
        Command::Predict { model, data } => predict(&ctx, &model, &data),
        Command::Benchmark {
            datasets,
            format,
            methods,
            important,
            folds,
            csv,
            model,
            grid,
        } => benchmark(&ctx, &datasets, format, methods, important, folds, csv, &model, &grid),
        Command::Synth {
            preset,
            stddev,
            points,
            center,
            out,
        } => synth(&ctx, preset, stddev, points, center, out.as_deref()),
        Command::BoundaryGrid {
            model,
            data,
            bounds,
            resolution,
            out,
            points,
        } => boundary_grid(&ctx, &model, &data, &bounds, resolution, &out, points.as_deref()),
        Command::FisherCheck { draws } => fisher(&ctx, draws),
        Command::Diagnose { model, data } => diagnose(&ctx, &model, &data),
    }
}

fn train(ctx: &Ctx, data_args: &DataArgs, args: &ModelArgs, grid_args: &GridArgs, out: &Path) -> Result<()> {
    let data = load_data(ctx, data_args, None, None)?;
    let theta = ctx.theta(args)?;
    check_theta(&theta, &data)?;
    let method: Method = pick(args.method.clone(), ctx.config.method.clone(), "apportioned".into()).parse()?;
    let kernel = ctx.kernel(args, "linear", data.d())?;
    let mut spec = ctx.spec(args, method, kernel)?;
    info!("{} points, {} features, {} classes", data.n(), data.d(), data.k());

    let mut stdout = io::stdout().lock();
    if grid_args.grid || ctx.config.grid.unwrap_or(false) {
        let folds = pick(grid_args.grid_folds, ctx.config.grid_folds, DEFAULT_GRID_FOLDS);
        let (cs, gammas) = ctx.grids(grid_args);
        info!("grid search over {} C values with {}-fold CV", cs.len(), folds);
        let result = grid_search(&data, &theta, &spec, &cs, &gammas, folds, ctx.seed)?;
        spec = result.apply(&spec);
        writeln!(stdout, "grid C={} gamma={}", result.best_c, result.best_gamma.map_or("-".into(), |g| g.to_string()))?;
        writeln!(stdout, "grid expected_risk={:.6}", result.best_report.mean_expected_risk)?;
    }

    let iterations = spec.budget.iterations(data.n()).max(1);
    let (model, trace) = spec.train_traced(&data, &theta, Some((iterations / 10).max(1)))?;
    save_model(out, &model, data.class_names())?;
    info!("wrote {}", out.display());

    writeln!(stdout, "{}", describe(&spec, data.n()))?;
    let report = model.evaluate(&data, &theta)?;
    writeln!(
        stdout,
        "training expected_risk={:.6} accuracy={:.6}",
        report.expected_risk,
        report.accuracy()
    )?;
    if let Some(trace) = trace {
        let tail = &trace.objective_samples[trace.objective_samples.len().saturating_sub(3)..];
        for (t, v) in tail {
            writeln!(stdout, "objective t={} value={:.6}", t, v)?;
        }
    }
    if let Some(linear) = as_linear(&model) {
        writeln!(stdout, "margins")?;
        margin_report(&linear, &data)?.write_csv(&mut stdout)?;
    }
    Ok(())
}

fn predict(ctx: &Ctx, model_path: &Path, data_args: &DataArgs) -> Result<()> {
    let saved = load_model(model_path).with_context(|| format!("cannot load {}", model_path.display()))?;
    let model = &saved.model;
    let names = saved.class_names.clone();
    let data = load_data(ctx, data_args, names.clone(), Some(model.d()))?;
    let pred = model.predict_all(&data)?;
    let mut out = BufWriter::new(io::stdout().lock());
    for &p in &pred {
        match &names {
            Some(n) => writeln!(out, "{}", n[p])?,
            None => writeln!(out, "{}", p)?,
        }
    }
    out.flush()?;
    if data.k() == model.k() {
        let r = apportion::eval::EvalReport::from_predictions(data.labels(), &pred, model.theta())?;
        info!("accuracy {:.4}, expected risk {:.4}", r.accuracy(), r.expected_risk);
    }
    Ok(())
}

struct BenchCell {
    risk: f64,
    sensitivity: Option<f64>,
    c: f64,
    gamma: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn benchmark(
    ctx: &Ctx,
    datasets: &[PathBuf],
    format: Option<DataFormat>,
    methods: Option<Vec<String>>,
    important: Option<usize>,
    folds: Option<usize>,
    csv: bool,
    args: &ModelArgs,
    grid_args: &GridArgs,
) -> Result<()> {
    let theta = ctx.theta(args)?;
    let methods: Vec<Method> = match methods.or(ctx.config.methods.clone()) {
        Some(list) => list.iter().map(|m| m.trim().parse()).collect::<Result<_, _>>()?,
        None => Method::ALL.to_vec(),
    };
    if methods.is_empty() {
        bail!("no methods selected");
    }
    let important = important.unwrap_or_else(|| argmax(theta.costs()));
    if important >= theta.len() {
        bail!("important class {} out of range for {} classes", important, theta.len());
    }
    let folds = pick(folds, ctx.config.folds, DEFAULT_CV_FOLDS);
    let grid_folds = pick(grid_args.grid_folds, ctx.config.grid_folds, DEFAULT_GRID_FOLDS);
    let (cs, gammas) = ctx.grids(grid_args);
    let fixed = ctx.regularization(args).is_some();

    let mut rows = Vec::new();
    for path in datasets {
        let Some(resolved) = ctx.resolve(path) else {
            warn!("skipping {}: not found", path.display());
            continue;
        };
        let data = read_dataset(&resolved, format, None, None)?;
        check_theta(&theta, &data)?;
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let mut cells = Vec::new();
        for &method in &methods {
            let kernel = match method {
                Method::Apportioned => ctx.kernel(args, "rbf", data.d())?,
                Method::Baseline(_) => KernelSpec::linear(),
            };
            let mut spec = ctx.spec(args, method, kernel)?;
            if !fixed {
                spec = grid_search(&data, &theta, &spec, &cs, &gammas, grid_folds, ctx.seed)?.apply(&spec);
            }
            let cv = kfold_cv(&data, &theta, &spec, folds, ctx.seed.wrapping_add(1))?;
            info!("{} {}: {}", name, method.name(), describe(&spec, data.n()));
            cells.push(BenchCell {
                risk: cv.mean_expected_risk,
                sensitivity: cv.mean_sensitivity[important],
                c: match spec.regularization {
                    Regularization::C(c) => c,
                    Regularization::Lambda(l) => 1.0 / (l * data.n() as f64),
                },
                gamma: (spec.kernel.kind != KernelKind::Linear).then_some(spec.kernel.gamma),
            });
        }
        rows.push((name, cells));
    }

    let mut out = io::stdout().lock();
    if csv {
        writeln!(out, "dataset,method,expected_risk,important_class,sensitivity,c,gamma")?;
        for (name, cells) in &rows {
            for (m, c) in methods.iter().zip(cells) {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    name,
                    m.name(),
                    c.risk,
                    important,
                    c.sensitivity.map_or(String::new(), |s| s.to_string()),
                    c.c,
                    c.gamma.map_or(String::new(), |g| g.to_string())
                )?;
            }
        }
    } else {
        write!(out, "{:<12}", "dataset")?;
        for m in &methods {
            write!(out, "  {:>18}", m.name())?;
        }
        writeln!(out)?;
        for (name, cells) in &rows {
            write!(out, "{:<12}", name)?;
            for c in cells {
                let sens = c.sensitivity.map_or("-".to_string(), |s| format!("{:.1}%", 100.0 * s));
                write!(out, "  {:>18}", format!("{:.4} / {}", c.risk, sens))?;
            }
            writeln!(out)?;
        }
        writeln!(out, "cells: expected risk / sensitivity of class {}", important)?;
    }
    Ok(())
}

fn synth(ctx: &Ctx, preset: Preset, stddev: f64, points: usize, center: f64, out: Option<&Path>) -> Result<()> {
    if !(stddev.is_finite() && stddev >= 0.0) {
        bail!("stddev must be nonnegative");
    }
    if points == 0 {
        bail!("points must be positive");
    }
    let spec = match preset {
        Preset::Quadrants => SynthSpec::quadrants(stddev, points, ctx.seed),
        Preset::TwoBlobs => SynthSpec::two_blobs(center, stddev, points, ctx.seed),
    };
    let data = generate_synthetic(&spec)?;
    match out {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            let mut w = BufWriter::new(f);
            write_libsvm(&data, &mut w)?;
            w.flush()?;
            info!("wrote {} points to {}", data.n(), p.display());
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_libsvm(&data, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn points_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "grid".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{}.points.csv", stem))
}

fn boundary_grid(
    ctx: &Ctx,
    model_path: &Path,
    data_args: &DataArgs,
    bounds: &[f64],
    resolution: usize,
    out: &Path,
    points: Option<&Path>,
) -> Result<()> {
    let saved = load_model(model_path).with_context(|| format!("cannot load {}", model_path.display()))?;
    let model = &saved.model;
    if model.d() != 2 {
        bail!("boundary grid needs a 2-D model, this one has {} features", model.d());
    }
    let [x0, x1, y0, y1] = <[f64; 4]>::try_from(bounds).map_err(|_| anyhow!("--bounds takes xmin,xmax,ymin,ymax"))?;
    if !(x0 < x1 && y0 < y1) || bounds.iter().any(|b| !b.is_finite()) {
        bail!("--bounds must satisfy xmin < xmax and ymin < ymax");
    }
    if resolution < 2 {
        bail!("resolution must be at least 2");
    }
    let data = load_data(ctx, data_args, saved.class_names.clone(), Some(2))?;

    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("cannot create {}", out.display()))?);
    writeln!(w, "x1,x2,predicted_class")?;
    for r in 0..resolution {
        let y = step(y0, y1, r);
        for c in 0..resolution {
            let x = step(x0, x1, c);
            writeln!(w, "{},{},{}", x, y, model.predict(&[x, y])?)?;
        }
    }
    w.flush()?;

    let points = points.map_or_else(|| points_path(out), Path::to_path_buf);
    let mut p = BufWriter::new(File::create(&points).with_context(|| format!("cannot create {}", points.display()))?);
    writeln!(p, "x1,x2,label")?;
    for i in 0..data.n() {
        let x = data.x(i);
        writeln!(p, "{},{},{}", x[0], x[1], data.y(i))?;
    }
    p.flush()?;
    info!("wrote {} grid rows to {} and {} points to {}", resolution * resolution, out.display(), data.n(), points.display());
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn fisher(ctx: &Ctx, draws: usize) -> Result<()> {
    let rows = fisher_check(draws, ctx.seed)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(
        out,
        "draw,k,p,theta,weighted_argmax,numeric_argmax,argmax_ok,closed_form_ok,numeric,closed_form,numeric_value,closed_form_value"
    )?;
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i,
            r.p.len(),
            join(&r.p),
            join(&r.theta),
            r.weighted_argmax.map_or("-".to_string(), |a| a.to_string()),
            r.numeric_argmax,
            r.argmax_ok.map_or("-", |ok| if ok { "pass" } else { "fail" }),
            if r.closed_form_ok { "pass" } else { "fail" },
            join(&r.numeric),
            join(&r.closed_form),
            r.numeric_value,
            r.closed_form_value
        )?;
    }
    out.flush()?;
    let unique = rows.iter().filter(|r| r.argmax_ok.is_some()).count();
    let argmax_ok = rows.iter().filter(|r| r.argmax_ok == Some(true)).count();
    let form_ok = rows.iter().filter(|r| r.closed_form_ok).count();
    info!("argmax agrees on {}/{} draws with a unique weighted argmax", argmax_ok, unique);
    info!("closed form matches on {}/{} draws", form_ok, rows.len());
    Ok(())
}

fn diagnose(ctx: &Ctx, model_path: &Path, data_args: &DataArgs) -> Result<()> {
    let saved = load_model(model_path).with_context(|| format!("cannot load {}", model_path.display()))?;
    let model = as_linear(&saved.model)
        .ok_or_else(|| anyhow!("diagnose needs an apportioned model with a linear kernel"))?;
    let data = load_data(ctx, data_args, saved.class_names.clone(), Some(model.d()))?;
    if data.k() != model.k() {
        bail!("data has {} classes, the model {}", data.k(), model.k());
    }
    let report = margin_report(&model, &data)?;
    report.write_csv(io::stdout().lock())?;

    let w = pairwise_norm_check(model.weights());
    info!("pairwise norm inequality: {} <= {}: {}", w.lhs, w.rhs, w.holds);
    let s = pairwise_norm_check(&model.scaled_rows());
    info!("same for scaled rows: {} <= {}: {}", s.lhs, s.rhs, s.holds);

    let slack: f64 = (0..data.n())
        .map(|i| surrogate_loss(&model, data.x(i), data.y(i)))
        .sum::<apportion::Result<f64>>()?;
    if slack == 0.0 {
        let held = report
            .pairwise
            .iter()
            .filter(|p| matches!((p.gamma, p.bound), (Some(g), Some(b)) if g >= b))
            .count();
        info!("no slack: margin bound holds for {}/{} ordered pairs", held, report.pairwise.len());
    } else {
        info!("total slack {:.6}: soft-margin regime, margin bound not checked", slack);
    }

    // Bisector identity at the projections of the training points.
    let mut worst: f64 = 0.0;
    for i in 0..model.k() {
        for j in 0..model.k() {
            if i == j {
                continue;
            }
            let Some(n) = bisector(&model, i, j)?.normal().map(<[f64]>::to_vec) else {
                continue;
            };
            let want = model.theta().get(j) / model.theta().get(i);
            for p in 0..data.n() {
                let z = model.scaler().map_or_else(|| data.x(p).to_vec(), |s| s.apply(data.x(p)));
                let Ok(on) = project_to_hyperplane(&n, &z) else { break };
                let x = model.scaler().map_or_else(|| on.clone(), |s| s.invert(&on));
                let got = scaled_distance_ratio(&model, i, j, &x)?;
                if got.is_finite() {
                    worst = worst.max((got - want).abs() / want);
                }
            }
        }
    }
    info!("bisector cost-ratio identity: worst relative error {:.3e}", worst);
    Ok(())
}
