use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use quadrep::denoise::NoisyDataset;
use quadrep::dictionary::SampleGrid;
use quadrep::functions::BuiltinFunction;
use quadrep::representation::{
    fit_degree0, fit_degree1, fit_degree2_uniform, residual_l2, Degree2Rep, Rep,
};
use quadrep::selection::{greedy_select, rrqr_select, SelectionConfig};
use serde::{Deserialize, Serialize};

use crate::error::{stage, CliError};
use crate::manifest::Sink;
use crate::{num, parse_function, OutputArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Deg0,
    Deg1,
    Deg2Uniform,
    Deg2Greedy,
    Deg2Rrqr,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Builtin function name
    #[arg(long = "fn", value_name = "NAME", value_parser = parse_function,
          required_unless_present = "input", conflicts_with = "input")]
    #[serde(rename = "fn")]
    pub function: Option<BuiltinFunction>,
    /// Tabulated samples, CSV with header `x,f`
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: FitMethod,
    #[arg(long, default_value_t = 10)]
    pub n0: usize,
    #[arg(long, default_value_t = 10)]
    pub n1: usize,
    #[arg(long, default_value_t = 0)]
    pub n2: usize,
    /// Term budget for greedy and RRQR selection
    #[arg(long)]
    pub max_terms: Option<usize>,
    /// Greedy block size (1, 3 or 5)
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Highest Legendre degree per stream for greedy and RRQR
    #[arg(long, default_value_t = 60)]
    pub cap: usize,
    /// Greedy stopping residual
    #[arg(long, default_value_t = 1e-10)]
    pub target: f64,
    /// Relative pivot threshold for RRQR
    #[arg(long, default_value_t = 1e-12)]
    pub rank_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gauss nodes used for builtin functions
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn grid_for(args: &FitArgs) -> Result<SampleGrid, CliError> {
    match (&args.function, &args.input) {
        (Some(f), _) => SampleGrid::build(|x| f.eval(x), f.domain(), args.m).map_err(stage("sampling")),
        (None, Some(path)) => {
            let data = NoisyDataset::load(path).map_err(stage("reading input"))?;
            SampleGrid::tabulated(data.positions(), data.observed(), None).map_err(stage("sampling"))
        }
        (None, None) => Err(CliError::Usage("one of --fn or --input is required".into())),
    }
}

fn relative_error(rep: &Rep, grid: &SampleGrid) -> (f64, Option<String>) {
    let r = residual_l2(rep, grid);
    let value = if r.reference_norm > 0.0 { r.relative() } else { r.value };
    let diagnostic = r
        .failures
        .first()
        .map(|(_, e)| format!("{} grid nodes failed to evaluate, first: {e}", r.failures.len()));
    (value, diagnostic)
}

pub fn run_fit(args: &FitArgs, sink: &mut Sink) -> Result<Vec<String>, CliError> {
    let grid = grid_for(args)?;
    let mut summary = Vec::new();
    let (rep, k): (Rep, usize) = match args.method {
        FitMethod::Deg0 => (fit_degree0(&grid, args.n0).map_err(stage("degree-0 fit"))?.into(), args.n0 + 1),
        FitMethod::Deg1 => (
            fit_degree1(&grid, args.n0, args.n1).map_err(stage("degree-1 fit"))?.into(),
            args.n0 + 1 + args.n1,
        ),
        FitMethod::Deg2Uniform => {
            let fit = fit_degree2_uniform(&grid, args.n0, args.n1, args.n2).map_err(stage("degree-2 fit"))?;
            if let Some(d) = &fit.degeneracy {
                summary.push(format!("rank deficient: rank {} with {} columns dropped", d.rank, d.dropped.len()));
            }
            (fit.rep.into(), args.n0 + args.n1 + args.n2 + 2)
        }
        FitMethod::Deg2Greedy => {
            let config = SelectionConfig {
                batch_size: args.batch,
                target_residual: args.target,
                max_terms: args.max_terms,
                stream_cap: args.cap,
                rng_seed: args.seed,
                degree: 2,
            };
            let result = greedy_select(&grid, &config).map_err(stage("greedy selection"))?;
            if args.output.trace {
                sink.write("trace.json", &(result.trace.to_json().map_err(stage("trace"))? + "\n"))?;
            }
            let k = result.trace.selected().len();
            (result.rep, k)
        }
        FitMethod::Deg2Rrqr => {
            let result = rrqr_select(&grid, args.cap, args.rank_tol, args.max_terms)
                .map_err(stage("rrqr selection"))?;
            if args.output.trace {
                let text = serde_json::to_string_pretty(&result.report).map_err(|e| CliError::Io(e.to_string()))?;
                sink.write("rank_report.json", &(text + "\n"))?;
            }
            let k = result.report.selected.len();
            summary.push(format!(
                "numerical rank {} of {} columns",
                result.report.numerical_rank, result.report.columns
            ));
            (result.rep, k)
        }
    };
    sink.write("rep.json", &(rep.to_json().map_err(stage("serialization"))? + "\n"))?;
    let (error, diagnostic) = relative_error(&rep, &grid);
    summary.insert(
        0,
        format!(
            "{} K={k} fit_residual={} l2_error={}",
            rep.degree_label(),
            num(rep.fit_residual()),
            num(error)
        ),
    );
    if let Some(d) = diagnostic {
        summary.push(format!("warning: {d}"));
    }
    if args.method == FitMethod::Deg2Rrqr && k >= 1 && k <= grid.len() {
        let d0 = fit_degree0(&grid, k - 1).map_err(stage("degree-0 comparison"))?;
        let (e0, _) = relative_error(&Rep::Degree0(d0), &grid);
        let verdict = if error < e0 { "below" } else { "not below" };
        summary.push(format!("degree-0 at K={k}: l2_error={} (rrqr {verdict})", num(e0)));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Representation JSON written by `fit`
    #[arg(long)]
    pub rep: PathBuf,
    /// File of evaluation points, one per line (first CSV column)
    #[arg(long, conflicts_with = "grid")]
    pub points: Option<PathBuf>,
    /// Number of uniformly spaced points over the domain
    #[arg(long)]
    pub grid: Option<usize>,
    /// Also tabulate both roots of a degree-2 representation
    #[arg(long)]
    pub branches: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn read_points(path: &PathBuf) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            // a header line before any data
            Err(_) if out.is_empty() => continue,
            Err(_) => {
                return Err(CliError::Usage(format!(
                    "{}:{}: '{field}' is not a number",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn uniform_points(domain: (f64, f64), n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (domain.0 + domain.1)],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    domain.1
                } else {
                    domain.0 + (domain.1 - domain.0) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn branch_table(rep: &Degree2Rep, xs: &[f64]) -> (String, usize) {
    let mut out = String::from("x,root_lo,root_hi\n");
    let mut complex = 0;
    for &x in xs {
        match rep.roots_at(x) {
            Ok(r) => writeln!(out, "{},{},{}", num(x), num(r.lo), num(r.hi)).unwrap(),
            Err(_) => {
                complex += 1;
                writeln!(out, "{},,", num(x)).unwrap();
            }
        }
    }
    (out, complex)
}

pub fn run_eval(args: &EvalArgs, sink: &mut Sink) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(&args.rep)?;
    let rep = Rep::from_json(&text).map_err(|source| CliError::Numerical {
        stage: "reading representation",
        source,
    })?;
    let xs = match &args.points {
        Some(path) => read_points(path)?,
        None => uniform_points(rep.domain(), args.grid.unwrap_or(101)),
    };
    let mut out = String::from("x,value\n");
    let mut failed = 0;
    for (&x, v) in xs.iter().zip(rep.eval_many(&xs)) {
        match v {
            Ok(v) => writeln!(out, "{},{}", num(x), num(v)).unwrap(),
            Err(_) => {
                failed += 1;
                writeln!(out, "{},", num(x)).unwrap();
            }
        }
    }
    sink.write("values.csv", &out)?;
    let mut summary = vec![format!("evaluated {} points, {failed} without a value", xs.len())];
    if args.branches {
        let Rep::Degree2(d2) = &rep else {
            return Err(CliError::Usage("--branches needs a degree-2 representation".into()));
        };
        let (table, complex) = branch_table(d2, &xs);
        sink.write("branches.csv", &table)?;
        summary.push(format!("branch table: {complex} points with complex roots"));
    }
    if failed > 0 {
        summary.push(format!("warning: {failed} points left empty"));
    }
    Ok(summary)
}
