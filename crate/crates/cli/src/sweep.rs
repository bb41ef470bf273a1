//! Error-versus-K tables for the fitting methods.

use std::fmt::Write as _;

use clap::{Args, ValueEnum};
use quadrep::dictionary::SampleGrid;
use quadrep::functions::BuiltinFunction;
use quadrep::representation::{fit_degree0, fit_degree1, fit_degree2_uniform, residual_l2, Rep};
use quadrep::selection::{greedy_select, rrqr_select, SelectionConfig, DEFAULT_RRQR_TOL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{stage, CliError};
use crate::manifest::Sink;
use crate::{num, parse_function, thread_pool, OutputArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
pub enum SweepMethod {
    #[value(name = "deg0")]
    #[serde(rename = "deg0")]
    Deg0,
    #[value(name = "deg1")]
    #[serde(rename = "deg1")]
    Deg1,
    #[value(name = "deg2-uniform")]
    #[serde(rename = "deg2-uniform")]
    Deg2Uniform,
    /// Uniform degree-2 without the f² stream
    #[value(name = "deg2-uniform-n2=0")]
    #[serde(rename = "deg2-uniform-n2=0")]
    Deg2UniformNoSquare,
    #[value(name = "deg2-greedy")]
    #[serde(rename = "deg2-greedy")]
    Deg2Greedy,
    #[value(name = "deg2-rrqr")]
    #[serde(rename = "deg2-rrqr")]
    Deg2Rrqr,
}

impl SweepMethod {
    pub const DEFAULT: [SweepMethod; 5] = [
        SweepMethod::Deg0,
        SweepMethod::Deg1,
        SweepMethod::Deg2Uniform,
        SweepMethod::Deg2Greedy,
        SweepMethod::Deg2Rrqr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMethod::Deg0 => "deg0",
            SweepMethod::Deg1 => "deg1",
            SweepMethod::Deg2Uniform => "deg2-uniform",
            SweepMethod::Deg2UniformNoSquare => "deg2-uniform-n2=0",
            SweepMethod::Deg2Greedy => "deg2-greedy",
            SweepMethod::Deg2Rrqr => "deg2-rrqr",
        }
    }
}

/// Settings shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub seed: u64,
    pub batch: usize,
    /// Stream cap for greedy selection.
    pub greedy_cap: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            batch: 1,
            greedy_cap: 60,
        }
    }
}

/// Stream degrees `(N0, N1, N2)` for a uniform degree-2 fit with `k`
/// unknowns. Columns are shared out evenly, the remainder going to the plain
/// stream first, then to the f-stream.
pub fn uniform_split(k: usize, with_square: bool) -> Option<(usize, usize, usize)> {
    if k < 2 {
        return None;
    }
    let parts = if with_square { 3 } else { 2 };
    let mut counts = [k / parts; 3];
    if !with_square {
        counts[2] = 0;
    }
    for c in counts.iter_mut().take(k % parts) {
        *c += 1;
    }
    // S3 starts at degree 1, S1 and S2 at degree 0
    Some((counts[0] - 1, counts[1] - 1, counts[2]))
}

/// Degree-1 degrees with `N0 = N1` as far as `k` allows (extra goes to N0).
pub fn rational_split(k: usize) -> Option<(usize, usize)> {
    if k < 1 {
        return None;
    }
    let n1 = (k - 1) / 2;
    Some((k - 1 - n1, n1))
}

/// Smallest stream cap whose dictionary holds at least `k` columns.
pub fn rrqr_cap(k: usize) -> usize {
    (k.saturating_sub(2)).div_ceil(3).max(1)
}

/// Fit `grid` with `method` using exactly `k` coefficients.
pub fn fit_at(method: SweepMethod, k: usize, grid: &SampleGrid, settings: &SweepSettings) -> quadrep::Result<Rep> {
    let bad_k = || quadrep::Error::InvalidArgument(format!("K = {k} is too small for {}", method.name()));
    Ok(match method {
        SweepMethod::Deg0 => fit_degree0(grid, k.checked_sub(1).ok_or_else(bad_k)?)?.into(),
        SweepMethod::Deg1 => {
            let (n0, n1) = rational_split(k).ok_or_else(bad_k)?;
            fit_degree1(grid, n0, n1)?.into()
        }
        SweepMethod::Deg2Uniform | SweepMethod::Deg2UniformNoSquare => {
            let (n0, n1, n2) =
                uniform_split(k, method == SweepMethod::Deg2Uniform).ok_or_else(bad_k)?;
            fit_degree2_uniform(grid, n0, n1, n2)?.rep.into()
        }
        SweepMethod::Deg2Greedy => {
            let config = SelectionConfig {
                batch_size: settings.batch,
                target_residual: 0.0,
                max_terms: Some(k),
                stream_cap: settings.greedy_cap,
                rng_seed: settings.seed,
                degree: 2,
            };
            greedy_select(grid, &config)?.rep
        }
        SweepMethod::Deg2Rrqr => rrqr_select(grid, rrqr_cap(k), DEFAULT_RRQR_TOL, Some(k))?.rep,
    })
}

/// Relative L2 error of a `k`-coefficient fit (absolute when `f ≡ 0`).
pub fn error_at(method: SweepMethod, k: usize, grid: &SampleGrid, settings: &SweepSettings) -> quadrep::Result<f64> {
    let rep = fit_at(method, k, grid, settings)?;
    let report = residual_l2(&rep, grid);
    if let Some((_, e)) = report.failures.first() {
        return Err(e.clone());
    }
    Ok(if report.reference_norm > 0.0 {
        report.relative()
    } else {
        report.value
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: SweepMethod,
    pub k: usize,
    /// `NaN` when the fit or the evaluation failed.
    pub error: f64,
    pub diagnostic: Option<String>,
}

/// Every `(method, K)` cell, computed in parallel and returned in
/// method-major, increasing-K order.
pub fn sweep(
    function: BuiltinFunction,
    methods: &[SweepMethod],
    ks: &[usize],
    m: usize,
    settings: &SweepSettings,
) -> quadrep::Result<Vec<Cell>> {
    let grid = SampleGrid::build(|x| function.eval(x), function.domain(), m)?;
    let cells: Vec<(SweepMethod, usize)> = methods
        .iter()
        .flat_map(|&method| ks.iter().map(move |&k| (method, k)))
        .collect();
    Ok(cells
        .par_iter()
        .map(|&(method, k)| match error_at(method, k, &grid, settings) {
            Ok(error) => Cell { method, k, error, diagnostic: None },
            Err(e) => Cell { method, k, error: f64::NAN, diagnostic: Some(e.to_string()) },
        })
        .collect())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvergenceArgs {
    /// Builtin function name
    #[arg(long = "fn", value_name = "NAME", value_parser = parse_function)]
    #[serde(rename = "fn")]
    pub function: BuiltinFunction,
    /// Comma-separated methods
    #[arg(long, value_enum, value_delimiter = ',',
          default_value = "deg0,deg1,deg2-uniform,deg2-greedy,deg2-rrqr")]
    pub methods: Vec<SweepMethod>,
    /// Explicit list of K values (overrides the range)
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 40)]
    pub k_max: usize,
    #[arg(long, default_value_t = 1)]
    pub k_step: usize,
    /// Gauss nodes for fitting and error measurement
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Greedy tie-break seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Greedy block size
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Greedy stream cap
    #[arg(long, default_value_t = 60)]
    pub cap: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl ConvergenceArgs {
    pub fn ks(&self) -> Result<Vec<usize>, CliError> {
        if !self.k.is_empty() {
            return Ok(self.k.clone());
        }
        if self.k_step == 0 || self.k_min > self.k_max {
            return Err(CliError::Usage("need k-min <= k-max and k-step > 0".into()));
        }
        Ok((self.k_min..=self.k_max).step_by(self.k_step).collect())
    }
}

pub fn format_table(function: BuiltinFunction, m: usize, cells: &[Cell]) -> String {
    let mut out = String::new();
    writeln!(out, "# function: {}", function.name()).unwrap();
    writeln!(
        out,
        "# error: relative L2 ||rep - f|| / ||f|| on {m} Gauss-Legendre nodes (absolute if ||f|| = 0)"
    )
    .unwrap();
    writeln!(
        out,
        "# K: fitted unknowns; the fixed constant of the degree-1 denominator is not counted"
    )
    .unwrap();
    for c in cells {
        if let Some(d) = &c.diagnostic {
            writeln!(out, "# failed {} K={}: {d}", c.method.name(), c.k).unwrap();
        }
    }
    out.push_str("method,K,error\n");
    for c in cells {
        writeln!(out, "{},{},{}", c.method.name(), c.k, num(c.error)).unwrap();
    }
    out
}

pub fn run_convergence(args: &ConvergenceArgs, sink: &mut Sink) -> Result<Vec<String>, CliError> {
    let ks = args.ks()?;
    let settings = SweepSettings {
        seed: args.seed,
        batch: args.batch,
        greedy_cap: args.cap,
    };
    let pool = thread_pool()?;
    let cells = pool
        .install(|| sweep(args.function, &args.methods, &ks, args.m, &settings))
        .map_err(stage("sampling"))?;
    sink.write("convergence.csv", &format_table(args.function, args.m, &cells))?;
    let failed = cells.iter().filter(|c| c.diagnostic.is_some()).count();
    let mut summary = vec![format!(
        "{} cells ({} methods x {} K values), {failed} failed",
        cells.len(),
        args.methods.len(),
        ks.len()
    )];
    for c in cells.iter().filter(|c| c.diagnostic.is_some()) {
        summary.push(format!(
            "warning: {} K={}: {}",
            c.method.name(),
            c.k,
            c.diagnostic.as_deref().unwrap_or("")
        ));
    }
    Ok(summary)
}
