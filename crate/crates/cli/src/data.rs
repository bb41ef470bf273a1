use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use quadrep::denoise::{
    denoise_case3, denoise_iterative, denoise_ls, generate_noisy, integer_positions,
    nearest_root_signs, rmse, DatasetMeta, GroundTruth, InitMode, IterationRecord, IterativeConfig,
    ManifoldFit4, NoiseConstraint, NoiseSpec, NoiseTarget, NoisyDataset, Reconstruction, VoteReport,
};
use serde::{Deserialize, Serialize};

use crate::error::{stage, CliError};
use crate::manifest::Sink;
use crate::{num, OutputArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// function noise, σ = 30
    Case1,
    /// manifold noise, σ = 5000
    Case2,
    /// function noise, σ = 150
    Case3,
    /// function noise, σ = 200
    Case4,
}

impl Preset {
    pub fn spec(self) -> NoiseSpec {
        let (target, sigma) = match self {
            Preset::Case1 => (NoiseTarget::Function, 30.0),
            Preset::Case2 => (NoiseTarget::Manifold, 5000.0),
            Preset::Case3 => (NoiseTarget::Function, 150.0),
            Preset::Case4 => (NoiseTarget::Function, 200.0),
        };
        NoiseSpec { target, sigma }
    }
}

fn parse_target(s: &str) -> Result<NoiseTarget, String> {
    s.parse().map_err(|e: quadrep::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Where the noise enters: `function` or `manifold` (overrides the preset)
    #[arg(long, value_parser = parse_target)]
    pub target: Option<NoiseTarget>,
    /// Noise standard deviation (overrides the preset)
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Generator seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn run_generate(args: &GenerateArgs, sink: &mut Sink) -> Result<Vec<String>, CliError> {
    let seed = args
        .seed
        .ok_or_else(|| CliError::Usage("generate: --seed is required".into()))?;
    let base = args.preset.map(Preset::spec);
    let sigma = args
        .sigma
        .or(base.map(|s| s.sigma))
        .ok_or_else(|| CliError::Usage("generate: give --preset or --sigma".into()))?;
    let target = args
        .target
        .or(base.map(|s| s.target))
        .unwrap_or(NoiseTarget::Function);
    let truth = GroundTruth::step_manifold().map_err(stage("ground truth"))?;
    let generated = generate_noisy(&truth, &integer_positions(400), NoiseSpec { target, sigma }, seed)
        .map_err(stage("generation"))?;
    generated.dataset.save(&sink.path("data.csv")).map_err(stage("writing data"))?;
    sink.record("data.csv");
    sink.record("data.json");
    let clean = NoisyDataset::new(
        generated.dataset.positions().to_vec(),
        generated.truth.clone(),
        DatasetMeta {
            noise_model: "none".into(),
            sigma: Some(0.0),
            seed: None,
        },
    )
    .map_err(stage("writing truth"))?;
    clean.save(&sink.path("truth.csv")).map_err(stage("writing truth"))?;
    sink.record("truth.csv");
    sink.record("truth.json");
    let mut summary = vec![format!(
        "{} samples, {target} noise, sigma {sigma}, seed {seed}",
        generated.dataset.len()
    )];
    if generated.vertex_clamps > 0 {
        summary.push(format!(
            "{} draws had complex roots and were placed at the vertex",
            generated.vertex_clamps
        ));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum DenoiseMode {
    /// least squares, nearest-root index
    #[value(name = "ls")]
    #[serde(rename = "ls")]
    Ls,
    /// least squares, k-NN voted index
    #[value(name = "ls+vote")]
    #[serde(rename = "ls+vote")]
    LsVote,
    /// de-biased moments, voted index
    #[value(name = "debias+vote")]
    #[serde(rename = "debias+vote")]
    DebiasVote,
    /// iterative noise projection
    #[value(name = "iterative")]
    #[serde(rename = "iterative")]
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Case1,
    Case2,
    Case3,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DenoiseArgs {
    /// Noisy samples, CSV with header `x,f`
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: DenoiseMode,
    /// Noise variance (defaults to the sidecar's sigma²)
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Neighbours per vote
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// `all8` or a comma-separated subset of 1,x,x2,f,xf,x2f,f2,xf2
    #[arg(long, default_value = "all8")]
    pub constraints: String,
    /// Initialization of the iterative mode
    #[arg(long, value_enum, default_value = "case1")]
    pub init: InitArg,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Clean samples (`x,f`) for RMSE and mislabel counts
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn parse_constraints(spec: &str) -> Result<Vec<NoiseConstraint>, CliError> {
    if spec.trim() == "all8" {
        return Ok(NoiseConstraint::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|e: quadrep::Error| CliError::Usage(e.to_string())))
        .collect()
}

#[derive(Debug, Serialize)]
struct FitSummary {
    method: String,
    /// `(b0, b1, c0, c1)` in the rescaled coordinate
    scaled: [f64; 4],
    /// the same in the data coordinate
    raw: [f64; 4],
    condition: Option<f64>,
}

impl From<&ManifoldFit4> for FitSummary {
    fn from(f: &ManifoldFit4) -> Self {
        Self {
            method: format!("{:?}", f.method).to_lowercase(),
            scaled: f.scaled,
            raw: f.raw,
            condition: f.condition,
        }
    }
}

#[derive(Debug, Serialize)]
struct IterativeSummary {
    converged: bool,
    iterations: usize,
    active_constraints: Vec<String>,
    dropped_constraints: Vec<String>,
    /// `|<g, ε̄>| / ||ε̃||` per listed constraint after the last projection
    constraint_residuals: Vec<f64>,
    initial_fit: FitSummary,
}

#[derive(Debug, Serialize)]
struct TruthSummary {
    rmse: f64,
    initial_rmse: Option<f64>,
    mislabels: usize,
}

#[derive(Debug, Serialize)]
struct DenoiseReport {
    mode: DenoiseMode,
    samples: usize,
    fit: FitSummary,
    breakpoints: Vec<f64>,
    noise_mean: f64,
    /// Pearson correlation of the noise estimate with x
    noise_x_correlation: f64,
    vertex_samples: usize,
    undefined_labels: usize,
    vote: Option<VoteReport>,
    iterative: Option<IterativeSummary>,
    truth: Option<TruthSummary>,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    }
}

fn sigma2_for(args: &DenoiseArgs, data: &NoisyDataset) -> Result<f64, CliError> {
    args.sigma2
        .or(data.meta.sigma.map(|s| s * s))
        .ok_or_else(|| CliError::Usage("--sigma2 is required (no sigma in the data sidecar)".into()))
}

pub fn run_denoise(args: &DenoiseArgs, sink: &mut Sink) -> Result<Vec<String>, CliError> {
    let data = NoisyDataset::load(&args.input).map_err(stage("reading input"))?;
    let truth = args
        .truth
        .as_ref()
        .map(|p| NoisyDataset::load(p).map_err(stage("reading truth")))
        .transpose()?;
    if let Some(t) = &truth {
        if t.positions() != data.positions() {
            return Err(CliError::Usage("truth positions differ from the input".into()));
        }
    }
    let mut iterative = None;
    let mut trace: Option<Vec<IterationRecord>> = None;
    let mut initial_reconstructed = None;
    let rec: Reconstruction = match args.mode {
        DenoiseMode::Ls => denoise_ls(&data, None).map_err(stage("least-squares fit"))?,
        DenoiseMode::LsVote => denoise_ls(&data, Some(args.k)).map_err(stage("least-squares fit"))?,
        DenoiseMode::DebiasVote => {
            let sigma2 = sigma2_for(args, &data)?;
            denoise_case3(&data, sigma2, args.k).map_err(stage("de-biased moment fit"))?
        }
        DenoiseMode::Iterative => {
            let init = match args.init {
                InitArg::Case1 => InitMode::Case1,
                InitArg::Case2 => InitMode::Case2,
                InitArg::Case3 => InitMode::Case3 {
                    sigma2: sigma2_for(args, &data)?,
                },
            };
            let config = IterativeConfig {
                constraints: parse_constraints(&args.constraints)?,
                init,
                vote_k: args.k,
                max_iter: args.max_iter,
                tol: args.tol,
            };
            let result = denoise_iterative(&data, &config).map_err(stage("iterative projection"))?;
            let proj = result.last_projection.as_ref();
            iterative = Some(IterativeSummary {
                converged: result.converged,
                iterations: result.iterations,
                active_constraints: proj
                    .map(|p| p.active.iter().map(|c| c.name().to_string()).collect())
                    .unwrap_or_default(),
                dropped_constraints: proj
                    .map(|p| p.dropped.iter().map(|c| c.name().to_string()).collect())
                    .unwrap_or_default(),
                constraint_residuals: proj.map(|p| p.constraint_residuals.clone()).unwrap_or_default(),
                initial_fit: (&result.initial.fit).into(),
            });
            initial_reconstructed = Some(result.initial.reconstructed.clone());
            trace = Some(result.trace);
            result.result
        }
    };

    let mut csv = String::from("x,f_obs,f_hat,eps_hat\n");
    for (((x, f), h), e) in data
        .positions()
        .iter()
        .zip(data.observed())
        .zip(&rec.reconstructed)
        .zip(&rec.noise_estimate)
    {
        writeln!(csv, "{},{},{},{}", num(*x), num(*f), num(*h), num(*e)).unwrap();
    }
    sink.write("reconstruction.csv", &csv)?;
    let rep = rec.fit.to_rep(Some(rec.index.clone())).map_err(stage("packaging fit"))?;
    let rep_json = quadrep::representation::Rep::Degree2(rep)
        .to_json()
        .map_err(stage("serialization"))?;
    sink.write("fit.json", &(rep_json + "\n"))?;

    let truth_summary = match &truth {
        Some(t) => {
            let scaled = data.rescaled_positions().map_err(stage("rescaling"))?;
            let (true_signs, _) =
                nearest_root_signs(&rec.fit, &scaled, t.observed()).map_err(stage("labelling truth"))?;
            Some(TruthSummary {
                rmse: rmse(&rec.reconstructed, t.observed()),
                initial_rmse: initial_reconstructed.as_ref().map(|r| rmse(r, t.observed())),
                mislabels: true_signs.iter().zip(&rec.signs).filter(|(a, b)| a != b).count(),
            })
        }
        None => None,
    };
    let n = data.len() as f64;
    let report = DenoiseReport {
        mode: args.mode,
        samples: data.len(),
        fit: (&rec.fit).into(),
        breakpoints: rec.index.breakpoints().to_vec(),
        noise_mean: rec.noise_estimate.iter().sum::<f64>() / n,
        noise_x_correlation: correlation(data.positions(), &rec.noise_estimate),
        vertex_samples: rec.vertex.len(),
        undefined_labels: rec.undefined.len(),
        vote: rec.vote.clone(),
        iterative,
        truth: truth_summary,
    };
    sink.write("report.json", &pretty(&report)?)?;
    if args.output.trace {
        if let Some(t) = &trace {
            sink.write("trace.json", &pretty(t)?)?;
        }
    }

    let [b0, b1, c0, c1] = rec.fit.raw;
    let mut summary = vec![format!(
        "b = {} + {} x, c = {} + {} x; breakpoints {:?}",
        num(b0),
        num(b1),
        num(c0),
        num(c1),
        report.breakpoints
    )];
    if let Some(it) = &report.iterative {
        summary.push(format!("converged: {} after {} iterations", it.converged, it.iterations));
    }
    if let Some(t) = &report.truth {
        summary.push(format!("rmse vs truth {} ({} mislabels)", num(t.rmse), t.mislabels));
    }
    if report.vertex_samples > 0 {
        summary.push(format!(
            "warning: {} samples had complex roots (vertex used)",
            report.vertex_samples
        ));
    }
    Ok(summary)
}

fn pretty<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Io(e.to_string()))
}
