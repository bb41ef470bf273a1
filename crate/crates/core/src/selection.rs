//! Adaptive column selection: greedy stream competition and rank-revealing
//! QR ranking.

use std::f64::consts::SQRT_2;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dictionary::{column_from_tag, ColumnTag, Dictionary, SampleGrid, Stream, DEFAULT_STREAM_CAP};
use crate::error::{Error, Result};
use crate::linalg::{norm2, pivoted_qr, weighted_residual, IncrementalLsq};
use crate::representation::{
    package_manifold, Degree0Rep, Degree1Rep, PolyCoeffs, Provenance, Rep,
};

/// Relative gap under which two candidate residuals count as equal.
pub const TIE_TOL: f64 = 1e-12;

pub const DEFAULT_RRQR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Columns per candidate draw: 1, 3 or 5.
    pub batch_size: usize,
    /// Stop once the fit residual is at or below this (0 disables).
    pub target_residual: f64,
    pub max_terms: Option<usize>,
    /// Highest Legendre degree in every stream.
    pub stream_cap: usize,
    pub rng_seed: u64,
    /// 0: `f ≈ sum c_n L_n`; 1: rational `c / b`; 2: quadratic manifold.
    pub degree: u8,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            batch_size: 1,
            target_residual: 1e-10,
            max_terms: None,
            stream_cap: DEFAULT_STREAM_CAP,
            rng_seed: 0,
            degree: 2,
        }
    }
}

impl SelectionConfig {
    fn validate(&self) -> Result<()> {
        if ![1, 3, 5].contains(&self.batch_size) {
            return Err(Error::InvalidArgument(format!(
                "batch size must be 1, 3 or 5, got {}",
                self.batch_size
            )));
        }
        if self.stream_cap < 1 {
            return Err(Error::InvalidArgument("stream cap must be at least 1".into()));
        }
        if self.degree > 2 {
            return Err(Error::InvalidArgument(format!("unsupported degree {}", self.degree)));
        }
        if !(self.target_residual > 0.0) && self.max_terms.is_none() {
            return Err(Error::InvalidArgument(
                "need a positive target residual or a term limit".into(),
            ));
        }
        if self.max_terms == Some(0) {
            return Err(Error::InvalidArgument("max_terms must be positive".into()));
        }
        Ok(())
    }

    fn streams(&self) -> &'static [Stream] {
        match self.degree {
            0 => &[Stream::S1],
            1 => &[Stream::S1, Stream::S2],
            _ => &Stream::ALL,
        }
    }

    fn first_degree(&self, stream: Stream) -> usize {
        if self.degree == 1 && stream == Stream::S2 {
            1
        } else {
            stream.first_degree()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub stream: Stream,
    pub tags: Vec<ColumnTag>,
    /// Residual after tentatively appending the block; `None` when every
    /// column was dependent.
    pub residual: Option<f64>,
    /// Columns of the block rejected as numerically dependent.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dependent: Vec<ColumnTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub candidates: Vec<CandidateOutcome>,
    pub chosen_stream: Stream,
    pub chosen: Vec<ColumnTag>,
    /// Number of streams tied for the best residual (a seeded draw decided
    /// when above one).
    pub tied: usize,
    pub residual_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub id: String,
    pub config: SelectionConfig,
    pub initial_residual: f64,
    pub steps: Vec<TraceStep>,
    pub final_residual: f64,
    pub rng_seed: u64,
    pub target_reached: bool,
    /// Every stream ran out of columns before the stopping rule was met.
    pub exhausted: bool,
}

impl SelectionTrace {
    /// Selected columns in selection order.
    pub fn selected(&self) -> Vec<ColumnTag> {
        self.steps.iter().flat_map(|s| s.chosen.iter().copied()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    pub rep: Rep,
    pub trace: SelectionTrace,
    /// Nodes without a real root during index assignment (degree 2 only).
    pub undefined_index_nodes: Vec<usize>,
}

/// Column actually used by the selection for `tag`.
fn selection_column(grid: &SampleGrid, tag: ColumnTag, degree: u8) -> Vec<f64> {
    let mut col = column_from_tag(grid, tag);
    if degree == 1 && tag.stream == Stream::S2 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
    col
}

fn target(grid: &SampleGrid, degree: u8) -> Vec<f64> {
    if degree == 2 {
        column_from_tag(grid, ColumnTag::new(Stream::S3, 0))
    } else {
        grid.values().to_vec()
    }
}

struct Trial {
    builder: IncrementalLsq,
    accepted: Vec<(ColumnTag, f64)>,
    outcome: CandidateOutcome,
}

/// Greedy stream competition. Each step draws the next unused block from
/// every stream, normalizes its columns in the weighted norm, appends it
/// tentatively and keeps the stream with the smallest residual.
pub fn greedy_select(grid: &SampleGrid, config: &SelectionConfig) -> Result<GreedyResult> {
    config.validate()?;
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let y = target(grid, config.degree);
    let mut builder = IncrementalLsq::new(&y, grid.weights())?;
    let initial_residual = builder.residual_norm();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let streams = config.streams();
    let mut cursor: Vec<usize> = streams.iter().map(|&s| config.first_degree(s)).collect();
    let max_terms = config.max_terms.unwrap_or(usize::MAX).min(grid.len());

    // (tag, weighted norm) of every accepted column, in append order
    let mut chosen: Vec<(ColumnTag, f64)> = Vec::new();
    let mut steps = Vec::new();
    let mut exhausted = false;
    let reached = |r: f64| config.target_residual > 0.0 && r <= config.target_residual;

    while chosen.len() < max_terms && !reached(builder.residual_norm()) {
        let room = (max_terms - chosen.len()).min(config.batch_size);
        let mut trials: Vec<(usize, Trial)> = Vec::new();
        for (si, &stream) in streams.iter().enumerate() {
            if cursor[si] > config.stream_cap {
                continue;
            }
            let last = (cursor[si] + room - 1).min(config.stream_cap);
            let tags: Vec<ColumnTag> =
                (cursor[si]..=last).map(|d| ColumnTag::new(stream, d)).collect();
            let mut trial = Trial {
                builder: builder.clone(),
                accepted: Vec::new(),
                outcome: CandidateOutcome {
                    stream,
                    tags: tags.clone(),
                    residual: None,
                    dependent: Vec::new(),
                },
            };
            for &tag in &tags {
                let col = selection_column(grid, tag, config.degree);
                let wn = norm2(&col.iter().zip(&sw).map(|(c, s)| c * s).collect::<Vec<_>>());
                let unit: Vec<f64> = col.iter().map(|c| c / wn).collect();
                if wn > 0.0 && trial.builder.append_column(&unit).is_ok() {
                    trial.accepted.push((tag, wn));
                } else {
                    trial.outcome.dependent.push(tag);
                }
            }
            if !trial.accepted.is_empty() {
                trial.outcome.residual = Some(trial.builder.residual_norm());
            }
            trials.push((si, trial));
        }
        if trials.is_empty() {
            exhausted = true;
            break;
        }
        // Blocks that were entirely dependent are consumed: they can never
        // become independent of a growing span.
        for (si, trial) in &trials {
            if trial.outcome.residual.is_none() {
                cursor[*si] += trial.outcome.tags.len();
            }
        }
        let best = trials
            .iter()
            .filter_map(|(_, t)| t.outcome.residual)
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            continue;
        }
        let tied: Vec<usize> = trials
            .iter()
            .enumerate()
            .filter(|(_, (_, t))| {
                t.outcome
                    .residual
                    .is_some_and(|r| r - best <= TIE_TOL * best)
            })
            .map(|(k, _)| k)
            .collect();
        let pick = if tied.len() > 1 {
            tied[uniform_index(&mut rng, tied.len())]
        } else {
            tied[0]
        };
        let candidates = trials.iter().map(|(_, t)| t.outcome.clone()).collect();
        let (si, trial) = trials.swap_remove(pick);
        cursor[si] += trial.outcome.tags.len();
        builder = trial.builder;
        chosen.extend(trial.accepted.iter().copied());
        steps.push(TraceStep {
            step: steps.len(),
            candidates,
            chosen_stream: streams[si],
            chosen: trial.accepted.iter().map(|(t, _)| *t).collect(),
            tied: tied.len(),
            residual_after: builder.residual_norm(),
        });
    }

    let final_residual = builder.residual_norm();
    let target_reached = reached(final_residual);
    if !target_reached && chosen.len() < max_terms {
        exhausted = true;
    }
    let tags: Vec<ColumnTag> = chosen.iter().map(|(t, _)| *t).collect();
    let coeffs: Vec<f64> = builder
        .coefficients()
        .iter()
        .zip(&chosen)
        .map(|(c, (_, wn))| c / wn)
        .collect();
    let id = format!(
        "greedy-d{}-b{}-cap{}-seed{}-k{}",
        config.degree,
        config.batch_size,
        config.stream_cap,
        config.rng_seed,
        tags.len()
    );
    let provenance = Provenance::Greedy {
        trace_id: id.clone(),
        terms: tags.len(),
    };
    // residual of the mapped-back coefficients, evaluated directly
    let cols: Vec<Vec<f64>> = tags
        .iter()
        .map(|&t| selection_column(grid, t, config.degree))
        .collect();
    let fit_residual = if cols.is_empty() {
        initial_residual
    } else {
        let v = crate::linalg::DenseMatrix::from_columns(&cols)?;
        weighted_residual(&v, &coeffs, &y, &sw)
    };

    let (rep, undefined_index_nodes) =
        assemble_rep(grid, config.degree, &tags, &coeffs, fit_residual, provenance)?;
    Ok(GreedyResult {
        rep,
        trace: SelectionTrace {
            id,
            config: config.clone(),
            initial_residual,
            steps,
            final_residual,
            rng_seed: config.rng_seed,
            target_reached,
            exhausted,
        },
        undefined_index_nodes,
    })
}

/// Uniform integer in `0..n` from the top bits of one draw.
fn uniform_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    ((u * n as f64) as usize).min(n - 1)
}

fn assemble_rep(
    grid: &SampleGrid,
    degree: u8,
    tags: &[ColumnTag],
    coeffs: &[f64],
    fit_residual: f64,
    provenance: Provenance,
) -> Result<(Rep, Vec<usize>)> {
    let domain = grid.domain();
    let collect = |stream: Stream, len: usize| {
        let mut out = vec![0.0; len];
        for (t, &c) in tags.iter().zip(coeffs) {
            if t.stream == stream {
                out[t.degree] += c;
            }
        }
        out
    };
    let max_deg = |stream: Stream| {
        tags.iter()
            .filter(|t| t.stream == stream)
            .map(|t| t.degree + 1)
            .max()
            .unwrap_or(1)
    };
    match degree {
        0 => Ok((
            Rep::Degree0(Degree0Rep {
                coeffs: PolyCoeffs::legendre(collect(Stream::S1, max_deg(Stream::S1)), domain)?,
                fit_residual,
                provenance,
            }),
            Vec::new(),
        )),
        1 => {
            let numerator = PolyCoeffs::legendre(collect(Stream::S1, max_deg(Stream::S1)), domain)?;
            let mut den = collect(Stream::S2, max_deg(Stream::S2));
            den[0] = SQRT_2;
            let denominator = PolyCoeffs::legendre(den, domain)?;
            Ok((
                Rep::Degree1(Degree1Rep::new(numerator, denominator, fit_residual, provenance)?),
                Vec::new(),
            ))
        }
        _ => {
            let (rep, undefined) = package_manifold(grid, tags, coeffs, fit_residual, provenance)?;
            Ok((Rep::Degree2(rep), undefined))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub columns: usize,
    /// Pivots with `|R_kk| >= tol |R_11|`.
    pub numerical_rank: usize,
    /// Pivots actually used (numerical rank, optionally capped).
    pub selected: Vec<ColumnTag>,
    pub diag: Vec<f64>,
    pub tol: f64,
    pub fit_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrqrResult {
    pub rep: Rep,
    pub report: RankReport,
    pub undefined_index_nodes: Vec<usize>,
}

/// Degree-2 fit on the leading pivots of a column-pivoted QR of the full
/// weighted dictionary `W^{1/2}[S1, S2, S3]` capped at degree `stream_cap`.
/// `max_terms` further limits the number of pivots kept.
pub fn rrqr_select(
    grid: &SampleGrid,
    stream_cap: usize,
    truncate_tol: f64,
    max_terms: Option<usize>,
) -> Result<RrqrResult> {
    if stream_cap < 1 {
        return Err(Error::InvalidArgument("stream cap must be at least 1".into()));
    }
    let dict = Dictionary::with_cap(grid, stream_cap)?;
    let sw: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let a = dict.columns().scale_rows(&sw);
    let y: Vec<f64> = dict.target().iter().zip(&sw).map(|(t, s)| t * s).collect();
    let qr = pivoted_qr(&a)?;
    let numerical_rank = qr.numerical_rank(truncate_tol);
    let rank = max_terms.map_or(numerical_rank, |m| m.min(numerical_rank));
    if rank == 0 {
        return Err(Error::RankDeficient {
            rank: 0,
            cols: dict.len(),
        });
    }
    let coeffs = qr.solve_truncated(&y, rank);
    let fit_residual = weighted_residual(dict.columns(), &coeffs, dict.target(), &sw);
    let selected: Vec<ColumnTag> = qr.permutation()[..rank]
        .iter()
        .map(|&j| dict.tags()[j])
        .collect();
    let sel_coeffs: Vec<f64> = qr.permutation()[..rank].iter().map(|&j| coeffs[j]).collect();
    let provenance = Provenance::Rrqr {
        cap: stream_cap,
        tol: truncate_tol,
        terms: rank,
    };
    let (rep, undefined) = package_manifold(grid, &selected, &sel_coeffs, fit_residual, provenance)?;
    Ok(RrqrResult {
        rep: Rep::Degree2(rep),
        report: RankReport {
            columns: dict.len(),
            numerical_rank,
            selected,
            diag: qr.diag_magnitudes().to_vec(),
            tol: truncate_tol,
            fit_residual,
        },
        undefined_index_nodes: undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::BuiltinFunction;

    fn grid(f: BuiltinFunction, m: usize) -> SampleGrid {
        SampleGrid::build(|x| f.eval(x), f.domain(), m).unwrap()
    }

    #[test]
    fn config_validation() {
        let g = grid(BuiltinFunction::Sigmoid60, 50);
        let bad = SelectionConfig {
            batch_size: 2,
            ..Default::default()
        };
        assert!(greedy_select(&g, &bad).is_err());
        let bad = SelectionConfig {
            target_residual: 0.0,
            max_terms: None,
            ..Default::default()
        };
        assert!(greedy_select(&g, &bad).is_err());
    }

    #[test]
    fn residuals_are_monotone_and_tags_unique() {
        let g = grid(BuiltinFunction::Sigmoid60, 400);
        let cfg = SelectionConfig {
            max_terms: Some(20),
            stream_cap: 30,
            batch_size: 3,
            target_residual: 0.0,
            ..Default::default()
        };
        let res = greedy_select(&g, &cfg).unwrap();
        let mut prev = res.trace.initial_residual;
        for s in &res.trace.steps {
            assert!(s.residual_after <= prev + 1e-13);
            prev = s.residual_after;
        }
        let tags = res.trace.selected();
        let mut sorted = tags.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), tags.len());
        assert_eq!(tags.len(), 20);
    }

    #[test]
    fn exhaustion_is_flagged() {
        let g = grid(BuiltinFunction::Sigmoid60, 100);
        let cfg = SelectionConfig {
            stream_cap: 1,
            target_residual: 1e-300,
            ..Default::default()
        };
        let res = greedy_select(&g, &cfg).unwrap();
        assert!(res.trace.exhausted);
        assert!(!res.trace.target_reached);
    }

    #[test]
    fn rrqr_on_polynomial() {
        let g = SampleGrid::build(|x| x * x * x - 0.5 * x, (-1.0, 1.0), 60).unwrap();
        let res = rrqr_select(&g, 10, DEFAULT_RRQR_TOL, None).unwrap();
        assert!(res.report.fit_residual < 1e-12);
        assert!(res.report.numerical_rank < res.report.columns);
    }
}
