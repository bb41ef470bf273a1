//! Sample grids and the three candidate column streams
//! `S1 = [L_0..L_n]`, `S2 = f ⊙ S1`, `S3 = f² ⊙ [L_1..L_n]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::orthopoly::{fill_legendre_row, gauss_legendre, QuadratureRule};

/// Default stream length cap for adaptive selection.
pub const DEFAULT_STREAM_CAP: usize = 60;

/// Affine map between a physical interval and the reference interval [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub lo: f64,
    pub hi: f64,
}

impl AffineMap {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "degenerate domain [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn reference() -> Self {
        Self { lo: -1.0, hi: 1.0 }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn half_length(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    /// Physical `x` to reference `t`, clamped into [-1, 1] against rounding.
    pub fn to_reference(&self, x: f64) -> f64 {
        if self.lo == -1.0 && self.hi == 1.0 {
            return x.clamp(-1.0, 1.0);
        }
        ((2.0 * x - self.lo - self.hi) / (self.hi - self.lo)).clamp(-1.0, 1.0)
    }

    pub fn to_domain(&self, t: f64) -> f64 {
        if self.lo == -1.0 && self.hi == 1.0 {
            return t;
        }
        self.midpoint() + self.half_length() * t
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.hi - self.lo).max(1.0);
        x >= self.lo - slack && x <= self.hi + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// Gauss nodes and weights; inner products approximate integrals.
    Quadrature,
    /// Given sample positions with unit weights (plain sums).
    Tabulated,
}

/// Function samples on which every fit is carried out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    map: AffineMap,
    mode: GridMode,
    reference_nodes: Vec<f64>,
    mapped_nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
}

impl SampleGrid {
    /// Evaluate `f` at the `m` Gauss nodes mapped onto `domain`.
    pub fn build<F: Fn(f64) -> f64>(f: F, domain: (f64, f64), m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into()));
        }
        let rule = gauss_legendre(m)?;
        let map = AffineMap::new(domain.0, domain.1)?;
        let mapped: Vec<f64> = rule.nodes().iter().map(|&t| map.to_domain(t)).collect();
        let values: Vec<f64> = mapped.iter().map(|&x| f(x)).collect();
        Self::from_rule(&rule, map, values)
    }

    /// Samples already taken at the mapped nodes of `rule`.
    pub fn from_rule(rule: &QuadratureRule, map: AffineMap, values: Vec<f64>) -> Result<Self> {
        if values.len() != rule.order() {
            return Err(Error::InvalidArgument(format!(
                "{} samples for a rule of order {}",
                values.len(),
                rule.order()
            )));
        }
        check_finite(&values)?;
        let mapped_nodes = rule.nodes().iter().map(|&t| map.to_domain(t)).collect();
        Ok(Self {
            map,
            mode: GridMode::Quadrature,
            reference_nodes: rule.nodes().to_vec(),
            mapped_nodes,
            weights: rule.weights().to_vec(),
            values,
        })
    }

    /// Tabulated samples at arbitrary increasing positions. The domain
    /// defaults to `[min, max]` of the positions.
    pub fn tabulated(positions: &[f64], values: &[f64], domain: Option<(f64, f64)>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::InvalidArgument("positions/values length mismatch".into()));
        }
        if positions.len() < 2 {
            return Err(Error::InvalidArgument("a grid needs at least 2 nodes".into()));
        }
        check_finite(values)?;
        check_finite(positions)?;
        if !positions.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument("positions must be strictly increasing".into()));
        }
        let (lo, hi) = domain.unwrap_or((positions[0], positions[positions.len() - 1]));
        let map = AffineMap::new(lo, hi)?;
        if !positions.iter().all(|&x| map.contains(x)) {
            return Err(Error::InvalidArgument("positions fall outside the domain".into()));
        }
        Ok(Self {
            map,
            mode: GridMode::Tabulated,
            reference_nodes: positions.iter().map(|&x| map.to_reference(x)).collect(),
            mapped_nodes: positions.to_vec(),
            weights: vec![1.0; positions.len()],
            values: values.to_vec(),
        })
    }

    /// Same nodes and weights with different sample values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument("value count does not match grid".into()));
        }
        check_finite(&values)?;
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn map(&self) -> AffineMap {
        self.map
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.map.lo, self.map.hi)
    }

    pub fn reference_nodes(&self) -> &[f64] {
        &self.reference_nodes
    }

    pub fn mapped_nodes(&self) -> &[f64] {
        &self.mapped_nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether the weights integrate polynomials exactly (quadrature mode).
    pub fn quadrature_exact(&self) -> bool {
        self.mode == GridMode::Quadrature
    }

    /// Factor turning a weighted sum of squares into a squared L2 norm on the
    /// physical domain (the Jacobian of the affine map; 1 in tabulated mode).
    pub fn measure_scale(&self) -> f64 {
        match self.mode {
            GridMode::Quadrature => self.map.half_length(),
            GridMode::Tabulated => 1.0,
        }
    }

    /// `sqrt(sum w_i g_i^2)` scaled to the physical measure.
    pub fn l2_norm(&self, g: &[f64]) -> f64 {
        let s: f64 = g.iter().zip(&self.weights).map(|(v, w)| w * v * v).sum();
        (s * self.measure_scale()).sqrt()
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::Data { index }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    /// `L_n`
    S1,
    /// `f ⊙ L_n`
    S2,
    /// `f² ⊙ L_n`, `n >= 1`
    S3,
}

impl Stream {
    pub const ALL: [Stream; 3] = [Stream::S1, Stream::S2, Stream::S3];

    pub fn power(self) -> u32 {
        match self {
            Stream::S1 => 0,
            Stream::S2 => 1,
            Stream::S3 => 2,
        }
    }

    /// Lowest Legendre degree present in the stream.
    pub fn first_degree(self) -> usize {
        match self {
            Stream::S3 => 1,
            _ => 0,
        }
    }

    pub fn index(self) -> usize {
        self.power() as usize
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stream::S1 => f.write_str("S1"),
            Stream::S2 => f.write_str("S2"),
            Stream::S3 => f.write_str("S3"),
        }
    }
}

/// Provenance of a dictionary column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnTag {
    pub stream: Stream,
    pub degree: usize,
}

impl ColumnTag {
    pub fn new(stream: Stream, degree: usize) -> Self {
        Self { stream, degree }
    }
}

impl fmt::Display for ColumnTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.stream, self.degree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DictionaryWarning {
    /// `2 * max_degree > 2M - 1`: quadrature no longer integrates the Gram
    /// entries exactly.
    ExceedsExactness { max_degree: usize, order: usize },
    /// `f ≡ 0` makes the stream identically zero.
    DegenerateStream { stream: Stream },
}

/// Sampled candidate columns plus the regression target `f² ⊙ L_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    columns: DenseMatrix,
    tags: Vec<ColumnTag>,
    target: Vec<f64>,
    warnings: Vec<DictionaryWarning>,
}

/// Sampled value of the column `tag` at node `i`; the single code path for
/// both assembly and reconstruction from a tag.
fn column_entry(legendre: f64, f: f64, stream: Stream) -> f64 {
    match stream {
        Stream::S1 => legendre,
        Stream::S2 => legendre * f,
        Stream::S3 => legendre * (f * f),
    }
}

impl Dictionary {
    /// Columns `[L_0..L_{n0}] ∪ [f L_0..f L_{n1}] ∪ [f² L_1..f² L_{n2}]`.
    pub fn assemble(grid: &SampleGrid, n0: usize, n1: usize, n2: usize) -> Result<Self> {
        let m = grid.len();
        let mut tags = Vec::with_capacity(n0 + n1 + n2 + 2);
        tags.extend((0..=n0).map(|d| ColumnTag::new(Stream::S1, d)));
        tags.extend((0..=n1).map(|d| ColumnTag::new(Stream::S2, d)));
        tags.extend((1..=n2).map(|d| ColumnTag::new(Stream::S3, d)));
        let max_degree = n0.max(n1).max(n2);

        let mut columns = DenseMatrix::zeros(m, tags.len());
        let mut target = vec![0.0; m];
        let mut row = vec![0.0; max_degree + 1];
        for i in 0..m {
            fill_legendre_row(grid.reference_nodes()[i], &mut row);
            let f = grid.values()[i];
            for (j, tag) in tags.iter().enumerate() {
                columns[(i, j)] = column_entry(row[tag.degree], f, tag.stream);
            }
            target[i] = column_entry(row[0], f, Stream::S3);
        }

        let mut warnings = Vec::new();
        if grid.quadrature_exact() && 2 * max_degree > 2 * m - 1 {
            warnings.push(DictionaryWarning::ExceedsExactness {
                max_degree,
                order: m,
            });
        }
        if grid.values().iter().all(|&v| v == 0.0) {
            warnings.push(DictionaryWarning::DegenerateStream { stream: Stream::S2 });
            if n2 > 0 {
                warnings.push(DictionaryWarning::DegenerateStream { stream: Stream::S3 });
            }
        }
        Ok(Self {
            columns,
            tags,
            target,
            warnings,
        })
    }

    /// Same columns for all three streams capped at degree `cap`.
    pub fn with_cap(grid: &SampleGrid, cap: usize) -> Result<Self> {
        Self::assemble(grid, cap, cap, cap)
    }

    pub fn columns(&self) -> &DenseMatrix {
        &self.columns
    }

    pub fn tags(&self) -> &[ColumnTag] {
        &self.tags
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn warnings(&self) -> &[DictionaryWarning] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn position(&self, tag: ColumnTag) -> Option<usize> {
        self.tags.iter().position(|&t| t == tag)
    }

    pub fn column(&self, tag: ColumnTag) -> Option<&[f64]> {
        self.position(tag).map(|j| self.columns.col(j))
    }

    /// Number of columns available in `stream`.
    pub fn stream_len(&self, stream: Stream) -> usize {
        self.tags.iter().filter(|t| t.stream == stream).count()
    }

    /// The first `count` columns of `stream` in ascending degree.
    pub fn stream_view(&self, stream: Stream, count: usize) -> Result<Vec<(ColumnTag, &[f64])>> {
        let available = self.stream_len(stream);
        if count > available {
            return Err(Error::InvalidArgument(format!(
                "{count} columns requested from {stream}, {available} available"
            )));
        }
        Ok(self
            .tags
            .iter()
            .enumerate()
            .filter(|(_, t)| t.stream == stream)
            .take(count)
            .map(|(j, &t)| (t, self.columns.col(j)))
            .collect())
    }
}

/// Rebuild a column from its tag on `grid`.
pub fn column_from_tag(grid: &SampleGrid, tag: ColumnTag) -> Vec<f64> {
    let mut row = vec![0.0; tag.degree + 1];
    grid.reference_nodes()
        .iter()
        .zip(grid.values())
        .map(|(&t, &f)| {
            fill_legendre_row(t, &mut row);
            column_entry(row[tag.degree], f, tag.stream)
        })
        .collect()
}
