//! Degree-0, degree-1 and degree-2 representations: types, evaluation,
//! serialization and exact piecewise composition. Fitting lives in [`fit`].

mod fit;
mod index;
mod poly;
mod quadratic;

use serde::{Deserialize, Serialize};

use crate::dictionary::{AffineMap, SampleGrid};
use crate::error::{Error, Result};

pub use fit::{
    fit_degree0, fit_degree1, fit_degree2_uniform, package_manifold, Degeneracy, Degree2Fit,
};
pub use index::IndexFunction;
pub use poly::{Basis, PolyCoeffs, MAX_CONVERT_DEGREE};
pub use quadratic::{discriminant_tolerance, solve_quadratic, QuadraticRoots, A_DEGENERACY_TOL};

/// Denominator magnitude below which a degree-1 evaluation is a pole.
pub const POLE_TOL: f64 = 1e-13;

/// Probe count for the `max|a|` reference used by the degeneracy test.
const A_SCALE_PROBES: usize = 257;

/// How a representation was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Provenance {
    Projection {
        #[serde(rename = "N")]
        n: usize,
    },
    Rational {
        #[serde(rename = "N0")]
        n0: usize,
        #[serde(rename = "N1")]
        n1: usize,
    },
    Uniform {
        #[serde(rename = "N0")]
        n0: usize,
        #[serde(rename = "N1")]
        n1: usize,
        #[serde(rename = "N2")]
        n2: usize,
    },
    Greedy {
        trace_id: String,
        terms: usize,
    },
    Rrqr {
        cap: usize,
        tol: f64,
        terms: usize,
    },
    Composed,
    /// Coefficients estimated from (possibly noisy) tabulated data.
    Denoise {
        case: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degree0Rep {
    pub coeffs: PolyCoeffs,
    pub fit_residual: f64,
    pub provenance: Provenance,
}

/// `c(x) / b(x)` with the constant part of `b` fixed to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Degree1Rep {
    numerator: PolyCoeffs,
    denominator: PolyCoeffs,
    pub fit_residual: f64,
    pub provenance: Provenance,
}

impl Degree1Rep {
    pub fn new(
        numerator: PolyCoeffs,
        denominator: PolyCoeffs,
        fit_residual: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if numerator.domain != denominator.domain {
            return Err(Error::InvalidArgument("numerator/denominator domains differ".into()));
        }
        if denominator.constant_term() != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "denominator constant term must be 1, got {}",
                denominator.constant_term()
            )));
        }
        Ok(Self {
            numerator,
            denominator,
            fit_residual,
            provenance,
        })
    }

    pub fn numerator(&self) -> &PolyCoeffs {
        &self.numerator
    }

    pub fn denominator(&self) -> &PolyCoeffs {
        &self.denominator
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_in_domain(self.numerator.domain, x)?;
        let den = self.denominator.eval(x);
        if den.abs() <= POLE_TOL {
            return Err(Error::Pole {
                x,
                denominator: den,
            });
        }
        Ok(self.numerator.eval(x) / den)
    }
}

/// Quadratic manifold `a f² - b f - c = 0` plus the branch selector.
#[derive(Debug, Clone, PartialEq)]
pub struct Degree2Rep {
    a: PolyCoeffs,
    b: PolyCoeffs,
    c: PolyCoeffs,
    index: Option<IndexFunction>,
    pub fit_residual: f64,
    pub provenance: Provenance,
    a_scale: f64,
}

impl Degree2Rep {
    /// `b` and `c` are re-expressed in the basis of `a`.
    pub fn new(
        a: PolyCoeffs,
        b: PolyCoeffs,
        c: PolyCoeffs,
        index: Option<IndexFunction>,
        fit_residual: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if a.domain != b.domain || a.domain != c.domain {
            return Err(Error::InvalidArgument("a, b, c must share a domain".into()));
        }
        let b = b.convert(a.basis)?;
        let c = c.convert(a.basis)?;
        if let Some(idx) = &index {
            idx.check_domain(a.domain)?;
        }
        let map = a.map();
        let a_scale = (0..A_SCALE_PROBES)
            .map(|i| {
                let t = -1.0 + 2.0 * i as f64 / (A_SCALE_PROBES - 1) as f64;
                a.eval(map.to_domain(t)).abs()
            })
            .fold(0.0, f64::max);
        Ok(Self {
            a,
            b,
            c,
            index,
            fit_residual,
            provenance,
            a_scale,
        })
    }

    pub fn a(&self) -> &PolyCoeffs {
        &self.a
    }

    pub fn b(&self) -> &PolyCoeffs {
        &self.b
    }

    pub fn c(&self) -> &PolyCoeffs {
        &self.c
    }

    pub fn index(&self) -> Option<&IndexFunction> {
        self.index.as_ref()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.a.domain
    }

    /// `max|a|` on a uniform probe set; reference for the degeneracy test.
    pub fn a_scale(&self) -> f64 {
        self.a_scale
    }

    pub fn with_index(mut self, index: IndexFunction) -> Result<Self> {
        index.check_domain(self.domain())?;
        self.index = Some(index);
        Ok(self)
    }

    /// Same manifold with all coefficients reported in `basis`.
    pub fn in_basis(&self, basis: Basis) -> Result<Self> {
        Ok(Self {
            a: self.a.convert(basis)?,
            b: self.b.convert(basis)?,
            c: self.c.convert(basis)?,
            ..self.clone()
        })
    }

    /// Residual `a r² - b r - c` of the manifold at `(x, r)`.
    pub fn manifold_residual(&self, x: f64, r: f64) -> f64 {
        self.a.eval(x) * r * r - self.b.eval(x) * r - self.c.eval(x)
    }

    /// Magnitude reference `|a| r² + |b r| + |c|` for the residual above.
    pub fn manifold_scale(&self, x: f64, r: f64) -> f64 {
        self.a.eval(x).abs() * r * r + (self.b.eval(x) * r).abs() + self.c.eval(x).abs()
    }

    pub fn roots_at(&self, x: f64) -> Result<QuadraticRoots> {
        check_in_domain(self.domain(), x)?;
        solve_quadratic(
            self.a.eval(x),
            self.b.eval(x),
            self.c.eval(x),
            self.a_scale,
            x,
        )
    }

    pub fn eval_with_sign(&self, x: f64, zeta: i8) -> Result<f64> {
        Ok(self.roots_at(x)?.select(zeta))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let index = self
            .index
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("index function not assigned".into()))?;
        self.eval_with_sign(x, index.sign_at(x))
    }
}

/// Any of the three representation degrees.
#[derive(Debug, Clone, PartialEq)]
pub enum Rep {
    Degree0(Degree0Rep),
    Degree1(Degree1Rep),
    Degree2(Degree2Rep),
}

impl From<Degree0Rep> for Rep {
    fn from(r: Degree0Rep) -> Self {
        Rep::Degree0(r)
    }
}

impl From<Degree1Rep> for Rep {
    fn from(r: Degree1Rep) -> Self {
        Rep::Degree1(r)
    }
}

impl From<Degree2Rep> for Rep {
    fn from(r: Degree2Rep) -> Self {
        Rep::Degree2(r)
    }
}

fn check_in_domain(domain: (f64, f64), x: f64) -> Result<()> {
    let map = AffineMap {
        lo: domain.0,
        hi: domain.1,
    };
    if x.is_finite() && map.contains(x) {
        Ok(())
    } else {
        Err(Error::Domain { x })
    }
}

impl Rep {
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Rep::Degree0(r) => r.coeffs.domain,
            Rep::Degree1(r) => r.numerator.domain,
            Rep::Degree2(r) => r.domain(),
        }
    }

    pub fn degree_label(&self) -> &'static str {
        match self {
            Rep::Degree0(_) => "degree0",
            Rep::Degree1(_) => "degree1",
            Rep::Degree2(_) => "degree2",
        }
    }

    pub fn fit_residual(&self) -> f64 {
        match self {
            Rep::Degree0(r) => r.fit_residual,
            Rep::Degree1(r) => r.fit_residual,
            Rep::Degree2(r) => r.fit_residual,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        match self {
            Rep::Degree0(r) => {
                check_in_domain(r.coeffs.domain, x)?;
                Ok(r.coeffs.eval(x))
            }
            Rep::Degree1(r) => r.eval(x),
            Rep::Degree2(r) => r.eval(x),
        }
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<Result<f64>> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RepDocument::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: RepDocument = serde_json::from_str(s)?;
        doc.into_rep()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RepKind {
    Degree0,
    Degree1,
    Degree2,
}

/// On-disk form shared by all representation types.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RepDocument {
    #[serde(rename = "type")]
    kind: RepKind,
    domain: [f64; 2],
    basis: Basis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
    c: Vec<f64>,
    #[serde(default)]
    index: Option<IndexFunction>,
    fit_residual: f64,
    provenance: Provenance,
}

impl From<&Rep> for RepDocument {
    fn from(rep: &Rep) -> Self {
        let (lo, hi) = rep.domain();
        match rep {
            Rep::Degree0(r) => RepDocument {
                kind: RepKind::Degree0,
                domain: [lo, hi],
                basis: r.coeffs.basis,
                a: None,
                b: None,
                c: r.coeffs.coeffs.clone(),
                index: None,
                fit_residual: r.fit_residual,
                provenance: r.provenance.clone(),
            },
            Rep::Degree1(r) => RepDocument {
                kind: RepKind::Degree1,
                domain: [lo, hi],
                basis: r.numerator.basis,
                a: None,
                b: Some(r.denominator.coeffs.clone()),
                c: r.numerator.coeffs.clone(),
                index: None,
                fit_residual: r.fit_residual,
                provenance: r.provenance.clone(),
            },
            Rep::Degree2(r) => RepDocument {
                kind: RepKind::Degree2,
                domain: [lo, hi],
                basis: r.a.basis,
                a: Some(r.a.coeffs.clone()),
                b: Some(r.b.coeffs.clone()),
                c: r.c.coeffs.clone(),
                index: r.index.clone(),
                fit_residual: r.fit_residual,
                provenance: r.provenance.clone(),
            },
        }
    }
}

impl RepDocument {
    fn into_rep(self) -> Result<Rep> {
        let domain = (self.domain[0], self.domain[1]);
        let poly = |coeffs: Vec<f64>| PolyCoeffs::new(self.basis, coeffs, domain);
        let missing = |name: &str| Error::Format(format!("{name} coefficients missing"));
        match self.kind {
            RepKind::Degree0 => Ok(Rep::Degree0(Degree0Rep {
                coeffs: poly(self.c)?,
                fit_residual: self.fit_residual,
                provenance: self.provenance,
            })),
            RepKind::Degree1 => {
                let b = self.b.ok_or_else(|| missing("b"))?;
                Ok(Rep::Degree1(Degree1Rep::new(
                    poly(self.c)?,
                    poly(b)?,
                    self.fit_residual,
                    self.provenance,
                )?))
            }
            RepKind::Degree2 => {
                let a = self.a.ok_or_else(|| missing("a"))?;
                let b = self.b.ok_or_else(|| missing("b"))?;
                Ok(Rep::Degree2(Degree2Rep::new(
                    poly(a)?,
                    poly(b)?,
                    poly(self.c)?,
                    self.index,
                    self.fit_residual,
                    self.provenance,
                )?))
            }
        }
    }
}

/// Outcome of nearest-root index assignment on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexAssignment {
    pub index: IndexFunction,
    /// Per-node signs, aligned with the grid.
    pub signs: Vec<i8>,
    /// Nodes where the roots were complex or the equation degenerate; these
    /// inherit the sign of the previous node (or `+1`).
    pub undefined: Vec<usize>,
}

/// Pick, at every node, the root nearest to the sample value (ties to `+1`).
pub fn assign_index(rep: &Degree2Rep, grid: &SampleGrid) -> Result<IndexAssignment> {
    let (lo, hi) = grid.domain();
    let map = AffineMap {
        lo: rep.domain().0,
        hi: rep.domain().1,
    };
    if !(map.contains(lo) && map.contains(hi)) {
        return Err(Error::InvalidArgument(format!(
            "grid domain {:?} is not inside the representation domain {:?}",
            grid.domain(),
            rep.domain()
        )));
    }
    let mut signs = Vec::with_capacity(grid.len());
    let mut undefined = Vec::new();
    for (i, (&x, &f)) in grid.mapped_nodes().iter().zip(grid.values()).enumerate() {
        let s = match rep.roots_at(x) {
            Ok(r) => {
                if (r.plus - f).abs() <= (r.minus - f).abs() {
                    1
                } else {
                    -1
                }
            }
            Err(_) => {
                undefined.push(i);
                signs.last().copied().unwrap_or(1)
            }
        };
        signs.push(s);
    }
    let index = IndexFunction::from_dense(grid.mapped_nodes(), &signs)?;
    Ok(IndexAssignment {
        index,
        signs,
        undefined,
    })
}

/// Manifold `(f - p₋)(f - p₊) = 0`, i.e. `a = 1`, `b = p₋ + p₊`,
/// `c = -p₋ p₊`, in the basis of `p_minus`. With `truncate_tol > 0`, trailing
/// Legendre coefficients of `b` and `c` below that relative size are
/// dropped. The index is left unassigned.
pub fn compose_piecewise_manifold(
    p_minus: &PolyCoeffs,
    p_plus: &PolyCoeffs,
    truncate_tol: f64,
) -> Result<Degree2Rep> {
    let b = p_minus.add(p_plus)?.truncated(truncate_tol)?;
    let c = p_minus.mul(p_plus)?.scaled(-1.0).truncated(truncate_tol)?;
    let a = PolyCoeffs::constant(1.0, p_minus.basis, p_minus.domain)?;
    Degree2Rep::new(a, b, c, None, 0.0, Provenance::Composed)
}

/// Weighted L2 distance between a representation and grid samples.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Report {
    /// `+∞` when any node failed to evaluate.
    pub value: f64,
    /// Norm of the reference samples on the same grid.
    pub reference_norm: f64,
    pub failures: Vec<(usize, Error)>,
}

impl L2Report {
    pub fn relative(&self) -> f64 {
        self.value / self.reference_norm
    }
}

pub fn residual_l2(rep: &Rep, grid: &SampleGrid) -> L2Report {
    let mut diff = Vec::with_capacity(grid.len());
    let mut failures = Vec::new();
    for (i, (&x, &f)) in grid.mapped_nodes().iter().zip(grid.values()).enumerate() {
        match rep.eval(x) {
            Ok(v) => diff.push(v - f),
            Err(e) => failures.push((i, e)),
        }
    }
    let reference_norm = grid.l2_norm(grid.values());
    let value = if failures.is_empty() {
        grid.l2_norm(&diff)
    } else {
        f64::INFINITY
    };
    L2Report {
        value,
        reference_norm,
        failures,
    }
}

/// `residual_l2` against a reference function sampled on `m` Gauss nodes of
/// the representation's domain.
pub fn residual_l2_fn<F: Fn(f64) -> f64>(rep: &Rep, f: F, m: usize) -> Result<L2Report> {
    let grid = SampleGrid::build(f, rep.domain(), m)?;
    Ok(residual_l2(rep, &grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[f64]) -> PolyCoeffs {
        PolyCoeffs::monomial(c.to_vec(), (0.0, 400.0)).unwrap()
    }

    #[test]
    fn composed_step_manifold() {
        let rep = compose_piecewise_manifold(&poly(&[25.0]), &poly(&[255.0]), 0.0).unwrap();
        assert_eq!(rep.b().coeffs, vec![280.0]);
        assert_eq!(rep.c().coeffs, vec![-6375.0]);
        assert!(rep.eval(100.0).is_err());
        let rep = rep.with_index(IndexFunction::new(vec![140.5], -1).unwrap()).unwrap();
        assert!((rep.eval(100.0).unwrap() - 25.0).abs() < 1e-12);
        assert!((rep.eval(300.0).unwrap() - 255.0).abs() < 1e-12);
        assert!(matches!(rep.eval(401.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let a = PolyCoeffs::legendre(vec![2f64.sqrt(), 0.1 / 3.0], (-1.0, 1.0)).unwrap();
        let b = PolyCoeffs::legendre(vec![1.0 / 7.0, -2.0 / 3.0, 1e-300], (-1.0, 1.0)).unwrap();
        let c = PolyCoeffs::legendre(vec![std::f64::consts::PI], (-1.0, 1.0)).unwrap();
        let idx = IndexFunction::new(vec![-0.25, 0.1], 1).unwrap();
        let rep: Rep = Degree2Rep::new(
            a,
            b,
            c,
            Some(idx),
            1.2345e-11,
            Provenance::Uniform { n0: 0, n1: 2, n2: 1 },
        )
        .unwrap()
        .into();
        let text = rep.to_json().unwrap();
        assert!(text.contains("\"N2\": 1"));
        let back = Rep::from_json(&text).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn degree1_gauge_is_enforced() {
        let num = PolyCoeffs::legendre(vec![1.0], (-1.0, 1.0)).unwrap();
        let bad = PolyCoeffs::legendre(vec![1.0, 0.5], (-1.0, 1.0)).unwrap();
        assert!(Degree1Rep::new(num.clone(), bad, 0.0, Provenance::Composed).is_err());
        let den = PolyCoeffs::legendre(vec![2f64.sqrt(), 0.0], (-1.0, 1.0)).unwrap();
        let r = Degree1Rep::new(num, den, 0.0, Provenance::Composed).unwrap();
        assert!((r.eval(0.3).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn pole_is_reported() {
        // b(x) = 1 + x·sqrt(3/2)·... chosen to vanish at x = -1
        let num = PolyCoeffs::legendre(vec![1.0], (-1.0, 1.0)).unwrap();
        let den = PolyCoeffs::legendre(vec![2f64.sqrt(), (2.0f64 / 3.0).sqrt()], (-1.0, 1.0))
            .unwrap();
        let r = Degree1Rep::new(num, den, 0.0, Provenance::Composed).unwrap();
        assert!(matches!(r.eval(-1.0), Err(Error::Pole { .. })));
    }
}
