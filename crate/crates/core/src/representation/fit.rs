use std::f64::consts::SQRT_2;

use crate::dictionary::{column_from_tag, ColumnTag, Dictionary, DictionaryWarning, SampleGrid, Stream};
use crate::error::{Error, Result};
use crate::linalg::{pivoted_qr, weighted_lsq, weighted_residual, DenseMatrix, DEFAULT_RANK_TOL};
use crate::orthopoly::fill_legendre_row;

use super::{
    assign_index, Degree0Rep, Degree1Rep, Degree2Rep, PolyCoeffs, Provenance,
};

fn sqrt_weights(grid: &SampleGrid) -> Vec<f64> {
    grid.weights().iter().map(|w| w.sqrt()).collect()
}

fn check_size(grid: &SampleGrid, k: usize) -> Result<()> {
    if k > grid.len() {
        return Err(Error::InvalidArgument(format!(
            "{k} unknowns on a grid of {} samples",
            grid.len()
        )));
    }
    Ok(())
}

/// Projection onto `L_0..L_n`. On a quadrature grid the coefficients are
/// inner products; on tabulated data they come from least squares.
pub fn fit_degree0(grid: &SampleGrid, n: usize) -> Result<Degree0Rep> {
    check_size(grid, n + 1)?;
    let tags: Vec<ColumnTag> = (0..=n).map(|d| ColumnTag::new(Stream::S1, d)).collect();
    let cols: Vec<Vec<f64>> = tags.iter().map(|&t| column_from_tag(grid, t)).collect();
    let v = DenseMatrix::from_columns(&cols)?;
    let coeffs = if grid.quadrature_exact() {
        let mut c = vec![0.0; n + 1];
        let mut row = vec![0.0; n + 1];
        for ((&t, &w), &f) in grid
            .reference_nodes()
            .iter()
            .zip(grid.weights())
            .zip(grid.values())
        {
            fill_legendre_row(t, &mut row);
            for (ck, &l) in c.iter_mut().zip(&row) {
                *ck += w * f * l;
            }
        }
        c
    } else {
        weighted_lsq(&v, grid.values(), grid.weights())?.coeffs
    };
    let fit_residual = weighted_residual(&v, &coeffs, grid.values(), &sqrt_weights(grid));
    Ok(Degree0Rep {
        coeffs: PolyCoeffs::legendre(coeffs, grid.domain())?,
        fit_residual,
        provenance: Provenance::Projection { n },
    })
}

/// Rational fit `c / b` with `b = 1 + sum_{n=1}^{n1} beta_n L_n`: least
/// squares on `[L_0..L_{n0}, -f L_1..-f L_{n1}]` against `f`.
pub fn fit_degree1(grid: &SampleGrid, n0: usize, n1: usize) -> Result<Degree1Rep> {
    check_size(grid, n0 + n1 + 1)?;
    let mut cols: Vec<Vec<f64>> = (0..=n0)
        .map(|d| column_from_tag(grid, ColumnTag::new(Stream::S1, d)))
        .collect();
    for d in 1..=n1 {
        let mut col = column_from_tag(grid, ColumnTag::new(Stream::S2, d));
        col.iter_mut().for_each(|v| *v = -*v);
        cols.push(col);
    }
    let v = DenseMatrix::from_columns(&cols)?;
    let sol = weighted_lsq(&v, grid.values(), grid.weights())?;
    let numerator = PolyCoeffs::legendre(sol.coeffs[..=n0].to_vec(), grid.domain())?;
    let mut den = vec![SQRT_2];
    den.extend_from_slice(&sol.coeffs[n0 + 1..]);
    let denominator = PolyCoeffs::legendre(den, grid.domain())?;
    Degree1Rep::new(
        numerator,
        denominator,
        sol.residual_norm,
        Provenance::Rational { n0, n1 },
    )
}

/// Columns dropped from a rank-deficient uniform fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Degeneracy {
    pub rank: usize,
    pub dropped: Vec<ColumnTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degree2Fit {
    pub rep: Degree2Rep,
    pub degeneracy: Option<Degeneracy>,
    pub warnings: Vec<DictionaryWarning>,
    /// Grid nodes where no real root was available during index assignment.
    pub undefined_index_nodes: Vec<usize>,
}

/// Build `(a, b, c)` from dictionary coefficients.
///
/// The fit models `f² L_0 ≈ sum c_n L_n + sum b_n f L_n + sum a_n f² L_n`,
/// i.e. `a = L_0 - sum a_n L_n`. All three are scaled by `√2` so that the
/// constant part of `a` is exactly one. The index is assigned on `grid`.
pub fn package_manifold(
    grid: &SampleGrid,
    tags: &[ColumnTag],
    coeffs: &[f64],
    fit_residual: f64,
    provenance: Provenance,
) -> Result<(Degree2Rep, Vec<usize>)> {
    if tags.len() != coeffs.len() {
        return Err(Error::InvalidArgument("tag/coefficient count mismatch".into()));
    }
    let max_deg = |s: Stream| {
        tags.iter()
            .filter(|t| t.stream == s)
            .map(|t| t.degree)
            .max()
            .unwrap_or(0)
    };
    let mut a = vec![0.0; max_deg(Stream::S3) + 1];
    let mut b = vec![0.0; max_deg(Stream::S2) + 1];
    let mut c = vec![0.0; max_deg(Stream::S1) + 1];
    a[0] = SQRT_2;
    for (tag, &eta) in tags.iter().zip(coeffs) {
        let scaled = SQRT_2 * eta;
        match tag.stream {
            Stream::S1 => c[tag.degree] += scaled,
            Stream::S2 => b[tag.degree] += scaled,
            Stream::S3 => a[tag.degree] -= scaled,
        }
    }
    let domain = grid.domain();
    let rep = Degree2Rep::new(
        PolyCoeffs::legendre(a, domain)?,
        PolyCoeffs::legendre(b, domain)?,
        PolyCoeffs::legendre(c, domain)?,
        None,
        fit_residual,
        provenance,
    )?;
    let assignment = assign_index(&rep, grid)?;
    Ok((rep.with_index(assignment.index)?, assignment.undefined))
}

/// Least-squares manifold fit on the full uniform dictionary. A numerically
/// rank-deficient system is solved on the leading independent pivots and the
/// dropped columns are reported.
pub fn fit_degree2_uniform(grid: &SampleGrid, n0: usize, n1: usize, n2: usize) -> Result<Degree2Fit> {
    check_size(grid, n0 + n1 + n2 + 2)?;
    let dict = Dictionary::assemble(grid, n0, n1, n2)?;
    let sw = sqrt_weights(grid);
    let a = dict.columns().scale_rows(&sw);
    let y: Vec<f64> = dict.target().iter().zip(&sw).map(|(t, s)| t * s).collect();
    let qr = pivoted_qr(&a)?;
    let rank = qr.numerical_rank(DEFAULT_RANK_TOL);
    let coeffs = qr.solve_truncated(&y, rank);
    let degeneracy = (rank < dict.len()).then(|| Degeneracy {
        rank,
        dropped: qr.permutation()[rank..]
            .iter()
            .map(|&j| dict.tags()[j])
            .collect(),
    });
    let fit_residual = weighted_residual(dict.columns(), &coeffs, dict.target(), &sw);
    let (rep, undefined_index_nodes) = package_manifold(
        grid,
        dict.tags(),
        &coeffs,
        fit_residual,
        Provenance::Uniform { n0, n1, n2 },
    )?;
    Ok(Degree2Fit {
        rep,
        degeneracy,
        warnings: dict.warnings().to_vec(),
        undefined_index_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::BuiltinFunction;
    use crate::representation::{residual_l2, Rep};

    #[test]
    fn projection_recovers_l3() {
        let grid = SampleGrid::build(
            |x| crate::orthopoly::legendre_eval(3, x).unwrap(),
            (-1.0, 1.0),
            40,
        )
        .unwrap();
        let rep = fit_degree0(&grid, 5).unwrap();
        for (k, &c) in rep.coeffs.coeffs.iter().enumerate() {
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert!((c - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn relu_manifold() {
        let f = BuiltinFunction::Relu;
        let grid = SampleGrid::build(|x| f.eval(x), f.domain(), 200).unwrap();
        let fit = fit_degree2_uniform(&grid, 0, 1, 0).unwrap();
        let b = &fit.rep.b().coeffs;
        assert!(b[0].abs() < 1e-12);
        assert!((b[1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!(fit.rep.c().coeffs[0].abs() < 1e-12);
        assert!(residual_l2(&Rep::Degree2(fit.rep), &grid).value < 1e-12);
    }

    #[test]
    fn sign_manifold() {
        let grid = SampleGrid::build(|x| if x < 0.0 { -1.0 } else { 1.0 }, (-1.0, 1.0), 64).unwrap();
        let fit = fit_degree2_uniform(&grid, 0, 0, 0).unwrap();
        assert!((fit.rep.c().eval(0.3) - 1.0).abs() < 1e-12);
        assert!(fit.rep.b().eval(0.3).abs() < 1e-12);
        let rep = Rep::Degree2(fit.rep);
        assert_eq!(rep.eval(-0.5).unwrap(), -1.0);
        assert_eq!(rep.eval(0.5).unwrap(), 1.0);
    }

    #[test]
    fn degree1_without_denominator_terms_is_projection() {
        let f = BuiltinFunction::Sigmoid60;
        let grid = SampleGrid::build(|x| f.eval(x), f.domain(), 300).unwrap();
        let d0 = fit_degree0(&grid, 8).unwrap();
        let d1 = fit_degree1(&grid, 8, 0).unwrap();
        for (a, b) in d0.coeffs.coeffs.iter().zip(&d1.numerator().coeffs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_information_is_reported() {
        // f ≡ 1 makes the f-stream duplicate the plain Legendre stream.
        let grid = SampleGrid::build(|_| 1.0, (-1.0, 1.0), 32).unwrap();
        let fit = fit_degree2_uniform(&grid, 2, 2, 0).unwrap();
        let deg = fit.degeneracy.expect("rank deficient");
        assert_eq!(deg.rank, 3);
        assert_eq!(deg.dropped.len(), 3);
        assert!(fit.rep.fit_residual < 1e-13);
    }

    #[test]
    fn too_many_unknowns() {
        let grid = SampleGrid::build(|x| x, (-1.0, 1.0), 4).unwrap();
        assert!(fit_degree2_uniform(&grid, 2, 2, 2).is_err());
        assert!(fit_degree0(&grid, 4).is_err());
    }
}
