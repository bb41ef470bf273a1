//! Dense least squares through Householder QR.
//!
//! Normal equations are never formed: the candidate dictionaries are
//! ill-conditioned by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default rank tolerance relative to `|R_11|`.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Dependence threshold for incremental column appends.
pub const DEPENDENCE_TOL: f64 = 1e-13;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Build from equally long columns. Rejects ragged or non-finite input.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            if c.len() != rows {
                return Err(Error::InvalidArgument(format!(
                    "column {j} has length {} (expected {rows})",
                    c.len()
                )));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data { index: i });
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    /// Row-major convenience constructor.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut out = Self::zeros(n, m);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::InvalidArgument("ragged rows".into()));
            }
            for (j, &v) in r.iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![0.0; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, &a) in y.iter_mut().zip(self.col(j)) {
                *yi += a * xj;
            }
        }
        y
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        (0..self.cols).map(|j| dot(self.col(j), y)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let col = self.matvec(other.col(j));
            out.col_mut(j).copy_from_slice(&col);
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for j in 0..self.cols {
            for i in 0..self.rows {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Copy with every row `i` multiplied by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> DenseMatrix {
        assert_eq!(scale.len(), self.rows);
        let mut out = self.clone();
        for j in 0..self.cols {
            for (a, &s) in out.col_mut(j).iter_mut().zip(scale) {
                *a *= s;
            }
        }
        out
    }

    /// Copy of the listed columns in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, idx.len());
        for (k, &j) in idx.iter().enumerate() {
            out.col_mut(k).copy_from_slice(self.col(j));
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    // scaled to avoid overflow for data in the 1e5..1e10 range
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = a.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * s.sqrt()
}

/// Householder QR with greedy column pivoting, `A Π = Q R`.
///
/// Reflectors are stored compactly below the diagonal; `q()` forms the thin
/// orthonormal factor on demand.
#[derive(Debug, Clone)]
pub struct PivotedQR {
    rows: usize,
    cols: usize,
    packed: DenseMatrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
    diag: Vec<f64>,
}

impl PivotedQR {
    /// Number of reflectors, `min(rows, cols)`.
    pub fn steps(&self) -> usize {
        self.tau.len()
    }

    /// `perm[k]` is the original index of the column in position `k`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `|R_kk|`, nonincreasing.
    pub fn diag_magnitudes(&self) -> &[f64] {
        &self.diag
    }

    /// Count of `|R_kk| >= rel_tol * |R_11|`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let Some(&first) = self.diag.first() else {
            return 0;
        };
        if first == 0.0 {
            return 0;
        }
        self.diag.iter().take_while(|&&d| d >= rel_tol * first).count()
    }

    /// Upper-triangular `R`, `steps x cols`.
    pub fn r(&self) -> DenseMatrix {
        let k = self.steps();
        let mut r = DenseMatrix::zeros(k, self.cols);
        for j in 0..self.cols {
            for i in 0..(j + 1).min(k) {
                r[(i, j)] = self.packed[(i, j)];
            }
        }
        r
    }

    /// Thin `Q`, `rows x steps`, with orthonormal columns.
    pub fn q(&self) -> DenseMatrix {
        let k = self.steps();
        let mut q = DenseMatrix::zeros(self.rows, k);
        for j in 0..k {
            let col = q.col_mut(j);
            col[j] = 1.0;
            for s in (0..k).rev() {
                self.apply_reflector(s, col);
            }
        }
        q
    }

    fn apply_reflector(&self, s: usize, y: &mut [f64]) {
        let tau = self.tau[s];
        if tau == 0.0 {
            return;
        }
        let v = self.packed.col(s);
        // v = [1, packed[s+1.., s]]
        let mut w = y[s];
        for i in s + 1..self.rows {
            w += v[i] * y[i];
        }
        w *= tau;
        y[s] -= w;
        for i in s + 1..self.rows {
            y[i] -= w * v[i];
        }
    }

    /// `Q^T y` over the full row space (first `steps` entries are the
    /// coordinates in the thin factor).
    pub fn apply_qt(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = y.to_vec();
        for s in 0..self.steps() {
            self.apply_reflector(s, &mut out);
        }
        out
    }

    /// Least-squares coefficients using the leading `rank` pivoted columns;
    /// columns beyond the rank get zero. Returned in original column order.
    pub fn solve_truncated(&self, y: &[f64], rank: usize) -> Vec<f64> {
        let qty = self.apply_qt(y);
        let z = back_substitute(&self.packed, &qty[..rank], rank);
        let mut x = vec![0.0; self.cols];
        for (k, &v) in z.iter().enumerate() {
            x[self.perm[k]] = v;
        }
        x
    }
}

/// Solve the leading `n x n` upper triangle of `r` against `rhs`.
pub(crate) fn back_substitute(r: &DenseMatrix, rhs: &[f64], n: usize) -> Vec<f64> {
    let mut x = rhs[..n].to_vec();
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Column-pivoted Householder QR. Ties in the pivot choice go to the lowest
/// original column index.
pub fn pivoted_qr(a: &DenseMatrix) -> Result<PivotedQR> {
    pivoted_qr_with_column_weights(a, None)
}

/// Pivoted QR where the pivot search compares `weight_j * ||a_j||`.
///
/// Experimental: the factorization itself is unaffected, only the pivot
/// order changes. `None` means all weights are one.
pub fn pivoted_qr_with_column_weights(
    a: &DenseMatrix,
    weights: Option<&[f64]>,
) -> Result<PivotedQR> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if let Some(w) = weights {
        if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument(
                "column weights must be positive, one per column".into(),
            ));
        }
    }
    let mut packed = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut tau = Vec::with_capacity(steps);
    let mut diag = Vec::with_capacity(steps);

    for k in 0..steps {
        // trailing column norms recomputed each step
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let nrm = norm2(&packed.col(j)[k..]) * weights.map_or(1.0, |w| w[perm[j]]);
            let better = nrm > best_norm || (nrm == best_norm && perm[j] < perm[best]);
            if better {
                best = j;
                best_norm = nrm;
            }
        }
        if best != k {
            for i in 0..m {
                let t = packed[(i, k)];
                packed[(i, k)] = packed[(i, best)];
                packed[(i, best)] = t;
            }
            perm.swap(k, best);
        }

        let alpha_norm = norm2(&packed.col(k)[k..]);
        if alpha_norm == 0.0 {
            tau.push(0.0);
            diag.push(0.0);
            continue;
        }
        let x0 = packed[(k, k)];
        let beta = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
        let scale = x0 - beta;
        for i in k + 1..m {
            packed[(i, k)] /= scale;
        }
        let t = (beta - x0) / beta;
        packed[(k, k)] = beta;
        tau.push(t);
        diag.push(beta.abs());

        for j in k + 1..n {
            let mut w = packed[(k, j)];
            for i in k + 1..m {
                w += packed[(i, k)] * packed[(i, j)];
            }
            w *= t;
            packed[(k, j)] -= w;
            for i in k + 1..m {
                let v = packed[(i, k)];
                packed[(i, j)] -= w * v;
            }
        }
    }

    Ok(PivotedQR {
        rows: m,
        cols: n,
        packed,
        tau,
        perm,
        diag,
    })
}

/// Result of a weighted least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub coeffs: Vec<f64>,
    /// `||W^{1/2} (V coeffs - y)||_2`
    pub residual_norm: f64,
}

/// `min ||W^{1/2} (V eta - y)||_2` through pivoted QR of `W^{1/2} V`.
///
/// Fails with [`Error::RankDeficient`] when some `|R_kk| < rank_tol |R_11|`.
pub fn weighted_lsq(v: &DenseMatrix, y: &[f64], w: &[f64]) -> Result<LsqSolution> {
    weighted_lsq_tol(v, y, w, DEFAULT_RANK_TOL)
}

pub fn weighted_lsq_tol(
    v: &DenseMatrix,
    y: &[f64],
    w: &[f64],
    rank_tol: f64,
) -> Result<LsqSolution> {
    let (m, k) = (v.rows(), v.cols());
    if y.len() != m || w.len() != m {
        return Err(Error::InvalidArgument(format!(
            "lsq dimensions: matrix {m}x{k}, rhs {}, weights {}",
            y.len(),
            w.len()
        )));
    }
    if m < k {
        return Err(Error::InvalidArgument(format!(
            "underdetermined system: {m} rows < {k} columns"
        )));
    }
    if let Some(i) = w.iter().position(|&wi| !(wi > 0.0 && wi.is_finite())) {
        return Err(Error::InvalidArgument(format!("weight {i} is not positive")));
    }
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let a = v.scale_rows(&sw);
    let b: Vec<f64> = y.iter().zip(&sw).map(|(a, b)| a * b).collect();
    let qr = pivoted_qr(&a)?;
    let rank = qr.numerical_rank(rank_tol);
    if rank < k {
        return Err(Error::RankDeficient { rank, cols: k });
    }
    let coeffs = qr.solve_truncated(&b, rank);
    let residual_norm = weighted_residual(v, &coeffs, y, &sw);
    Ok(LsqSolution {
        coeffs,
        residual_norm,
    })
}

/// `||diag(sw) (V x - y)||_2` evaluated directly.
pub(crate) fn weighted_residual(v: &DenseMatrix, x: &[f64], y: &[f64], sw: &[f64]) -> f64 {
    let fit = v.matvec(x);
    let r: Vec<f64> = fit
        .iter()
        .zip(y)
        .zip(sw)
        .map(|((f, y), s)| s * (f - y))
        .collect();
    norm2(&r)
}

/// Incremental weighted least squares by repeated Gram–Schmidt (two passes).
///
/// Holds the orthonormal basis of the weighted columns appended so far, the
/// triangular factor and the current residual vector, so a trial append costs
/// one orthogonalization instead of a refactorization.
#[derive(Debug, Clone)]
pub struct IncrementalLsq {
    sqrt_w: Vec<f64>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>, // r[j] = column j of R, length j+1
    qty: Vec<f64>,
    residual: Vec<f64>,
}

impl IncrementalLsq {
    /// Empty basis for target `y` under weights `w`.
    pub fn new(y: &[f64], w: &[f64]) -> Result<Self> {
        if y.len() != w.len() {
            return Err(Error::InvalidArgument("target/weight length mismatch".into()));
        }
        if let Some(i) = w.iter().position(|&wi| !(wi > 0.0 && wi.is_finite())) {
            return Err(Error::InvalidArgument(format!("weight {i} is not positive")));
        }
        let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let residual = y.iter().zip(&sqrt_w).map(|(a, b)| a * b).collect();
        Ok(Self {
            sqrt_w,
            q: Vec::new(),
            r: Vec::new(),
            qty: Vec::new(),
            residual,
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn residual_norm(&self) -> f64 {
        norm2(&self.residual)
    }

    /// Append an (unweighted) column. A column whose orthogonal complement is
    /// below `DEPENDENCE_TOL * ||col||_W` is rejected and the state is left
    /// unchanged.
    pub fn append_column(&mut self, col: &[f64]) -> Result<()> {
        if col.len() != self.sqrt_w.len() {
            return Err(Error::InvalidArgument("column length mismatch".into()));
        }
        let mut v: Vec<f64> = col.iter().zip(&self.sqrt_w).map(|(a, b)| a * b).collect();
        let original = norm2(&v);
        if original == 0.0 {
            return Err(Error::Dependent { relative: 0.0 });
        }
        let mut rcol = vec![0.0; self.q.len() + 1];
        for _ in 0..2 {
            for (j, qj) in self.q.iter().enumerate() {
                let h = dot(qj, &v);
                rcol[j] += h;
                for (vi, &qi) in v.iter_mut().zip(qj) {
                    *vi -= h * qi;
                }
            }
        }
        let rho = norm2(&v);
        if rho < DEPENDENCE_TOL * original {
            return Err(Error::Dependent {
                relative: rho / original,
            });
        }
        for vi in v.iter_mut() {
            *vi /= rho;
        }
        *rcol.last_mut().unwrap() = rho;
        let h = dot(&v, &self.residual);
        for (ri, &qi) in self.residual.iter_mut().zip(&v) {
            *ri -= h * qi;
        }
        self.qty.push(h);
        self.q.push(v);
        self.r.push(rcol);
        Ok(())
    }

    /// Coefficients of the appended columns in append order.
    pub fn coefficients(&self) -> Vec<f64> {
        let n = self.q.len();
        let mut x = self.qty.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.r[j][i] * x[j];
            }
            x[i] = s / self.r[i][i];
        }
        x
    }

    /// Diagonal of the triangular factor.
    pub fn r_diagonal(&self) -> Vec<f64> {
        self.r.iter().enumerate().map(|(j, c)| c[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_qr(a: &DenseMatrix) -> PivotedQR {
        let qr = pivoted_qr(a).unwrap();
        let q = qr.q();
        let qtq = q.transpose().matmul(&q);
        for i in 0..qtq.rows() {
            for j in 0..qtq.cols() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[(i, j)] - e).abs() < 1e-12);
            }
        }
        let ap = a.select_columns(qr.permutation());
        let qr_prod = q.matmul(&qr.r());
        let scale = a.max_abs().max(1.0);
        for j in 0..a.cols() {
            for i in 0..a.rows() {
                assert!((ap[(i, j)] - qr_prod[(i, j)]).abs() <= 1e-11 * scale);
            }
        }
        for d in qr.diag_magnitudes().windows(2) {
            assert!(d[1] <= d[0] + 1e-14);
        }
        qr
    }

    #[test]
    fn identity_factorization() {
        let qr = check_qr(&DenseMatrix::identity(3));
        assert_eq!(qr.permutation(), &[0, 1, 2]);
        for &d in qr.diag_magnitudes() {
            assert!((d - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_scaled_column_has_rank_one() {
        let c = vec![1.0, -2.0, 0.5, 3.0];
        let c2: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let qr = check_qr(&DenseMatrix::from_columns(&[c, c2]).unwrap());
        assert_eq!(qr.numerical_rank(DEFAULT_RANK_TOL), 1);
        assert!(qr.diag_magnitudes()[1] <= 1e-14);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let qr = pivoted_qr(&DenseMatrix::zeros(4, 2)).unwrap();
        assert_eq!(qr.numerical_rank(DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn constant_fit_and_line_fit() {
        let ones = DenseMatrix::from_columns(&[vec![1.0; 5]]).unwrap();
        let sol = weighted_lsq(&ones, &[1.0; 5], &[0.3, 1.0, 2.0, 0.1, 5.0]).unwrap();
        assert!((sol.coeffs[0] - 1.0).abs() < 1e-15);
        assert!(sol.residual_norm < 1e-15);

        let rule = crate::orthopoly::gauss_legendre(5).unwrap();
        let x = rule.nodes().to_vec();
        let v = DenseMatrix::from_columns(&[vec![1.0; 5], x.clone()]).unwrap();
        let y: Vec<f64> = x.iter().map(|t| 2.0 + 3.0 * t).collect();
        let sol = weighted_lsq(&v, &y, &[1.0; 5]).unwrap();
        assert!((sol.coeffs[0] - 2.0).abs() < 1e-13);
        assert!((sol.coeffs[1] - 3.0).abs() < 1e-13);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let c = vec![1.0, 2.0, 3.0];
        let v = DenseMatrix::from_columns(&[c.clone(), c]).unwrap();
        let err = weighted_lsq(&v, &[1.0, 1.0, 1.0], &[1.0; 3]).unwrap_err();
        assert_eq!(err, Error::RankDeficient { rank: 1, cols: 2 });
    }

    #[test]
    fn bad_weights_are_rejected() {
        let v = DenseMatrix::from_columns(&[vec![1.0; 3]]).unwrap();
        assert!(weighted_lsq(&v, &[1.0; 3], &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn append_orthogonal_and_duplicate_columns() {
        let mut inc = IncrementalLsq::new(&[1.0, 2.0, 3.0], &[1.0; 3]).unwrap();
        inc.append_column(&[1.0, 0.0, 0.0]).unwrap();
        inc.append_column(&[0.0, 2.0, 0.0]).unwrap();
        assert!((inc.r_diagonal()[1] - 2.0).abs() < 1e-15);
        assert!(matches!(
            inc.append_column(&[0.0, 4.0, 0.0]),
            Err(Error::Dependent { .. })
        ));
        assert_eq!(inc.len(), 2);
        assert!((inc.residual_norm() - 3.0).abs() < 1e-15);
        let c = inc.coefficients();
        assert!((c[0] - 1.0).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
    }
}
