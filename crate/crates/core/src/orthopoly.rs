//! Normalized Legendre polynomials and Gauss–Legendre quadrature.
//!
//! The normalized polynomials `L_n(x) = sqrt((2n+1)/2) P_n(x)` are orthonormal
//! on [-1, 1] under unit weight. Every inner product in the crate is a
//! quadrature sum `sum_i w_i u(x_i) v(x_i)` over one of these rules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Number of nodes `M`.
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Abscissae, strictly increasing inside (-1, 1).
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature approximation of `∫ g dx` over [-1, 1].
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Classical Legendre `P_n(x)` and `P_{n-1}(x)` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut cur = x;
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn normalization(n: usize) -> f64 {
    ((2 * n + 1) as f64 / 2.0).sqrt()
}

/// Gauss–Legendre rule with `m` nodes.
///
/// Nodes are the roots of `P_m`, found by Newton iteration from Chebyshev-type
/// initial guesses; only the non-negative half is computed and mirrored.
pub fn gauss_legendre(m: usize) -> Result<QuadratureRule> {
    if m == 0 {
        return Err(Error::InvalidArgument(
            "quadrature order must be at least 1".into(),
        ));
    }
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        if m % 2 == 1 && i == half - 1 {
            x = 0.0;
        }
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p_prev) = legendre_pair(m, x);
            let deriv = m as f64 * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / deriv;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(m, x);
        let deriv = m as f64 * (x * p - p_prev) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * deriv * deriv);
        // Newton converges on the positive root; place it mirrored.
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

fn check_domain(x: f64) -> Result<()> {
    if x.is_nan() || x.abs() > 1.0 {
        return Err(Error::Domain { x });
    }
    Ok(())
}

/// Evaluate the normalized Legendre polynomial `L_n(x)` for `|x| <= 1`.
pub fn legendre_eval(n: usize, x: f64) -> Result<f64> {
    check_domain(x)?;
    Ok(legendre_pair(n, x).0 * normalization(n))
}

/// `[L_0(x), ..., L_N(x)]` from a single recurrence pass.
pub fn legendre_row(max_degree: usize, x: f64) -> Result<Vec<f64>> {
    check_domain(x)?;
    let mut row = vec![0.0; max_degree + 1];
    fill_legendre_row(x, &mut row);
    Ok(row)
}

/// Unchecked row fill used by the dictionary builders; `x` must already be
/// in [-1, 1].
pub(crate) fn fill_legendre_row(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    // Same recurrence as `legendre_pair`, so each entry is bit-identical to a
    // standalone `legendre_eval` call.
    let mut prev = 1.0;
    out[0] = normalization(0);
    if out.len() == 1 {
        return;
    }
    let mut cur = x;
    out[1] = cur * normalization(1);
    for k in 1..out.len() - 1 {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
        out[k + 1] = cur * normalization(k + 1);
    }
}

/// Discrete inner product `sum_i w_i u_i v_i` on the nodes of `rule`.
pub fn inner_product(u: &[f64], v: &[f64], rule: &QuadratureRule) -> Result<f64> {
    if u.len() != v.len() || u.len() != rule.order() {
        return Err(Error::InvalidArgument(format!(
            "inner product length mismatch: {} vs {} on a rule of order {}",
            u.len(),
            v.len(),
            rule.order()
        )));
    }
    Ok(weighted_dot(u, v, rule.weights()))
}

pub(crate) fn weighted_dot(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .zip(w)
        .map(|((&a, &b), &w)| w * a * b)
        .sum()
}

/// The normalized Legendre family up to a fixed degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendreBasis {
    pub max_degree: usize,
}

impl LegendreBasis {
    pub fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    pub fn len(&self) -> usize {
        self.max_degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Samples of `L_n` on every node of `rule`, one vector per degree.
    pub fn sample(&self, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        let mut cols = vec![vec![0.0; rule.order()]; self.len()];
        let mut row = vec![0.0; self.len()];
        for (i, &x) in rule.nodes().iter().enumerate() {
            fill_legendre_row(x, &mut row);
            for (col, &v) in cols.iter_mut().zip(&row) {
                col[i] = v;
            }
        }
        cols
    }

    /// Gram matrix `<L_i, L_j>` on `rule`, row-major.
    pub fn gram(&self, rule: &QuadratureRule) -> Vec<Vec<f64>> {
        let cols = self.sample(rule);
        cols.iter()
            .map(|u| cols.iter().map(|v| weighted_dot(u, v, rule.weights())).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_order_is_rejected() {
        assert!(matches!(gauss_legendre(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn midpoint_and_two_point_rules() {
        let r1 = gauss_legendre(1).unwrap();
        assert_eq!(r1.nodes(), &[0.0]);
        assert!((r1.weights()[0] - 2.0).abs() < 1e-15);

        let r2 = gauss_legendre(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r2.nodes()[0] + s).abs() < 1e-15);
        assert!((r2.nodes()[1] - s).abs() < 1e-15);
        for &w in r2.weights() {
            assert!((w - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn large_rule_is_ordered_and_sums_to_two() {
        let rule = gauss_legendre(1000).unwrap();
        assert_eq!(rule.order(), 1000);
        assert!(rule.nodes().windows(2).all(|p| p[0] < p[1]));
        assert!(rule.nodes().iter().all(|x| x.abs() < 1.0));
        assert!(rule.weights().iter().all(|&w| w > 0.0));
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-13, "sum = {total}");
    }

    #[test]
    fn low_degree_values() {
        assert!((legendre_eval(0, 0.37).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((legendre_eval(1, 0.5).unwrap() - 1.5f64.sqrt() * 0.5).abs() < 1e-15);
        let row = legendre_row(2, 0.0).unwrap();
        assert!((row[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(row[1], 0.0);
        assert!((row[2] + 2.5f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(legendre_row(0, 1.0).unwrap().len(), 1);
    }

    #[test]
    fn outside_interval_is_a_domain_error() {
        assert!(matches!(legendre_eval(3, 1.0000001), Err(Error::Domain { .. })));
        assert!(matches!(legendre_row(3, -2.0), Err(Error::Domain { .. })));
        assert!(legendre_eval(3, -1.0).is_ok());
    }

    #[test]
    fn row_matches_single_evaluations_exactly() {
        let row = legendre_row(10, 0.3).unwrap();
        for (k, &v) in row.iter().enumerate() {
            assert_eq!(v, legendre_eval(k, 0.3).unwrap());
        }
    }

    #[test]
    fn inner_products_on_large_rule() {
        let rule = gauss_legendre(1000).unwrap();
        let cols = LegendreBasis::new(5).sample(&rule);
        assert!((inner_product(&cols[3], &cols[3], &rule).unwrap() - 1.0).abs() < 1e-13);
        assert!(inner_product(&cols[2], &cols[5], &rule).unwrap().abs() < 1e-13);
        let xs = rule.nodes().to_vec();
        assert!((inner_product(&xs, &xs, &rule).unwrap() - 2.0 / 3.0).abs() < 1e-13);
        assert!(inner_product(&xs, &xs[1..], &rule).is_err());
    }
}
