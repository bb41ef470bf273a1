//! Polynomials in the normalized Legendre basis (in the reference coordinate
//! of their domain) or in monomials of the physical coordinate.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::dictionary::AffineMap;
use crate::error::{Error, Result};
use crate::orthopoly::{fill_legendre_row, gauss_legendre};

/// Highest degree accepted by [`PolyCoeffs::convert`].
pub const MAX_CONVERT_DEGREE: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Basis {
    /// `sum c_k L_k(t)` with `t` the reference coordinate of the domain.
    LegendreNormalized,
    /// `sum c_k x^k` in the physical coordinate.
    Monomial,
}

/// Coefficients of a polynomial together with the basis and domain that fix
/// how they are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCoeffs {
    pub basis: Basis,
    pub coeffs: Vec<f64>,
    pub domain: (f64, f64),
}

/// `t L_n = a_n L_{n+1} + a_{n-1} L_{n-1}` for the normalized family.
fn jacobi(n: usize) -> f64 {
    let n = n as f64;
    (n + 1.0) / ((2.0 * n + 1.0) * (2.0 * n + 3.0)).sqrt()
}

impl PolyCoeffs {
    pub fn new(basis: Basis, coeffs: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        AffineMap::new(domain.0, domain.1)?;
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument("polynomial needs at least one coefficient".into()));
        }
        if let Some(index) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Data { index });
        }
        Ok(Self {
            basis,
            coeffs,
            domain,
        })
    }

    pub fn legendre(coeffs: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        Self::new(Basis::LegendreNormalized, coeffs, domain)
    }

    pub fn monomial(coeffs: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        Self::new(Basis::Monomial, coeffs, domain)
    }

    /// The constant function `value`.
    pub fn constant(value: f64, basis: Basis, domain: (f64, f64)) -> Result<Self> {
        let c = match basis {
            Basis::LegendreNormalized => value * SQRT_2,
            Basis::Monomial => value,
        };
        Self::new(basis, vec![c], domain)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn map(&self) -> AffineMap {
        AffineMap {
            lo: self.domain.0,
            hi: self.domain.1,
        }
    }

    /// Value at physical `x`. Legendre evaluation clamps the reference
    /// coordinate into [-1, 1]; callers check the domain.
    pub fn eval(&self, x: f64) -> f64 {
        match self.basis {
            Basis::Monomial => self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
            Basis::LegendreNormalized => {
                let t = self.map().to_reference(x);
                let mut row = vec![0.0; self.coeffs.len()];
                fill_legendre_row(t, &mut row);
                row.iter().zip(&self.coeffs).map(|(l, c)| l * c).sum()
            }
        }
    }

    /// Constant contribution `c_0 * phi_0`, i.e. the value of the degree-0
    /// part.
    pub fn constant_term(&self) -> f64 {
        match self.basis {
            Basis::Monomial => self.coeffs[0],
            Basis::LegendreNormalized => self.coeffs[0] / SQRT_2,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
            ..self.clone()
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::InvalidArgument(format!(
                "domain mismatch: {:?} vs {:?}",
                self.domain, other.domain
            )));
        }
        Ok(())
    }

    /// Sum, expressed in the basis of `self`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let other = other.convert(self.basis)?;
        let n = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; n];
        for (o, c) in out.iter_mut().zip(&self.coeffs) {
            *o += c;
        }
        for (o, c) in out.iter_mut().zip(&other.coeffs) {
            *o += c;
        }
        Self::new(self.basis, out, self.domain)
    }

    /// Product, expressed in the basis of `self`. Monomial products are a
    /// plain convolution; Legendre products are projected exactly with a
    /// Gauss rule of sufficient order.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let other = other.convert(self.basis)?;
        let degree = self.degree() + other.degree();
        match self.basis {
            Basis::Monomial => {
                let mut out = vec![0.0; degree + 1];
                for (i, a) in self.coeffs.iter().enumerate() {
                    for (j, b) in other.coeffs.iter().enumerate() {
                        out[i + j] += a * b;
                    }
                }
                Self::new(Basis::Monomial, out, self.domain)
            }
            Basis::LegendreNormalized => {
                // degree-2*degree integrand needs degree + 1 nodes
                let rule = gauss_legendre(degree + 1)?;
                let mut out = vec![0.0; degree + 1];
                let mut row_a = vec![0.0; self.coeffs.len()];
                let mut row_b = vec![0.0; other.coeffs.len()];
                let mut row = vec![0.0; degree + 1];
                for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
                    fill_legendre_row(t, &mut row_a);
                    fill_legendre_row(t, &mut row_b);
                    fill_legendre_row(t, &mut row);
                    let pa: f64 = row_a.iter().zip(&self.coeffs).map(|(l, c)| l * c).sum();
                    let pb: f64 = row_b.iter().zip(&other.coeffs).map(|(l, c)| l * c).sum();
                    for (o, l) in out.iter_mut().zip(&row) {
                        *o += w * pa * pb * l;
                    }
                }
                Self::new(Basis::LegendreNormalized, out, self.domain)
            }
        }
    }

    /// Drop trailing coefficients with magnitude below `rel_tol * max|c_k|`
    /// in the Legendre representation; the result keeps the original basis.
    pub fn truncated(&self, rel_tol: f64) -> Result<Self> {
        if rel_tol <= 0.0 {
            return Ok(self.clone());
        }
        let leg = self.convert(Basis::LegendreNormalized)?;
        let max = leg.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let keep = leg
            .coeffs
            .iter()
            .rposition(|c| c.abs() > rel_tol * max)
            .map_or(1, |k| k + 1);
        let cut = Self::new(leg.basis, leg.coeffs[..keep].to_vec(), leg.domain)?;
        cut.convert(self.basis)
    }

    /// Exact linear change of basis (up to rounding).
    pub fn convert(&self, target: Basis) -> Result<Self> {
        if target == self.basis {
            return Ok(self.clone());
        }
        if self.degree() > MAX_CONVERT_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "basis conversion supports degree <= {MAX_CONVERT_DEGREE}, got {}",
                self.degree()
            )));
        }
        let map = self.map();
        let coeffs = match target {
            Basis::Monomial => {
                let in_t = legendre_to_monomial(&self.coeffs);
                reference_to_physical(&in_t, map)
            }
            Basis::LegendreNormalized => {
                let in_t = physical_to_reference(&self.coeffs, map);
                monomial_to_legendre(&in_t)
            }
        };
        Self::new(target, coeffs, self.domain)
    }
}

/// Legendre coefficients to monomial coefficients in the same variable.
fn legendre_to_monomial(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n];
    let mut prev: Vec<f64> = Vec::new();
    let mut cur = vec![std::f64::consts::FRAC_1_SQRT_2];
    for (k, &ck) in c.iter().enumerate() {
        for (o, p) in out.iter_mut().zip(&cur) {
            *o += ck * p;
        }
        if k + 1 == n {
            break;
        }
        // L_{k+1} = (t L_k - a_{k-1} L_{k-1}) / a_k
        let ak = jacobi(k);
        let mut next = vec![0.0; k + 2];
        for (i, &v) in cur.iter().enumerate() {
            next[i + 1] += v / ak;
        }
        if k > 0 {
            let akm = jacobi(k - 1);
            for (i, &v) in prev.iter().enumerate() {
                next[i] -= akm * v / ak;
            }
        }
        prev = cur;
        cur = next;
    }
    out
}

/// Monomial coefficients to Legendre coefficients by Horner's scheme with the
/// three-term multiplication `t L_k`.
fn monomial_to_legendre(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut acc = vec![0.0; n];
    for (step, &dk) in d.iter().rev().enumerate() {
        if step > 0 {
            let mut next = vec![0.0; n];
            for (k, &e) in acc.iter().enumerate() {
                if e == 0.0 {
                    continue;
                }
                if k + 1 < n {
                    next[k + 1] += e * jacobi(k);
                }
                if k > 0 {
                    next[k - 1] += e * jacobi(k - 1);
                }
            }
            acc = next;
        }
        acc[0] += dk * SQRT_2;
    }
    acc
}

/// `p(t)` with `t = (x - mid) / half` expanded in powers of `x`.
fn reference_to_physical(d: &[f64], map: AffineMap) -> Vec<f64> {
    if map == AffineMap::reference() {
        return d.to_vec();
    }
    let alpha = 1.0 / map.half_length();
    let beta = -map.midpoint() / map.half_length();
    compose_linear(d, alpha, beta)
}

/// `p(x)` with `x = mid + half t` expanded in powers of `t`.
fn physical_to_reference(d: &[f64], map: AffineMap) -> Vec<f64> {
    if map == AffineMap::reference() {
        return d.to_vec();
    }
    compose_linear(d, map.half_length(), map.midpoint())
}

/// Coefficients of `p(alpha s + beta)` in powers of `s`.
fn compose_linear(d: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    let n = d.len();
    let mut acc = vec![0.0; n];
    for (step, &dk) in d.iter().rev().enumerate() {
        if step > 0 {
            let mut next = vec![0.0; n];
            for (k, &e) in acc.iter().enumerate() {
                next[k] += beta * e;
                if k + 1 < n {
                    next[k + 1] += alpha * e;
                }
            }
            acc = next;
        }
        acc[0] += dk;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn x_in_legendre_basis() {
        let p = PolyCoeffs::monomial(vec![0.0, 1.0], (-1.0, 1.0)).unwrap();
        let l = p.convert(Basis::LegendreNormalized).unwrap();
        assert!(l.coeffs[0].abs() < 1e-16);
        assert!((l.coeffs[1] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn legendre_to_monomial_low_degrees() {
        // L_2 = sqrt(5/2) (3t^2 - 1)/2
        let p = PolyCoeffs::legendre(vec![0.0, 0.0, 1.0], (-1.0, 1.0)).unwrap();
        let m = p.convert(Basis::Monomial).unwrap();
        let s = 2.5f64.sqrt();
        assert!((m.coeffs[0] + s / 2.0).abs() < 1e-15);
        assert!(m.coeffs[1].abs() < 1e-15);
        assert!((m.coeffs[2] - 1.5 * s).abs() < 1e-14);
    }

    #[test]
    fn evaluation_agrees_across_bases_on_shifted_domain() {
        let p = PolyCoeffs::legendre(vec![0.3, -1.2, 0.5, 0.25, -0.1], (0.0, 400.0)).unwrap();
        let m = p.convert(Basis::Monomial).unwrap();
        for i in 0..=10 {
            let x = 40.0 * f64::from(i);
            assert!((p.eval(x) - m.eval(x)).abs() < 1e-11 * (1.0 + p.eval(x).abs()));
        }
    }

    #[test]
    fn degree_limit() {
        let p = PolyCoeffs::legendre(vec![1.0; 62], (-1.0, 1.0)).unwrap();
        assert!(p.convert(Basis::Monomial).is_err());
        assert!(p.convert(Basis::LegendreNormalized).is_ok());
    }

    #[test]
    fn products_match_pointwise() {
        let a = PolyCoeffs::legendre(vec![0.5, 1.0, -0.3], (-2.0, 3.0)).unwrap();
        let b = PolyCoeffs::legendre(vec![1.5, 0.0, 0.7, 0.2], (-2.0, 3.0)).unwrap();
        let ab = a.mul(&b).unwrap();
        assert_eq!(ab.degree(), 5);
        for i in 0..=20 {
            let x = -2.0 + 0.25 * f64::from(i);
            assert!((ab.eval(x) - a.eval(x) * b.eval(x)).abs() < 1e-13);
        }
        let m = PolyCoeffs::monomial(vec![25.0], (0.0, 400.0)).unwrap();
        let n = PolyCoeffs::monomial(vec![255.0], (0.0, 400.0)).unwrap();
        assert_eq!(m.mul(&n).unwrap().coeffs, vec![6375.0]);
        assert_eq!(m.add(&n).unwrap().coeffs, vec![280.0]);
    }

    #[test]
    fn truncation_drops_small_tail() {
        let p = PolyCoeffs::legendre(vec![1.0, 0.5, 1e-17, 1e-18], (-1.0, 1.0)).unwrap();
        assert_eq!(p.truncated(1e-14).unwrap().coeffs.len(), 2);
        assert_eq!(p.truncated(0.0).unwrap().coeffs.len(), 4);
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let a = PolyCoeffs::legendre(vec![1.0], (-1.0, 1.0)).unwrap();
        let b = PolyCoeffs::legendre(vec![1.0], (0.0, 1.0)).unwrap();
        assert!(a.add(&b).is_err());
    }
}
