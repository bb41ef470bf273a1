use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|a(x)|` below this fraction of `max|a|` is treated as zero.
pub const A_DEGENERACY_TOL: f64 = 1e-10;

/// Roots of `a f² - b f - c = 0` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRoots {
    pub lo: f64,
    pub hi: f64,
    /// Root taken with index `+1`: `(b + √D) / 2a`.
    pub plus: f64,
    /// Root taken with index `-1`: `(b - √D) / 2a`.
    pub minus: f64,
    pub discriminant: f64,
    /// A slightly negative discriminant was clamped to zero.
    pub clamped: bool,
    /// `a` was negligible; both slots hold the root of `-b f - c = 0`.
    pub linear: bool,
}

impl QuadraticRoots {
    pub fn select(&self, zeta: i8) -> f64 {
        if zeta >= 0 {
            self.plus
        } else {
            self.minus
        }
    }
}

/// Tolerance below zero up to which the discriminant is clamped.
pub fn discriminant_tolerance(a: f64, b: f64, c: f64) -> f64 {
    1e-8 * (b * b + 4.0 * (a * c).abs() + 1.0)
}

/// Solve `a f² - b f - c = 0` without cancellation. `a_scale` is the
/// magnitude reference for the degeneracy test and `x` is only used for
/// error reporting.
pub fn solve_quadratic(a: f64, b: f64, c: f64, a_scale: f64, x: f64) -> Result<QuadraticRoots> {
    if a.abs() < A_DEGENERACY_TOL * a_scale || a == 0.0 {
        if b == 0.0 {
            return Err(Error::Degenerate { x });
        }
        let r = -c / b;
        return Ok(QuadraticRoots {
            lo: r,
            hi: r,
            plus: r,
            minus: r,
            discriminant: b * b + 4.0 * a * c,
            clamped: false,
            linear: true,
        });
    }
    let mut d = b * b + 4.0 * a * c;
    let mut clamped = false;
    if d < 0.0 {
        if d < -discriminant_tolerance(a, b, c) {
            return Err(Error::ComplexRoots {
                x,
                discriminant: d,
            });
        }
        d = 0.0;
        clamped = true;
    }
    let sd = d.sqrt();
    let (plus, minus) = if b >= 0.0 {
        let q = 0.5 * (b + sd);
        if q == 0.0 {
            (0.0, 0.0)
        } else {
            (q / a, -c / q)
        }
    } else {
        let q = 0.5 * (b - sd);
        (-c / q, q / a)
    };
    Ok(QuadraticRoots {
        lo: plus.min(minus),
        hi: plus.max(minus),
        plus,
        minus,
        discriminant: d,
        clamped,
        linear: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_cases() {
        let r = solve_quadratic(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!((r.lo, r.hi, r.discriminant), (-1.0, 1.0, 4.0));
        let r = solve_quadratic(1.0, 0.8, 0.0, 1.0, 0.8).unwrap();
        assert_eq!((r.lo, r.hi), (0.0, 0.8));
        let r = solve_quadratic(1.0, 280.0, -6375.0, 1.0, 0.0).unwrap();
        assert!((r.lo - 25.0).abs() < 1e-12 && (r.hi - 255.0).abs() < 1e-12);
        assert_eq!(r.plus, r.hi);
    }

    #[test]
    fn no_cancellation() {
        let r = solve_quadratic(1.0, 1e8, 1.0, 1.0, 0.0).unwrap();
        // f² - 1e8 f - 1 = 0: small root -1/(1e8 + 1e-8)
        let exact = -1.0 / (1e8 + 1e-8);
        assert!(((r.minus - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn clamp_and_error() {
        let r = solve_quadratic(1.0, 2.0, -1.0 - 1e-12, 1.0, 0.0).unwrap();
        assert!(r.clamped);
        assert!(matches!(
            solve_quadratic(1.0, 0.0, -1.0, 1.0, 0.3),
            Err(Error::ComplexRoots { .. })
        ));
    }

    #[test]
    fn linear_fallback() {
        let r = solve_quadratic(1e-20, 2.0, 4.0, 1.0, 0.0).unwrap();
        assert!(r.linear);
        assert_eq!(r.plus, -2.0);
        assert!(matches!(
            solve_quadratic(0.0, 0.0, 1.0, 1.0, 0.0),
            Err(Error::Degenerate { .. })
        ));
    }
}
