use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-bit root selector, stored as sign-change locations.
///
/// The sign is `first_sign` left of the first breakpoint and flips at every
/// breakpoint. A point exactly on a breakpoint belongs to the right segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFunction {
    breakpoints: Vec<f64>,
    first_sign: i8,
}

fn check_sign(s: i8) -> Result<()> {
    if s == 1 || s == -1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("index sign must be ±1, got {s}")))
    }
}

impl IndexFunction {
    pub fn new(breakpoints: Vec<f64>, first_sign: i8) -> Result<Self> {
        check_sign(first_sign)?;
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("non-finite breakpoint".into()));
        }
        if !breakpoints.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            first_sign,
        })
    }

    pub fn constant(sign: i8) -> Result<Self> {
        Self::new(Vec::new(), sign)
    }

    /// Compress per-sample signs at increasing `positions`; breakpoints go at
    /// midpoints between consecutive samples of different sign.
    pub fn from_dense(positions: &[f64], signs: &[i8]) -> Result<Self> {
        if positions.len() != signs.len() || positions.is_empty() {
            return Err(Error::InvalidArgument(
                "dense index needs one sign per position".into(),
            ));
        }
        for &s in signs {
            check_sign(s)?;
        }
        let breakpoints = positions
            .windows(2)
            .zip(signs.windows(2))
            .filter(|(_, s)| s[0] != s[1])
            .map(|(p, _)| 0.5 * (p[0] + p[1]))
            .collect();
        Self::new(breakpoints, signs[0])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn first_sign(&self) -> i8 {
        self.first_sign
    }

    pub fn sign_at(&self, x: f64) -> i8 {
        let flips = self.breakpoints.partition_point(|&b| b <= x);
        if flips % 2 == 0 {
            self.first_sign
        } else {
            -self.first_sign
        }
    }

    pub fn to_dense(&self, positions: &[f64]) -> Vec<i8> {
        positions.iter().map(|&x| self.sign_at(x)).collect()
    }

    /// Check that every breakpoint lies inside `[lo, hi]`.
    pub fn check_domain(&self, domain: (f64, f64)) -> Result<()> {
        match self
            .breakpoints
            .iter()
            .find(|&&b| b < domain.0 || b > domain.1)
        {
            Some(&x) => Err(Error::Domain { x }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let signs = [1, 1, -1, -1, -1, 1, 1, 1, -1, -1];
        let idx = IndexFunction::from_dense(&xs, &signs).unwrap();
        assert_eq!(idx.breakpoints(), &[1.5, 4.5, 7.5]);
        assert_eq!(idx.to_dense(&xs), signs);
        assert_eq!(idx.sign_at(4.5), 1);
    }

    #[test]
    fn invalid_inputs() {
        assert!(IndexFunction::constant(0).is_err());
        assert!(IndexFunction::new(vec![1.0, 1.0], 1).is_err());
        assert!(IndexFunction::from_dense(&[0.0, 1.0], &[1, 2]).is_err());
        let idx = IndexFunction::new(vec![2.0], -1).unwrap();
        assert!(idx.check_domain((0.0, 1.0)).is_err());
    }
}
