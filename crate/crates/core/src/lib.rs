//! Degree-0, degree-1 and degree-2 (quadratic manifold) representations of
//! single-variable functions.
//!
//! A degree-2 representation stores a smooth-coefficient manifold
//! `a(x) f^2 - b(x) f - c(x) = 0` together with a one-bit index function that
//! picks the root of the quadratic at every point. The crate provides the
//! quadrature and least-squares machinery, adaptive basis selection and a
//! denoising pipeline for piecewise-smooth data built on top of it.

pub mod denoise;
pub mod dictionary;
pub mod error;
pub mod functions;
pub mod linalg;
pub mod orthopoly;
pub mod representation;
pub mod selection;

pub use error::{Error, Result};
