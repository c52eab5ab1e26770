//! Construction and numerical verification of robustly transitive torus
//! endomorphisms with persistent critical sets.
//!
//! Three families are built over their integer base matrices: an expanding
//! one (both eigenvalue moduli above 1), a non-hyperbolic one (one eigenvalue
//! equal to 1), and a saddle one (moduli straddling 1). The library verifies
//! the quantitative structure carried by each construction: unstable cone
//! invariance and expansion, stable cone contraction, annulus avoidance,
//! curve-growth certificates, covering exponents, pre-orbit density and
//! intersection constants, plus the fold/cusp singularity machinery
//! (classification, fold flattening, ball collapse).

pub mod cones;
pub mod curves;
pub mod error;
pub mod maps;
pub mod profiles;
pub mod singularities;
pub mod torus;
pub mod transitivity;

pub use error::{EndoError, Result};
