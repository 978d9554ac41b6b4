//! Numerical renormalization of unimodal and Hénon-like maps.
//!
//! The crate covers the one-dimensional renormalization operator and its
//! combinatorics, the two-dimensional operator built from straightening
//! charts, quantitative regularity certification of return maps, convergence
//! diagnostics along renormalization sequences, and parameter search for
//! prescribed combinatorics in the Hénon family.

pub mod certify;
pub mod charts;
pub mod error;
pub mod jet;
pub mod maps;
pub mod numeric;
pub mod regularity;
pub mod renorm2d;
pub mod search;
pub mod unimodal;

pub use error::{Error, Result};
pub use maps::{Direction, Interval, MapSpec, Point2, Rect};
pub use unimodal::{RenType, UnimodalMap};
