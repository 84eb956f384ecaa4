//! Learns city traffic-flow patterns from historical GPS trips and predicts
//! the final destination of a partially observed trip.
//!
//! The pipeline has four stages, each living in its own module:
//!
//! 1. [`geometry`] — trajectory representation and the symmetrized
//!    segment-path distance (SSPD) between trajectories.
//! 2. [`clustering`] — agglomerative hierarchical clustering with Ward
//!    linkage over the pairwise SSPD matrix, cut into `K` flow clusters.
//! 3. [`gmm`] — a 2D Gaussian mixture fitted per cluster by EM, with the
//!    component count chosen by BIC.
//! 4. [`scoring`] — likelihood scores assigning a (partial) trajectory to
//!    flow clusters, and the two destination-prediction rules built on them.
//!
//! [`eval`] reproduces the evaluation protocol: k-fold cross-validation,
//! classification rates and prediction error as functions of trajectory
//! completion, and per-cluster one-vs-all ROC/AUC.
//!
//! The crate is `no_std`-compatible (requires `alloc`); disable the default
//! `std` feature to use it in that configuration. All operations are pure
//! functions of immutable inputs and safe for concurrent use.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod clustering;
pub mod eval;
pub mod geometry;
pub mod gmm;
mod math;
pub mod rng;
pub mod scoring;
#[cfg(test)]
pub(crate) mod testutil;

pub use geometry::{GeoPoint, PlanarPoint, PrefixFraction, Segment, Trajectory};

use core::fmt;

/// Errors reported by the library's fallible operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Longitude or latitude outside the valid WGS84 range.
    InvalidCoordinate { lon: f64, lat: f64 },
    /// Point farther than one degree from the projection origin.
    ProjectionOutOfRange { dlon: f64, dlat: f64 },
    /// Fewer input points than the operation requires.
    TooFewPoints { have: usize, need: usize },
    /// Trajectory timestamps decrease somewhere.
    NonMonotonicTimestamps,
    /// Fewer trajectories than the operation requires.
    TooFewTrajectories { have: usize, need: usize },
    /// Requested cluster count outside `1..=n`.
    ClusterCountOutOfRange { k: usize, n: usize },
    /// Covariance matrix is not symmetric positive definite.
    NotPositiveDefinite,
    /// A cluster referenced by a model or assignment has no members.
    EmptyCluster { cluster: usize },
    /// The component-count search range is empty.
    EmptyComponentRange,
    /// Fewer items than cross-validation folds.
    TooFewForFolds { have: usize, folds: usize },
    /// Completion fraction outside `[0, 1]`.
    InvalidPrefixFraction(f64),
    /// A configuration field holds an unusable value.
    InvalidConfig(&'static str),
    /// Input collections that must be index-aligned have different lengths.
    LengthMismatch { left: usize, right: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidCoordinate { lon, lat } => {
                write!(f, "coordinate ({lon}, {lat}) outside valid lon/lat range")
            }
            Error::ProjectionOutOfRange { dlon, dlat } => write!(
                f,
                "point is {dlon} deg lon / {dlat} deg lat from the projection origin (max 1 deg)"
            ),
            Error::TooFewPoints { have, need } => {
                write!(f, "need at least {need} points, got {have}")
            }
            Error::NonMonotonicTimestamps => write!(f, "timestamps must be non-decreasing"),
            Error::TooFewTrajectories { have, need } => {
                write!(f, "need at least {need} trajectories, got {have}")
            }
            Error::ClusterCountOutOfRange { k, n } => {
                write!(f, "cluster count {k} outside valid range 1..={n}")
            }
            Error::NotPositiveDefinite => {
                write!(f, "covariance matrix is not positive definite")
            }
            Error::EmptyCluster { cluster } => write!(f, "cluster {cluster} has no members"),
            Error::EmptyComponentRange => write!(f, "component-count range is empty"),
            Error::TooFewForFolds { have, folds } => {
                write!(f, "need at least {folds} items for {folds}-fold split, got {have}")
            }
            Error::InvalidPrefixFraction(p) => {
                write!(f, "completion fraction {p} outside [0, 1]")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::LengthMismatch { left, right } => {
                write!(f, "aligned inputs differ in length: {left} vs {right}")
            }
        }
    }
}

impl core::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
