//! Selective inference for differences in means between pairs of K-means
//! clusters.

pub mod cli;
pub mod data;
pub mod distributions;
pub mod error;
pub mod inference;
pub mod interval;
pub mod kmeans;
pub mod projection;
pub mod result;
pub mod selection;
pub mod simulation;
pub mod special;
pub mod truncation;

pub use data::{ClusterPartition, DataMatrix};
pub use error::{Error, Result};
pub use interval::{Interval, IntervalUnion};

// Book chapters, compiled as doc-tests so the snippets stay current.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/clustering.md")]
mod book_clustering {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pairs.md")]
mod book_pairs {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/known-variance.md")]
mod book_known_variance {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/unknown-variance.md")]
mod book_unknown_variance {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/selection.md")]
mod book_selection {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/distributions.md")]
mod book_distributions {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/simulation.md")]
mod book_simulation {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
