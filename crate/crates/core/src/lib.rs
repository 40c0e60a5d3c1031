//! A workbench for the composition method on monadic second-order theories
//! of finite chains, trees and pure sets.
//!
//! The crate is organised along the pipeline it supports:
//!
//! * [`structures`] holds finite chains/trees/sets with named subsets and the
//!   structural decompositions (segments, branches, embedding regions, grafts).
//! * [`theory`] computes partial theories `Th^n(T; A)` as canonical hereditarily
//!   finite values; [`formula`] evaluates monadic formulas directly and on theories.
//! * [`composition`] is the theory-sum algebra, additive colourings and the
//!   functional-dependency checks for the tree composition theorems.
//! * [`scattered`] covers scattered order terms, Hausdorff degree, the lexicographic
//!   models and the homogeneous thinning / Z-set construction.
//! * [`synthesis`] ranks and classifies trees and synthesises definable well-orders
//!   with verifiable certificates.
//! * [`falsifier`] searches for indiscernible pairs, checks choice functions and
//!   monochromatic subsets.

pub mod composition;
pub mod error;
pub mod falsifier;
pub mod formula;
pub mod report;
pub mod scattered;
pub mod sexpr;
pub mod structures;
pub mod synthesis;
pub mod theory;

pub use error::{Error, Result};
pub use formula::Formula;
pub use structures::{FinStructure, Kind, Subset};
pub use theory::Theory;

/// Tool version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
