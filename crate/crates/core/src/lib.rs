//! Numerical laboratory for twisted cohomological equations over degree-2
//! expanding circle maps.
//!
//! The crate builds nested Markov partitions from preimages of the fixed
//! point, runs unbalanced Haar analysis on them, applies grid-adapted
//! fractional derivatives, solves `v = α∘F − g^β α`, discretizes transfer
//! operators, and estimates asymptotic variances for the regularity
//! dichotomy. Everything here is pure computation; IO and the experiment
//! runner live in the companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod circle;
pub mod cohomology;
pub mod error;
pub mod fracderiv;
pub mod haar;
pub mod partition;
pub mod rng;
pub mod statistics;
pub mod transfer;

pub use circle::{CircleMap, MapFamily};
pub use cohomology::{SolveMethod, SolveOptions, TwistedSolution};
pub use error::{Error, Result};
pub use haar::{BesovFlavor, FunctionInput, HaarSeries};
pub use partition::{Cell, PartitionTree};
pub use statistics::{ClassifyConfig, DichotomyReport, VarianceEstimate, Verdict};
pub use transfer::OperatorMatrix;

pub use num_complex::Complex64;
