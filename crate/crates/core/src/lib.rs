//! Estimating a finite-population mean by combining a two-stage cluster
//! probability sample (Sample A: covariates and known inclusion
//! probabilities) with a nonprobability sample (Sample B: covariates and
//! outcomes, unknown selection).
//!
//! The crate covers the whole pipeline of a simulation study:
//!
//! * [`popgen`]: frozen synthetic populations of clusters and households;
//! * [`design`], [`selection`]: Sampford/SRSWOR cluster sampling, the
//!   within-cluster stage, and Bernoulli selection into Sample B;
//! * [`crossfit`]: cluster-level folds and the active subsets used when
//!   cluster probabilities are unequal;
//! * [`nuisance`]: pseudo-likelihood logistic, least-squares and boosted
//!   tree learners for π^B and m;
//! * [`estimators`]: HT, Hájek, doubly robust and TMLE estimators with
//!   cluster-level standard errors;
//! * [`harness`]: replications, summaries, and the nuisance rate probe.
//!
//! The examples directory walks through each stage; `simulate_scenario` is
//! the shortest path to a results table.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod crossfit;
pub mod data;
pub mod design;
pub mod error;
pub mod estimators;
pub mod formula;
pub mod harness;
pub mod nuisance;
pub mod popgen;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
