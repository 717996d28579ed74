//! Soft-sensor modelling toolkit for water-quality surrogates.
//!
//! A soft-sensor estimates a hard-to-measure target variable (nutrient
//! concentrations such as TRP, TP, NO₃-N or NH₄-N) from cheap in-situ
//! surrogate measurements (conductivity, turbidity, temperature, dissolved
//! oxygen, pH, chlorophyll, flow). This crate provides the full modelling
//! pipeline:
//!
//! - [`data`] — CSV ingestion, canonical column mapping, complete-case
//!   filtering and summary statistics
//! - [`preprocess`] — skewness diagnostics, variance-stabilising transforms,
//!   standardisation and Pearson correlation screening
//! - [`resample`] — stratified holdout splits and k-fold cross-validation
//! - [`linear`] — ordinary-least-squares multiple linear regression
//! - [`forest`] — CART regression trees and random-forest ensembles with
//!   grid search and tree-count selection
//! - [`featsel`] — sequential forward predictor selection and recursive
//!   forest ranking
//! - [`metrics`] — RMSE, nRMSE, PBIAS and cross-validated aggregation
//!
//! All numeric code is generic over the scalar type through the [`Scalar`]
//! trait; `f64` aliases for the main model types are exported at the crate
//! root and are what the CLI uses.

pub mod data;
pub mod featsel;
pub mod forest;
pub mod linear;
pub mod matrix;
pub mod metrics;
pub mod preprocess;
pub mod resample;
pub mod rng;
pub mod scalar;

mod error;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Double-precision dataset, the concrete instantiation used by the CLI.
pub type Dataset64 = data::Dataset<f64>;
/// Double-precision row-major matrix.
pub type Matrix64 = matrix::Matrix<f64>;
/// Double-precision linear soft-sensor model.
pub type LinearModel64 = linear::LinearModel<f64>;
/// Double-precision random-forest soft-sensor model.
pub type ForestModel64 = forest::ForestModel<f64>;
