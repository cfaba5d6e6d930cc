//! Whole-slide image retrieval and benchmarking.
//!
//! Two retrieval paths share one evaluation protocol:
//!
//! - **Patch path**: each slide is reduced to a mosaic of representative
//!   patches ([`mosaic`]), every mosaic patch embedding is binarized into a
//!   MinMax barcode, and slides are ranked by the median over query barcodes
//!   of the minimum Hamming distance to the candidate's barcodes
//!   ([`barcode`]).
//! - **Slide path**: one fixed-length vector per slide, ranked by Euclidean
//!   distance ([`vsearch`]).
//!
//! Both paths search only within the query's organ and drop every slide of
//! the query's patient (leave-one-patient-out). Predictions come from top-n
//! majority voting and are scored with per-diagnosis F1 and per-organ
//! macro-F1 ([`eval`]); model comparisons use paired t-tests with
//! Holm-Bonferroni correction and GMM-derived thresholds ([`stats`]).

pub mod barcode;
pub mod cohort;
pub mod error;
pub mod eval;
pub mod features;
pub mod kmeans;
pub mod mosaic;
pub mod pipeline;
pub mod report;
pub mod results;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod vsearch;

pub use barcode::{Barcode, BarcodeIndex, Bob};
pub use cohort::{Cohort, DiagnosisLabel, SlideRecord};
pub use error::{Error, Result};
pub use results::{Neighbor, RetrievalResult};
