//! Paired t-tests, Holm-Bonferroni step-down correction and two-component
//! Gaussian mixture thresholds.

pub mod dist;
pub mod gmm;
pub mod holm;
pub mod ttest;

pub use gmm::{fit_gmm_1d, gmm_intersection, Component, GmmFit, GmmThreshold};
pub use holm::{holm_bonferroni, HolmDecision};
pub use ttest::{paired_t_test, PairedTestResult};
