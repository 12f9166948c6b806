//! PSNR evaluation, report tables, and prompt-feature clustering
//! diagnostics.

mod metrics;
mod report;

pub use metrics::{calinski_harabasz, project_2d, psnr, FeatureSet};
pub use report::*;
