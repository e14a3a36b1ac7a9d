//! Image-quality metrics, training-loss values, disparity corruption and the
//! oracle benchmark.

#[cfg(feature = "io")]
mod bench;
mod corrupt;
mod loss;
mod metrics;

#[cfg(feature = "io")]
pub use bench::{
    level_blur, run_benchmark, run_corruption, BenchOptions, BenchRow, BenchmarkReport, CorruptionSummary, FocusPolicy,
    Method, MethodSummary,
};
pub use corrupt::{corrupt_disparity, CorruptionKind};
pub use loss::{bce, gradient_l1, l1, loss_arnet, loss_iunet, BCE_EPS, LAMBDA_BCE};
pub use metrics::{psnr, ssim, PSNR_CAP};
