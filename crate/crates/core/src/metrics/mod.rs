//! Evaluation metrics: physical-space errors, spectral fidelity, token
//! usage, and the embedding/quantization error decomposition.

mod bound;
mod physical;
mod report;
mod spectral;
mod tokens;

pub use bound::{error_bound_check, ErrorBound, BOUND_SLACK};
pub use physical::{local_variance_error, physical_errors, PhysicalErrors, VARIANCE_WINDOW};
pub use report::MetricsReport;
pub use spectral::{
    bin_count, fft2, log_spectral_fidelity, max_spectral_difference, radial_bin,
    radial_power_spectrum, spectral_coherence_min, SPECTRAL_FLOOR,
};
pub use tokens::{token_stats, TokenHistogram, TokenStats};
