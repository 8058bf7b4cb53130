//! Sturm–Liouville eigen-system, kernels and variance profile of the critical
//! reflected-killed model.

mod basis;
mod kernel;
mod params;
mod profile;

pub use basis::{build_basis, eigen_residual, ProfilePoint, SpectralBasis, DEFAULT_T_FLOOR_FACTOR};
pub use kernel::{KernelPlan, KernelValue};
pub use params::{
    drift_for_length, length_for_drift, length_for_population, params_for_population, population_threshold, ModelParams,
    DEFAULT_LOGLOG_COEFF,
};
pub use profile::{
    best_class_boundary, best_class_stats, closed_forms_raw, sigma_sq_limit, BestClassStats, ClosedForms, VarianceProfile,
};
