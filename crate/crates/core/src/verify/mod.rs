//! Checks of the analytic identities and the Monte Carlo limit theorems.
//! Every check yields [`McReport`]s whose verdicts can be recomputed from
//! the stored numbers.

mod cpp_checks;
mod exact;
mod mc;
mod report;
pub mod stats;

pub use cpp_checks::{functionals, h_pair_cdf, verify_cpp};
pub use exact::{
    trend_rows, verify_identities, verify_kernels, verify_spectral, verify_trend_gate, verify_trend_monotone, TrendRow,
};
pub use report::{McReport, RawTable, Rule, Verdict, VerifyOutput};
pub use mc::{
    sigma_sq_median, simulate_stable_survival, simulate_survival, survival_reports, verify_feller, verify_genealogy,
    verify_many_to_few, verify_merger_ladder, verify_moments, verify_survival, verify_yaglom, yaglom_reports, FellerSpec,
    McSpec, MergerSpec,
};
