//! Sample-based checks of structural assumptions, stochastic inequalities
//! and a priori estimates.

mod apriori;
mod assumptions;
mod diagnostics;
mod inequalities;
mod report;
mod sampler;

pub use apriori::{apriori_check, apriori_stability, AprioriData, AprioriKind, AprioriReport, StabilityReport, DEFAULT_SCALES, MAX_SPREAD};
pub use assumptions::{check_h1, check_h1a_p, check_h1b_p, check_h2, check_h3, check_h4, check_h5, reevaluate_h1};
pub use diagnostics::{class_D_diagnostic, condition_3_4_estimate, ClassDCurve, ClassDPoint};
pub use inequalities::{backward_construct, bihari_verify, gronwall_verify, InequalityConfig};
pub use report::{AssumptionReport, InequalityReport, Verdict, Witness};
pub use sampler::{draw_tuple, SamplerConfig, Tuple};
