//! Re-centered polynomial algebra: multi-indices (k, l, m), centering,
//! Poisson brackets with ξ-gradients, weights, norms and scale projections.

mod bracket;
mod index;
mod poly;
mod weights;

pub use bracket::poisson_bracket;
pub use index::{MultiIndex, SiteExp};
pub use poly::{binomial, center, Coefficient, RecenteredPoly};
pub use weights::{
    hs_norm, in_annulus, norms, project_scale, recentered_sum, vector_field_diagnostic, Norms,
    ParamSchedule, Projection, VectorFieldDiagnostic, WeightSystem,
};
