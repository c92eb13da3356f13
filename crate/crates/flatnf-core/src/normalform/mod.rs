//! Quasi-resonant Birkhoff normal form and the two-scale iteration:
//! cutoff, cohomological solver, Lie steps, scale advance and numeric flows
//! of polynomial Hamiltonians.

mod birkhoff;
mod cohomological;
mod cutoff;
mod family;
mod flow;
mod frequency;
mod iteration;

pub use birkhoff::{birkhoff_truncated, BirkhoffOutput};
pub use cohomological::{cohomological_residual, solve_cohomological};
pub use cutoff::{bump, bump_derivative, cutoff_eval, Cutoff};
pub use family::{KlFamily, KlPattern};
pub use flow::{flow_differential_check, poly_flow, FlowStats};
pub use frequency::FrequencyVector;
pub use iteration::{
    consistency_check, lie_step, scale_advance, AdvanceReport, ConsistencyReport, LieStepOptions, LieStepOutcome,
    NormalFormState, RemainderEntry, RemainderKind,
};
