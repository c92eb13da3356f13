//! Long-time integration of truncated NLS Hamiltonians with observable
//! tracking: actions, super-actions, re-centered action sums and Sobolev
//! norms.

mod experiment;
mod hamiltonian;
mod integrate;
mod observables;

pub use experiment::{random_seed, rectangle_seed, stability_experiment, StabilityReport};
pub use hamiltonian::{build_hlo, build_nls, Hamiltonian, QuarticModel};
pub use integrate::{integrate, step, IntegrateOptions, Scheme, Trajectory};
pub use observables::{annulus_membership, observables, ObservableRow, ObservableSeries};
