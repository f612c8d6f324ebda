//! Discretized holomorphic spheres in the product twistor space of the
//! hyperkaehler charts: collocation grids, the Cauchy-Riemann operator and
//! its spectrum, Gauss-Newton continuation, and the integral mechanism
//! table.

pub mod grid;
pub mod newton;
pub mod operator;

pub use grid::{bolt_lift, DiscretizedSphereMap, MapValue, SphereGrid};
pub use newton::{
    mechanism_demo, mechanism_perturbation, newton_continue, overlapping_perturbation,
    ContinuationOutcome, MechanismReport, MechanismRow, PulledBackJ,
};
pub use operator::{
    cr_residual, kernel_cokernel_from_sigmas, kernel_cokernel_of_matrix, kernel_moebius_angles,
    linearize, linearize_unchecked, moebius_fields, operator_directional_fd, AcsField, CrOperator, GapReport, ProductJ,
};
