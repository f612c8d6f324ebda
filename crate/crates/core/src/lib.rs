//! Numerical toolkit for the twistor geometry of Riemannian 4-manifold
//! charts: curvature block decomposition, the taming inequality, twistor
//! almost complex structures with their natural closed 2-form, and
//! holomorphic-sphere continuation on hyperkaehler examples.

pub mod chart;
pub mod curvature;
pub mod curves;
pub mod error;
pub mod expr;
pub mod hyperkahler;
pub mod jet;
pub mod linalg;
pub mod taming;
pub mod twistor;

pub use chart::{catalog, perturb, MetricChart, Orientation, PerturbationSpec};
pub use curvature::{blocks_at, geometry_at, sectional_range, CurvatureBlocks, PointGeometry};
pub use error::{EvalError, Result};
pub use expr::{parse_expr, ExprAst};
pub use jet::{fd_oracle, Jet2};
