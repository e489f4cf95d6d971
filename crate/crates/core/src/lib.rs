//! Conditional representations from subspace projection.
//!
//! Given image embeddings `I` and text embeddings describing a target
//! criterion (and, optionally, other criteria treated as noise), the crate
//! builds an orthonormal target basis with curvature-based rank selection
//! ([`aobo`]), removes the noise subspace by null-space projection
//! ([`nsdp`]), and projects onto the target basis. [`theory`] measures the
//! benefit and cost of that projection, [`synthgen`] produces datasets with
//! known ground truth, and [`eval`] scores the results.

pub mod aobo;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod nsdp;
pub mod par;
pub mod synthgen;
pub mod theory;

pub use aobo::{optimize_basis, BasisOptions, OrthogonalBasis, TruncationReport};
pub use error::{Error, Result};
pub use linalg::{EmbeddingMatrix, Matrix};
pub use nsdp::{denoise, extract_conditional, null_space_basis, pipeline, PipelineOptions, PipelineOutput};
pub use par::Execution;
pub use theory::{verify_theorem, BenefitCostReport, TheoremConfig, TheoremReport};
