//! Turns object requests into AR-ready meshes.
//!
//! The crate is organised around the stages an asset passes through:
//!
//! * [`mesh`]: the indexed triangle mesh, validation, statistics and the
//!   `.mforge` / OBJ codecs.
//! * [`simplify`]: quadric edge-collapse decimation to a vertex budget.
//! * [`repo`]: the embedding-keyed asset repository that lets repeated
//!   requests skip generation entirely.
//! * [`recommend`]: designer prompt, suggestion parsing and diversity metrics.
//! * [`backends`]: model-service interfaces, deterministic mocks, the HTTP
//!   client, and lasso/detection geometry for the image path.
//! * [`pipeline`]: the per-session state machine and orchestration.

pub mod backends;
pub mod mesh;
pub mod pipeline;
pub mod recommend;
pub mod repo;
pub mod simplify;

pub use mesh::{Mesh, MeshError, MeshFormat, MeshStats, ValidationReport};
pub use simplify::{simplify, SimplifyConfig, SimplifyReport};
