//! Unstructured B-spline spaces over spline manifolds.
//!
//! A manifold is given as an atlas of charts glued by element-wise
//! transition maps. On top of it the crate assembles a global spline space,
//! verifies dual compatibility, builds dual functionals and the projector
//! they define, and measures approximation errors under refinement.

pub mod analysis;
pub mod atlas;
pub mod basis;
pub mod cover;
pub mod duality;
pub mod error;
pub mod fixtures;
pub mod geom;
pub mod io;
pub mod knots;
pub mod manifold;
pub mod mesh;
pub mod quadrature;
pub mod refine;
pub mod validate;

pub use analysis::{
    convergence_study, default_duals, error_norms, project, surface_convergence_study, ConvergenceTable, Field,
    GeometryMap, PatchLocator,
};
pub use atlas::{Chart, ChartId, ChartKind, ElementPair, ElementRef, PatchFrame, ProtoManifold, TransitionMap};
pub use basis::{FunctionClass, GlobalFunction, ProtoOverride, SplineSpace};
pub use cover::{cover_mesh, RawMesh};
pub use duality::{
    build_corrected_dual, build_explicit_dual, build_proto_duals, certify_linear_independence,
    check_dual_compatibility, DcReport, DualSet, IndependenceCertificate,
};
pub use error::{AnalysisError, AtlasError, BasisError, DualityError, IoError};
pub use geom::{CellMap, Orientation, Point};
pub use io::ManifoldFile;
pub use manifold::{ParameterManifold, PointOnChart};
pub use validate::{validate_proto_manifold, CheckKind, ValidationOptions, ValidationReport};
