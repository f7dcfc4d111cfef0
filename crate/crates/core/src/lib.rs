//! Automatic skeleton extraction and skin binding for closed triangle meshes.
//!
//! Two rigging pipelines share a common volumetric front end:
//!
//! - **Path tree** ([`pathskel`], [`ctrlskel`]): voxelize the mesh, compute an
//!   exact Euclidean distance map, extract the discrete medial surface, grow a
//!   tree of centered voxel chains from the most interior voxel out to every
//!   limb tip, then fit a control skeleton by recursive edge splitting.
//! - **Template embedding** ([`embed`]): pack spheres on the medial surface,
//!   connect them into a graph, and embed a small reduced template skeleton
//!   into that graph by minimizing a weighted penalty, followed by continuous
//!   refinement.
//!
//! Either skeleton can then be bound to the surface with heat-equilibrium bone
//! weights and posed by linear blend skinning ([`skinning`]).
//!
//! ```text
//! TriangleMesh ─▶ VoxelGrid ─▶ DistanceField ─▶ MedialSurface
//!                                                 │
//!                  ┌──────────────────────────────┴───────────────┐
//!                  ▼                                              ▼
//!        heart / extremes / PathTree                    SpherePacking ─▶ EmbedGraph
//!                  │                                              │
//!        smooth ─▶ split ─▶ Skeleton                    embed_template ─▶ refine
//!                  │                                              │
//!           SegmentBinding                                 Skeleton ─▶ SkinBinding
//! ```

pub mod ctrlskel;
pub mod distfield;
pub mod embed;
pub mod fixtures;
pub mod geom;
pub mod medial;
pub mod meshio;
pub mod pathskel;
pub mod skinning;
pub mod voxelgrid;

pub use ctrlskel::{Joint, SegmentBinding, Skeleton};
pub use distfield::DistanceField;
pub use medial::MedialSurface;
pub use meshio::TriangleMesh;
pub use voxelgrid::{GridSpec, Voxel, VoxelGrid};
