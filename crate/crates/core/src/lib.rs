//! Exemplar-based synthesis of 3D voxel radiance scenes.
//!
//! A single exemplar grid (density plus degree-2 spherical harmonics per
//! voxel) is turned into a multi-scale pyramid of matching features
//! (truncated SDF + PCA-reduced appearance). New scenes are synthesized as
//! *mapping fields*: every synthesis voxel stores a continuous coordinate
//! into the exemplar, found by coarse-to-fine patch nearest-neighbor
//! search. Results are read back through the exemplar, rendered with
//! emission-absorption volume rendering, and scored with point-cloud and
//! image diversity metrics.

pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod nnf;
pub mod procedural;
pub mod pyramid;
pub mod render;
pub mod synth;
pub mod xform;

pub use config::SynthesisConfig;
pub use error::{Error, Result};
pub use grid::{BBox, Dims, FeatureVolume, MappingField, TransformedGrid, Vec3, VoxelGrid};
pub use pyramid::ExemplarPyramid;
