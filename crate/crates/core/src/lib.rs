//! silhuetta: multi-view shape-from-silhouette reconstruction.
//!
//! The pipeline stages are:
//!
//! 1. **Silhouette** – grayscale, local max normalization, Otsu threshold,
//!    morphological opening, largest blob, hole filling.
//! 2. **Hull** – voxel grid over a bounding volume, visual-hull classification
//!    by projecting voxel centers into every silhouette.
//! 3. **Carving** – iterative photo-consistency carving of surface voxels.
//! 4. **Mesh** – cuberille surface extraction and signed tetrahedron volume.
//! 5. **Metrics** – relative error / precision of a measured volume.
//!
//! [`synth`] renders analytic scenes that provide ground truth for all stages,
//! and [`pipeline`] drives the stages end to end.

pub mod camera;
pub mod carving;
pub mod hull;
pub mod image;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod silhouette;
pub mod synth;

pub use camera::{CameraParams, CameraRig, Extrinsics, Intrinsics};
pub use carving::{CarveResult, ColorImageSet, ConsistencyParams};
pub use hull::{BoundingVolume, SilhouetteSet, VoxelGrid};
pub use image::{BinaryMask, GrayImage, Rgb, RgbImage};
pub use mesh::TriangleMesh;
pub use metrics::VolumeRecord;
pub use silhouette::{PreprocessConfig, StructuringElement};
pub use synth::{Primitive, Scene, ShadowPatch};

/// Cubic millimeters per cubic centimeter.
pub const MM3_PER_CM3: f64 = 1000.0;
