//! Multi-view projection and heat-map fusion for 3D articulated hand pose
//! estimation from single depth frames.
//!
//! The pipeline runs depth frame → point cloud → oriented bounding box →
//! three orthographic projections → per-view heat-maps → per-joint 3D
//! Gaussians → closed-form MAP solve under a linear pose prior.
//!
//! Modules map onto pipeline stages:
//!
//! - [`geometry`]: back-projection, OBB fitting, orthographic projection.
//! - [`heatmap`]: heat-map stacks, synthesis, sampling, noise.
//! - [`prior`]: PCA pose prior (fit, project, reconstruct).
//! - [`fusion`]: joint Gaussians, the closed-form solve, and both baselines.
//! - [`synth`]: labelled synthetic scenes standing in for CNN output.
//! - [`eval`]: mean joint error, worst-case accuracy, comparison tables.
//! - [`io`]: file formats and run configuration.
//! - [`pipeline`]: per-frame composition of the above.

pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod heatmap;
pub mod io;
pub mod pipeline;
pub mod prior;
pub mod synth;
mod types;

pub use types::{CoordFrame, JointSet, Plane, DEFAULT_JOINT_COUNT, JOINT_NAMES};

pub use eval::{ErrorReport, EvalError};
pub use fusion::{FusionError, FusionProblem, JointGaussian, SamplingGrid};
pub use geometry::{CameraIntrinsics, DepthFrame, GeometryError, ObbFrame, PlaneAffine, PointCloud, ProjectedView};
pub use heatmap::{HeatMapStack, NoiseKind, ViewLink};
pub use prior::{PosePrior, PriorError};

/// Fixed defaults shared across modules.
pub mod defaults {
    /// Side length of the square projected images, in pixels.
    pub const PROJECTION_RESOLUTION: usize = 96;
    /// Side length of the square heat-maps, in pixels.
    pub const HEATMAP_SIZE: usize = 18;
    /// Principal components kept in the pose prior.
    pub const PRIOR_COMPONENTS: usize = 35;
    /// Samples per axis of the fusion grid.
    pub const GRID_SAMPLES: usize = 32;
    /// Heat-map blob width, in heat-map pixels.
    pub const HEATMAP_SIGMA: f64 = 1.0;
}
