//! Per-frame composition of the pipeline stages and small harnesses that run
//! a method over a set of synthetic scenes.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::eval::{mean_joint_error, EvalError};
use crate::fusion::{
    coarse_fusion_estimate, estimate_joint_gaussians, single_view_estimate, solve_pose, FusionConfig, FusionError,
    FusionProblem,
};
use crate::geometry::{
    compute_obb, depth_to_pointcloud, project_to_planes, CameraIntrinsics, DepthFrame, GeometryError, ObbFrame,
    PointCloud, ProjectedView,
};
use crate::heatmap::HeatMapStack;
use crate::prior::{PosePrior, PriorError};
use crate::synth::{SynthError, SyntheticScene};
use crate::types::{JointSet, Plane};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Pose estimators compared by the evaluation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Gaussian fusion of all three views plus the prior solve.
    Fine,
    /// Averaged per-view 2D estimates.
    Coarse,
    /// XY heat-map plus depth lookup.
    Single,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fine, Method::Coarse, Method::Single];

    pub fn name(self) -> &'static str {
        match self {
            Method::Fine => "fine",
            Method::Coarse => "coarse",
            Method::Single => "single",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fine" => Ok(Method::Fine),
            "coarse" => Ok(Method::Coarse),
            "single" => Ok(Method::Single),
            other => Err(format!("unknown method `{other}` (expected fine, coarse or single)")),
        }
    }
}

/// Depth frame to cloud, OBB and the three cleaned projections.
pub fn project_depth(
    frame: &DepthFrame,
    intrinsics: &CameraIntrinsics,
    resolution: usize,
) -> Result<(PointCloud, ObbFrame, [ProjectedView; 3]), GeometryError> {
    let cloud = depth_to_pointcloud(frame, intrinsics)?;
    let obb = compute_obb(&cloud)?;
    let views = project_to_planes(&cloud, &obb, resolution);
    Ok((cloud, obb, views))
}

/// Fine fusion with a camera-frame prior; the pose comes back in camera space.
pub fn fine_fusion(
    stacks: &[HeatMapStack],
    obb: &ObbFrame,
    prior: &PosePrior,
    config: &FusionConfig,
) -> Result<(JointSet, FusionProblem), FusionError> {
    let gaussians = estimate_joint_gaussians(stacks, obb, config)?.to_camera(obb);
    solve_pose(&gaussians, prior)
}

/// Runs one method on one frame and returns the camera-frame pose.
pub fn estimate(
    method: Method,
    stacks: &[HeatMapStack],
    views: &[ProjectedView],
    obb: &ObbFrame,
    prior: &PosePrior,
    config: &FusionConfig,
) -> Result<JointSet, FusionError> {
    match method {
        Method::Fine => Ok(fine_fusion(stacks, obb, prior, config)?.0),
        Method::Coarse => Ok(coarse_fusion_estimate(stacks, obb)?.to_camera(obb)),
        Method::Single => {
            let stack = stacks.iter().find(|s| s.plane == Plane::Xy);
            let view = views.iter().find(|v| v.plane == Plane::Xy);
            match (stack, view) {
                (Some(s), Some(v)) => Ok(single_view_estimate(s, v, obb)?.to_camera(obb)),
                _ => Err(FusionError::ViewMismatch("single-view baseline needs an XY stack and view".into())),
            }
        }
    }
}

/// Estimates every scene with `method`, using the noisy or clean stacks.
pub fn run_scenes(
    scenes: &[SyntheticScene],
    method: Method,
    prior: &PosePrior,
    config: &FusionConfig,
    noisy: bool,
) -> Result<Vec<JointSet>, FusionError> {
    scenes
        .iter()
        .map(|s| {
            let stacks = if noisy { &s.noisy_stacks } else { &s.clean_stacks };
            estimate(method, stacks, &s.views, &s.obb, prior, config)
        })
        .collect()
}

/// Overall mean fine-fusion error for each prior size in `ms`, using the
/// leading components of `prior`. Sizes above `prior.m()` are skipped.
pub fn sweep_components(
    scenes: &[SyntheticScene],
    prior: &PosePrior,
    ms: &[usize],
    config: &FusionConfig,
    noisy: bool,
) -> Result<Vec<(usize, f64)>, PipelineError> {
    let truth: Vec<JointSet> = scenes.iter().map(|s| s.pose.clone()).collect();
    let mut curve = Vec::with_capacity(ms.len());
    for &m in ms {
        if m == 0 || m > prior.m() {
            log::warn!("skipping M={m}: prior has {} components", prior.m());
            continue;
        }
        let truncated = prior.truncated(m);
        let preds = run_scenes(scenes, Method::Fine, &truncated, config, noisy)?;
        let (_, mean) = mean_joint_error(&preds, &truth)?;
        curve.push((m, mean));
    }
    Ok(curve)
}
