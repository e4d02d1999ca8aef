//! Labelled synthetic scenes: poses drawn from a linear generator, capsule
//! point clouds, and heat-maps rendered at the true joint projections.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Rotation3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::geometry::{compute_obb, project_to_planes, GeometryError, ObbFrame, PointCloud, ProjectedView};
use crate::heatmap::{add_noise, synthesize_heatmaps, HeatMapStack, NoiseKind, ViewLink};
use crate::prior::{fit_pose_prior, PosePrior};
use crate::types::{CoordFrame, JointSet, Plane, DEFAULT_JOINT_COUNT};

/// The 20 bones over the 21 joints: wrist to each MCP, then each finger's
/// MCP→PIP→DIP→tip chain.
pub const HAND_BONES: [(usize, usize); 20] = {
    let mut bones = [(0usize, 0usize); 20];
    let mut f = 0;
    while f < 5 {
        bones[f] = (0, 1 + f);
        bones[5 + f] = (1 + f, 6 + f);
        bones[10 + f] = (6 + f, 11 + f);
        bones[15 + f] = (11 + f, 16 + f);
        f += 1;
    }
    bones
};

// Hand-frame geometry: palm in the x-y plane, fingers along +y, palm facing -z.
const MCP_OFFSETS: [[f64; 3]; 5] = [
    [-28.0, 22.0, -6.0],
    [-24.0, 84.0, 0.0],
    [-3.0, 90.0, 0.0],
    [17.0, 85.0, 0.0],
    [34.0, 74.0, 0.0],
];
const FINGER_DIRECTIONS: [[f64; 2]; 5] = [[-0.62, 0.78], [-0.10, 1.0], [0.0, 1.0], [0.08, 1.0], [0.18, 1.0]];
const PHALANX_LENGTHS: [[f64; 3]; 5] = [
    [32.0, 28.0, 24.0],
    [40.0, 24.0, 20.0],
    [44.0, 28.0, 22.0],
    [41.0, 27.0, 21.0],
    [32.0, 20.0, 18.0],
];

/// Seed of the built-in generator's kinematic training set.
pub const GENERATOR_SEED: u64 = 0x6d76_6675_7365;
const GENERATOR_SAMPLES: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("scene {seed}: no acceptable scene after {attempts} attempts")]
    TooManyRejections { seed: u64, attempts: usize },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent sub-seed for one random stream of a scene.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix(splitmix(seed) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// One pose of the forward-kinematic hand, in camera space.
///
/// Finger flexion shares a common grasp factor, giving the pose set a
/// dominant low-dimensional structure.
pub fn kinematic_pose(rng: &mut ChaCha8Rng) -> JointSet {
    let deg = PI / 180.0;
    let grasp = uniform(rng, 0.0, 1.0);
    let mut joints = vec![Vector3::zeros(); DEFAULT_JOINT_COUNT];
    for f in 0..5 {
        let base = Vector3::from(MCP_OFFSETS[f]);
        let spread = uniform(rng, -12.0, 12.0) * deg;
        let d = Vector2::from(FINGER_DIRECTIONS[f]).normalize();
        let (s, c) = spread.sin_cos();
        let dir = Vector3::new(c * d.x - s * d.y, s * d.x + c * d.y, 0.0);
        let curl = if f == 0 { Vector3::new(0.55, 0.0, -0.83) } else { Vector3::new(0.0, 0.0, -1.0) };
        let curl = (curl - dir * dir.dot(&curl)).normalize();

        let mcp = (grasp * 70.0 + uniform(rng, -15.0, 15.0)).clamp(-10.0, 85.0) * deg;
        let pip = (grasp * 90.0 + uniform(rng, -15.0, 15.0)).clamp(0.0, 100.0) * deg;
        let dip = pip * uniform(rng, 0.55, 0.8);

        let mut p = base;
        let mut angle = 0.0;
        joints[1 + f] = p;
        for (seg, bend) in [mcp, pip, dip].into_iter().enumerate() {
            angle += bend;
            p += PHALANX_LENGTHS[f][seg] * (angle.cos() * dir + angle.sin() * curl);
            joints[6 + 5 * seg + f] = p;
        }
    }
    let rot = Rotation3::from_euler_angles(
        uniform(rng, -25.0, 25.0) * deg,
        uniform(rng, -25.0, 25.0) * deg,
        uniform(rng, -35.0, 35.0) * deg,
    );
    let shift = Vector3::new(uniform(rng, -20.0, 20.0), uniform(rng, -20.0, 20.0), 400.0 + uniform(rng, -30.0, 30.0));
    // Centre the hand on the palm before rotating.
    let palm = Vector3::new(0.0, 50.0, 0.0);
    let joints = joints.into_iter().map(|j| rot * (j - palm) + shift).collect();
    JointSet::new(CoordFrame::Camera, joints)
}

/// Built-in camera-space pose generator: PCA over kinematic hand samples.
pub fn default_generator(m: usize) -> PosePrior {
    let mut rng = ChaCha8Rng::seed_from_u64(GENERATOR_SEED);
    let poses: Vec<JointSet> = (0..GENERATOR_SAMPLES).map(|_| kinematic_pose(&mut rng)).collect();
    fit_pose_prior(&poses, m).expect("generator training set is well posed")
}

/// Draws `α_m ~ N(0, λ_m)` and returns `E·α + u`.
pub fn generate_pose(generator: &PosePrior, seed: u64) -> JointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = DVector::from_iterator(
        generator.m(),
        generator.eigenvalues.iter().map(|l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * l.max(0.0).sqrt()
        }),
    );
    generator.reconstruct(&alpha).expect("alpha has generator dimension")
}

/// Samples the camera-facing half of capsules around line segments.
///
/// Each segment gets `round(length · density)` points at exactly `radius`
/// from its axis, on the half facing the camera origin.
pub fn render_capsules(segments: &[(Vector3<f64>, Vector3<f64>)], density: f64, radius: f64, seed: u64) -> PointCloud {
    assert!(density > 0.0 && radius > 0.0, "density and radius must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    for (a, b) in segments {
        let along = b - a;
        let length = along.norm();
        if length == 0.0 {
            continue;
        }
        let axis = along / length;
        let toward_camera = -(a + 0.5 * along);
        let mut n1 = toward_camera - axis * axis.dot(&toward_camera);
        if n1.norm() < 1e-9 {
            n1 = axis.cross(&Vector3::x());
            if n1.norm() < 1e-9 {
                n1 = axis.cross(&Vector3::y());
            }
        }
        let n1 = n1.normalize();
        let n2 = axis.cross(&n1);
        let count = (length * density).round() as usize;
        for _ in 0..count {
            let t = rng.random_range(0.0..1.0);
            let theta = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            let (s, c) = theta.sin_cos();
            points.push(a + along * t + radius * (c * n1 + s * n2));
        }
    }
    PointCloud::new(points)
}

/// Capsule cloud over the fixed hand skeleton.
pub fn render_cloud(pose: &JointSet, density: f64, radius: f64, seed: u64) -> PointCloud {
    let segments: Vec<_> = HAND_BONES.iter().map(|(a, b)| (pose.joints[*a], pose.joints[*b])).collect();
    render_capsules(&segments, density, radius, seed)
}

/// Rendering parameters of synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub resolution: usize,
    pub heatmap_size: usize,
    pub heatmap_sigma: f64,
    /// Cloud points per millimetre of bone.
    pub density: f64,
    pub radius: f64,
    pub max_attempts: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            resolution: crate::defaults::PROJECTION_RESOLUTION,
            heatmap_size: crate::defaults::HEATMAP_SIZE,
            heatmap_sigma: crate::defaults::HEATMAP_SIGMA,
            density: 15.0,
            radius: 8.0,
            max_attempts: 16,
        }
    }
}

/// Heat-map corruption applied to a scene's clean stacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of additive per-pixel noise.
    pub gaussian_sigma: f64,
    /// Probability that a scene gets one spurious hotspot.
    pub hotspot_probability: f64,
    pub hotspot_view: Plane,
    /// Displacement of the hotspot along the view's u axis, in mm.
    pub hotspot_offset_mm: f64,
    pub hotspot_amplitude: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            gaussian_sigma: 0.0,
            hotspot_probability: 0.0,
            hotspot_view: Plane::Xy,
            hotspot_offset_mm: 40.0,
            hotspot_amplitude: 1.0,
        }
    }

    /// Additive noise plus an occasional spurious XY hotspot.
    pub fn noisy(gaussian_sigma: f64, hotspot_probability: f64) -> Self {
        Self { gaussian_sigma, hotspot_probability, ..Self::none() }
    }

    /// A spurious XY hotspot on every scene and no additive noise.
    pub fn ambiguity() -> Self {
        Self { hotspot_probability: 1.0, ..Self::none() }
    }

    pub fn is_empty(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.hotspot_probability == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// Where a spurious hotspot was injected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hotspot {
    pub joint: usize,
    pub view: Plane,
    /// OBB-frame position the hotspot was rendered at.
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    /// Ground truth, camera space.
    pub pose: JointSet,
    pub cloud: PointCloud,
    pub obb: ObbFrame,
    pub views: [ProjectedView; 3],
    pub clean_stacks: [HeatMapStack; 3],
    pub noisy_stacks: [HeatMapStack; 3],
    pub seed: u64,
    /// Rejected attempts before this scene was accepted.
    pub rejections: usize,
    pub hotspot: Option<Hotspot>,
}

impl SyntheticScene {
    /// Heat-map cell size in OBB millimetres along the longest face side.
    pub fn cell_mm(&self) -> f64 {
        self.obb.max_side() / self.clean_stacks[0].width as f64
    }
}

/// Projected-image positions of OBB-frame joints in one view.
pub fn project_joints(view: &ProjectedView, local: &[Vector3<f64>]) -> Vec<(f64, f64)> {
    local
        .iter()
        .map(|j| {
            let (a, b) = view.plane.plane_coords(j);
            view.affine.apply(a, b)
        })
        .collect()
}

/// Runs generation, rendering, projection and heat-map synthesis for one
/// seed. Scenes whose joints do not all project inside every image are
/// rejected and regenerated from a derived seed.
pub fn make_scene(
    generator: &PosePrior,
    seed: u64,
    noise: &NoiseSpec,
    config: &SceneConfig,
) -> Result<SyntheticScene, SynthError> {
    for attempt in 0..config.max_attempts {
        let attempt_seed = if attempt == 0 { seed } else { derive_seed(seed, 1000 + attempt as u64) };
        let pose = generate_pose(generator, derive_seed(attempt_seed, 1));
        let cloud = render_cloud(&pose, config.density, config.radius, derive_seed(attempt_seed, 2));
        let obb = compute_obb(&cloud)?;
        let views = project_to_planes(&cloud, &obb, config.resolution);
        let local: Vec<_> = pose.to_obb(&obb).joints;

        let projections: Vec<Vec<(f64, f64)>> = views.iter().map(|v| project_joints(v, &local)).collect();
        let inside = projections.iter().zip(views.iter()).all(|(uvs, v)| {
            uvs.iter().all(|(u, w)| *u >= 0.0 && *w >= 0.0 && *u < v.width as f64 && *w < v.height as f64)
        });
        if !inside {
            log::info!("scene {seed}: attempt {attempt} rejected (joint projects outside an image)");
            continue;
        }

        let size = (config.heatmap_size, config.heatmap_size);
        let clean_stacks: [HeatMapStack; 3] = std::array::from_fn(|i| {
            synthesize_heatmaps(views[i].plane, &projections[i], config.heatmap_sigma, size, ViewLink::of_view(&views[i]))
        });
        let (noisy_stacks, hotspot) = apply_noise(&clean_stacks, &views, &local, noise, config, attempt_seed);
        return Ok(SyntheticScene {
            pose,
            cloud,
            obb,
            views,
            clean_stacks,
            noisy_stacks,
            seed,
            rejections: attempt,
            hotspot,
        });
    }
    Err(SynthError::TooManyRejections { seed, attempts: config.max_attempts })
}

fn apply_noise(
    clean: &[HeatMapStack; 3],
    views: &[ProjectedView; 3],
    local: &[Vector3<f64>],
    noise: &NoiseSpec,
    config: &SceneConfig,
    seed: u64,
) -> ([HeatMapStack; 3], Option<Hotspot>) {
    let mut stacks = clean.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let mut hotspot = None;
    if noise.hotspot_probability > 0.0 && rng.random_range(0.0..1.0) < noise.hotspot_probability {
        let joint = rng.random_range(0..local.len());
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let view_idx = Plane::ALL.iter().position(|p| *p == noise.hotspot_view).expect("plane");
        let (u_axis, _, _) = noise.hotspot_view.axes();
        let mut position = local[joint];
        position[u_axis] += sign * noise.hotspot_offset_mm;
        let uv = project_joints(&views[view_idx], &[position])[0];
        let kind = NoiseKind::SpuriousHotspot {
            joint,
            uv,
            amplitude: noise.hotspot_amplitude,
            sigma: config.heatmap_sigma,
        };
        stacks[view_idx] = add_noise(&stacks[view_idx], kind, 0);
        hotspot = Some(Hotspot { joint, view: noise.hotspot_view, position });
    }
    if noise.gaussian_sigma > 0.0 {
        for (i, stack) in stacks.iter_mut().enumerate() {
            *stack = add_noise(stack, NoiseKind::Gaussian { sigma: noise.gaussian_sigma }, derive_seed(seed, 10 + i as u64));
        }
    }
    (stacks, hotspot)
}

/// Gaussian draw helper used by tests and harnesses.
pub fn normal_vector(rng: &mut ChaCha8Rng, len: usize, sigma: f64) -> DVector<f64> {
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    DVector::from_iterator(len, (0..len).map(|_| normal.sample(rng)))
}
