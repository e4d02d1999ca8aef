//! Multi-view fusion: per-joint 3D Gaussians from three heat-map stacks, the
//! closed-form prior-constrained MAP solve, and the two comparison baselines.
//!
//! Each joint's evidence is the product `Q(p) = H_xy(p)·H_yz(p)·H_zx(p)` of
//! the three views' heat-map intensities at the projections of `p`, sampled on
//! a regular grid over the (inflated) OBB. A Gaussian `N(μ_k, Σ_k)` is fitted
//! to `Q` by weighted moments, and the pose is the minimizer of
//! `Σ_k (φ_k − μ_k)ᵀ Σ_k⁻¹ (φ_k − μ_k)` over the prior subspace
//! `vec(Φ) = E·α + u`, which is `α* = A⁻¹ b` with
//! `A_ij = Σ_k e_{j,k}ᵀ Σ_k⁻¹ e_{i,k}` and `b_i = Σ_k (μ_k − u_k)ᵀ Σ_k⁻¹ e_{i,k}`.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{unproject_view_value, ObbFrame, PlaneAffine, ProjectedView};
use crate::heatmap::{half_max_centroid, HeatMapStack};
use crate::prior::PosePrior;
use crate::types::{CoordFrame, JointSet, Plane};

/// Total `Q` mass below which a joint falls back to a broad Gaussian.
pub const LOW_MASS: f64 = 1e-8;
/// `A` is reported singular when `λ_min ≤ SINGULAR_RATIO · λ_max`.
pub const SINGULAR_RATIO: f64 = 1e-12;
/// Tikhonov bump, relative to `trace(A)/M`, applied to singular systems.
pub const TIKHONOV: f64 = 1e-10;
/// Relative tolerance when checking stack registration against an OBB.
const REGISTRATION_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("view mismatch: {0}")]
    ViewMismatch(String),
    #[error("coordinate frame mismatch: prior is {prior:?}, gaussians are {gaussians:?}")]
    FrameMismatch { prior: CoordFrame, gaussians: CoordFrame },
    #[error("prior has {prior} joints but {got} gaussians were given")]
    JointCountMismatch { prior: usize, got: usize },
    #[error("covariance of joint {0} is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("linear system is singular even after regularization")]
    SingularSystem,
    #[error("sampling grid needs at least 2 samples per axis, got {0}")]
    InvalidGrid(usize),
}

/// Regular sampling of the OBB, inflated about its centre.
///
/// Samples sit at cell centres of an `n`-cell partition of each inflated
/// axis, so a constant density has exactly the moments of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingGrid {
    pub n: usize,
    pub inflation: f64,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self { n: crate::defaults::GRID_SAMPLES, inflation: 1.1 }
    }
}

impl SamplingGrid {
    pub fn with_samples(n: usize) -> Self {
        Self { n, ..Self::default() }
    }

    /// Sample coordinates along an axis of half-length `half`.
    pub fn axis(&self, half: f64) -> Vec<f64> {
        let span = 2.0 * half * self.inflation;
        let step = span / self.n as f64;
        (0..self.n).map(|i| -0.5 * span + (i as f64 + 0.5) * step).collect()
    }

    /// Largest sample spacing over the three axes.
    pub fn spacing(&self, obb: &ObbFrame) -> f64 {
        2.0 * obb.extents.max() * self.inflation / self.n as f64
    }

    /// Covariance floor `ε = max(1 mm², (spacing/2)²)`.
    pub fn regularization(&self, obb: &ObbFrame) -> f64 {
        (0.5 * self.spacing(obb)).powi(2).max(1.0)
    }
}

/// Settings of the Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FusionConfig {
    pub grid: SamplingGrid,
    /// Grid points with `Q < support_fraction · max Q` are left out of the
    /// moments. `0` uses every sample.
    pub support_fraction: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { grid: SamplingGrid::default(), support_fraction: 0.1 }
    }
}

/// Gaussian approximation of one joint's product density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointGaussian {
    pub mu: Vector3<f64>,
    pub sigma: Matrix3<f64>,
    /// `Σ Q` over the grid.
    pub mass: f64,
    /// Set when the joint used the low-mass fallback.
    pub low_mass: bool,
}

/// Per-joint Gaussians with the frame their moments are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussians {
    pub frame: CoordFrame,
    pub joints: Vec<JointGaussian>,
}

impl JointGaussians {
    /// Rigidly moves OBB-frame Gaussians into camera space.
    pub fn to_camera(&self, obb: &ObbFrame) -> JointGaussians {
        if self.frame == CoordFrame::Camera {
            return self.clone();
        }
        let r = obb.axes;
        let joints = self
            .joints
            .iter()
            .map(|g| {
                let sigma = r * g.sigma * r.transpose();
                JointGaussian { mu: obb.to_camera(&g.mu), sigma: 0.5 * (sigma + sigma.transpose()), ..*g }
            })
            .collect();
        JointGaussians { frame: CoordFrame::Camera, joints }
    }

    pub fn means(&self) -> JointSet {
        JointSet::new(self.frame, self.joints.iter().map(|g| g.mu).collect())
    }
}

/// The assembled and solved `A·α = b` system.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionProblem {
    pub a_matrix: DMatrix<f64>,
    pub b_vector: DVector<f64>,
    pub alpha: DVector<f64>,
    pub gaussians: JointGaussians,
    /// `λ_max / λ_min` of `A` before any regularization.
    pub condition_estimate: f64,
    /// Set when the Tikhonov bump was applied.
    pub singular: bool,
}

impl FusionProblem {
    /// `|A·α − b|_∞`.
    pub fn residual(&self) -> f64 {
        (&self.a_matrix * &self.alpha - &self.b_vector).amax()
    }
}

/// Stacks re-ordered as `[XY, YZ, ZX]`, with joint counts checked.
pub fn ordered_views(stacks: &[HeatMapStack]) -> Result<[&HeatMapStack; 3], FusionError> {
    if stacks.len() != 3 {
        return Err(FusionError::ViewMismatch(format!("expected 3 stacks, got {}", stacks.len())));
    }
    let find = |plane: Plane| {
        let mut it = stacks.iter().filter(|s| s.plane == plane);
        match (it.next(), it.next()) {
            (Some(s), None) => Ok(s),
            _ => Err(FusionError::ViewMismatch(format!("need exactly one {plane} stack"))),
        }
    };
    let views = [find(Plane::Xy)?, find(Plane::Yz)?, find(Plane::Zx)?];
    let k = views[0].k;
    if k == 0 || views.iter().any(|s| s.k != k) {
        return Err(FusionError::ViewMismatch(format!(
            "joint counts differ: {:?}",
            views.iter().map(|s| s.k).collect::<Vec<_>>()
        )));
    }
    Ok(views)
}

/// Checks that a stack is registered to the framing of `obb`'s face.
pub fn check_registration(stack: &HeatMapStack, obb: &ObbFrame) -> Result<(), FusionError> {
    let link = &stack.view_link;
    let expected = PlaneAffine::for_obb(obb, stack.plane, link.width, link.height);
    if !link.affine.approx_eq(&expected, REGISTRATION_TOL) {
        return Err(FusionError::ViewMismatch(format!(
            "{} stack is not registered to this OBB: {:?} vs {:?}",
            stack.plane, link.affine.m, expected.m
        )));
    }
    Ok(())
}

/// Samples one view on a 2D slice of the grid: `table[k][a·n + b]` holds the
/// intensity of joint `k` at plane coordinates `(coords_a[a], coords_b[b])`.
fn view_table(stack: &HeatMapStack, coords_a: &[f64], coords_b: &[f64]) -> Vec<Vec<f64>> {
    let n = coords_a.len();
    let mut table = vec![vec![0.0; n * coords_b.len()]; stack.k];
    for (ia, a) in coords_a.iter().enumerate() {
        for (ib, b) in coords_b.iter().enumerate() {
            let tap = stack.tap(stack.view_link.affine.apply(*a, *b));
            for (k, row) in table.iter_mut().enumerate() {
                row[ia * coords_b.len() + ib] = stack.sample_tap(k, &tap);
            }
        }
    }
    table
}

/// Fits `N(μ_k, Σ_k)` to each joint's product density, in the OBB frame.
pub fn estimate_joint_gaussians(
    stacks: &[HeatMapStack],
    obb: &ObbFrame,
    config: &FusionConfig,
) -> Result<JointGaussians, FusionError> {
    let [xy, yz, zx] = ordered_views(stacks)?;
    for s in [xy, yz, zx] {
        check_registration(s, obb)?;
    }
    let grid = config.grid;
    if grid.n < 2 {
        return Err(FusionError::InvalidGrid(grid.n));
    }
    let n = grid.n;
    let xs = grid.axis(obb.extents.x);
    let ys = grid.axis(obb.extents.y);
    let zs = grid.axis(obb.extents.z);
    let t_xy = view_table(xy, &xs, &ys);
    let t_yz = view_table(yz, &ys, &zs);
    let t_zx = view_table(zx, &zs, &xs);
    let eps = grid.regularization(obb);

    let joints = (0..xy.k)
        .map(|k| {
            let (a, b, c) = (&t_xy[k], &t_yz[k], &t_zx[k]);
            let q = |i: usize, j: usize, l: usize| a[i * n + j] * b[j * n + l] * c[l * n + i];

            let mut mass = 0.0;
            let mut peak = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let w = q(i, j, l);
                        mass += w;
                        peak = peak.max(w);
                    }
                }
            }
            if mass < LOW_MASS || peak <= 0.0 {
                return low_mass_fallback(a, &xs, &ys, obb, eps, mass);
            }
            let floor = config.support_fraction * peak;

            let mut sw = 0.0;
            let mut sum = Vector3::zeros();
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let w = q(i, j, l);
                        if w >= floor {
                            sw += w;
                            sum += w * Vector3::new(xs[i], ys[j], zs[l]);
                        }
                    }
                }
            }
            let mu = sum / sw;
            let mut cov = Matrix3::zeros();
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let w = q(i, j, l);
                        if w >= floor {
                            let d = Vector3::new(xs[i], ys[j], zs[l]) - mu;
                            cov += w * d * d.transpose();
                        }
                    }
                }
            }
            cov /= sw;
            cov = 0.5 * (cov + cov.transpose());
            cov += Matrix3::identity() * eps;
            JointGaussian { mu, sigma: cov, mass, low_mass: false }
        })
        .collect();
    Ok(JointGaussians { frame: CoordFrame::Obb, joints })
}

/// Broad Gaussian at the XY-view maximum on the OBB centre plane.
fn low_mass_fallback(xy: &[f64], xs: &[f64], ys: &[f64], obb: &ObbFrame, eps: f64, mass: f64) -> JointGaussian {
    let n = ys.len();
    let best = xy
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best });
    let mu = Vector3::new(xs[best.0 / n], ys[best.0 % n], 0.0);
    let sigma = Matrix3::from_diagonal(&obb.extents.map(|e| (e * e).max(eps)));
    JointGaussian { mu, sigma, mass, low_mass: true }
}

fn precisions(gaussians: &JointGaussians) -> Result<Vec<Matrix3<f64>>, FusionError> {
    gaussians
        .joints
        .iter()
        .enumerate()
        .map(|(k, g)| {
            g.sigma
                .cholesky()
                .map(|c| {
                    let w = c.inverse();
                    0.5 * (w + w.transpose())
                })
                .ok_or(FusionError::NotPositiveDefinite(k))
        })
        .collect()
}

fn check_prior(gaussians: &JointGaussians, prior: &PosePrior) -> Result<(), FusionError> {
    if gaussians.frame != prior.frame {
        return Err(FusionError::FrameMismatch { prior: prior.frame, gaussians: gaussians.frame });
    }
    if gaussians.joints.len() != prior.k() {
        return Err(FusionError::JointCountMismatch { prior: prior.k(), got: gaussians.joints.len() });
    }
    Ok(())
}

/// `Σ_k (φ_k − μ_k)ᵀ Σ_k⁻¹ (φ_k − μ_k)` at `Φ = E·α + u`.
pub fn objective(gaussians: &JointGaussians, prior: &PosePrior, alpha: &DVector<f64>) -> Result<f64, FusionError> {
    check_prior(gaussians, prior)?;
    let w = precisions(gaussians)?;
    let phi = &prior.components * alpha + &prior.mean;
    Ok(gaussians
        .joints
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let d = Vector3::new(phi[3 * k], phi[3 * k + 1], phi[3 * k + 2]) - g.mu;
            d.dot(&(w[k] * d))
        })
        .sum())
}

/// Closed-form MAP pose under the prior subspace.
///
/// Builds `A` and `b`, then solves `A·α = b` by Cholesky. A system whose
/// smallest eigenvalue is at most `1e-12` of its largest is flagged singular
/// and solved with a `1e-10·trace(A)/M` ridge.
pub fn solve_pose(gaussians: &JointGaussians, prior: &PosePrior) -> Result<(JointSet, FusionProblem), FusionError> {
    check_prior(gaussians, prior)?;
    let w = precisions(gaussians)?;
    let m = prior.m();
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    for (k, g) in gaussians.joints.iter().enumerate() {
        let e_k = prior.components.rows(3 * k, 3);
        let we = w[k] * e_k;
        a += e_k.tr_mul(&we);
        let u_k = Vector3::new(prior.mean[3 * k], prior.mean[3 * k + 1], prior.mean[3 * k + 2]);
        b += we.tr_mul(&(g.mu - u_k));
    }
    a = (&a + a.transpose()) * 0.5;

    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let condition_estimate = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let singular = lo.partial_cmp(&(SINGULAR_RATIO * hi)) != Some(std::cmp::Ordering::Greater);

    let mut system = a.clone();
    if singular {
        log::warn!("fusion system is near singular (λ_min={lo:e}, λ_max={hi:e}); applying ridge");
        let bump = TIKHONOV * a.trace() / m as f64;
        for i in 0..m {
            system[(i, i)] += bump;
        }
    }
    let alpha = system.cholesky().ok_or(FusionError::SingularSystem)?.solve(&b);
    let pose = prior.reconstruct(&alpha).expect("alpha has prior dimension");
    let problem = FusionProblem {
        a_matrix: a,
        b_vector: b,
        alpha,
        gaussians: gaussians.clone(),
        condition_estimate,
        singular,
    };
    Ok((pose, problem))
}

fn centroid_plane_coords(stack: &HeatMapStack, joint: usize) -> (f64, f64) {
    match half_max_centroid(stack, joint) {
        Some((u, v)) => stack.view_link.affine.invert(u, v),
        None => (0.0, 0.0),
    }
}

/// XY-only baseline: 2D centroid on the XY heat-map, depth from the XY
/// projected image (or the OBB centre plane over background). OBB frame.
pub fn single_view_estimate(
    stack_xy: &HeatMapStack,
    view_xy: &ProjectedView,
    obb: &ObbFrame,
) -> Result<JointSet, FusionError> {
    if stack_xy.plane != Plane::Xy || view_xy.plane != Plane::Xy {
        return Err(FusionError::ViewMismatch("single-view baseline needs the XY view".into()));
    }
    if !stack_xy.view_link.affine.approx_eq(&view_xy.affine, REGISTRATION_TOL)
        || stack_xy.view_link.width != view_xy.width
        || stack_xy.view_link.height != view_xy.height
    {
        return Err(FusionError::ViewMismatch("XY stack is not registered to the XY view".into()));
    }
    check_registration(stack_xy, obb)?;
    let joints = (0..stack_xy.k)
        .map(|k| {
            let (x, y) = centroid_plane_coords(stack_xy, k);
            let (u, v) = view_xy.affine.apply(x, y);
            let z = view_xy
                .pixel_at(u, v)
                .map(|(c, r)| view_xy.index(c, r))
                .filter(|i| view_xy.mask[*i])
                .map(|i| unproject_view_value(view_xy, (u, v), view_xy.values[i]).unwrap_or(0.0))
                .unwrap_or(0.0);
            Vector3::new(x, y, z)
        })
        .collect();
    Ok(JointSet::new(CoordFrame::Obb, joints))
}

/// Coarse multi-view baseline: each coordinate is the mean of the two
/// per-view 2D centroid estimates that contain it. OBB frame.
pub fn coarse_fusion_estimate(stacks: &[HeatMapStack], obb: &ObbFrame) -> Result<JointSet, FusionError> {
    let [xy, yz, zx] = ordered_views(stacks)?;
    for s in [xy, yz, zx] {
        check_registration(s, obb)?;
    }
    let joints = (0..xy.k)
        .map(|k| {
            let (x1, y1) = centroid_plane_coords(xy, k);
            let (y2, z1) = centroid_plane_coords(yz, k);
            let (z2, x2) = centroid_plane_coords(zx, k);
            Vector3::new(0.5 * (x1 + x2), 0.5 * (y1 + y2), 0.5 * (z1 + z2))
        })
        .collect();
    Ok(JointSet::new(CoordFrame::Obb, joints))
}
