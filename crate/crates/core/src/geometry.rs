//! Depth back-projection, OBB fitting and the three orthographic projections.
//!
//! All OBB-local coordinates are `axesᵀ · (p − origin)`, so the OBB x, y and z
//! axes are the first, second and third principal components of the cloud.

use std::cmp::Ordering;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Plane;

/// Pixel margin left around the OBB face in every projected image.
pub const FRAMING_MARGIN: f64 = 2.0;

const SKEW_TIE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid depth frame: {0}")]
    InvalidFrame(String),
    #[error("depth frame has no valid pixels")]
    EmptyFrame,
    #[error("point cloud is degenerate (all points identical or empty)")]
    DegenerateCloud,
    #[error("normalized value {0} outside [0, 1]")]
    OutOfRange(f64),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: usize,
    pub image_height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        image_width: usize,
        image_height: usize,
    ) -> Result<Self, GeometryError> {
        let cam = Self { fx, fy, cx, cy, image_width, image_height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.image_width as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.image_width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.image_height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.image_height
            )));
        }
        Ok(())
    }
}

/// Row-major millimetre depth image; `0` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f32>,
}

impl DepthFrame {
    pub fn new(width: usize, height: usize, depth: Vec<f32>) -> Result<Self, GeometryError> {
        if depth.len() != width * height {
            return Err(GeometryError::InvalidFrame(format!(
                "expected {} depth values for {}x{}, got {}",
                width * height,
                width,
                height,
                depth.len()
            )));
        }
        if let Some(bad) = depth.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(GeometryError::InvalidFrame(format!("invalid depth value {bad}")));
        }
        Ok(Self { width, height, depth })
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.depth[row * self.width + col]
    }

    pub fn valid_pixels(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }
}

/// Camera-space points in millimetres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Back-projects every valid pixel through the pinhole model.
///
/// Pixel `(col, row)` is sampled at its centre `(col + 0.5, row + 0.5)`.
pub fn depth_to_pointcloud(
    frame: &DepthFrame,
    cam: &CameraIntrinsics,
) -> Result<PointCloud, GeometryError> {
    let mut points = Vec::with_capacity(frame.valid_pixels());
    for row in 0..frame.height {
        let v = row as f64 + 0.5;
        for col in 0..frame.width {
            let d = frame.get(col, row) as f64;
            if d <= 0.0 {
                continue;
            }
            let u = col as f64 + 0.5;
            points.push(Vector3::new((u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d));
        }
    }
    if points.is_empty() {
        return Err(GeometryError::EmptyFrame);
    }
    Ok(PointCloud::new(points))
}

/// PCA-aligned bounding box that defines the projection coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObbFrame {
    /// Box centre in camera space.
    pub origin: Vector3<f64>,
    /// Columns are the OBB x, y, z axes in camera space.
    pub axes: Matrix3<f64>,
    /// Half side lengths along each axis.
    pub extents: Vector3<f64>,
}

impl ObbFrame {
    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.axes.tr_mul(&(p - self.origin))
    }

    pub fn to_camera(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.origin + self.axes * local
    }

    /// Whether `p` lies in the box scaled by `inflation` about its centre,
    /// allowing `slack` mm on every side.
    pub fn contains(&self, p: &Vector3<f64>, inflation: f64, slack: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.extents[i] * inflation + slack)
    }

    /// Largest full side length of the box.
    pub fn max_side(&self) -> f64 {
        2.0 * self.extents.max()
    }
}

fn lexicographic(a: &Vector3<f64>, b: &Vector3<f64>) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.z.total_cmp(&b.z))
}

/// Fits the oriented bounding box of a cloud by PCA.
///
/// Points are sorted before any reduction so the result does not depend on
/// input order. Axes 1 and 2 are oriented so the third central moment along
/// them is non-negative (falling back to a non-negative camera z component,
/// then to a positive first non-zero component); axis 3 is `axis1 × axis2`.
pub fn compute_obb(cloud: &PointCloud) -> Result<ObbFrame, GeometryError> {
    if cloud.is_empty() {
        return Err(GeometryError::DegenerateCloud);
    }
    let mut pts = cloud.points.clone();
    pts.sort_by(lexicographic);
    let n = pts.len() as f64;

    let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    if cov.iter().all(|c| *c == 0.0) {
        return Err(GeometryError::DegenerateCloud);
    }

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut first: Vector3<f64> = eig.eigenvectors.column(order[0]).normalize();
    let mut second: Vector3<f64> = eig.eigenvectors.column(order[1]).normalize();
    orient_axis(&mut first, &pts, &mean);
    orient_axis(&mut second, &pts, &mean);
    // Re-orthogonalize against rounding before closing the frame.
    second = (second - first * first.dot(&second)).normalize();
    let third = first.cross(&second);
    let axes = Matrix3::from_columns(&[first, second, third]);

    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &pts {
        let l = axes.tr_mul(&(p - mean));
        lo = lo.inf(&l);
        hi = hi.sup(&l);
    }
    let centre_local = (lo + hi) * 0.5;
    Ok(ObbFrame {
        origin: mean + axes * centre_local,
        axes,
        extents: (hi - lo) * 0.5,
    })
}

fn orient_axis(axis: &mut Vector3<f64>, pts: &[Vector3<f64>], mean: &Vector3<f64>) {
    let skew = pts
        .iter()
        .map(|p| {
            let t = (p - mean).dot(axis);
            t * t * t
        })
        .sum::<f64>()
        / pts.len() as f64;
    let flip = if skew.abs() >= SKEW_TIE {
        skew < 0.0
    } else if axis.z.abs() >= SKEW_TIE {
        axis.z < 0.0
    } else {
        axis.iter().find(|c| c.abs() >= SKEW_TIE).is_some_and(|c| *c < 0.0)
    };
    if flip {
        *axis = -*axis;
    }
}

/// Affine map from plane coordinates (mm) to image pixel coordinates:
/// `u = m[0]·a + m[1]·b + m[2]`, `v = m[3]·a + m[4]·b + m[5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneAffine {
    pub m: [f64; 6],
}

impl PlaneAffine {
    pub fn new(m: [f64; 6]) -> Self {
        Self { m }
    }

    /// Isotropic framing of a face with half-lengths `(half_u, half_v)` into a
    /// `width × height` image, centred, with [`FRAMING_MARGIN`] pixels kept
    /// free on the tighter side.
    ///
    /// The face edges land on pixel centres rather than pixel boundaries, so
    /// the extreme points of a cloud (which define its box) bin stably.
    pub fn framing(half_u: f64, half_v: f64, width: usize, height: usize) -> Self {
        let room_u = (width as f64 - 2.0 * FRAMING_MARGIN - 1.0).max(1.0);
        let room_v = (height as f64 - 2.0 * FRAMING_MARGIN - 1.0).max(1.0);
        let su = if half_u > 0.0 { room_u / (2.0 * half_u) } else { f64::INFINITY };
        let sv = if half_v > 0.0 { room_v / (2.0 * half_v) } else { f64::INFINITY };
        let s = su.min(sv);
        let s = if s.is_finite() { s } else { 1.0 };
        Self::new([s, 0.0, width as f64 / 2.0, 0.0, s, height as f64 / 2.0])
    }

    /// Framing of one OBB face.
    pub fn for_obb(obb: &ObbFrame, plane: Plane, width: usize, height: usize) -> Self {
        let (u, v, _) = plane.axes();
        Self::framing(obb.extents[u], obb.extents[v], width, height)
    }

    pub fn apply(&self, a: f64, b: f64) -> (f64, f64) {
        let m = &self.m;
        (m[0] * a + m[1] * b + m[2], m[3] * a + m[4] * b + m[5])
    }

    pub fn determinant(&self) -> f64 {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    pub fn is_invertible(&self) -> bool {
        let d = self.determinant();
        d.is_finite() && d != 0.0
    }

    /// Maps pixel coordinates back to plane coordinates.
    pub fn invert(&self, u: f64, v: f64) -> (f64, f64) {
        let m = &self.m;
        let det = self.determinant();
        let du = u - m[2];
        let dv = v - m[5];
        ((m[4] * du - m[1] * dv) / det, (m[0] * dv - m[3] * du) / det)
    }

    /// Mean pixels per millimetre.
    pub fn scale(&self) -> f64 {
        self.determinant().abs().sqrt()
    }

    pub fn approx_eq(&self, other: &PlaneAffine, rel: f64) -> bool {
        let mag = self.m.iter().chain(other.m.iter()).fold(1.0f64, |a, b| a.max(b.abs()));
        self.m.iter().zip(other.m.iter()).all(|(a, b)| (a - b).abs() <= rel * mag)
    }
}

/// One normalized-distance orthographic projection of a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedView {
    pub plane: Plane,
    pub width: usize,
    pub height: usize,
    /// Row-major normalized distances; `0` on background pixels.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    /// Signed OBB normal coordinate mapped to 0.
    pub near: f64,
    /// Signed OBB normal coordinate mapped to 1.
    pub far: f64,
    pub affine: PlaneAffine,
}

impl ProjectedView {
    fn empty(plane: Plane, width: usize, height: usize, affine: PlaneAffine) -> Self {
        Self {
            plane,
            width,
            height,
            values: vec![0.0; width * height],
            mask: vec![false; width * height],
            near: 0.0,
            far: 0.0,
            affine,
        }
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// Pixel containing continuous image coordinates, if inside the image.
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (col, row) = (u.floor() as usize, v.floor() as usize);
        (col < self.width && row < self.height).then_some((col, row))
    }

    /// Pixel a point with plane coordinates `(a, b)` is binned into; points
    /// outside the image clamp onto the border.
    pub fn bin(&self, a: f64, b: f64) -> (usize, usize) {
        let (u, v) = self.affine.apply(a, b);
        (clamp_floor(u, self.width), clamp_floor(v, self.height))
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    fn normalize(&self, normal: f64) -> f64 {
        let span = self.far - self.near;
        if span > 0.0 {
            ((normal - self.near) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

fn clamp_floor(x: f64, len: usize) -> usize {
    let f = x.floor();
    if f <= 0.0 || f.is_nan() {
        0
    } else {
        (f as usize).min(len - 1)
    }
}

/// Rasterizes one view with the z-buffer rule and no cleanup filtering.
///
/// Distances are signed OBB normal coordinates, normalized over the whole
/// point set so the nearest point maps to 0 and the farthest to 1.
pub fn rasterize_view(cloud: &PointCloud, obb: &ObbFrame, plane: Plane, resolution: usize) -> ProjectedView {
    let locals: Vec<Vector3<f64>> = cloud.points.iter().map(|p| obb.to_local(p)).collect();
    rasterize_locals(&locals, obb, plane, resolution)
}

fn rasterize_locals(locals: &[Vector3<f64>], obb: &ObbFrame, plane: Plane, resolution: usize) -> ProjectedView {
    let affine = PlaneAffine::for_obb(obb, plane, resolution, resolution);
    let mut view = ProjectedView::empty(plane, resolution, resolution, affine);
    if locals.is_empty() {
        return view;
    }
    let (near, far) = locals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
        let n = plane.normal_coord(l);
        (lo.min(n), hi.max(n))
    });
    view.near = near;
    view.far = far;
    for l in locals {
        let (a, b) = plane.plane_coords(l);
        let (col, row) = view.bin(a, b);
        let value = view.normalize(plane.normal_coord(l));
        let idx = view.index(col, row);
        if !view.mask[idx] || value < view.values[idx] {
            view.values[idx] = value;
            view.mask[idx] = true;
        }
    }
    view
}

/// 3×3 median over foreground values, then a 3×3 opening of the mask.
///
/// Pixels beyond the image border count as background. Opening never grows
/// the mask, so every output foreground pixel was foreground on input.
pub fn cleanup_view(view: &ProjectedView) -> ProjectedView {
    let (w, h) = (view.width, view.height);
    let neighbours = |col: usize, row: usize| {
        let r0 = row.saturating_sub(1);
        let c0 = col.saturating_sub(1);
        let r1 = (row + 1).min(h - 1);
        let c1 = (col + 1).min(w - 1);
        (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| (c, r)))
    };

    let mut values = view.values.clone();
    let mut window = Vec::with_capacity(9);
    for row in 0..h {
        for col in 0..w {
            let idx = view.index(col, row);
            if !view.mask[idx] {
                continue;
            }
            window.clear();
            window.extend(
                neighbours(col, row)
                    .map(|(c, r)| view.index(c, r))
                    .filter(|i| view.mask[*i])
                    .map(|i| view.values[i]),
            );
            window.sort_by(f64::total_cmp);
            let mid = window.len() / 2;
            values[idx] = if window.len() % 2 == 1 {
                window[mid]
            } else {
                0.5 * (window[mid - 1] + window[mid])
            };
        }
    }

    let full_neighbourhood = |mask: &[bool], col: usize, row: usize| {
        col > 0 && row > 0 && col + 1 < w && row + 1 < h && neighbours(col, row).all(|(c, r)| mask[r * w + c])
    };
    let eroded: Vec<bool> = (0..w * h).map(|i| full_neighbourhood(&view.mask, i % w, i / w)).collect();
    let opened: Vec<bool> = (0..w * h)
        .map(|i| neighbours(i % w, i / w).any(|(c, r)| eroded[r * w + c]))
        .collect();

    for (i, keep) in opened.iter().enumerate() {
        debug_assert!(!keep || view.mask[i]);
        if !keep {
            values[i] = 0.0;
        }
    }
    ProjectedView { values, mask: opened, ..view.clone() }
}

/// Projects a cloud onto the XY, YZ and ZX planes of its OBB, with cleanup.
pub fn project_to_planes(cloud: &PointCloud, obb: &ObbFrame, resolution: usize) -> [ProjectedView; 3] {
    project_to_planes_raw(cloud, obb, resolution).map(|v| cleanup_view(&v))
}

/// As [`project_to_planes`] but without the median/opening cleanup.
pub fn project_to_planes_raw(cloud: &PointCloud, obb: &ObbFrame, resolution: usize) -> [ProjectedView; 3] {
    let locals: Vec<Vector3<f64>> = cloud.points.iter().map(|p| obb.to_local(p)).collect();
    Plane::ALL.map(|plane| rasterize_locals(&locals, obb, plane, resolution))
}

/// Inverts the distance normalization of a view.
///
/// Returns the signed OBB coordinate along the view's normal axis. The pixel
/// location does not enter the result; it is accepted so callers can pass
/// the lookup they performed.
pub fn unproject_view_value(view: &ProjectedView, _pixel_uv: (f64, f64), value: f64) -> Result<f64, GeometryError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(GeometryError::OutOfRange(value));
    }
    Ok(view.near + value * (view.far - view.near))
}
