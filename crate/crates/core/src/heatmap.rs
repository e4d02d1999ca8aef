//! Per-view joint heat-maps: synthesis, continuous sampling and noise.
//!
//! A stack is registered to a projected image through its [`ViewLink`].
//! Positions passed in and out of this module are continuous pixel
//! coordinates of that projected image, not heat-map pixels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{PlaneAffine, ProjectedView};
use crate::types::Plane;

/// Registration of a heat-map stack to its projected image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewLink {
    /// Plane (mm) to projected-image pixel map.
    pub affine: PlaneAffine,
    pub width: usize,
    pub height: usize,
}

impl ViewLink {
    pub fn of_view(view: &ProjectedView) -> Self {
        Self { affine: view.affine, width: view.width, height: view.height }
    }
}

/// K confidence maps for one view, row-major per joint.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMapStack {
    pub plane: Plane,
    pub k: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub view_link: ViewLink,
}

impl HeatMapStack {
    pub fn zeros(plane: Plane, k: usize, width: usize, height: usize, view_link: ViewLink) -> Self {
        Self { plane, k, width, height, values: vec![0.0; k * width * height], view_link }
    }

    pub fn map(&self, joint: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.values[joint * n..(joint + 1) * n]
    }

    pub fn map_mut(&mut self, joint: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.values[joint * n..(joint + 1) * n]
    }

    pub fn get(&self, joint: usize, col: usize, row: usize) -> f32 {
        self.values[(joint * self.height + row) * self.width + col]
    }

    /// Heat-map pixels per projected-image pixel along u and v.
    pub fn scale(&self) -> (f64, f64) {
        (
            self.width as f64 / self.view_link.width as f64,
            self.height as f64 / self.view_link.height as f64,
        )
    }

    pub fn to_heatmap_coords(&self, uv: (f64, f64)) -> (f64, f64) {
        let (su, sv) = self.scale();
        (uv.0 * su, uv.1 * sv)
    }

    pub fn to_view_coords(&self, hm: (f64, f64)) -> (f64, f64) {
        let (su, sv) = self.scale();
        (hm.0 / su, hm.1 / sv)
    }

    /// Multiplies every value of one joint's map by `factor`.
    pub fn scale_joint(&mut self, joint: usize, factor: f32) {
        self.map_mut(joint).iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Renders unnormalized Gaussian blobs (peak 1) at the given projected-image
/// positions, evaluated at heat-map pixel centres.
pub fn synthesize_heatmaps(
    plane: Plane,
    joints_uv: &[(f64, f64)],
    sigma: f64,
    size: (usize, usize),
    view_link: ViewLink,
) -> HeatMapStack {
    assert!(sigma > 0.0, "heat-map sigma must be positive");
    let mut stack = HeatMapStack::zeros(plane, joints_uv.len(), size.0, size.1, view_link);
    for (k, uv) in joints_uv.iter().enumerate() {
        let centre = stack.to_heatmap_coords(*uv);
        add_blob(&mut stack, k, centre, sigma, 1.0);
    }
    stack
}

fn add_blob(stack: &mut HeatMapStack, joint: usize, centre: (f64, f64), sigma: f64, amplitude: f64) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let width = stack.width;
    let map = stack.map_mut(joint);
    for (i, value) in map.iter_mut().enumerate() {
        let du = (i % width) as f64 + 0.5 - centre.0;
        let dv = (i / width) as f64 + 0.5 - centre.1;
        *value += (amplitude * (-(du * du + dv * dv) * inv).exp()) as f32;
    }
}

/// Bilinear interpolation weights of a continuous projected-image position:
/// the four contributing heat-map pixel indices and their weights.
#[derive(Debug, Clone, Copy)]
pub struct BilinearTap {
    pub idx: [usize; 4],
    pub w: [f64; 4],
}

fn axis_tap(x: f64, len: usize) -> (usize, usize, f64) {
    if len == 1 {
        return (0, 0, 0.0);
    }
    let x = (x - 0.5).clamp(0.0, (len - 1) as f64);
    let i0 = (x.floor() as usize).min(len - 2);
    (i0, i0 + 1, x - i0 as f64)
}

impl HeatMapStack {
    pub fn tap(&self, uv: (f64, f64)) -> BilinearTap {
        let (x, y) = self.to_heatmap_coords(uv);
        let (c0, c1, fx) = axis_tap(x, self.width);
        let (r0, r1, fy) = axis_tap(y, self.height);
        let w = self.width;
        BilinearTap {
            idx: [r0 * w + c0, r0 * w + c1, r1 * w + c0, r1 * w + c1],
            w: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        }
    }

    pub fn sample_tap(&self, joint: usize, tap: &BilinearTap) -> f64 {
        let map = self.map(joint);
        tap.idx
            .iter()
            .zip(tap.w.iter())
            .map(|(i, w)| w * (map[*i] as f64).max(0.0))
            .sum()
    }
}

/// Continuous lookup of one joint's confidence at a projected-image position.
///
/// Bilinear over heat-map pixel centres, clamped to the edge outside, with
/// negative stored values read as 0.
pub fn sample(stack: &HeatMapStack, joint: usize, uv: (f64, f64)) -> f64 {
    assert!(joint < stack.k, "joint {joint} out of range for stack of {}", stack.k);
    stack.sample_tap(joint, &stack.tap(uv))
}

/// Heat-map corruption used to build noisy test suites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// I.i.d. zero-mean noise of the given standard deviation, then clamp at 0.
    Gaussian { sigma: f64 },
    /// An extra blob for one joint at a projected-image position.
    SpuriousHotspot { joint: usize, uv: (f64, f64), amplitude: f64, sigma: f64 },
}

pub fn add_noise(stack: &HeatMapStack, kind: NoiseKind, seed: u64) -> HeatMapStack {
    let mut out = stack.clone();
    match kind {
        NoiseKind::Gaussian { sigma } => {
            assert!(sigma >= 0.0, "noise sigma must be non-negative");
            if sigma == 0.0 {
                return out;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            for v in out.values.iter_mut() {
                *v = ((*v as f64 + normal.sample(&mut rng)).max(0.0)) as f32;
            }
        }
        NoiseKind::SpuriousHotspot { joint, uv, amplitude, sigma } => {
            assert!(amplitude >= 0.0, "hotspot amplitude must be non-negative");
            let centre = out.to_heatmap_coords(uv);
            add_blob(&mut out, joint, centre, sigma, amplitude);
        }
    }
    out
}

/// Half-maximum weighted centroid of one joint's map, in projected-image
/// coordinates. `None` when the map has no positive value.
pub fn half_max_centroid(stack: &HeatMapStack, joint: usize) -> Option<(f64, f64)> {
    let map = stack.map(joint);
    let peak = map.iter().fold(0.0f32, |a, b| a.max(*b));
    if peak <= 0.0 {
        return None;
    }
    let threshold = 0.5 * peak;
    let (mut sw, mut su, mut sv) = (0.0f64, 0.0f64, 0.0f64);
    for (i, value) in map.iter().enumerate() {
        if *value >= threshold {
            let w = *value as f64;
            sw += w;
            su += w * ((i % stack.width) as f64 + 0.5);
            sv += w * ((i / stack.width) as f64 + 0.5);
        }
    }
    Some(stack.to_view_coords((su / sw, sv / sw)))
}
