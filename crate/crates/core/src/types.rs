use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::ObbFrame;

/// Number of joints in the hand model.
pub const DEFAULT_JOINT_COUNT: usize = 21;

/// Joint ordering: wrist, then MCP, PIP, DIP and tip groups, each thumb to little.
pub const JOINT_NAMES: [&str; DEFAULT_JOINT_COUNT] = [
    "wrist",
    "thumb_mcp",
    "index_mcp",
    "middle_mcp",
    "ring_mcp",
    "little_mcp",
    "thumb_pip",
    "index_pip",
    "middle_pip",
    "ring_pip",
    "little_pip",
    "thumb_dip",
    "index_dip",
    "middle_dip",
    "ring_dip",
    "little_dip",
    "thumb_tip",
    "index_tip",
    "middle_tip",
    "ring_tip",
    "little_tip",
];

/// One of the three OBB coordinate planes.
///
/// Image columns follow the first named axis and rows the second, so `Zx`
/// puts OBB z along u and OBB x along v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    Xy,
    Yz,
    Zx,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Yz, Plane::Zx];

    /// OBB axis indices `(u, v, normal)` for this plane.
    pub fn axes(self) -> (usize, usize, usize) {
        match self {
            Plane::Xy => (0, 1, 2),
            Plane::Yz => (1, 2, 0),
            Plane::Zx => (2, 0, 1),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Plane::Xy => 0,
            Plane::Yz => 1,
            Plane::Zx => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Plane> {
        match tag {
            0 => Some(Plane::Xy),
            1 => Some(Plane::Yz),
            2 => Some(Plane::Zx),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Plane::Xy => "xy",
            Plane::Yz => "yz",
            Plane::Zx => "zx",
        }
    }

    /// Plane coordinates `(u, v)` of an OBB-local point.
    pub fn plane_coords(self, local: &Vector3<f64>) -> (f64, f64) {
        let (u, v, _) = self.axes();
        (local[u], local[v])
    }

    /// Signed OBB coordinate along this plane's normal.
    pub fn normal_coord(self, local: &Vector3<f64>) -> f64 {
        local[self.axes().2]
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Plane {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(Plane::Xy),
            "yz" => Ok(Plane::Yz),
            "zx" => Ok(Plane::Zx),
            other => Err(format!("unknown plane `{other}`")),
        }
    }
}

/// Coordinate frame a set of joints is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoordFrame {
    Camera,
    Obb,
}

/// K joint locations in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    pub frame: CoordFrame,
    pub joints: Vec<Vector3<f64>>,
}

impl JointSet {
    pub fn new(frame: CoordFrame, joints: Vec<Vector3<f64>>) -> Self {
        Self { frame, joints }
    }

    pub fn zeros(frame: CoordFrame, k: usize) -> Self {
        Self::new(frame, vec![Vector3::zeros(); k])
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Joint-major vectorization `(x1, y1, z1, x2, ...)`.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.joints.len() * 3,
            self.joints.iter().flat_map(|j| [j.x, j.y, j.z]),
        )
    }

    /// Inverse of [`JointSet::to_vector`]. The length must be a multiple of 3.
    pub fn from_vector(frame: CoordFrame, v: &DVector<f64>) -> Self {
        debug_assert_eq!(v.len() % 3, 0);
        let joints = v
            .as_slice()
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        Self::new(frame, joints)
    }

    /// Expresses the joints in camera space. A no-op for camera-space sets.
    pub fn to_camera(&self, obb: &ObbFrame) -> JointSet {
        match self.frame {
            CoordFrame::Camera => self.clone(),
            CoordFrame::Obb => JointSet::new(
                CoordFrame::Camera,
                self.joints.iter().map(|j| obb.to_camera(j)).collect(),
            ),
        }
    }

    /// Expresses the joints in the OBB frame. A no-op for OBB-space sets.
    pub fn to_obb(&self, obb: &ObbFrame) -> JointSet {
        match self.frame {
            CoordFrame::Obb => self.clone(),
            CoordFrame::Camera => JointSet::new(
                CoordFrame::Obb,
                self.joints.iter().map(|j| obb.to_local(j)).collect(),
            ),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|j| j.iter().all(|c| c.is_finite()))
    }
}
