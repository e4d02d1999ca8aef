//! Linear pose subspace learned by PCA over training joint sets.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::types::{CoordFrame, JointSet};

/// Relative eigenvalue floor below which a fit is reported rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PriorError {
    #[error("need at least {needed} poses to fit {m} components, got {got}")]
    InsufficientData { needed: usize, got: usize, m: usize },
    #[error("requested {m} components but poses only have {dim} dimensions")]
    TooManyComponents { m: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate frame mismatch: prior is {expected:?}, input is {got:?}")]
    FrameMismatch { expected: CoordFrame, got: CoordFrame },
    #[error("invalid prior: {0}")]
    Invalid(String),
}

/// The affine subspace `vec(Φ) = E·α + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosePrior {
    pub frame: CoordFrame,
    /// Mean pose `u`, joint-major, length 3K.
    pub mean: DVector<f64>,
    /// Orthonormal basis `E`, 3K × M.
    pub components: DMatrix<f64>,
    /// Variance along each component, descending.
    pub eigenvalues: DVector<f64>,
}

impl PosePrior {
    pub fn new(
        frame: CoordFrame,
        mean: DVector<f64>,
        components: DMatrix<f64>,
        eigenvalues: DVector<f64>,
    ) -> Result<Self, PriorError> {
        if !mean.len().is_multiple_of(3) || mean.is_empty() {
            return Err(PriorError::Invalid(format!("mean length {} is not 3K", mean.len())));
        }
        if components.nrows() != mean.len() {
            return Err(PriorError::DimensionMismatch { expected: mean.len(), got: components.nrows() });
        }
        if eigenvalues.len() != components.ncols() {
            return Err(PriorError::DimensionMismatch { expected: components.ncols(), got: eigenvalues.len() });
        }
        if components.ncols() > mean.len() {
            return Err(PriorError::TooManyComponents { m: components.ncols(), dim: mean.len() });
        }
        Ok(Self { frame, mean, components, eigenvalues })
    }

    /// Joint count K.
    pub fn k(&self) -> usize {
        self.mean.len() / 3
    }

    /// Component count M.
    pub fn m(&self) -> usize {
        self.components.ncols()
    }

    /// `|EᵀE − I|_∞`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.components.tr_mul(&self.components);
        (gram - DMatrix::identity(self.m(), self.m())).amax()
    }

    pub fn is_rank_deficient(&self) -> bool {
        match (self.eigenvalues.iter().next(), self.eigenvalues.iter().next_back()) {
            (Some(first), Some(last)) => *last <= RANK_TOLERANCE * first,
            _ => false,
        }
    }

    /// The prior restricted to its first `m` components.
    pub fn truncated(&self, m: usize) -> PosePrior {
        let m = m.min(self.m());
        PosePrior {
            frame: self.frame,
            mean: self.mean.clone(),
            components: self.components.columns(0, m).into_owned(),
            eigenvalues: self.eigenvalues.rows(0, m).into_owned(),
        }
    }

    fn check(&self, pose: &JointSet) -> Result<(), PriorError> {
        if pose.frame != self.frame {
            return Err(PriorError::FrameMismatch { expected: self.frame, got: pose.frame });
        }
        if pose.len() * 3 != self.mean.len() {
            return Err(PriorError::DimensionMismatch { expected: self.mean.len(), got: pose.len() * 3 });
        }
        Ok(())
    }

    /// Subspace coefficients `α = Eᵀ(vec(pose) − u)`.
    pub fn project(&self, pose: &JointSet) -> Result<DVector<f64>, PriorError> {
        self.check(pose)?;
        Ok(self.components.tr_mul(&(pose.to_vector() - &self.mean)))
    }

    /// The pose `E·α + u`.
    pub fn reconstruct(&self, alpha: &DVector<f64>) -> Result<JointSet, PriorError> {
        if alpha.len() != self.m() {
            return Err(PriorError::DimensionMismatch { expected: self.m(), got: alpha.len() });
        }
        Ok(JointSet::from_vector(self.frame, &(&self.components * alpha + &self.mean)))
    }

    /// Mean per-joint Euclidean distance between poses and their projection
    /// onto the subspace.
    pub fn reconstruction_error(&self, poses: &[JointSet]) -> Result<f64, PriorError> {
        let mut total = 0.0;
        let mut count = 0usize;
        for pose in poses {
            let back = self.reconstruct(&self.project(pose)?)?;
            for (a, b) in pose.joints.iter().zip(back.joints.iter()) {
                total += (a - b).norm();
                count += 1;
            }
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// PCA over vectorized poses, keeping the top `m` components.
///
/// Uses the unbiased sample covariance. Each component is signed so its
/// largest-magnitude entry is positive. Inputs are sorted first, making the
/// result independent of pose order. Rank deficiency is logged and exposed
/// through [`PosePrior::is_rank_deficient`], not treated as an error.
pub fn fit_pose_prior(poses: &[JointSet], m: usize) -> Result<PosePrior, PriorError> {
    if poses.len() < m + 1 || poses.len() < 2 {
        return Err(PriorError::InsufficientData { needed: (m + 1).max(2), got: poses.len(), m });
    }
    let frame = poses[0].frame;
    let dim = poses[0].len() * 3;
    if dim == 0 {
        return Err(PriorError::Invalid("poses have no joints".into()));
    }
    if m > dim {
        return Err(PriorError::TooManyComponents { m, dim });
    }
    let mut vectors = Vec::with_capacity(poses.len());
    for pose in poses {
        if pose.frame != frame {
            return Err(PriorError::FrameMismatch { expected: frame, got: pose.frame });
        }
        if pose.len() * 3 != dim {
            return Err(PriorError::DimensionMismatch { expected: dim, got: pose.len() * 3 });
        }
        vectors.push(pose.to_vector());
    }
    vectors.sort_by(lexicographic);

    let n = vectors.len() as f64;
    let mean = vectors.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / n;
    let mut centred = DMatrix::zeros(dim, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        centred.set_column(j, &(v - &mean));
    }
    let mut cov = &centred * centred.transpose() / (n - 1.0);
    // Exact symmetry for the eigensolver.
    cov = (&cov + cov.transpose()) * 0.5;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = DMatrix::zeros(dim, m);
    let mut eigenvalues = DVector::zeros(m);
    for (col, &src) in order.iter().take(m).enumerate() {
        let mut e = eig.eigenvectors.column(src).normalize();
        let pivot = e.iter().enumerate().fold(0usize, |best, (i, x)| if x.abs() > e[best].abs() { i } else { best });
        if e[pivot] < 0.0 {
            e = -e;
        }
        components.set_column(col, &e);
        eigenvalues[col] = eig.eigenvalues[src].max(0.0);
    }

    let prior = PosePrior { frame, mean, components, eigenvalues };
    if prior.is_rank_deficient() {
        log::warn!(
            "pose prior is rank deficient: eigenvalue {m} is {:e}, leading eigenvalue {:e}",
            prior.eigenvalues[m - 1],
            prior.eigenvalues[0]
        );
    }
    Ok(prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_subspace_poses(k: usize, dim: usize, count: usize, seed: u64) -> Vec<JointSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = DMatrix::from_fn(3 * k, dim, |_, _| rng.random_range(-1.0..1.0));
        let offset = DVector::from_fn(3 * k, |_, _| rng.random_range(-100.0..100.0));
        (0..count)
            .map(|_| {
                let a = DVector::from_fn(dim, |_, _| rng.random_range(-30.0..30.0));
                JointSet::from_vector(CoordFrame::Camera, &(&basis * a + &offset))
            })
            .collect()
    }

    #[test]
    fn exact_subspace_is_recovered() {
        let poses = random_subspace_poses(21, 5, 40, 1);
        let prior = fit_pose_prior(&poses, 5).unwrap();
        assert!(prior.orthonormality_error() < 1e-9);
        for pose in &poses {
            let back = prior.reconstruct(&prior.project(pose).unwrap()).unwrap();
            for (a, b) in pose.joints.iter().zip(back.joints.iter()) {
                assert!((a - b).norm() <= 1e-9, "residual {}", (a - b).norm());
            }
        }
    }

    #[test]
    fn mean_is_arithmetic_mean() {
        let poses = random_subspace_poses(21, 4, 12, 2);
        let prior = fit_pose_prior(&poses, 3).unwrap();
        let direct = poses.iter().fold(DVector::zeros(63), |acc, p| acc + p.to_vector()) / poses.len() as f64;
        assert!((prior.mean.clone() - direct).amax() < 1e-12);
    }

    #[test]
    fn zero_alpha_reconstructs_mean() {
        let prior = fit_pose_prior(&random_subspace_poses(21, 6, 20, 3), 6).unwrap();
        let pose = prior.reconstruct(&DVector::zeros(6)).unwrap();
        assert_eq!(pose.to_vector(), prior.mean);
    }

    #[test]
    fn errors() {
        let poses = random_subspace_poses(21, 3, 4, 4);
        assert!(matches!(fit_pose_prior(&poses, 5), Err(PriorError::InsufficientData { .. })));
        let mut mixed = random_subspace_poses(21, 3, 10, 5);
        mixed[3].frame = CoordFrame::Obb;
        assert!(matches!(fit_pose_prior(&mixed, 2), Err(PriorError::FrameMismatch { .. })));
        let prior = fit_pose_prior(&random_subspace_poses(21, 3, 10, 6), 3).unwrap();
        let short = JointSet::new(CoordFrame::Camera, vec![Vector3::zeros(); 20]);
        assert!(matches!(prior.project(&short), Err(PriorError::DimensionMismatch { .. })));
        assert!(matches!(prior.reconstruct(&DVector::zeros(4)), Err(PriorError::DimensionMismatch { .. })));
        let obb = JointSet::new(CoordFrame::Obb, vec![Vector3::zeros(); 21]);
        assert!(matches!(prior.project(&obb), Err(PriorError::FrameMismatch { .. })));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let poses = random_subspace_poses(21, 3, 20, 7);
        let prior = fit_pose_prior(&poses, 6).unwrap();
        assert!(prior.is_rank_deficient());
        assert!(prior.orthonormality_error() < 1e-9);
        assert!(!fit_pose_prior(&poses, 3).unwrap().is_rank_deficient());
    }

    #[test]
    fn order_invariance() {
        let poses = random_subspace_poses(21, 8, 30, 8);
        let mut reversed = poses.clone();
        reversed.reverse();
        assert_eq!(fit_pose_prior(&poses, 5).unwrap(), fit_pose_prior(&reversed, 5).unwrap());
    }
}
