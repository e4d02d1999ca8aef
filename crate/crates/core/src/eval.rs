//! Mean joint error and worst-case accuracy, plus method comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{CoordFrame, JointSet};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions vs {gts} ground truths")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("frame {frame}: joint count {pred} vs {gt}")]
    JointCountMismatch { frame: usize, pred: usize, gt: usize },
    #[error("frame {frame}: coordinate frames differ ({pred:?} vs {gt:?})")]
    FrameTagMismatch { frame: usize, pred: CoordFrame, gt: CoordFrame },
    #[error("tolerances must be sorted ascending")]
    UnsortedTolerances,
    #[error("reports cover different frame sets: {0}")]
    FrameSetMismatch(String),
    #[error("no frames to evaluate")]
    Empty,
}

/// Default tolerance grid: 0 to 80 mm in 2 mm steps.
pub fn default_tolerances() -> Vec<f64> {
    (0..=40).map(|i| 2.0 * i as f64).collect()
}

fn check(preds: &[JointSet], gts: &[JointSet]) -> Result<(), EvalError> {
    if preds.len() != gts.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), gts: gts.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    for (frame, (p, g)) in preds.iter().zip(gts.iter()).enumerate() {
        if p.frame != g.frame {
            return Err(EvalError::FrameTagMismatch { frame, pred: p.frame, gt: g.frame });
        }
        if p.len() != g.len() || p.len() != gts[0].len() {
            return Err(EvalError::JointCountMismatch { frame, pred: p.len(), gt: g.len() });
        }
    }
    Ok(())
}

/// Euclidean error of every joint of every frame, `errors[frame][joint]`.
pub fn joint_errors(preds: &[JointSet], gts: &[JointSet]) -> Result<Vec<Vec<f64>>, EvalError> {
    check(preds, gts)?;
    Ok(preds
        .iter()
        .zip(gts.iter())
        .map(|(p, g)| p.joints.iter().zip(g.joints.iter()).map(|(a, b)| (a - b).norm()).collect())
        .collect())
}

/// Per-joint mean error over frames, and the mean over all frames and joints.
pub fn mean_joint_error(preds: &[JointSet], gts: &[JointSet]) -> Result<(Vec<f64>, f64), EvalError> {
    let errors = joint_errors(preds, gts)?;
    Ok(summarize_means(&errors))
}

fn summarize_means(errors: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let k = errors[0].len();
    let frames = errors.len() as f64;
    let mut per_joint = vec![0.0; k];
    for frame in errors {
        for (acc, e) in per_joint.iter_mut().zip(frame.iter()) {
            *acc += e;
        }
    }
    let total: f64 = per_joint.iter().sum();
    per_joint.iter_mut().for_each(|v| *v /= frames);
    (per_joint, total / (frames * k as f64))
}

/// Fraction of frames whose worst joint error is within each tolerance.
pub fn worst_case_accuracy(preds: &[JointSet], gts: &[JointSet], tolerances: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    let errors = joint_errors(preds, gts)?;
    worst_case_curve(&errors, tolerances)
}

fn worst_case_curve(errors: &[Vec<f64>], tolerances: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    if tolerances.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::UnsortedTolerances);
    }
    let worst: Vec<f64> = errors.iter().map(|f| f.iter().copied().fold(0.0, f64::max)).collect();
    let frames = worst.len() as f64;
    Ok(tolerances
        .iter()
        .map(|t| (*t, worst.iter().filter(|w| **w <= *t).count() as f64 / frames))
        .collect())
}

/// Both metrics for one method over one frame set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    pub per_joint_mean: Vec<f64>,
    pub overall_mean: f64,
    pub worst_case_curve: Vec<(f64, f64)>,
    pub frame_count: usize,
    #[serde(default)]
    pub config_hash: String,
}

impl ErrorReport {
    pub fn compute(method: &str, preds: &[JointSet], gts: &[JointSet], tolerances: &[f64]) -> Result<Self, EvalError> {
        let errors = joint_errors(preds, gts)?;
        let (per_joint_mean, overall_mean) = summarize_means(&errors);
        Ok(Self {
            method: method.to_string(),
            per_joint_mean,
            overall_mean,
            worst_case_curve: worst_case_curve(&errors, tolerances)?,
            frame_count: preds.len(),
            config_hash: String::new(),
        })
    }

    pub fn with_config_hash(mut self, hash: &str) -> Self {
        self.config_hash = hash.to_string();
        self
    }

    pub fn is_monotone(&self) -> bool {
        self.worst_case_curve.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1)
            && self.worst_case_curve.iter().all(|(_, f)| (0.0..=1.0).contains(f))
    }

    /// `joint_index,mean_error_mm` rows.
    pub fn per_joint_csv(&self) -> String {
        let mut out = String::from("joint_index,mean_error_mm\n");
        for (i, e) in self.per_joint_mean.iter().enumerate() {
            let _ = writeln!(out, "{i},{e}");
        }
        out
    }

    /// `tolerance_mm,fraction` rows.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("tolerance_mm,fraction\n");
        for (t, f) in &self.worst_case_curve {
            let _ = writeln!(out, "{t},{f}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Side-by-side view of several methods' reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub methods: Vec<String>,
    pub frame_count: usize,
    pub overall_mean: Vec<f64>,
    /// `per_joint_mean[joint][method]`.
    pub per_joint_mean: Vec<Vec<f64>>,
    /// Per-joint difference of each method to the first one.
    pub per_joint_delta: Vec<Vec<f64>>,
    pub tolerances: Vec<f64>,
    /// `curves[tolerance][method]`.
    pub curves: Vec<Vec<f64>>,
    /// Method names sorted by overall mean error, best first.
    pub ranking: Vec<String>,
}

pub fn compare_methods(reports: &[ErrorReport]) -> Result<ComparisonTable, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    for r in reports {
        if r.frame_count != first.frame_count {
            return Err(EvalError::FrameSetMismatch(format!(
                "{} has {} frames, {} has {}",
                first.method, first.frame_count, r.method, r.frame_count
            )));
        }
        if r.per_joint_mean.len() != first.per_joint_mean.len() {
            return Err(EvalError::FrameSetMismatch(format!("{} reports a different joint count", r.method)));
        }
        let same_grid = r.worst_case_curve.len() == first.worst_case_curve.len()
            && r.worst_case_curve.iter().zip(first.worst_case_curve.iter()).all(|(a, b)| a.0 == b.0);
        if !same_grid {
            return Err(EvalError::FrameSetMismatch(format!("{} uses a different tolerance grid", r.method)));
        }
        if !first.config_hash.is_empty() && !r.config_hash.is_empty() && r.config_hash != first.config_hash {
            log::warn!("comparing reports with different config hashes: {} vs {}", first.config_hash, r.config_hash);
        }
    }
    let k = first.per_joint_mean.len();
    let per_joint_mean: Vec<Vec<f64>> = (0..k).map(|j| reports.iter().map(|r| r.per_joint_mean[j]).collect()).collect();
    let per_joint_delta = per_joint_mean
        .iter()
        .map(|row| row.iter().map(|v| v - row[0]).collect())
        .collect();
    let mut ranking: Vec<&ErrorReport> = reports.iter().collect();
    ranking.sort_by(|a, b| a.overall_mean.total_cmp(&b.overall_mean));
    Ok(ComparisonTable {
        methods: reports.iter().map(|r| r.method.clone()).collect(),
        frame_count: first.frame_count,
        overall_mean: reports.iter().map(|r| r.overall_mean).collect(),
        per_joint_mean,
        per_joint_delta,
        tolerances: first.worst_case_curve.iter().map(|(t, _)| *t).collect(),
        curves: (0..first.worst_case_curve.len())
            .map(|i| reports.iter().map(|r| r.worst_case_curve[i].1).collect())
            .collect(),
        ranking: ranking.into_iter().map(|r| r.method.clone()).collect(),
    })
}

impl ComparisonTable {
    /// `joint_index,<method>...` rows of per-joint means.
    pub fn per_joint_csv(&self) -> String {
        let mut out = format!("joint_index,{}\n", self.methods.join(","));
        for (j, row) in self.per_joint_mean.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{j},{}", cells.join(","));
        }
        out
    }

    /// `tolerance_mm,<method>...` rows of worst-case fractions.
    pub fn curve_csv(&self) -> String {
        let mut out = format!("tolerance_mm,{}\n", self.methods.join(","));
        for (t, row) in self.tolerances.iter().zip(self.curves.iter()) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{t},{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}
