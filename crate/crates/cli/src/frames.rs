//! Scene directories: one sub-directory per frame, named by frame id.
//!
//! A frame directory holds `obb.txt`, the three heat-map stacks
//! `<id>_<plane>.mvhm` and optionally the projected views
//! `<id>_<plane>.pgm` (+ `.meta`). A frame may carry `depth.mvdf` instead
//! of `obb.txt`, in which case the OBB and views are computed from it.

use std::path::{Path, PathBuf};

use mvfuse_core::io::{heatmap_file_name, read_depth_frame_file, read_mvhm_file, read_obb_file, read_view_files};
use mvfuse_core::pipeline::project_depth;
use mvfuse_core::{HeatMapStack, ObbFrame, Plane, ProjectedView};
use mvfuse_core::io::RunConfig;

use crate::{CliError, CliResult};

pub const OBB_FILE: &str = "obb.txt";
pub const DEPTH_FILE: &str = "depth.mvdf";

pub fn view_stem(id: &str, plane: Plane) -> String {
    format!("{id}_{plane}")
}

/// Frame directories under `root`, in lexicographic id order.
pub fn discover(root: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(root).map_err(|e| CliError::Run(format!("{}: {e}", root.display())))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Run(format!("{}: {e}", root.display())))?;
        let path = entry.path();
        if path.is_dir() && (path.join(OBB_FILE).is_file() || path.join(DEPTH_FILE).is_file()) {
            frames.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    frames.sort();
    if frames.is_empty() {
        return Err(CliError::Run(format!("no frame directories found in {}", root.display())));
    }
    Ok(frames)
}

pub struct Frame {
    pub obb: ObbFrame,
    pub stacks: Vec<HeatMapStack>,
    /// Empty when the frame has neither stored views nor a depth file.
    pub views: Vec<ProjectedView>,
}

pub fn load(id: &str, dir: &Path, config: &RunConfig) -> Result<Frame, String> {
    let (obb, views) = if dir.join(OBB_FILE).is_file() {
        let obb = read_obb_file(&dir.join(OBB_FILE)).map_err(|e| e.to_string())?;
        let mut views = Vec::new();
        for plane in Plane::ALL {
            let pgm = dir.join(format!("{}.pgm", view_stem(id, plane)));
            if pgm.is_file() {
                views.push(read_view_files(&pgm).map_err(|e| e.to_string())?);
            }
        }
        (obb, views)
    } else {
        let depth = read_depth_frame_file(&dir.join(DEPTH_FILE), config.adapter).map_err(|e| e.to_string())?;
        let (_, obb, views) =
            project_depth(&depth, &config.intrinsics, config.projection_resolution).map_err(|e| e.to_string())?;
        (obb, views.to_vec())
    };
    let stacks = Plane::ALL
        .iter()
        .map(|&plane| {
            let size = views
                .iter()
                .find(|v| v.plane == plane)
                .map(|v| (v.width, v.height))
                .unwrap_or((config.projection_resolution, config.projection_resolution));
            read_mvhm_file(&dir.join(heatmap_file_name(id, plane)), size).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Frame { obb, stacks, views })
}
