use std::path::{Path, PathBuf};

use mvfuse_core::eval::{compare_methods, default_tolerances, ErrorReport};
use mvfuse_core::fusion::{coarse_fusion_estimate, single_view_estimate, FusionConfig};
use mvfuse_core::io::{
    heatmap_file_name, load_joints_file, read_depth_frame_file, read_joints, read_mvpp_file, write_mvhm_file,
    write_mvpp_file, write_obb_file, write_view_files, RunConfig,
};
use mvfuse_core::pipeline::{fine_fusion, project_depth, sweep_components, Method};
use mvfuse_core::prior::fit_pose_prior;
use mvfuse_core::synth::{default_generator, derive_seed, make_scene, SyntheticScene};
use mvfuse_core::{JointSet, Plane, PosePrior};
use rayon::prelude::*;
use serde_json::json;

use crate::frames::{self, view_stem, Frame, OBB_FILE};
use crate::output::{ensure_dir, hash_comment, joints_text, read_text, to_json, write_atomic, write_file};
use crate::{CliError, CliResult};

pub const GENERATOR_FILE: &str = "generator.mvpp";
pub const GT_FILE: &str = "gt_joints.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const JOINTS_FILE: &str = "joints.txt";
pub const SUMMARY_FILE: &str = "summary.json";

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("missing {what} (use --{what} or set `{what}`)")))
}

fn frame_id(i: usize) -> String {
    format!("frame_{i:05}")
}

/// Config text as stored next to outputs: paths cleared, hash recorded.
fn provenance_config(config: &RunConfig) -> String {
    let mut stored = config.clone();
    stored.input = None;
    stored.output = None;
    format!("# config hash {}\n{}", config.hash(), stored.to_text())
}

fn write_views(dir: &Path, id: &str, views: &[mvfuse_core::ProjectedView]) -> CliResult {
    for view in views {
        write_view_files(dir, &view_stem(id, view.plane), view).map_err(|e| CliError::Run(e.to_string()))?;
    }
    Ok(())
}

/// Records per-frame failures and turns them into an exit status.
fn finish(dir: &Path, failures: &[(String, String)], total: usize) -> CliResult {
    if failures.is_empty() {
        return Ok(());
    }
    let log: String = failures.iter().map(|(id, e)| format!("{id}: {e}\n")).collect();
    write_file(&dir.join("errors.log"), &log)?;
    for (id, e) in failures {
        log::error!("{id}: {e}");
    }
    Err(CliError::Frames { failed: failures.len(), total })
}

pub fn project(config: &RunConfig) -> CliResult {
    let input = required(&config.input, "input")?;
    let out = required(&config.output, "output")?;
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(|e| CliError::Run(format!("{}: {e}", input.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        files
    } else {
        vec![input.to_path_buf()]
    };
    ensure_dir(out)?;
    let results: Vec<(String, Result<serde_json::Value, String>)> = files
        .par_iter()
        .map(|file| {
            let id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let result = (|| -> Result<serde_json::Value, String> {
                let depth = read_depth_frame_file(file, config.adapter).map_err(|e| e.to_string())?;
                let (cloud, obb, views) = project_depth(&depth, &config.intrinsics, config.projection_resolution)
                    .map_err(|e| e.to_string())?;
                let dir = out.join(&id);
                ensure_dir(&dir).map_err(|e| e.to_string())?;
                write_obb_file(&dir.join(OBB_FILE), &obb).map_err(|e| e.to_string())?;
                write_views(&dir, &id, &views).map_err(|e| e.to_string())?;
                Ok(json!({ "frame": id, "points": cloud.len(), "extents": obb.extents.as_slice() }))
            })();
            (id, result)
        })
        .collect();
    let (ok, failures) = split(results);
    write_atomic(
        &out.join(SUMMARY_FILE),
        to_json(&json!({ "command": "project", "config_hash": config.hash(), "frames": ok })),
    )?;
    finish(out, &failures, files.len())
}

fn split<T>(results: Vec<(String, Result<T, String>)>) -> (Vec<T>, Vec<(String, String)>) {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push((id, e)),
        }
    }
    (ok, failures)
}

fn scene_json(id: &str, scene: &SyntheticScene, hash: &str) -> serde_json::Value {
    json!({
        "frame": id,
        "seed": scene.seed,
        "rejections": scene.rejections,
        "points": scene.cloud.len(),
        "cell_mm": scene.cell_mm(),
        "hotspot": scene.hotspot.map(|h| json!({
            "joint": h.joint,
            "view": h.view.name(),
            "position": h.position.as_slice(),
        })),
        "config_hash": hash,
    })
}

pub fn synth(config: &RunConfig) -> CliResult {
    let out = required(&config.output, "output")?;
    ensure_dir(out)?;
    let hash = config.hash();
    let generator = default_generator(config.components);
    let scene_config = config.scene_config();
    let results: Vec<(String, Result<JointSet, String>)> = (0..config.frames)
        .into_par_iter()
        .map(|i| {
            let id = frame_id(i);
            let result = (|| -> Result<JointSet, String> {
                let scene = make_scene(&generator, derive_seed(config.seed, i as u64), &config.noise, &scene_config)
                    .map_err(|e| e.to_string())?;
                let dir = out.join(&id);
                ensure_dir(&dir).map_err(|e| e.to_string())?;
                write_obb_file(&dir.join(OBB_FILE), &scene.obb).map_err(|e| e.to_string())?;
                write_views(&dir, &id, &scene.views).map_err(|e| e.to_string())?;
                for stack in &scene.noisy_stacks {
                    write_mvhm_file(&dir.join(heatmap_file_name(&id, stack.plane)), stack)
                        .map_err(|e| e.to_string())?;
                }
                write_file(&dir.join("scene.json"), to_json(&scene_json(&id, &scene, &hash)))
                    .map_err(|e| e.to_string())?;
                Ok(scene.pose)
            })();
            (id, result)
        })
        .collect();
    let ids: Vec<String> = results.iter().filter(|(_, r)| r.is_ok()).map(|(id, _)| id.clone()).collect();
    let (poses, failures) = split(results);
    write_mvpp_file(&out.join(GENERATOR_FILE), &generator).map_err(|e| CliError::Run(e.to_string()))?;
    write_file(&out.join(GT_FILE), joints_text(&hash, &poses))?;
    write_file(&out.join(CONFIG_FILE), provenance_config(config))?;
    write_atomic(
        &out.join(SUMMARY_FILE),
        to_json(&json!({ "command": "synth", "config_hash": hash, "frames": ids })),
    )?;
    finish(out, &failures, config.frames)
}

pub fn fit_prior(config: &RunConfig) -> CliResult {
    let input = required(&config.input, "input")?;
    let out = required(&config.output, "output")?;
    let poses = load_joints_file(input).map_err(|e| CliError::Run(format!("{}: {e}", input.display())))?;
    let prior = fit_pose_prior(&poses, config.components).map_err(|e| CliError::Run(e.to_string()))?;
    if prior.is_rank_deficient() {
        log::warn!("training poses span fewer than {} dimensions", config.components);
    }
    write_mvpp_file(out, &prior).map_err(|e| CliError::Run(e.to_string()))?;
    println!("fitted {} components over {} poses ({} joints)", prior.m(), poses.len(), prior.k());
    Ok(())
}

fn estimate_frame(
    method: Method,
    frame: &Frame,
    prior: Option<&PosePrior>,
    fusion: &FusionConfig,
) -> Result<(JointSet, serde_json::Value), String> {
    match method {
        Method::Fine => {
            let prior = prior.ok_or("fine fusion needs a prior")?;
            let (pose, problem) = fine_fusion(&frame.stacks, &frame.obb, prior, fusion).map_err(|e| e.to_string())?;
            let low_mass: Vec<usize> =
                problem.gaussians.joints.iter().enumerate().filter(|(_, g)| g.low_mass).map(|(k, _)| k).collect();
            let diag = json!({
                "alpha": problem.alpha.as_slice(),
                "condition_estimate": problem.condition_estimate,
                "singular": problem.singular,
                "residual": problem.residual(),
                "low_mass_joints": low_mass,
                "masses": problem.gaussians.joints.iter().map(|g| g.mass).collect::<Vec<_>>(),
            });
            Ok((pose, diag))
        }
        Method::Coarse => {
            let pose = coarse_fusion_estimate(&frame.stacks, &frame.obb).map_err(|e| e.to_string())?;
            Ok((pose.to_camera(&frame.obb), json!({})))
        }
        Method::Single => {
            let stack = frame.stacks.iter().find(|s| s.plane == Plane::Xy).ok_or("missing XY heat-maps")?;
            let view = frame.views.iter().find(|v| v.plane == Plane::Xy).ok_or("missing XY view")?;
            let pose = single_view_estimate(stack, view, &frame.obb).map_err(|e| e.to_string())?;
            Ok((pose.to_camera(&frame.obb), json!({})))
        }
    }
}

pub fn estimate(config: &RunConfig, method: Method) -> CliResult {
    let input = required(&config.input, "input")?;
    let out = required(&config.output, "output")?;
    let prior = match (&config.prior, method) {
        (Some(path), _) => {
            Some(read_mvpp_file(path).map_err(|e| CliError::Config(format!("prior {}: {e}", path.display())))?)
        }
        (None, Method::Fine) => return Err(CliError::Config("fine fusion needs --prior".into())),
        (None, _) => None,
    };
    let frames = frames::discover(input)?;
    let diag_dir = out.join("diagnostics");
    ensure_dir(&diag_dir)?;
    let hash = config.hash();
    let fusion = config.fusion_config();
    let results: Vec<(String, Result<JointSet, String>)> = frames
        .par_iter()
        .map(|(id, dir)| {
            let result = frames::load(id, dir, config)
                .and_then(|frame| estimate_frame(method, &frame, prior.as_ref(), &fusion))
                .and_then(|(pose, mut diag)| {
                    diag["frame"] = json!(id);
                    diag["method"] = json!(method.name());
                    diag["config_hash"] = json!(hash);
                    write_file(&diag_dir.join(format!("{id}.json")), to_json(&diag)).map_err(|e| e.to_string())?;
                    Ok(pose)
                });
            (id.clone(), result)
        })
        .collect();
    let ids: Vec<String> = results.iter().filter(|(_, r)| r.is_ok()).map(|(id, _)| id.clone()).collect();
    let (poses, failures) = split(results);
    write_file(&out.join(JOINTS_FILE), joints_text(&hash, &poses))?;
    let failed: Vec<_> = failures.iter().map(|(id, e)| json!({ "frame": id, "error": e })).collect();
    write_atomic(
        &out.join(SUMMARY_FILE),
        to_json(&json!({ "command": method.name(), "config_hash": hash, "frames": ids, "failed": failed })),
    )?;
    println!("{}: {} of {} frames estimated", method.name(), poses.len(), frames.len());
    finish(out, &failures, frames.len())
}

fn load_joints(path: &Path) -> CliResult<(Vec<JointSet>, Option<String>)> {
    let text = read_text(path)?;
    let sets = read_joints(&text).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
    Ok((sets, hash_comment(&text)))
}

pub fn eval(config: &RunConfig, pred: &Path, gt: &Path, method: &str) -> CliResult {
    let (preds, pred_hash) = load_joints(pred)?;
    let (gts, _) = load_joints(gt)?;
    // Reports carry the hash of the run that produced the predictions.
    let hash = pred_hash.unwrap_or_else(|| config.hash());
    let report = ErrorReport::compute(method, &preds, &gts, &default_tolerances())
        .map_err(|e| CliError::Run(e.to_string()))?
        .with_config_hash(&hash);
    if let Some(out) = &config.output {
        ensure_dir(out)?;
        write_file(&out.join("per_joint.csv"), report.per_joint_csv())?;
        write_file(&out.join("curve.csv"), report.curve_csv())?;
        write_atomic(&out.join("report.json"), report.to_json() + "\n")?;
    }
    println!("{method}: mean joint error {:.4} mm over {} frames", report.overall_mean, report.frame_count);
    Ok(())
}

pub fn report(config: &RunConfig, paths: &[PathBuf]) -> CliResult {
    let reports = paths
        .iter()
        .map(|p| {
            serde_json::from_str::<ErrorReport>(&read_text(p)?)
                .map_err(|e| CliError::Run(format!("{}: {e}", p.display())))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let table = compare_methods(&reports).map_err(|e| CliError::Run(e.to_string()))?;
    if let Some(out) = &config.output {
        ensure_dir(out)?;
        write_file(&out.join("comparison_per_joint.csv"), table.per_joint_csv())?;
        write_file(&out.join("comparison_curve.csv"), table.curve_csv())?;
        write_atomic(&out.join("comparison.json"), table.to_json() + "\n")?;
    }
    for (name, mean) in table.methods.iter().zip(&table.overall_mean) {
        println!("{name:<12} {mean:.4} mm");
    }
    println!("ranking: {}", table.ranking.join(" < "));
    Ok(())
}

pub fn sweep(config: &RunConfig, ms: &[usize], noisy: bool) -> CliResult {
    let max_m = ms.iter().copied().max().ok_or_else(|| CliError::Config("empty component list".into()))?;
    let generator = default_generator(max_m.max(config.components));
    let prior = match &config.prior {
        Some(path) => read_mvpp_file(path).map_err(|e| CliError::Config(format!("prior {}: {e}", path.display())))?,
        None => generator.clone(),
    };
    let scene_config = config.scene_config();
    let scenes = (0..config.frames)
        .into_par_iter()
        .map(|i| make_scene(&generator, derive_seed(config.seed, i as u64), &config.noise, &scene_config))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Run(e.to_string()))?;
    let curve = sweep_components(&scenes, &prior, ms, &config.fusion_config(), noisy)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let mut csv = String::from("components,mean_error_mm\n");
    for (m, e) in &curve {
        csv.push_str(&format!("{m},{e}\n"));
        println!("M={m:<3} {e:.4} mm");
    }
    if let Some(out) = &config.output {
        ensure_dir(out)?;
        write_file(&out.join("sweep.csv"), &csv)?;
        let points: Vec<_> = curve.iter().map(|(m, e)| json!({ "components": m, "mean_error_mm": e })).collect();
        write_atomic(
            &out.join("sweep.json"),
            to_json(&json!({ "config_hash": config.hash(), "frames": scenes.len(), "noisy": noisy, "curve": points })),
        )?;
    }
    Ok(())
}
