use mvfuse_core::eval::mean_joint_error;
use mvfuse_core::fusion::FusionConfig;
use mvfuse_core::geometry::{depth_to_pointcloud, CameraIntrinsics};
use mvfuse_core::pipeline::{estimate, fine_fusion, project_depth, run_scenes, sweep_components, Method};
use mvfuse_core::synth::{default_generator, derive_seed, make_scene, NoiseSpec, SceneConfig, SyntheticScene};
use mvfuse_core::{DepthFrame, JointSet};

fn scenes(count: u64, seed: u64, noise: NoiseSpec) -> Vec<SyntheticScene> {
    let generator = default_generator(35);
    (0..count).map(|i| make_scene(&generator, derive_seed(seed, i), &noise, &SceneConfig::default()).unwrap()).collect()
}

fn truth(scenes: &[SyntheticScene]) -> Vec<JointSet> {
    scenes.iter().map(|s| s.pose.clone()).collect()
}

#[test]
fn clean_scenes_are_recovered_within_a_heatmap_cell() {
    let scenes = scenes(20, 100, NoiseSpec::none());
    let prior = default_generator(35);
    let preds = run_scenes(&scenes, Method::Fine, &prior, &FusionConfig::default(), false).unwrap();
    let (_, mean) = mean_joint_error(&preds, &truth(&scenes)).unwrap();
    let cell = scenes.iter().map(|s| s.cell_mm()).sum::<f64>() / scenes.len() as f64;
    assert!(mean < cell, "mean {mean} mm, cell {cell} mm");
}

#[test]
fn fine_fusion_resists_spurious_hotspots() {
    let scenes = scenes(30, 200, NoiseSpec::ambiguity());
    let prior = default_generator(35);
    let config = FusionConfig::default();
    let gt = truth(&scenes);
    let fine = mean_joint_error(&run_scenes(&scenes, Method::Fine, &prior, &config, true).unwrap(), &gt).unwrap().1;
    let single = mean_joint_error(&run_scenes(&scenes, Method::Single, &prior, &config, true).unwrap(), &gt).unwrap().1;
    assert!(fine < single, "fine {fine} vs single {single}");
    assert!(scenes.iter().all(|s| s.hotspot.is_some()));
}

#[test]
fn scenes_are_deterministic_per_seed() {
    let a = scenes(3, 7, NoiseSpec::noisy(0.1, 0.5));
    let b = scenes(3, 7, NoiseSpec::noisy(0.1, 0.5));
    assert_eq!(a, b);
    let c = scenes(3, 8, NoiseSpec::noisy(0.1, 0.5));
    assert_ne!(a[0].pose, c[0].pose);
}

#[test]
fn depth_frames_flow_through_projection() {
    // A tilted, slightly curved patch seen by a pinhole camera.
    let cam = CameraIntrinsics::new(200.0, 200.0, 32.0, 32.0, 64, 64).unwrap();
    let depth = (0..64 * 64)
        .map(|i| {
            let (c, r) = (i % 64, i / 64);
            if (16..48).contains(&c) && (20..44).contains(&r) { 400.0 + c as f32 + 0.5 * r as f32 } else { 0.0 }
        })
        .collect();
    let frame = DepthFrame::new(64, 64, depth).unwrap();
    let (cloud, obb, views) = project_depth(&frame, &cam, 32).unwrap();
    assert_eq!(cloud.len(), 32 * 24);
    assert_eq!(cloud, depth_to_pointcloud(&frame, &cam).unwrap());
    assert!(obb.extents.z < 0.1 * obb.extents.x, "thin patch has a flat box: {}", obb.extents);
    assert!(views.iter().all(|v| v.values.iter().all(|x| (0.0..=1.0).contains(x))));
}

#[test]
fn methods_agree_on_the_frame_of_their_output() {
    let scenes = scenes(2, 300, NoiseSpec::none());
    let prior = default_generator(35);
    let s = &scenes[0];
    let config = FusionConfig::default();
    let (fine, problem) = fine_fusion(&s.clean_stacks, &s.obb, &prior, &config).unwrap();
    assert!(problem.residual() <= 1e-8 * problem.b_vector.amax());
    for method in Method::ALL {
        let pose = estimate(method, &s.clean_stacks, &s.views, &s.obb, &prior, &config).unwrap();
        assert_eq!(pose.frame, fine.frame);
        let err = mean_joint_error(&[pose], std::slice::from_ref(&s.pose)).unwrap().1;
        assert!(err < 30.0, "{method}: {err}");
    }
}

#[test]
fn component_sweep_emits_one_point_per_size() {
    let scenes = scenes(6, 400, NoiseSpec::none());
    let prior = default_generator(60);
    let ms: Vec<usize> = (1..=12).map(|i| 5 * i).collect();
    let curve = sweep_components(&scenes, &prior, &ms, &FusionConfig::default(), false).unwrap();
    assert_eq!(curve.iter().map(|(m, _)| *m).collect::<Vec<_>>(), ms);
    assert!(curve.iter().all(|(_, e)| e.is_finite() && *e >= 0.0));
}
