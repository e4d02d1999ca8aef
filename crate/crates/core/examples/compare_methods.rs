//! Mean joint error of every method on 200 synthetic scenes, for clean,
//! noisy and hotspot-only heat-maps.
//!
//! `cargo run --release -p mvfuse-core --example compare_methods`

use mvfuse_core::eval::mean_joint_error;
use mvfuse_core::fusion::FusionConfig;
use mvfuse_core::pipeline::{run_scenes, Method};
use mvfuse_core::synth::{default_generator, derive_seed, make_scene, NoiseSpec, SceneConfig};

fn main() {
    let generator = default_generator(35);
    let config = FusionConfig::default();
    for (label, noise) in [("clean", NoiseSpec::none()), ("noisy", NoiseSpec::noisy(0.1, 0.3)), ("hotspot", NoiseSpec::ambiguity())] {
        let scenes: Vec<_> = (0..200)
            .map(|i| make_scene(&generator, derive_seed(11, i), &noise, &SceneConfig::default()).unwrap())
            .collect();
        let truth: Vec<_> = scenes.iter().map(|s| s.pose.clone()).collect();
        let cell = scenes.iter().map(|s| s.cell_mm()).sum::<f64>() / scenes.len() as f64;
        let mut line = format!("{label:8} cell {cell:.2} mm");
        for method in Method::ALL {
            let preds = run_scenes(&scenes, method, &generator, &config, label != "clean").unwrap();
            let (_, err) = mean_joint_error(&preds, &truth).unwrap();
            line += &format!("  {method} {err:.3}");
        }
        println!("{line}");
    }
}
