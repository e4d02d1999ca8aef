//! Shared fixtures for the criterion benchmarks in `benches/`.

use mvfuse_core::synth::{default_generator, derive_seed, make_scene, NoiseSpec, SceneConfig, SyntheticScene};
use mvfuse_core::{defaults, PosePrior};

/// A default-sized prior and `count` clean synthetic scenes drawn from it.
pub fn fixture(seed: u64, count: u64) -> (PosePrior, Vec<SyntheticScene>) {
    let generator = default_generator(defaults::PRIOR_COMPONENTS);
    let scenes = (0..count)
        .map(|i| {
            make_scene(&generator, derive_seed(seed, i), &NoiseSpec::none(), &SceneConfig::default())
                .expect("default scene config renders")
        })
        .collect();
    (generator, scenes)
}
