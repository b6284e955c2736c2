#![allow(dead_code)]

use geosay::evaluation::{generate_scene, RandomSceneParams, RectSpec, Scene, SceneSpec};
use geosay::geometry::decompose_all;
use geosay::saliency::fit_prior;
use geosay::{DetectorConfig, PriorModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rect(cx: f64, cy: f64, w: f64, h: f64, deg: f64, intensity: f64) -> RectSpec {
    RectSpec {
        cx,
        cy,
        width: w,
        height: h,
        rotation: deg.to_radians(),
        intensity,
    }
}

pub fn one_rect_scene(size: usize, r: RectSpec) -> Scene {
    let spec = SceneSpec {
        width: size,
        height: size,
        rectangles: vec![r],
        ..Default::default()
    };
    generate_scene(&spec, 1).unwrap()
}

pub fn random_scene(params: &RandomSceneParams, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SceneSpec::random(params, &mut rng);
    generate_scene(&spec, seed).unwrap()
}

/// Prior fitted on cluttered scenes drawn from seeds disjoint from any
/// evaluation seed.
pub fn clutter_prior(size: usize, scenes: u64) -> PriorModel {
    let params = RandomSceneParams {
        width: size,
        height: size,
        clutter: 10,
        ..Default::default()
    };
    let cfg = DetectorConfig::default();
    let corpus: Vec<_> = (0..scenes)
        .map(|k| {
            let s = random_scene(&params, 1_000_000 + k);
            let lum = geosay::p_energy(&s.image, 1.0).unwrap();
            let js = geosay::detect_junctions(&lum, &cfg).unwrap();
            (decompose_all(&js, cfg.min_angle_sep), s.truth)
        })
        .collect();
    fit_prior(&corpus).unwrap()
}
