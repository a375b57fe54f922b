#![allow(dead_code)]

use pstf_core::estimators::{Engine, EstimatorConfig, EstimatorKind};
use pstf_core::pathtracer::PathConfig;
use pstf_core::render::{pixel_rng, render_frame, ImageBuffer};
use pstf_core::scene::Scene;

/// Sample mean and standard error of the mean.
pub fn mean_and_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Luminance of single-path samples cycling over all pixels.
pub fn path_samples(scene: &Scene, engine: &Engine, n: usize, seed: u64) -> Vec<f64> {
    let cam = scene.camera();
    let pixels = cam.pixel_count();
    (0..n)
        .map(|i| {
            let p = (i % pixels) as u32;
            let wave = (i / pixels) as u64;
            let mut rng = pixel_rng(seed, wave, p);
            engine.trace(scene, p % cam.width, p / cam.width, &mut rng).radiance.luminance()
        })
        .collect()
}

pub fn engine(scene: &Scene, kind: EstimatorKind) -> Engine {
    Engine::new(scene, EstimatorConfig::new(kind), PathConfig::default())
}

/// Runs warm-up, then returns the luminance of every pixel sample of
/// `frames` further frames.
pub fn frame_samples(scene: &Scene, engine: &mut Engine, seed: u64, frames: u32) -> Vec<f64> {
    let cam = scene.camera();
    let mut out = Vec::new();
    let mut image = ImageBuffer::new(cam.width, cam.height);
    while engine.in_warmup() {
        render_frame(scene, engine, seed, 1, &mut image);
    }
    for _ in 0..frames {
        let mut img = ImageBuffer::new(cam.width, cam.height);
        render_frame(scene, engine, seed, 1, &mut img);
        out.extend(img.means().iter().map(|c| c.luminance()));
    }
    out
}
