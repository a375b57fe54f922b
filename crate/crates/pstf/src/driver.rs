//! Multi-threaded frame loop.

use std::time::{Duration, Instant};

use pstf_core::estimators::{Engine, EstimatorConfig, EstimatorKind, PixelSample, VertexUpdate};
use pstf_core::math::Rgb;
use pstf_core::pathtracer::PathConfig;
use pstf_core::render::{pixel_rng, wave_index, ImageBuffer};
use pstf_core::scene::Scene;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::config::Budget;
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Paths of a wave are collected in pixel order and their updates
    /// applied in that order, so the result does not depend on the number
    /// of workers.
    Deterministic,
    /// Workers trace whole pixels and updates are applied in completion
    /// order. Pixel values are still exact per pixel; learned state (and so
    /// guided estimators) may differ between runs.
    Fast,
}

pub fn thread_pool(threads: Option<usize>) -> Result<ThreadPool, Error> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start workers: {e}")))
}

/// Progress reported after each accumulated frame.
pub struct Progress<'a> {
    /// Frames accumulated into the image so far.
    pub frame: u32,
    pub elapsed: Duration,
    pub image: &'a ImageBuffer,
}

pub struct RenderResult {
    pub image: ImageBuffer,
    pub frames: u32,
    pub wall: Duration,
    pub engine: Engine,
}

/// Renders warm-up frames, then frames until the budget is spent. The time
/// budget includes warm-up and is checked between frames.
#[allow(clippy::too_many_arguments)]
pub fn render(
    scene: &Scene,
    mut engine: Engine,
    seed: u64,
    spp_per_frame: u32,
    budget: Budget,
    mode: Mode,
    pool: &ThreadPool,
    mut progress: impl FnMut(Progress<'_>),
) -> RenderResult {
    let cam = scene.camera();
    let mut image = ImageBuffer::new(cam.width, cam.height);
    let start = Instant::now();
    while engine.in_warmup() {
        pool.install(|| frame(scene, &mut engine, seed, spp_per_frame, mode, None));
    }
    let mut frames = 0;
    loop {
        let done = match budget {
            Budget::Spp(n) => frames * spp_per_frame >= n,
            Budget::Seconds(t) => frames > 0 && start.elapsed().as_secs_f64() >= t,
        };
        if done {
            break;
        }
        pool.install(|| frame(scene, &mut engine, seed, spp_per_frame, mode, Some(&mut image)));
        frames += 1;
        progress(Progress { frame: frames, elapsed: start.elapsed(), image: &image });
    }
    RenderResult { image, frames, wall: start.elapsed(), engine }
}

// Pixel radiance and vertex updates traced by one worker.
type Chunk = (Vec<(u32, Rgb)>, Vec<VertexUpdate>);

/// One frame; equals `pstf_core::render::render_frame` in deterministic
/// mode. Nothing is accumulated when `image` is `None`.
pub fn frame(
    scene: &Scene,
    engine: &mut Engine,
    seed: u64,
    spp_per_frame: u32,
    mode: Mode,
    mut image: Option<&mut ImageBuffer>,
) {
    let cam = scene.camera();
    let (width, n) = (cam.width, cam.pixel_count() as u32);
    let f = engine.frame();
    match mode {
        Mode::Deterministic => {
            for s in 0..spp_per_frame {
                let wave = wave_index(f, spp_per_frame, s);
                let eng = &*engine;
                let samples: Vec<PixelSample> = (0..n)
                    .into_par_iter()
                    .with_min_len(16)
                    .map(|p| eng.trace(scene, p % width, p / width, &mut pixel_rng(seed, wave, p)))
                    .collect();
                if let Some(img) = image.as_deref_mut() {
                    for (p, smp) in samples.iter().enumerate() {
                        img.add(p, smp.radiance);
                    }
                }
                for smp in &samples {
                    engine.apply(&smp.updates);
                }
            }
        }
        Mode::Fast => {
            let eng = &*engine;
            let chunks: Vec<Chunk> = (0..n)
                .into_par_iter()
                .with_min_len(16)
                .fold(
                    || (Vec::new(), Vec::new()),
                    |(mut rad, mut upd), p| {
                        for s in 0..spp_per_frame {
                            let mut rng = pixel_rng(seed, wave_index(f, spp_per_frame, s), p);
                            let smp = eng.trace(scene, p % width, p / width, &mut rng);
                            rad.push((p, smp.radiance));
                            upd.extend(smp.updates);
                        }
                        (rad, upd)
                    },
                )
                .collect();
            for (rad, upd) in chunks {
                if let Some(img) = image.as_deref_mut() {
                    for (p, r) in rad {
                        img.add(p as usize, r);
                    }
                }
                engine.apply(&upd);
            }
        }
    }
    engine.end_frame();
}

/// First sample pass of references, far above any render's, so a reference
/// and a render sharing a seed use independent paths.
pub const REFERENCE_WAVE: u64 = 1 << 31;

/// Brute-force reference: per-pixel mean of `spp` PT+NEE paths and the
/// variance of that mean.
pub struct Reference {
    pub mean: Vec<Rgb>,
    pub variance: Vec<Rgb>,
    pub wall: Duration,
}

pub fn reference(scene: &Scene, path: PathConfig, spp: u32, seed: u64, pool: &ThreadPool) -> Reference {
    let engine = Engine::new(scene, EstimatorConfig::new(EstimatorKind::PtNee), path);
    let cam = scene.camera();
    let (width, n) = (cam.width, cam.pixel_count() as u32);
    let start = Instant::now();
    let stats: Vec<(Rgb, Rgb)> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|p| {
                // Welford running mean and sum of squared deviations.
                let mut mean = [0.0f64; 3];
                let mut m2 = [0.0f64; 3];
                for s in 0..spp {
                    let mut rng = pixel_rng(seed, REFERENCE_WAVE + s as u64, p);
                    let r = engine.trace(scene, p % width, p / width, &mut rng).radiance.channels();
                    let k = (s + 1) as f64;
                    for c in 0..3 {
                        let d = r[c] - mean[c];
                        mean[c] += d / k;
                        m2[c] += d * (r[c] - mean[c]);
                    }
                }
                let k = spp as f64;
                let mut var = [0.0; 3];
                if spp > 1 {
                    for c in 0..3 {
                        var[c] = m2[c] / (k - 1.0) / k;
                    }
                }
                (Rgb::from_channels(mean), Rgb::from_channels(var))
            })
            .collect()
    });
    let (mean, variance) = stats.into_iter().unzip();
    Reference { mean, variance, wall: start.elapsed() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pstf_core::fixtures;

    fn engine(scene: &Scene, kind: EstimatorKind) -> Engine {
        let mut c = EstimatorConfig::new(kind);
        c.warmup_frames = 2;
        Engine::new(scene, c, PathConfig::default())
    }

    #[test]
    fn deterministic_matches_sequential_core() {
        let scene = fixtures::cornell(6, 5);
        let pool = thread_pool(Some(3)).unwrap();
        let r = render(
            &scene,
            engine(&scene, EstimatorKind::IsCv),
            7,
            2,
            Budget::Spp(6),
            Mode::Deterministic,
            &pool,
            |_| {},
        );
        let mut e = engine(&scene, EstimatorKind::IsCv);
        let seq = pstf_core::render::render(&scene, &mut e, 7, 2, 3);
        assert_eq!(r.frames, 3);
        assert_eq!(r.image, seq);
    }

    #[test]
    fn fast_mode_pixels_match_without_learning() {
        let scene = fixtures::cornell(6, 5);
        let pool = thread_pool(Some(2)).unwrap();
        let run =
            |mode| render(&scene, engine(&scene, EstimatorKind::PtNee), 3, 2, Budget::Spp(4), mode, &pool, |_| {});
        assert_eq!(run(Mode::Fast).image, run(Mode::Deterministic).image);
    }

    #[test]
    fn time_budget_renders_at_least_one_frame() {
        let scene = fixtures::furnace(0.5, 2, 2);
        let pool = thread_pool(Some(1)).unwrap();
        let r =
            render(&scene, engine(&scene, EstimatorKind::Pt), 1, 1, Budget::Seconds(1e-9), Mode::Fast, &pool, |_| {});
        assert_eq!(r.frames, 1);
    }

    #[test]
    fn reference_variance_matches_definition() {
        let scene = fixtures::furnace(0.5, 1, 1);
        let pool = thread_pool(Some(1)).unwrap();
        let r = reference(&scene, PathConfig::default(), 200, 4, &pool);
        let engine = Engine::new(&scene, EstimatorConfig::new(EstimatorKind::PtNee), PathConfig::default());
        let xs: Vec<f64> =
            (0..200).map(|s| engine.trace(&scene, 0, 0, &mut pixel_rng(4, REFERENCE_WAVE + s, 0)).radiance.r).collect();
        let m = xs.iter().sum::<f64>() / 200.0;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 199.0 / 200.0;
        assert!((r.mean[0].r - m).abs() < 1e-12 * m);
        assert!((r.variance[0].r - v).abs() < 1e-10 * v);
    }
}
