//! Sequential frame loop and per-pixel accumulation.

use alloc::vec::Vec;

use crate::estimators::{Engine, PixelSample};
use crate::math::Rgb;
use crate::sampling::Rng;
use crate::scene::Scene;

/// Linear RGB sums and per-pixel sample counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    pub width: u32,
    pub height: u32,
    pub sum: Vec<Rgb>,
    pub samples: Vec<u32>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        ImageBuffer { width, height, sum: alloc::vec![Rgb::BLACK; n], samples: alloc::vec![0; n] }
    }

    pub fn from_means(width: u32, height: u32, pixels: Vec<Rgb>) -> Self {
        let n = pixels.len();
        ImageBuffer { width, height, sum: pixels, samples: alloc::vec![1; n] }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn add(&mut self, index: usize, value: Rgb) {
        self.sum[index] += value;
        self.samples[index] += 1;
    }

    pub fn mean(&self, index: usize) -> Rgb {
        match self.samples[index] {
            0 => Rgb::BLACK,
            n => self.sum[index] / n as f64,
        }
    }

    pub fn means(&self) -> Vec<Rgb> {
        (0..self.len()).map(|i| self.mean(i)).collect()
    }

    /// Mean over all pixels.
    pub fn average(&self) -> Rgb {
        let mut s = Rgb::BLACK;
        for i in 0..self.len() {
            s += self.mean(i);
        }
        s / self.len().max(1) as f64
    }
}

/// Root-mean-square error over all channels of two equally sized images.
pub fn rmse(a: &[Rgb], b: &[Rgb]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        s += d.r * d.r + d.g * d.g + d.b * d.b;
    }
    Some(libm::sqrt(s / (3 * a.len()) as f64))
}

/// Generator for sample `wave` of pixel `pixel`.
pub fn pixel_rng(seed: u64, wave: u64, pixel: u32) -> Rng {
    Rng::new(seed, (wave << 32) | pixel as u64)
}

/// Sample pass index of sample `s` in frame `frame`.
pub fn wave_index(frame: u32, spp_per_frame: u32, s: u32) -> u64 {
    frame as u64 * spp_per_frame as u64 + s as u64
}

/// Renders one frame on the calling thread. Every path of the frame reads
/// the same frozen cache; updates are applied afterwards in sample-then-pixel
/// order. Nothing is accumulated into `image` during warm-up.
pub fn render_frame(scene: &Scene, engine: &mut Engine, seed: u64, spp_per_frame: u32, image: &mut ImageBuffer) {
    let cam = scene.camera();
    let width = cam.width;
    let n = cam.pixel_count();
    let accumulate = !engine.in_warmup();
    let frame = engine.frame();
    let mut samples: Vec<PixelSample> = Vec::with_capacity(n);
    for s in 0..spp_per_frame {
        let wave = wave_index(frame, spp_per_frame, s);
        samples.clear();
        for p in 0..n {
            let mut rng = pixel_rng(seed, wave, p as u32);
            samples.push(engine.trace(scene, p as u32 % width, p as u32 / width, &mut rng));
        }
        if accumulate {
            for (p, smp) in samples.iter().enumerate() {
                image.add(p, smp.radiance);
            }
        }
        for smp in &samples {
            engine.apply(&smp.updates);
        }
    }
    engine.end_frame();
}

/// Renders `frames` frames after the engine's warm-up.
pub fn render(scene: &Scene, engine: &mut Engine, seed: u64, spp_per_frame: u32, frames: u32) -> ImageBuffer {
    let cam = scene.camera();
    let mut image = ImageBuffer::new(cam.width, cam.height);
    while engine.in_warmup() {
        render_frame(scene, engine, seed, spp_per_frame, &mut image);
    }
    for _ in 0..frames {
        render_frame(scene, engine, seed, spp_per_frame, &mut image);
    }
    image
}
