mod common;

use common::mean_and_error;
use proptest::prelude::*;
use pstf_core::bsdf::{BsdfSample, Material};
use pstf_core::directional::{Model, ModelKind, ModelParams};
use pstf_core::estimators::{
    biased_estimate, combined_cv_estimate, cv_estimate, guided_sample_direction, Engine, EstimatorConfig, EstimatorKind,
};
use pstf_core::fixtures;
use pstf_core::math::{Rgb, Vec3};
use pstf_core::pathtracer::PathConfig;
use pstf_core::render::{render, render_frame, ImageBuffer};
use pstf_core::sampling::{Frame, Rng, UniformSource};
use pstf_core::scene::Scene;

fn random_rgb(rng: &mut Rng) -> Rgb {
    Rgb::new(rng.next_f64() * 4.0, rng.next_f64() * 4.0, rng.next_f64() * 4.0)
}

#[test]
fn algebraic_identities_hold_bitwise() {
    let mut rng = Rng::new(1, 0);
    for _ in 0..10_000 {
        let g = random_rgb(&mut rng);
        let h = random_rgb(&mut rng);
        let i = random_rgb(&mut rng);
        let w = rng.next_f64();
        let pdf = 0.01 + rng.next_f64() * 3.0;
        let p = rng.next_f64() * 2.0;
        assert_eq!(biased_estimate(g, h, w, pdf, i, 1.0), cv_estimate(g, h, w, pdf, i, 1.0));
        assert_eq!(cv_estimate(g, h, w, pdf, i, 0.0), g * (w / pdf));
        assert_eq!(biased_estimate(g, h, w, pdf, i, 0.0), i);
        assert_eq!(combined_cv_estimate(g, p, p, pdf, 0.7, w), g * (w / pdf));
        assert_eq!(combined_cv_estimate(g, p, 0.3, pdf, 0.0, w), g * (w / pdf));
    }
}

proptest! {
    #[test]
    fn biased_estimate_is_linear_in_gamma(
        g in 0.0f64..10.0, h in 0.0f64..10.0, i in 0.0f64..10.0,
        w in 0.0f64..1.0, pdf in 0.01f64..5.0, gamma in 0.0f64..1.0,
    ) {
        let (g, h, i) = (Rgb::new(g, g, g), Rgb::new(h, h, h), Rgb::new(i, i, i));
        let lo = biased_estimate(g, h, w, pdf, i, 0.0);
        let hi = biased_estimate(g, h, w, pdf, i, 1.0);
        let mid = biased_estimate(g, h, w, pdf, i, gamma);
        let lerp = lo * (1.0 - gamma) + hi * gamma;
        prop_assert!((mid.r - lerp.r).abs() <= 1e-9 * (1.0 + lerp.r.abs()));
    }
}

/// Composite Simpson rule on [0, 1].
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn combined_estimator_matches_quadrature() {
    // p0 uniform, p1 = 2x, one-sample mixture with equal weights.
    let g = |x: f64| 3.0 * x * x + (7.0 * x).sin().abs();
    let truth = simpson(g, 10_000);
    for beta in [0.5f64, 1.0] {
        let mut rng = Rng::new(2, beta.to_bits());
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let x = if rng.next_f64() < 0.5 { rng.next_f64() } else { rng.next_f64().sqrt() };
                let (p0, p1) = (1.0, 2.0 * x);
                let pdf = 0.5 * p0 + 0.5 * p1;
                let gx = g(x);
                combined_cv_estimate(Rgb::new(gx, gx, gx), p1, p0, pdf, beta, 1.0).r
            })
            .collect();
        let (m, e) = mean_and_error(&xs);
        assert!((m - truth).abs() < 3.0 * e, "beta {beta}: {m} ± {e} vs {truth}");
    }
}

fn trained_model() -> Model {
    let mut m = Model::new(&ModelParams::default());
    let mut rng = Rng::new(4, 0);
    for _ in 0..200 {
        let u = 0.7 + 0.1 * rng.next_f64();
        let v = 0.2 + 0.1 * rng.next_f64();
        m.record(pstf_core::sampling::SquarePoint { u, v }, 1.0);
    }
    m.end_frame(1.0, &ModelParams::default());
    assert!(m.is_trained());
    m
}

#[test]
fn degenerate_mixture_is_bsdf_sampling() {
    let mat = Material::diffuse(Rgb::new(0.6, 0.6, 0.6));
    let n = Vec3::new(0.0, 0.0, 1.0);
    let wo = Vec3::new(0.3, 0.1, 0.9).normalized();
    let model = trained_model();
    for seed in 0..500 {
        let expect = match mat.sample(wo, n, Rng::new(seed, 1).next_square()) {
            BsdfSample::Scatter { wi, pdf, .. } => (wi, pdf),
            BsdfSample::Absorb => continue,
        };
        for guide in [None, Some(&model)] {
            let alpha = if guide.is_some() { (1.0, 0.0) } else { (0.5, 0.5) };
            let s = guided_sample_direction(&mat, wo, n, guide, alpha, &mut Rng::new(seed, 1)).unwrap();
            assert_eq!((s.wi, s.pdf), expect);
        }
    }
}

#[test]
fn mixture_pdf_is_weighted_sum() {
    let mat = Material::glossy(Rgb::new(0.6, 0.6, 0.6), 20.0);
    let n = Vec3::new(0.0, 0.0, 1.0);
    let wo = Vec3::new(0.3, 0.1, 0.9).normalized();
    let model = trained_model();
    let frame = Frame::from_normal(n);
    let mut rng = Rng::new(8, 0);
    for _ in 0..1000 {
        if let Some(s) = guided_sample_direction(&mat, wo, n, Some(&model), (0.3, 0.7), &mut rng) {
            let expect = 0.3 * mat.pdf(s.wi, wo, n) + 0.7 * model.pdf_direction(&frame, s.wi);
            assert!((s.pdf - expect).abs() <= 1e-12 * expect);
        }
    }
}

/// Per-frame image means after warm-up; frames are a martingale sequence
/// so their spread gives a valid standard error.
fn frame_means(scene: &Scene, config: EstimatorConfig, frames: u32, seed: u64) -> Vec<f64> {
    let cam = scene.camera();
    let mut e = Engine::new(scene, config, PathConfig::default());
    let mut scratch = ImageBuffer::new(cam.width, cam.height);
    while e.in_warmup() {
        render_frame(scene, &mut e, seed, 1, &mut scratch);
    }
    (0..frames)
        .map(|_| {
            let mut img = ImageBuffer::new(cam.width, cam.height);
            render_frame(scene, &mut e, seed, 1, &mut img);
            img.average().luminance()
        })
        .collect()
}

#[test]
fn guided_and_cv_estimators_are_unbiased_in_furnace() {
    let scene = fixtures::furnace(0.5, 16, 16);
    for kind in [EstimatorKind::Is, EstimatorKind::Cv, EstimatorKind::IsCv] {
        let mut c = EstimatorConfig::new(kind);
        c.warmup_frames = 16;
        let xs = frame_means(&scene, c, 400, 5);
        let (m, e) = mean_and_error(&xs);
        assert!((m - 2.0).abs() < 3.0 * e, "{kind}: {m} ± {e}");
    }
}

#[test]
fn cold_control_variate_is_unbiased() {
    let scene = fixtures::furnace(0.3, 16, 16);
    let xs = frame_means(&scene, EstimatorConfig::new(EstimatorKind::Cv), 400, 6);
    let (m, e) = mean_and_error(&xs);
    assert!((m - 1.0 / 0.7).abs() < 3.0 * e, "{m} ± {e}");
}

#[test]
fn furnace_control_variate_keeps_mean() {
    let scene = fixtures::furnace(0.5, 16, 16);
    let mut c = EstimatorConfig::new(EstimatorKind::Cv);
    c.warmup_frames = 64;
    let cv = frame_means(&scene, c, 200, 7);
    let nee = frame_means(&scene, EstimatorConfig::new(EstimatorKind::PtNee), 200, 7);
    let (m, e) = mean_and_error(&cv);
    assert!((m - 2.0).abs() < 3.0 * e, "{m} ± {e}");
    // No variance bound: with a radiance field that is nearly constant in
    // direction there is nothing for a learned shape to cancel.
    let (_, e_nee) = mean_and_error(&nee);
    eprintln!("furnace cv/pt-nee variance ratio {:.3}", (e / e_nee).powi(2));
}

#[test]
fn zero_gamma_with_converged_cache_is_within_three_percent() {
    let scene = fixtures::furnace(0.5, 16, 16);
    let mut c = EstimatorConfig::new(EstimatorKind::B);
    c.warmup_frames = 128;
    let mut e = Engine::new(&scene, c, PathConfig::default());
    let img = render(&scene, &mut e, 3, 1, 16);
    let m = img.average().luminance();
    assert!((m - 2.0).abs() < 0.06, "{m}");
}

#[test]
fn learning_does_not_change_plain_estimator() {
    let scene = fixtures::cornell(8, 6);
    let run = |learn: bool| {
        let mut c = EstimatorConfig::new(EstimatorKind::PtNee);
        c.learn = learn;
        let mut e = Engine::new(&scene, c, PathConfig::default());
        render(&scene, &mut e, 17, 1, 4).sum
    };
    assert_eq!(run(true), run(false));
}

#[test]
fn model_kind_changes_variance_not_mean() {
    let scene = fixtures::furnace(0.5, 16, 16);
    for kind in [ModelKind::Grid, ModelKind::KdTree, ModelKind::Gmm] {
        let mut c = EstimatorConfig::new(EstimatorKind::IsCv);
        c.warmup_frames = 16;
        c.model = ModelParams::with_kind(kind);
        let xs = frame_means(&scene, c, 200, 9);
        let (m, e) = mean_and_error(&xs);
        assert!((m - 2.0).abs() < 3.0 * e, "{kind:?}: {m} ± {e}");
    }
}
