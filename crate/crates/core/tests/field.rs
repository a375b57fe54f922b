mod common;

use pstf_core::bsdf::Material;
use pstf_core::estimators::{Engine, EstimatorConfig, EstimatorKind, VertexUpdate};
use pstf_core::field::{FieldConfig, FieldKind, FieldStore, Grid, Technique, TechniqueMask};
use pstf_core::fixtures;
use pstf_core::math::{Rgb, Vec3};
use pstf_core::pathtracer::PathConfig;
use pstf_core::render::{pixel_rng, render_frame, ImageBuffer};
use pstf_core::scene::{Camera, Primitive, Scene, Shape};

/// Count-weighted mean and RMS deviation from `target` of the live cells at
/// `level`, with the number of cells.
fn level_stats(store: &FieldStore, level: u8, target: f64) -> (f64, f64, usize) {
    let (mut w, mut wv, mut we, mut n) = (0.0, 0.0, 0.0, 0);
    for (_, v, c) in store.cells().filter(|(k, _, _)| k.level == level) {
        let v = v.luminance();
        w += c;
        wv += c * v;
        we += c * (v - target).powi(2);
        n += 1;
    }
    (wv / w, (we / w).sqrt(), n)
}

fn learning_config() -> EstimatorConfig {
    EstimatorConfig { learn: true, ..EstimatorConfig::new(EstimatorKind::PtNee) }
}

fn learning_engine(scene: &Scene) -> Engine {
    Engine::new(scene, learning_config(), PathConfig::default())
}

fn run_frames(scene: &Scene, e: &mut Engine, seed: u64, frames: u32) {
    let cam = scene.camera();
    let mut img = ImageBuffer::new(cam.width, cam.height);
    for _ in 0..frames {
        render_frame(scene, e, seed, 1, &mut img);
    }
}

#[test]
fn furnace_field_converges_to_equilibrium() {
    let scene = fixtures::furnace(0.5, 16, 16);
    let mut e = learning_engine(&scene);
    let mut rms_at = Vec::new();
    let mut done = 0;
    for checkpoint in [4, 16, 40, 256] {
        run_frames(&scene, &mut e, 1, checkpoint - done);
        done = checkpoint;
        let (mean, rms, n) = level_stats(&e.fields().unwrap().lo, 4, 2.0);
        assert!(n > 0);
        rms_at.push(rms);
        if checkpoint >= 40 {
            assert!((mean - 2.0).abs() < 0.06, "frame {checkpoint}: mean {mean}");
        }
    }
    for w in rms_at.windows(2) {
        assert!(w[1] < w[0], "{rms_at:?}");
    }
}

/// Large diffuse plane under a constant unit environment, seen from above.
fn lit_plane(res: u32) -> Scene {
    let floor = Primitive {
        shape: Shape::Quad {
            origin: Vec3::new(-1000.0, 0.0, -1000.0),
            edge_u: Vec3::new(0.0, 0.0, 2000.0),
            edge_v: Vec3::new(2000.0, 0.0, 0.0),
        },
        material: 0,
    };
    let camera = Camera {
        origin: Vec3::new(0.0, 1.0, 0.0),
        look_at: Vec3::ZERO,
        up: Vec3::Z,
        vertical_fov: 20.0,
        width: res,
        height: res,
    };
    Scene::new(vec![floor], vec![Material::diffuse(Rgb::new(0.5, 0.5, 0.5))], camera, Some(Rgb::WHITE), false).unwrap()
}

/// Field grid sized for the visible patch rather than the 2 km plane.
fn patch_engine() -> Engine {
    let grid = Grid::for_scene_diameter(2.0);
    Engine::with_field_config(learning_config(), PathConfig::default(), FieldConfig::new(grid))
}

#[test]
fn one_bounce_cell_matches_closed_form() {
    // Irradiance from a unit environment over the upper hemisphere is pi,
    // so outgoing radiance is rho everywhere.
    let scene = lit_plane(16);
    let mut e = patch_engine();
    run_frames(&scene, &mut e, 2, 128);
    let (mean, _, n) = level_stats(&e.fields().unwrap().lo, 4, 0.5);
    assert!(n > 0);
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
}

#[test]
fn cell_value_is_independent_of_sample_density() {
    // Pixel counts 16, 169 and 1600: about 10x steps in samples per cell.
    for res in [4, 13, 40] {
        let means: Vec<f64> = (0..8)
            .map(|seed| {
                let scene = lit_plane(res);
                let mut e = patch_engine();
                run_frames(&scene, &mut e, seed, 256);
                level_stats(&e.fields().unwrap().lo, 4, 0.5).0
            })
            .collect();
        let (m, err) = common::mean_and_error(&means);
        assert!((m - 0.5).abs() < 3.0 * err + 1e-3, "{res}: {m} ± {err}");
    }
}

#[test]
fn queries_ignore_current_frame_accumulation() {
    let scene = fixtures::cornell(6, 6);
    let mut e = learning_engine(&scene);
    run_frames(&scene, &mut e, 4, 3);
    let probe = |e: &Engine| {
        let f = e.fields().unwrap();
        (0..50)
            .map(|i| {
                let p = Vec3::new(-0.9 + 0.036 * i as f64, 0.01, 0.0);
                f.lo.query(p, Vec3::new(0.0, 1.0, 0.0), 0.05).value
            })
            .collect::<Vec<_>>()
    };
    let before = probe(&e);
    let mut updates = Vec::new();
    for p in 0..36u32 {
        let mut rng = pixel_rng(9, 99, p);
        updates.extend(e.trace(&scene, p % 6, p / 6, &mut rng).updates);
    }
    e.apply(&updates);
    assert_eq!(before, probe(&e));
}

fn incoming_parts(u: &VertexUpdate) -> Vec<(Technique, Vec3, Rgb)> {
    let mut parts = Vec::new();
    if let Some((wi, c, _)) = u.nee {
        parts.push((Technique::NextEvent, wi, c));
    }
    if let Some(c) = &u.cont {
        parts.push((Technique::Bsdf, c.wi, c.lo * c.bsdf_share));
        parts.push((Technique::Guided, c.wi, c.lo * c.guided_share));
    }
    parts
}

#[test]
fn masked_stores_partition_the_full_store() {
    let scene = fixtures::cornell(8, 8);
    let mut e = learning_engine(&scene);
    let config = FieldConfig::new(Grid::for_scene_diameter(scene.diameter()));
    let new = |mask| FieldStore::new(FieldKind::FLi, config, mask);
    let mut full = new(TechniqueMask::ALL);
    let mut no_nee = new(TechniqueMask::ALL.without(Technique::NextEvent));
    let mut nee = new(TechniqueMask::only(Technique::NextEvent));
    for frame in 0..16u64 {
        let mut updates = Vec::new();
        for p in 0..64u32 {
            let mut rng = pixel_rng(5, frame, p);
            updates.extend(e.trace(&scene, p % 8, p / 8, &mut rng).updates);
        }
        for u in &updates {
            let parts = incoming_parts(u);
            for s in [&mut full, &mut no_nee, &mut nee] {
                s.record_incoming(u.position, &parts);
            }
        }
        e.apply(&updates);
        e.end_frame();
        for s in [&mut full, &mut no_nee, &mut nee] {
            s.end_frame();
        }
    }
    let mut checked = 0;
    for (key, v, _) in full.cells().filter(|(k, _, _)| k.has_direction()) {
        let a = no_nee.cell(&key).map(|c| c.value()).unwrap_or(Rgb::BLACK);
        let b = nee.cell(&key).map(|c| c.value()).unwrap_or(Rgb::BLACK);
        let d = v - (a + b);
        let tol = 1e-5 * (1.0 + v.max_channel());
        assert!(d.r.abs() < tol && d.g.abs() < tol && d.b.abs() < tol, "{key:?}: {v:?} vs {a:?} + {b:?}");
        checked += 1;
    }
    assert!(checked > 100);
}
