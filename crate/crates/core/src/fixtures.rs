//! Built-in test scenes.

use alloc::vec;
use alloc::vec::Vec;

use crate::bsdf::Material;
use crate::math::{Rgb, Vec3};
use crate::scene::{Camera, Primitive, Scene, Shape};

fn quad(origin: Vec3, edge_u: Vec3, edge_v: Vec3, material: usize) -> Primitive {
    Primitive { shape: Shape::Quad { origin, edge_u, edge_v }, material }
}

/// Axis-aligned box `[lo, hi]` as six quads.
fn cuboid(lo: Vec3, hi: Vec3, material: usize, out: &mut Vec<Primitive>) {
    let d = hi - lo;
    let (x, y, z) = (Vec3::new(d.x, 0.0, 0.0), Vec3::new(0.0, d.y, 0.0), Vec3::new(0.0, 0.0, d.z));
    out.push(quad(lo, x, y, material));
    out.push(quad(lo + z, x, y, material));
    out.push(quad(lo, y, z, material));
    out.push(quad(lo + x, y, z, material));
    out.push(quad(lo, z, x, material));
    out.push(quad(lo + y, z, x, material));
}

/// Camera inside an inward-facing sphere of unit emission and albedo
/// `rho`; every pixel sees radiance `1 / (1 - rho)`.
pub fn furnace(rho: f64, width: u32, height: u32) -> Scene {
    let mut m = Material::diffuse(Rgb::new(rho, rho, rho));
    m.emission = Rgb::WHITE;
    let camera = Camera {
        origin: Vec3::new(0.0, 0.0, 0.3),
        look_at: Vec3::new(0.0, 0.0, -1.0),
        up: Vec3::Y,
        vertical_fov: 60.0,
        width,
        height,
    };
    let sphere = Shape::Sphere { center: Vec3::ZERO, radius: 1.0, inward: true };
    Scene::new(vec![Primitive { shape: sphere, material: 0 }], vec![m], camera, None, false)
        .expect("furnace scene is valid")
}

const WHITE: usize = 0;
const RED: usize = 1;
const GREEN: usize = 2;
const LIGHT: usize = 3;

fn cornell_materials(light: f64) -> Vec<Material> {
    vec![
        Material::diffuse(Rgb::new(0.73, 0.73, 0.73)),
        Material::diffuse(Rgb::new(0.65, 0.05, 0.05)),
        Material::diffuse(Rgb::new(0.12, 0.45, 0.15)),
        Material::emitter(Rgb::new(light, light, light)),
    ]
}

/// Closed room `[-1,1] x [0,2] x [z0,z1]` with coloured side walls.
fn room(z0: f64, z1: f64, out: &mut Vec<Primitive>) {
    let dz = Vec3::new(0.0, 0.0, z1 - z0);
    let b = Vec3::new(-1.0, 0.0, z0);
    out.push(quad(b, Vec3::new(2.0, 0.0, 0.0), dz, WHITE));
    out.push(quad(b + Vec3::new(0.0, 2.0, 0.0), Vec3::new(2.0, 0.0, 0.0), dz, WHITE));
    out.push(quad(b, Vec3::new(0.0, 2.0, 0.0), dz, RED));
    out.push(quad(b + Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), dz, GREEN));
    out.push(quad(b, Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), WHITE));
    out.push(quad(b + dz, Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.0, 2.0, 0.0), WHITE));
}

/// Downward-facing ceiling light centred at `(0, 1.99, z)`.
fn ceiling_light(z: f64, half: f64) -> Primitive {
    quad(Vec3::new(-half, 1.99, z - half), Vec3::new(2.0 * half, 0.0, 0.0), Vec3::new(0.0, 0.0, 2.0 * half), LIGHT)
}

/// Closed Cornell box with a ceiling light and two blocks.
pub fn cornell(width: u32, height: u32) -> Scene {
    let mut prims = Vec::new();
    room(-1.0, 2.6, &mut prims);
    prims.push(ceiling_light(0.0, 0.25));
    cuboid(Vec3::new(-0.7, 0.0, -0.6), Vec3::new(-0.1, 1.2, 0.0), WHITE, &mut prims);
    cuboid(Vec3::new(0.15, 0.0, 0.0), Vec3::new(0.65, 0.6, 0.5), WHITE, &mut prims);
    let camera = Camera {
        origin: Vec3::new(0.0, 1.0, 2.5),
        look_at: Vec3::new(0.0, 1.0, 0.0),
        up: Vec3::Y,
        vertical_fov: 50.0,
        width,
        height,
    };
    Scene::new(prims, cornell_materials(12.0), camera, None, false).expect("cornell scene is valid")
}

/// Two rooms joined by a narrow door. The light hangs on the far room's
/// back wall and shines through the door onto the camera's room, which is
/// otherwise lit indirectly.
pub fn cornell_door(width: u32, height: u32) -> Scene {
    let mut prims = Vec::new();
    room(-2.0, 2.0, &mut prims);
    prims.push(quad(Vec3::new(0.05, 0.5, -1.99), Vec3::new(0.6, 0.0, 0.0), Vec3::new(0.0, 0.6, 0.0), LIGHT));
    // Dividing wall at z = 0 with a door spanning x in [0.2, 0.5], y < 1.5.
    let up = Vec3::new(0.0, 2.0, 0.0);
    prims.push(quad(Vec3::new(-1.0, 0.0, 0.0), Vec3::new(1.2, 0.0, 0.0), up, WHITE));
    prims.push(quad(Vec3::new(0.5, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0), up, WHITE));
    prims.push(quad(Vec3::new(0.2, 1.5, 0.0), Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.0, 0.5, 0.0), WHITE));
    let camera = Camera {
        origin: Vec3::new(-0.6, 1.2, 1.9),
        look_at: Vec3::new(0.3, 0.7, 0.0),
        up: Vec3::Y,
        vertical_fov: 65.0,
        width,
        height,
    };
    Scene::new(prims, cornell_materials(40.0), camera, None, false).expect("cornell-door scene is valid")
}

/// Glossy steps lit by a ceiling light and a dim sky.
pub fn glossy_staircase(width: u32, height: u32) -> Scene {
    let mut materials = cornell_materials(15.0);
    materials.push(Material {
        diffuse: Rgb::new(0.15, 0.15, 0.15),
        glossy: Rgb::new(0.7, 0.7, 0.7),
        exponent: 60.0,
        emission: Rgb::BLACK,
    });
    let glossy = materials.len() - 1;
    let mut prims = Vec::new();
    prims.push(quad(Vec3::new(-2.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 4.0), Vec3::new(4.0, 0.0, 0.0), WHITE));
    prims.push(quad(Vec3::new(-2.0, 0.0, -2.0), Vec3::new(4.0, 0.0, 0.0), Vec3::new(0.0, 3.0, 0.0), WHITE));
    for i in 0..4 {
        let h = 0.25 * (i + 1) as f64;
        let z = 0.5 - 0.5 * i as f64;
        cuboid(Vec3::new(-1.0, 0.0, z - 0.5), Vec3::new(1.0, h, z), glossy, &mut prims);
    }
    prims.push(quad(Vec3::new(-0.4, 2.5, -1.4), Vec3::new(0.8, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.8), LIGHT));
    let camera = Camera {
        origin: Vec3::new(1.6, 1.6, 2.4),
        look_at: Vec3::new(0.0, 0.5, -0.3),
        up: Vec3::Y,
        vertical_fov: 50.0,
        width,
        height,
    };
    Scene::new(prims, materials, camera, Some(Rgb::new(0.05, 0.06, 0.08)), false).expect("staircase scene is valid")
}
