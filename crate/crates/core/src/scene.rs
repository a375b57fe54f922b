//! Scene description, ray intersection and emitter sampling.

use alloc::vec::Vec;
use core::fmt;

use crate::bsdf::Material;
use crate::math::{safe_sqrt, Rgb, Vec3, PI};
use crate::sampling::{uniform_sphere, SquarePoint, UniformSource};

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `inward` flips the front side to face the centre.
    Sphere { center: Vec3, radius: f64, inward: bool },
    /// Parallelogram `origin + s*edge_u + t*edge_v`, `s,t` in `[0,1]`; front
    /// side along `edge_u x edge_v`.
    Quad { origin: Vec3, edge_u: Vec3, edge_v: Vec3 },
    /// Front side along `(v1-v0) x (v2-v0)`.
    Triangle { v0: Vec3, v1: Vec3, v2: Vec3 },
}

impl Shape {
    pub fn area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Shape::Quad { edge_u, edge_v, .. } => edge_u.cross(edge_v).length(),
            Shape::Triangle { v0, v1, v2 } => 0.5 * (v1 - v0).cross(v2 - v0).length(),
        }
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        match *self {
            Shape::Sphere { center, radius, .. } => {
                let r = Vec3::new(radius, radius, radius);
                (center - r, center + r)
            }
            Shape::Quad { origin, edge_u, edge_v } => {
                let pts = [origin, origin + edge_u, origin + edge_v, origin + edge_u + edge_v];
                bounds_of(&pts)
            }
            Shape::Triangle { v0, v1, v2 } => bounds_of(&[v0, v1, v2]),
        }
    }

    /// Front-side normal at `p` (which must lie on the surface).
    fn normal_at(&self, p: Vec3) -> Vec3 {
        match *self {
            Shape::Sphere { center, inward, .. } => {
                let n = (p - center).normalized();
                if inward {
                    -n
                } else {
                    n
                }
            }
            Shape::Quad { edge_u, edge_v, .. } => edge_u.cross(edge_v).normalized(),
            Shape::Triangle { v0, v1, v2 } => (v1 - v0).cross(v2 - v0).normalized(),
        }
    }

    /// Uniform-area point on the surface with its front-side normal.
    fn sample_area(&self, u: SquarePoint) -> (Vec3, Vec3) {
        let p = match *self {
            Shape::Sphere { center, radius, .. } => center + uniform_sphere(u) * radius,
            Shape::Quad { origin, edge_u, edge_v } => origin + edge_u * u.u + edge_v * u.v,
            Shape::Triangle { v0, v1, v2 } => {
                let s = safe_sqrt(u.u);
                let b0 = 1.0 - s;
                let b1 = u.v * s;
                v0 * b0 + v1 * b1 + v2 * (1.0 - b0 - b1)
            }
        };
        (p, self.normal_at(p))
    }

    /// Nearest parametric distance in `(t_min, t_max)`.
    fn intersect(&self, o: Vec3, d: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        match *self {
            Shape::Sphere { center, radius, .. } => {
                let oc = o - center;
                let b = oc.dot(d);
                let c = oc.length_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = libm::sqrt(disc);
                // Stable root pair: q carries the sign of -b.
                let q = if b > 0.0 { -b - sq } else { -b + sq };
                let (mut t0, mut t1) = if q != 0.0 { (q, c / q) } else { (-b, -b) };
                if t0 > t1 {
                    core::mem::swap(&mut t0, &mut t1);
                }
                if t0 > t_min && t0 < t_max {
                    Some(t0)
                } else if t1 > t_min && t1 < t_max {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Quad { origin, edge_u, edge_v } => {
                let n = edge_u.cross(edge_v);
                let denom = n.dot(d);
                if denom.abs() < 1e-300 {
                    return None;
                }
                let t = n.dot(origin - o) / denom;
                if !(t > t_min && t < t_max) {
                    return None;
                }
                let p = o + d * t - origin;
                let nn = n.length_squared();
                let a = p.cross(edge_v).dot(n) / nn;
                let b = edge_u.cross(p).dot(n) / nn;
                if (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) {
                    Some(t)
                } else {
                    None
                }
            }
            Shape::Triangle { v0, v1, v2 } => {
                let e1 = v1 - v0;
                let e2 = v2 - v0;
                let pv = d.cross(e2);
                let det = e1.dot(pv);
                if det.abs() < 1e-300 {
                    return None;
                }
                let inv = 1.0 / det;
                let tv = o - v0;
                let a = tv.dot(pv) * inv;
                if !(0.0..=1.0).contains(&a) {
                    return None;
                }
                let qv = tv.cross(e1);
                let b = d.dot(qv) * inv;
                if b < 0.0 || a + b > 1.0 {
                    return None;
                }
                let t = e2.dot(qv) * inv;
                if t > t_min && t < t_max {
                    Some(t)
                } else {
                    None
                }
            }
        }
    }
}

fn bounds_of(pts: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in &pts[1..] {
        lo = lo.min_component(*p);
        hi = hi.max_component(*p);
    }
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub material: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub origin: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub vertical_fov: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Angle subtended by one pixel, in radians.
    pub fn pixel_angle(&self) -> f64 {
        self.vertical_fov.to_radians() / self.height as f64
    }

    /// Primary ray through pixel `(px, py)` (row 0 at the top) jittered by `u`.
    pub fn generate_ray(&self, px: u32, py: u32, u: SquarePoint) -> (Vec3, Vec3) {
        let forward = (self.look_at - self.origin).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let tan_half = libm::tan(0.5 * self.vertical_fov.to_radians());
        let aspect = self.width as f64 / self.height as f64;
        let sx = (2.0 * ((px as f64 + u.u) / self.width as f64) - 1.0) * tan_half * aspect;
        let sy = (1.0 - 2.0 * ((py as f64 + u.v) / self.height as f64)) * tan_half;
        (self.origin, (forward + right * sx + up * sy).normalized())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SceneError {
    UnknownMaterial { primitive: usize, material: usize, count: usize },
    DegeneratePrimitive { primitive: usize },
    InvalidMaterial { material: usize, reason: &'static str },
    InvalidCamera { reason: &'static str },
    NoEmitters,
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneError::UnknownMaterial { primitive, material, count } => {
                write!(f, "primitive {primitive} references unknown material {material} (scene has {count})")
            }
            SceneError::DegeneratePrimitive { primitive } => {
                write!(f, "primitive {primitive} is degenerate (zero radius or area)")
            }
            SceneError::InvalidMaterial { material, reason } => {
                write!(f, "material {material} is invalid: {reason}")
            }
            SceneError::InvalidCamera { reason } => write!(f, "invalid camera: {reason}"),
            SceneError::NoEmitters => f.write_str("scene has no emitters"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub position: Vec3,
    /// Shading normal, flipped to the side the ray arrived from.
    pub normal: Vec3,
    /// Whether the ray struck the primitive's front (emitting) side.
    pub front_face: bool,
    pub material: usize,
    pub primitive: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
struct Emitter {
    primitive: usize,
    area: f64,
}

/// Result of sampling an emitter from a receiving point. `pdf` values carry
/// the emitter selection probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LightSample {
    Area { point: Vec3, normal: Vec3, emitted: Rgb, pdf_area: f64 },
    Environment { direction: Vec3, radiance: Rgb, pdf_solid_angle: f64 },
}

/// Immutable, validated scene.
#[derive(Clone, Debug)]
pub struct Scene {
    primitives: Vec<Primitive>,
    materials: Vec<Material>,
    camera: Camera,
    environment: Option<Rgb>,
    emitters: Vec<Emitter>,
    emitter_cdf: Vec<f64>,
    emitter_select: Vec<f64>,
    environment_select: f64,
    bounds: (Vec3, Vec3),
}

impl Scene {
    /// Validates and builds a scene. Scenes without any emitter are rejected
    /// unless `allow_no_emitters` is set.
    pub fn new(
        primitives: Vec<Primitive>,
        materials: Vec<Material>,
        camera: Camera,
        environment: Option<Rgb>,
        allow_no_emitters: bool,
    ) -> Result<Scene, SceneError> {
        if !(camera.vertical_fov > 0.0 && camera.vertical_fov < 180.0) {
            return Err(SceneError::InvalidCamera { reason: "fov must lie in (0, 180)" });
        }
        if camera.width == 0 || camera.height == 0 {
            return Err(SceneError::InvalidCamera { reason: "resolution must be at least 1x1" });
        }
        if (camera.look_at - camera.origin).length() == 0.0
            || (camera.look_at - camera.origin).cross(camera.up).length() == 0.0
        {
            return Err(SceneError::InvalidCamera { reason: "view direction degenerate with up" });
        }
        for (i, m) in materials.iter().enumerate() {
            m.validate().map_err(|reason| SceneError::InvalidMaterial { material: i, reason })?;
        }
        for (i, p) in primitives.iter().enumerate() {
            if p.material >= materials.len() {
                return Err(SceneError::UnknownMaterial { primitive: i, material: p.material, count: materials.len() });
            }
            let degenerate = match p.shape {
                Shape::Sphere { radius, .. } => !(radius > 0.0),
                _ => !(p.shape.area() > 0.0),
            };
            if degenerate {
                return Err(SceneError::DegeneratePrimitive { primitive: i });
            }
        }

        let mut emitters = Vec::new();
        let mut powers = Vec::new();
        for (i, p) in primitives.iter().enumerate() {
            let e = materials[p.material].emission;
            if !e.is_black() {
                let area = p.shape.area();
                emitters.push(Emitter { primitive: i, area });
                powers.push(e.luminance().max(1e-12) * area * PI);
            }
        }
        let env = environment.filter(|e| !e.is_black());
        if emitters.is_empty() && env.is_none() && !allow_no_emitters {
            return Err(SceneError::NoEmitters);
        }
        let environment_select = match (emitters.is_empty(), env.is_some()) {
            (_, false) => 0.0,
            (true, true) => 1.0,
            (false, true) => 0.5,
        };
        let total: f64 = powers.iter().sum();
        let mut emitter_cdf = Vec::with_capacity(powers.len());
        let mut emitter_select = Vec::with_capacity(powers.len());
        let mut acc = 0.0;
        for p in &powers {
            acc += p / total;
            emitter_cdf.push(acc);
            emitter_select.push((1.0 - environment_select) * p / total);
        }
        if let Some(last) = emitter_cdf.last_mut() {
            *last = 1.0;
        }

        let bounds = if primitives.is_empty() {
            (camera.origin, camera.origin)
        } else {
            let mut lo = Vec3::new(f64::MAX, f64::MAX, f64::MAX);
            let mut hi = -lo;
            for p in &primitives {
                let (a, b) = p.shape.bounds();
                lo = lo.min_component(a);
                hi = hi.max_component(b);
            }
            (lo, hi)
        };

        Ok(Scene {
            primitives,
            materials,
            camera,
            environment: env,
            emitters,
            emitter_cdf,
            emitter_select,
            environment_select,
            bounds,
        })
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn material(&self, index: usize) -> &Material {
        &self.materials[index]
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn environment(&self) -> Option<Rgb> {
        self.environment
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        self.bounds
    }

    pub fn diameter(&self) -> f64 {
        (self.bounds.1 - self.bounds.0).length()
    }

    pub fn has_emitters(&self) -> bool {
        !self.emitters.is_empty() || self.environment.is_some()
    }

    /// Same scene rendered at a different resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Scene {
        let mut s = self.clone();
        s.camera.width = width.max(1);
        s.camera.height = height.max(1);
        s
    }

    /// Nearest hit with distance greater than `t_min`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<Hit> {
        let mut best: Option<(f64, usize)> = None;
        let mut t_max = f64::INFINITY;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(t) = p.shape.intersect(origin, dir, t_min, t_max) {
                t_max = t;
                best = Some((t, i));
            }
        }
        let (t, i) = best?;
        let prim = &self.primitives[i];
        let position = origin + dir * t;
        let geometric = prim.shape.normal_at(position);
        let front_face = geometric.dot(dir) < 0.0;
        Some(Hit {
            position,
            normal: if front_face { geometric } else { -geometric },
            front_face,
            material: prim.material,
            primitive: i,
            distance: t,
        })
    }

    /// Whether the open segment between `a` and `b` is unobstructed.
    pub fn visible(&self, a: Vec3, b: Vec3, eps: f64) -> bool {
        let d = b - a;
        let dist = d.length();
        if dist <= 2.0 * eps {
            return true;
        }
        let dir = d / dist;
        let t_max = dist - eps;
        !self.primitives.iter().any(|p| p.shape.intersect(a, dir, eps, t_max).is_some())
    }

    /// Radiance emitted towards the ray origin at `hit`.
    pub fn emitted(&self, hit: &Hit) -> Rgb {
        if hit.front_face {
            self.materials[hit.material].emission
        } else {
            Rgb::BLACK
        }
    }

    pub fn sample_light<S: UniformSource + ?Sized>(&self, rng: &mut S) -> Option<LightSample> {
        let select = rng.next_f64();
        let u = rng.next_square();
        if let Some(env) = self.environment {
            if self.emitters.is_empty() || select < self.environment_select {
                return Some(LightSample::Environment {
                    direction: uniform_sphere(u),
                    radiance: env,
                    pdf_solid_angle: self.environment_select / (4.0 * PI),
                });
            }
        }
        if self.emitters.is_empty() {
            return None;
        }
        let x = if self.environment.is_some() {
            (select - self.environment_select) / (1.0 - self.environment_select)
        } else {
            select
        };
        let k = self.emitter_cdf.partition_point(|&c| c <= x).min(self.emitters.len() - 1);
        let em = &self.emitters[k];
        let prim = &self.primitives[em.primitive];
        let (point, normal) = prim.shape.sample_area(u);
        Some(LightSample::Area {
            point,
            normal,
            emitted: self.materials[prim.material].emission,
            pdf_area: self.emitter_select[k] / em.area,
        })
    }

    /// Solid-angle density with which [`Scene::sample_light`] generates the
    /// emitter point `hit` as seen from `from`.
    pub fn light_pdf(&self, from: Vec3, hit: &Hit) -> f64 {
        if !hit.front_face {
            return 0.0;
        }
        let Some(k) = self.emitters.iter().position(|e| e.primitive == hit.primitive) else {
            return 0.0;
        };
        let d = hit.position - from;
        let dist2 = d.length_squared();
        let cos_l = hit.normal.dot(d).abs() / libm::sqrt(dist2);
        if cos_l <= 0.0 {
            return 0.0;
        }
        self.emitter_select[k] / self.emitters[k].area * dist2 / cos_l
    }

    /// Solid-angle density of the environment sampling branch.
    pub fn environment_pdf(&self) -> f64 {
        if self.environment.is_some() {
            self.environment_select / (4.0 * PI)
        } else {
            0.0
        }
    }

    /// Selection probability of each area emitter, by primitive index.
    pub fn emitter_selection(&self) -> Vec<(usize, f64)> {
        self.emitters.iter().zip(&self.emitter_select).map(|(e, &p)| (e.primitive, p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Rng;

    fn camera() -> Camera {
        Camera {
            origin: Vec3::new(0.0, 0.0, -5.0),
            look_at: Vec3::ZERO,
            up: Vec3::Y,
            vertical_fov: 40.0,
            width: 4,
            height: 4,
        }
    }

    fn unit_sphere_scene() -> Scene {
        let mats = alloc::vec![Material::diffuse(Rgb::splat(0.5)), Material::emitter(Rgb::WHITE)];
        let prims = alloc::vec![
            Primitive { shape: Shape::Sphere { center: Vec3::ZERO, radius: 1.0, inward: false }, material: 0 },
            Primitive {
                shape: Shape::Quad {
                    origin: Vec3::new(-0.5, 3.0, -0.5),
                    edge_u: Vec3::new(1.0, 0.0, 0.0),
                    edge_v: Vec3::new(0.0, 0.0, 1.0),
                },
                material: 1
            },
        ];
        Scene::new(prims, mats, camera(), None, false).unwrap()
    }

    #[test]
    fn ray_hits_unit_sphere_at_four() {
        let s = unit_sphere_scene();
        let h = s.intersect(Vec3::new(0.0, 0.0, -5.0), Vec3::Z, 1e-6).unwrap();
        assert!((h.distance - 4.0).abs() < 1e-12);
        assert!((h.normal - (-Vec3::Z)).length() < 1e-12);
        assert!(h.front_face);
    }

    #[test]
    fn ray_away_from_geometry_misses() {
        let s = unit_sphere_scene();
        assert!(s.intersect(Vec3::new(0.0, 0.0, -5.0), -Vec3::Z, 1e-6).is_none());
    }

    #[test]
    fn grazing_ray_is_consistent() {
        let s = unit_sphere_scene();
        // Tangent ray at y = 1 touches the sphere at z = 0, distance 5.
        for eps in [0.0, 1e-9, -1e-9] {
            let o = Vec3::new(0.0, 1.0 + eps, -5.0);
            let h = s.intersect(o, Vec3::Z, 1e-6);
            if let Some(h) = h {
                if h.primitive == 0 {
                    assert!((h.distance - 5.0).abs() < 1e-4, "{}", h.distance);
                }
            }
            // Repeated queries agree.
            assert_eq!(s.intersect(o, Vec3::Z, 1e-6).map(|h| h.primitive), h.map(|h| h.primitive));
        }
    }

    #[test]
    fn back_face_is_flagged_and_normal_flipped() {
        let s = unit_sphere_scene();
        let h = s.intersect(Vec3::ZERO, Vec3::X, 1e-6).unwrap();
        assert!(!h.front_face);
        assert!((h.normal - (-Vec3::X)).length() < 1e-12);
    }

    #[test]
    fn unknown_material_is_rejected() {
        let prims = alloc::vec![Primitive {
            shape: Shape::Sphere { center: Vec3::ZERO, radius: 1.0, inward: false },
            material: 5
        }];
        let mats = alloc::vec![Material::emitter(Rgb::WHITE), Material::diffuse(Rgb::splat(0.1))];
        let err = Scene::new(prims, mats, camera(), None, false).unwrap_err();
        assert_eq!(err, SceneError::UnknownMaterial { primitive: 0, material: 5, count: 2 });
    }

    #[test]
    fn scene_without_emitters_needs_opt_in() {
        let prims = alloc::vec![Primitive {
            shape: Shape::Sphere { center: Vec3::ZERO, radius: 1.0, inward: false },
            material: 0
        }];
        let mats = alloc::vec![Material::diffuse(Rgb::splat(0.5))];
        assert_eq!(Scene::new(prims.clone(), mats.clone(), camera(), None, false).unwrap_err(), SceneError::NoEmitters);
        let s = Scene::new(prims, mats, camera(), None, true).unwrap();
        let mut rng = Rng::new(0, 0);
        assert!(s.sample_light(&mut rng).is_none());
    }

    #[test]
    fn unit_quad_light_has_unit_pdf() {
        let mats = alloc::vec![Material::emitter(Rgb::WHITE)];
        let prims = alloc::vec![Primitive {
            shape: Shape::Quad { origin: Vec3::ZERO, edge_u: Vec3::X, edge_v: Vec3::Y },
            material: 0
        }];
        let s = Scene::new(prims, mats, camera(), None, false).unwrap();
        let mut rng = Rng::new(1, 1);
        match s.sample_light(&mut rng).unwrap() {
            LightSample::Area { pdf_area, .. } => assert!((pdf_area - 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lights_selected_proportional_to_power() {
        let mats = alloc::vec![Material::emitter(Rgb::splat(3.0)), Material::emitter(Rgb::WHITE)];
        let quad = |z: f64, m: usize| Primitive {
            shape: Shape::Quad { origin: Vec3::new(0.0, 0.0, z), edge_u: Vec3::X, edge_v: Vec3::Y },
            material: m,
        };
        let s = Scene::new(alloc::vec![quad(0.0, 0), quad(1.0, 1)], mats, camera(), None, false).unwrap();
        let mut rng = Rng::new(2, 2);
        let n = 100_000;
        let mut first = 0usize;
        for _ in 0..n {
            if let Some(LightSample::Area { point, .. }) = s.sample_light(&mut rng) {
                if point.z < 0.5 {
                    first += 1;
                }
            }
        }
        let p = first as f64 / n as f64;
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * sigma, "p = {p}");
    }

    #[test]
    fn environment_only_scene_samples_directions() {
        let mats = alloc::vec![Material::diffuse(Rgb::splat(0.5))];
        let prims = alloc::vec![Primitive {
            shape: Shape::Sphere { center: Vec3::ZERO, radius: 1.0, inward: false },
            material: 0
        }];
        let s = Scene::new(prims, mats, camera(), Some(Rgb::WHITE), false).unwrap();
        let mut rng = Rng::new(3, 3);
        match s.sample_light(&mut rng).unwrap() {
            LightSample::Environment { pdf_solid_angle, radiance, .. } => {
                assert!((pdf_solid_angle - 1.0 / (4.0 * PI)).abs() < 1e-15);
                assert_eq!(radiance, Rgb::WHITE);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
