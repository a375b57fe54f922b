//! Forward path tracer with next-event estimation, balance-heuristic MIS and
//! Russian roulette.
//!
//! Per-vertex sampling decisions (guiding, control variates, early
//! termination) come from a [`Planner`]; when recording is enabled the traced
//! vertices are returned so that field updates can be derived from them.

use alloc::vec::Vec;
use core::fmt;

use crate::bsdf::{BsdfSample, Material};
use crate::directional::Model;
use crate::field::Technique;
use crate::math::{Rgb, Vec3, INV_PI, PI};
use crate::sampling::{Frame, UniformSource};
use crate::scene::{Hit, LightSample, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZeroPdfs;

impl fmt::Display for ZeroPdfs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("both densities are zero")
    }
}

/// Balance heuristic `a / (a + b)`.
pub fn mis_balance(pdf_a: f64, pdf_b: f64) -> Result<f64, ZeroPdfs> {
    let s = pdf_a + pdf_b;
    if s > 0.0 {
        Ok(pdf_a / s)
    } else {
        Err(ZeroPdfs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathConfig {
    pub max_depth: u32,
    pub next_event: bool,
    pub russian_roulette: bool,
    /// First depth at which roulette may terminate the path.
    pub rr_min_depth: u32,
    pub ray_epsilon: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { max_depth: 256, next_event: true, russian_roulette: true, rr_min_depth: 3, ray_epsilon: 1e-6 }
    }
}

/// Control variate applied at one vertex: adds `beta * integral` and
/// subtracts `scale * beta * h(wi) / pdf`, and scales the continuation by
/// `scale`. A zero `scale` ends the path after the constant term.
///
/// `h(wi) = integral * (c * model_pdf(wi) + (1 - c) * cos / pi)` with
/// `c = confidence`, so `h` integrates to `integral` for any confidence.
#[derive(Clone, Copy, Debug)]
pub struct CvPlan<'a> {
    pub model: &'a Model,
    pub integral: Rgb,
    pub beta: f64,
    pub scale: f64,
    pub confidence: f64,
}

impl CvPlan<'_> {
    /// Solid-angle density shaping `h`.
    pub fn shape(&self, frame: &Frame, wi: Vec3) -> f64 {
        let cos = wi.dot(frame.n).max(0.0);
        let mut q = (1.0 - self.confidence) * cos * INV_PI;
        if self.confidence > 0.0 {
            q += self.confidence * self.model.pdf_direction(frame, wi);
        }
        q
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VertexPlan<'a> {
    pub guide: Option<&'a Model>,
    /// `(bsdf, guided)` one-sample mixture probabilities.
    pub alpha_mix: (f64, f64),
    pub cv: Option<CvPlan<'a>>,
    /// Weight of the zero-integral `p_model - p_bsdf` control variate.
    pub combined_beta: f64,
    /// Radiance scale of that control variate.
    pub combined_scale: Rgb,
}

impl Default for VertexPlan<'_> {
    fn default() -> Self {
        VertexPlan { guide: None, alpha_mix: (1.0, 0.0), cv: None, combined_beta: 0.0, combined_scale: Rgb::WHITE }
    }
}

/// What the planner sees of a vertex before sampling.
#[derive(Clone, Copy, Debug)]
pub struct VertexQuery<'a> {
    pub depth: u32,
    pub position: Vec3,
    pub normal: Vec3,
    pub wo: Vec3,
    pub footprint: f64,
    pub material: &'a Material,
}

pub trait Planner {
    fn plan(&self, vertex: &VertexQuery<'_>) -> VertexPlan<'_>;
}

/// Plain path tracing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoPlan;

impl Planner for NoPlan {
    fn plan(&self, _: &VertexQuery<'_>) -> VertexPlan<'_> {
        VertexPlan::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeeRecord {
    pub wi: Vec3,
    /// `f * L_e * cos / p * w`.
    pub contribution: Rgb,
    /// `L_e * cos / p * w`.
    pub incident: Rgb,
}

/// Where a continuation ray ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Next {
    /// The next entry of the vertex list.
    Vertex,
    /// Left the scene; carries the MIS-weighted environment radiance.
    Escaped(Rgb),
    /// Not traced (zero throughput).
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScatterRecord {
    pub wi: Vec3,
    pub f: Rgb,
    pub cos: f64,
    /// Solid-angle density of the technique mixture.
    pub pdf: f64,
    /// Projected-solid-angle density.
    pub pdf_proj: f64,
    /// One-sample MIS shares of the BSDF and guided techniques.
    pub bsdf_share: f64,
    pub guided_share: f64,
    pub survival: f64,
    pub next: Next,
}

impl ScatterRecord {
    /// `cos / (pdf * survival)`.
    pub fn ratio(&self) -> f64 {
        if self.pdf > 0.0 {
            self.cos / (self.pdf * self.survival)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathVertex {
    pub depth: u32,
    pub position: Vec3,
    /// Shading normal on the side of `wo`.
    pub normal: Vec3,
    /// Towards the previous vertex.
    pub wo: Vec3,
    /// Whether the material's reflectance depends on `wo`.
    pub glossy: bool,
    pub footprint: f64,
    pub throughput: Rgb,
    /// Emission towards `wo`.
    pub emission: Rgb,
    /// MIS weight of the segment that reached this vertex.
    pub mis_w: f64,
    pub nee: Option<NeeRecord>,
    pub scatter: Option<ScatterRecord>,
    /// Whether the vertex's outgoing radiance was fully estimated; vertices
    /// cut by the depth limit or by early termination are not.
    pub counted: bool,
}

#[derive(Clone, Debug, Default)]
pub struct PathResult {
    pub radiance: Rgb,
    pub vertices: Vec<PathVertex>,
}

/// Direct lighting at a surface point, MIS-weighted against the
/// continuation density `cont_pdf`.
#[allow(clippy::too_many_arguments)]
pub fn next_event_estimation<S: UniformSource + ?Sized>(
    scene: &Scene,
    material: &Material,
    position: Vec3,
    normal: Vec3,
    wo: Vec3,
    eps: f64,
    rng: &mut S,
    cont_pdf: &dyn Fn(Vec3) -> f64,
) -> Option<NeeRecord> {
    let origin = position + normal * eps;
    match scene.sample_light(rng)? {
        LightSample::Area { point, normal: ln, emitted, pdf_area } => {
            let d = point - origin;
            let dist2 = d.length_squared();
            let dist = libm::sqrt(dist2);
            let wi = d / dist;
            let cos_l = -ln.dot(wi);
            let cos_i = wi.dot(normal);
            if cos_l <= 0.0 || cos_i <= 0.0 || pdf_area <= 0.0 {
                return None;
            }
            let f = material.eval(wi, wo, normal);
            if f.is_black() || !scene.visible(origin, point, eps) {
                return None;
            }
            let p_light = pdf_area * dist2 / cos_l;
            let w = mis_balance(p_light, cont_pdf(wi)).unwrap_or(1.0);
            let incident = emitted * (cos_i * w / p_light);
            Some(NeeRecord { wi, contribution: f * incident, incident })
        }
        LightSample::Environment { direction, radiance, pdf_solid_angle } => {
            let cos_i = direction.dot(normal);
            if cos_i <= 0.0 {
                return None;
            }
            let f = material.eval(direction, wo, normal);
            if f.is_black() || scene.intersect(origin, direction, eps).is_some() {
                return None;
            }
            let w = mis_balance(pdf_solid_angle, cont_pdf(direction)).unwrap_or(1.0);
            let incident = radiance * (cos_i * w / pdf_solid_angle);
            Some(NeeRecord { wi: direction, contribution: f * incident, incident })
        }
    }
}

/// A continuation direction drawn from the BSDF/model mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureSample {
    pub wi: Vec3,
    pub f: Rgb,
    /// Solid-angle density of the mixture.
    pub pdf: f64,
    pub bsdf_pdf: f64,
    pub model_pdf: f64,
    pub technique: Technique,
}

/// One-sample mixture of BSDF sampling (probability `alpha_mix.0`) and
/// model sampling; plain BSDF sampling without a guide. A zero mixture
/// density is resampled once, then the path is absorbed.
pub fn sample_mixture<S: UniformSource + ?Sized>(
    material: &Material,
    wo: Vec3,
    n: Vec3,
    plan: &VertexPlan<'_>,
    frame: &Frame,
    rng: &mut S,
) -> Option<MixtureSample> {
    let Some(model) = plan.guide.filter(|_| plan.alpha_mix.1 > 0.0) else {
        return match material.sample(wo, n, rng.next_square()) {
            BsdfSample::Absorb => None,
            BsdfSample::Scatter { wi, f, pdf } => {
                Some(MixtureSample { wi, f, pdf, bsdf_pdf: pdf, model_pdf: 0.0, technique: Technique::Bsdf })
            }
        };
    };
    let (a0, a1) = plan.alpha_mix;
    for _ in 0..2 {
        let (wi, technique) = if rng.next_f64() < a0 {
            match material.sample(wo, n, rng.next_square()) {
                BsdfSample::Absorb => continue,
                BsdfSample::Scatter { wi, .. } => (wi, Technique::Bsdf),
            }
        } else {
            (model.sample_direction(frame, rng).0, Technique::Guided)
        };
        let bsdf_pdf = material.pdf(wi, wo, n);
        let model_pdf = model.pdf_direction(frame, wi);
        let pdf = a0 * bsdf_pdf + a1 * model_pdf;
        if pdf > 0.0 && pdf.is_finite() {
            let f = material.eval(wi, wo, n);
            return Some(MixtureSample { wi, f, pdf, bsdf_pdf, model_pdf, technique });
        }
    }
    None
}

/// Traces one camera path through pixel `(px, py)`.
pub fn trace_path<P: Planner + ?Sized, S: UniformSource + ?Sized>(
    scene: &Scene,
    config: &PathConfig,
    planner: &P,
    px: u32,
    py: u32,
    rng: &mut S,
    record: bool,
) -> PathResult {
    let camera = scene.camera();
    let pixel_angle = camera.pixel_angle();
    let eps = config.ray_epsilon;
    let (mut origin, mut dir) = camera.generate_ray(px, py, rng.next_square());
    let mut throughput = Rgb::WHITE;
    let mut radiance = Rgb::BLACK;
    let mut footprint = 0.0;
    let mut spread = pixel_angle;
    // Continuation density at the previous vertex, if NEE also ran there.
    let mut prev_nee: Option<(Vec3, f64)> = None;
    let mut vertices = Vec::new();
    let mut depth = 0u32;

    loop {
        let Some(hit) = scene.intersect(origin, dir, eps) else {
            if let Some(env) = scene.environment() {
                let w = match prev_nee {
                    Some((_, p)) => mis_balance(p, scene.environment_pdf()).unwrap_or(1.0),
                    None => 1.0,
                };
                radiance += throughput * env * w;
                if let Some(last) = vertices.last_mut() {
                    set_next(last, Next::Escaped(env * w));
                }
            }
            break;
        };
        depth += 1;
        footprint += hit.distance * spread;
        let wo = -dir;
        let w_e = match prev_nee {
            Some((from, p)) => mis_balance(p, scene.light_pdf(from, &hit)).unwrap_or(1.0),
            None => 1.0,
        };
        let emission = scene.emitted(&hit);
        radiance += throughput * emission * w_e;

        let mut vertex = PathVertex {
            depth,
            position: hit.position,
            normal: hit.normal,
            wo,
            glossy: !scene.material(hit.material).glossy.is_black(),
            footprint,
            throughput,
            emission,
            mis_w: w_e,
            nee: None,
            scatter: None,
            counted: false,
        };
        if depth > config.max_depth {
            push(&mut vertices, vertex, record);
            break;
        }
        let material = scene.material(hit.material);
        if material.is_black() {
            vertex.counted = true;
            push(&mut vertices, vertex, record);
            break;
        }

        let query = VertexQuery { depth, position: hit.position, normal: hit.normal, wo, footprint, material };
        let mut plan = planner.plan(&query);
        if plan.alpha_mix.1 <= 0.0 {
            plan.guide = None;
        }
        let frame = Frame::from_normal(hit.normal);
        let (a0, a1) = if plan.guide.is_some() { plan.alpha_mix } else { (1.0, 0.0) };
        let cont_pdf = |wi: Vec3| {
            let b = material.pdf(wi, wo, hit.normal);
            match plan.guide {
                Some(m) => a0 * b + a1 * m.pdf_direction(&frame, wi),
                None => b,
            }
        };

        if config.next_event {
            vertex.nee = next_event_estimation(scene, material, hit.position, hit.normal, wo, eps, rng, &cont_pdf);
            if let Some(n) = &vertex.nee {
                radiance += throughput * n.contribution;
            }
        }

        let mut scale = 1.0;
        if let Some(cv) = &plan.cv {
            radiance += throughput * cv.integral * cv.beta;
            scale = cv.scale;
            if scale == 0.0 {
                push(&mut vertices, vertex, record);
                break;
            }
        }

        let Some(s) = sample_mixture(material, wo, hit.normal, &plan, &frame, rng) else {
            vertex.counted = true;
            push(&mut vertices, vertex, record);
            break;
        };
        let cos = s.wi.dot(hit.normal).max(0.0);
        if let Some(cv) = &plan.cv {
            let h = cv.integral * cv.shape(&frame, s.wi);
            radiance -= throughput * h * (scale * cv.beta / s.pdf);
        }
        if plan.combined_beta != 0.0 && plan.guide.is_some() {
            let c = plan.combined_beta * (s.model_pdf - s.bsdf_pdf) / s.pdf;
            radiance -= throughput * plan.combined_scale * c;
        }
        let mut next_throughput = throughput * s.f * (cos * scale / s.pdf);
        let mut survival = 1.0;
        if config.russian_roulette && depth >= config.rr_min_depth {
            survival = next_throughput.luminance().clamp(0.05, 1.0);
            if survival < 1.0 {
                if rng.next_f64() >= survival {
                    vertex.counted = true;
                    push(&mut vertices, vertex, record);
                    break;
                }
                next_throughput = next_throughput / survival;
            }
        }
        let pdf_proj = if cos > 0.0 { s.pdf / cos } else { f64::INFINITY };
        let alive = !next_throughput.is_black();
        vertex.scatter = Some(ScatterRecord {
            wi: s.wi,
            f: s.f,
            cos,
            pdf: s.pdf,
            pdf_proj,
            bsdf_share: a0 * s.bsdf_pdf / s.pdf,
            guided_share: a1 * s.model_pdf / s.pdf,
            survival,
            next: if alive { Next::Vertex } else { Next::None },
        });
        vertex.counted = true;
        push(&mut vertices, vertex, record);
        if !alive {
            break;
        }
        spread = pixel_angle.max(1.0 / libm::sqrt(pdf_proj * PI));
        prev_nee = if config.next_event { Some((hit.position, s.pdf)) } else { None };
        throughput = next_throughput;
        origin = hit.position + offset(&hit, s.wi, eps);
        dir = s.wi;
    }

    if record {
        // A continuation that found nothing and no environment ends dark.
        if let Some(last) = vertices.last_mut() {
            if let Some(sc) = &mut last.scatter {
                if sc.next == Next::Vertex {
                    sc.next = Next::Escaped(Rgb::BLACK);
                }
            }
        }
    }
    PathResult { radiance, vertices }
}

fn offset(hit: &Hit, wi: Vec3, eps: f64) -> Vec3 {
    if wi.dot(hit.normal) >= 0.0 {
        hit.normal * eps
    } else {
        hit.normal * -eps
    }
}

fn set_next(v: &mut PathVertex, next: Next) {
    if let Some(s) = &mut v.scatter {
        if s.next == Next::Vertex {
            s.next = next;
        }
    }
}

fn push(vertices: &mut Vec<PathVertex>, v: PathVertex, record: bool) {
    if record {
        vertices.push(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_heuristic_values() {
        assert_eq!(mis_balance(1.0, 0.0), Ok(1.0));
        assert_eq!(mis_balance(2.0, 2.0), Ok(0.5));
        assert!((mis_balance(0.3, 0.7).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(mis_balance(0.0, 0.0), Err(ZeroPdfs));
    }
}
