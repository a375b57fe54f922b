//! Pixel estimators driven by the cached light field: guided importance
//! sampling, control variates, their combination and the biased
//! predictor-corrector.
//!
//! The control variate at a vertex is `h(wi) = I_h * q(wi)` where `I_h` is
//! the cached continuation radiance and `q` a normalized solid-angle density:
//! the vertex's directional model, blended towards the cosine density while
//! the model has seen few records. `h` integrates to `I_h` exactly.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::bsdf::Material;
use crate::directional::{Model, ModelKind, ModelParams, ModelStore};
use crate::field::{compute_update_value, FieldConfig, FieldKind, FieldStore, Grid, Technique, TechniqueMask};
use crate::math::{Rgb, Vec3};
use crate::pathtracer::{
    sample_mixture, trace_path, CvPlan, MixtureSample, Next, PathConfig, PathVertex, Planner, VertexPlan, VertexQuery,
};
use crate::sampling::{Frame, UniformSource};
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Pt,
    PtNee,
    Is,
    Cv,
    IsCv,
    B,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Pt,
        EstimatorKind::PtNee,
        EstimatorKind::Is,
        EstimatorKind::Cv,
        EstimatorKind::IsCv,
        EstimatorKind::B,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Pt => "pt",
            EstimatorKind::PtNee => "pt-nee",
            EstimatorKind::Is => "is",
            EstimatorKind::Cv => "cv",
            EstimatorKind::IsCv => "is-cv",
            EstimatorKind::B => "b",
        }
    }

    pub fn guides(self) -> bool {
        matches!(self, EstimatorKind::Is | EstimatorKind::IsCv)
    }

    pub fn uses_cv(self) -> bool {
        matches!(self, EstimatorKind::Cv | EstimatorKind::IsCv | EstimatorKind::B)
    }

    pub fn uses_fields(self) -> bool {
        !matches!(self, EstimatorKind::Pt | EstimatorKind::PtNee)
    }

    pub fn next_event(self) -> bool {
        self != EstimatorKind::Pt
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownName;

impl fmt::Display for UnknownName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("unknown name")
    }
}

impl FromStr for EstimatorKind {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        EstimatorKind::ALL.into_iter().find(|k| k.name() == s).ok_or(UnknownName)
    }
}

pub fn model_kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Grid => "grid",
        ModelKind::KdTree => "kdtree",
        ModelKind::Gmm => "gmm",
    }
}

pub fn parse_model_kind(s: &str) -> Result<ModelKind, UnknownName> {
    match s.to_ascii_lowercase().as_str() {
        "grid" => Ok(ModelKind::Grid),
        "kdtree" | "kd-tree" | "kd" => Ok(ModelKind::KdTree),
        "gmm" => Ok(ModelKind::Gmm),
        _ => Err(UnknownName),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_mix: (f64, f64),
    pub cv_max_depth: u32,
    pub biased_vertex: u32,
    pub warmup_frames: u32,
    pub model: ModelParams,
    /// Field level the directional models are hashed at.
    pub model_level: u8,
    pub model_capacity: usize,
    pub t_max: f64,
    /// Record count at which a model gets half the weight in the control
    /// variate's shape; the rest is the cosine density.
    pub cv_prior: f64,
    /// Coefficient of the `p_model - p_bsdf` control variate; by default
    /// `alpha_mix.0 * (1 - beta)`, which removes the remaining variance when
    /// the model is exact.
    pub combined_beta: Option<f64>,
    /// Update the fields even when the estimator does not read them.
    pub learn: bool,
    /// Also maintain the incoming-direction fields.
    pub incoming_fields: bool,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        EstimatorConfig {
            kind,
            beta: 0.75,
            gamma: 0.0,
            alpha_mix: (0.5, 0.5),
            cv_max_depth: 2,
            biased_vertex: 2,
            warmup_frames: 0,
            model: ModelParams::default(),
            model_level: 4,
            model_capacity: 1 << 16,
            t_max: 64.0,
            cv_prior: 64.0,
            combined_beta: None,
            learn: kind.uses_fields(),
            incoming_fields: false,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !self.beta.is_finite() {
            return Err("beta must be finite");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("gamma must lie in [0, 1]");
        }
        let (a0, a1) = self.alpha_mix;
        if !(a0 >= 0.0 && a1 >= 0.0 && (a0 + a1 - 1.0).abs() < 1e-9) {
            return Err("alpha_mix must be non-negative and sum to 1");
        }
        if self.kind.guides() && (a0 <= 0.0 || a1 <= 0.0) {
            return Err("alpha_mix components must be positive when guiding");
        }
        if !(self.t_max >= 1.0) {
            return Err("t_max must be at least 1");
        }
        Ok(())
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::new(EstimatorKind::PtNee)
    }
}

/// `(g - beta * h) * (w / pdf) + beta * integral`.
pub fn cv_estimate(g: Rgb, h: Rgb, w: f64, pdf: f64, integral: Rgb, beta: f64) -> Rgb {
    (g - h * beta) * (w / pdf) + integral * beta
}

/// `gamma * ((g - h) * (w / pdf)) + integral`.
pub fn biased_estimate(g: Rgb, h: Rgb, w: f64, pdf: f64, integral: Rgb, gamma: f64) -> Rgb {
    (g - h) * (w / pdf) * gamma + integral
}

/// `(g - beta * (p1 - p0)) * (w / pdf)`; the subtracted term has unit
/// radiance in every channel and integrates to zero.
pub fn combined_cv_estimate(g: Rgb, p1: f64, p0: f64, pdf: f64, beta: f64, w: f64) -> Rgb {
    let c = (p1 - p0) * beta;
    (g - Rgb::new(c, c, c)) * (w / pdf)
}

/// Continuation direction at a vertex: BSDF sampling when `model` is absent
/// or untrained, otherwise the `alpha_mix` one-sample mixture.
pub fn guided_sample_direction<S: UniformSource + ?Sized>(
    material: &Material,
    wo: Vec3,
    normal: Vec3,
    model: Option<&Model>,
    alpha_mix: (f64, f64),
    rng: &mut S,
) -> Option<MixtureSample> {
    let guide = model.filter(|m| m.is_trained());
    let plan = VertexPlan { guide, alpha_mix, ..VertexPlan::default() };
    sample_mixture(material, wo, normal, &plan, &Frame::from_normal(normal), rng)
}

/// The learned state: outgoing-radiance caches and directional models.
#[derive(Clone, Debug)]
pub struct Fields {
    pub lo: FieldStore,
    pub lo_minus_e: FieldStore,
    /// Outgoing radiance minus emission restricted to the continuation
    /// techniques; supplies the control-variate integral.
    pub continuation: FieldStore,
    pub li: Option<FieldStore>,
    pub fli: Option<FieldStore>,
    pub models: ModelStore,
}

impl Fields {
    pub fn new(config: &EstimatorConfig, field: FieldConfig) -> Self {
        let cont_mask = TechniqueMask::only(Technique::Bsdf).with(Technique::Guided);
        let incoming = |kind| config.incoming_fields.then(|| FieldStore::new(kind, field, TechniqueMask::ALL));
        Fields {
            lo: FieldStore::new(FieldKind::Lo, field, TechniqueMask::ALL),
            lo_minus_e: FieldStore::new(FieldKind::LoMinusE, field, TechniqueMask::ALL),
            continuation: FieldStore::new(FieldKind::LoMinusE, field, cont_mask),
            li: incoming(FieldKind::Li),
            fli: incoming(FieldKind::FLi),
            models: ModelStore::new(config.model, field.grid, config.model_level, config.t_max, config.model_capacity),
        }
    }

    /// Update values for every counted vertex of a path, computed against
    /// the current (pre-frame) cache.
    pub fn updates(&self, vertices: &[PathVertex], out: &mut Vec<VertexUpdate>) {
        for (j, v) in vertices.iter().enumerate() {
            if !v.counted {
                continue;
            }
            let cont = v.scatter.map(|sc| {
                // The next vertex's emission enters with its MIS weight; the
                // rest comes from the emission-free cache. Subtracting L_e
                // from the Lo cache instead goes negative when a lookup falls
                // back to a coarse cell that averages an emitter with its
                // surroundings.
                let (le_w, rest) = match sc.next {
                    Next::Vertex => match vertices.get(j + 1) {
                        Some(n) => {
                            let lme = self.lo_minus_e.query(n.position, n.wo, n.footprint);
                            (n.emission * n.mis_w, if lme.valid { lme.value } else { Rgb::BLACK })
                        }
                        None => (Rgb::BLACK, Rgb::BLACK),
                    },
                    Next::Escaped(r) => (r, Rgb::BLACK),
                    Next::None => (Rgb::BLACK, Rgb::BLACK),
                };
                let ratio = sc.ratio();
                ContinuationUpdate {
                    wi: sc.wi,
                    lo: compute_update_value(FieldKind::Lo, rest, le_w, sc.f, ratio),
                    lo_minus_e: compute_update_value(FieldKind::LoMinusE, rest, le_w, sc.f, ratio),
                    li: compute_update_value(FieldKind::Li, rest, le_w, sc.f, ratio),
                    bsdf_share: sc.bsdf_share,
                    guided_share: sc.guided_share,
                }
            });
            out.push(VertexUpdate {
                position: v.position,
                wo: v.wo,
                glossy: v.glossy,
                normal: v.normal,
                emission: v.emission,
                nee: v.nee.map(|n| (n.wi, n.contribution, n.incident)),
                cont,
            });
        }
    }

    pub fn apply(&mut self, u: &VertexUpdate) {
        let nee = u.nee.map(|n| n.1).unwrap_or(Rgb::BLACK);
        let (lo_b, lo_g, lme_b, lme_g) = match &u.cont {
            Some(c) => {
                (c.lo * c.bsdf_share, c.lo * c.guided_share, c.lo_minus_e * c.bsdf_share, c.lo_minus_e * c.guided_share)
            }
            None => (Rgb::BLACK, Rgb::BLACK, Rgb::BLACK, Rgb::BLACK),
        };
        self.lo.record_outgoing(
            u.position,
            u.wo,
            &[
                (Technique::Emission, u.emission),
                (Technique::NextEvent, nee),
                (Technique::Bsdf, lo_b),
                (Technique::Guided, lo_g),
            ],
        );
        let lme = [(Technique::NextEvent, nee), (Technique::Bsdf, lme_b), (Technique::Guided, lme_g)];
        self.lo_minus_e.record_outgoing(u.position, u.wo, &lme);
        self.continuation.record_outgoing(u.position, u.wo, &lme);

        let mut incoming: Vec<(Technique, Vec3, Rgb)> = Vec::new();
        if let Some(fli) = &mut self.fli {
            incoming.clear();
            if let Some((wi, c, _)) = u.nee {
                incoming.push((Technique::NextEvent, wi, c));
            }
            if let Some(c) = &u.cont {
                incoming.push((Technique::Bsdf, c.wi, lo_b));
                incoming.push((Technique::Guided, c.wi, lo_g));
            }
            fli.record_incoming(u.position, &incoming);
        }
        if let Some(li) = &mut self.li {
            incoming.clear();
            if let Some((wi, _, inc)) = u.nee {
                incoming.push((Technique::NextEvent, wi, inc));
            }
            if let Some(c) = &u.cont {
                incoming.push((Technique::Bsdf, c.wi, c.li * c.bsdf_share));
                incoming.push((Technique::Guided, c.wi, c.li * c.guided_share));
            }
            li.record_incoming(u.position, &incoming);
        }
        if let Some(c) = &u.cont {
            let frame = Frame::from_normal(u.normal);
            let wo = u.glossy.then_some(u.wo);
            self.models.record(u.position, wo, &frame, c.wi, c.lo.luminance().max(0.0));
        }
    }

    pub fn end_frame(&mut self) {
        self.lo.end_frame();
        self.lo_minus_e.end_frame();
        self.continuation.end_frame();
        if let Some(s) = &mut self.li {
            s.end_frame();
        }
        if let Some(s) = &mut self.fli {
            s.end_frame();
        }
        self.models.end_frame();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuationUpdate {
    pub wi: Vec3,
    pub lo: Rgb,
    pub lo_minus_e: Rgb,
    pub li: Rgb,
    pub bsdf_share: f64,
    pub guided_share: f64,
}

/// Everything one counted path vertex contributes to the caches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexUpdate {
    pub position: Vec3,
    pub wo: Vec3,
    /// Keys the vertex's directional model by `wo` as well.
    pub glossy: bool,
    pub normal: Vec3,
    pub emission: Rgb,
    /// `(wi, f * incident, incident)` of the light sample.
    pub nee: Option<(Vec3, Rgb, Rgb)>,
    pub cont: Option<ContinuationUpdate>,
}

#[derive(Clone, Debug, Default)]
pub struct PixelSample {
    pub radiance: Rgb,
    pub updates: Vec<VertexUpdate>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub cv_vertices: u64,
    pub biased_vertices: u64,
    pub cold_fallbacks: u64,
}

/// Estimator state across frames. Tracing reads a frozen snapshot; updates
/// are applied between paths in a fixed order and folded in at
/// [`Engine::end_frame`].
#[derive(Clone, Debug)]
pub struct Engine {
    config: EstimatorConfig,
    path: PathConfig,
    fields: Option<Fields>,
    frame: u32,
}

impl Engine {
    pub fn new(scene: &Scene, config: EstimatorConfig, path: PathConfig) -> Self {
        let field = FieldConfig { t_max: config.t_max, ..FieldConfig::new(Grid::for_scene_diameter(scene.diameter())) };
        Self::with_field_config(config, path, field)
    }

    pub fn with_field_config(config: EstimatorConfig, path: PathConfig, field: FieldConfig) -> Self {
        let path = PathConfig { next_event: config.kind.next_event(), ..path };
        let fields = config.learn.then(|| Fields::new(&config, field));
        Engine { config, path, fields, frame: 0 }
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn path_config(&self) -> &PathConfig {
        &self.path
    }

    pub fn fields(&self) -> Option<&Fields> {
        self.fields.as_ref()
    }

    pub fn fields_mut(&mut self) -> Option<&mut Fields> {
        self.fields.as_mut()
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn in_warmup(&self) -> bool {
        self.frame < self.config.warmup_frames
    }

    /// Traces one path; update records are returned when learning.
    pub fn trace<S: UniformSource + ?Sized>(&self, scene: &Scene, px: u32, py: u32, rng: &mut S) -> PixelSample {
        let record = self.fields.is_some();
        let r = trace_path(scene, &self.path, self, px, py, rng, record);
        let mut updates = Vec::new();
        if let Some(f) = &self.fields {
            f.updates(&r.vertices, &mut updates);
        }
        PixelSample { radiance: r.radiance, updates }
    }

    pub fn apply(&mut self, updates: &[VertexUpdate]) {
        if let Some(f) = &mut self.fields {
            for u in updates {
                f.apply(u);
            }
        }
    }

    pub fn end_frame(&mut self) {
        if let Some(f) = &mut self.fields {
            f.end_frame();
        }
        self.frame += 1;
    }
}

impl Planner for Engine {
    fn plan(&self, q: &VertexQuery<'_>) -> VertexPlan<'_> {
        let c = &self.config;
        let Some(fields) = &self.fields else {
            return VertexPlan::default();
        };
        if !c.kind.uses_fields() || self.in_warmup() {
            return VertexPlan::default();
        }
        let wo = (!q.material.glossy.is_black()).then_some(q.wo);
        let counted = fields.models.get_counted(q.position, wo);
        let guide = if c.kind.guides() { counted.map(|m| m.0) } else { None };
        let mut plan = VertexPlan { guide, alpha_mix: c.alpha_mix, ..VertexPlan::default() };
        let combined = c.kind == EstimatorKind::IsCv && guide.is_some();
        let biased = c.kind == EstimatorKind::B && q.depth == c.biased_vertex;
        let cv_depth =
            c.kind.uses_cv() && q.depth <= c.cv_max_depth && (c.kind != EstimatorKind::B || q.depth < c.biased_vertex);
        if !combined && !biased && !cv_depth {
            return plan;
        }
        let integral = fields.continuation.query(q.position, q.wo, q.footprint);
        if !integral.valid || !integral.value.is_finite() {
            return plan;
        }
        if combined {
            plan.combined_beta = c.combined_beta.unwrap_or(c.alpha_mix.0 * (1.0 - c.beta));
            plan.combined_scale = integral.value;
        }
        if !biased && !cv_depth {
            return plan;
        }
        let Some((model, n)) = counted else {
            return plan;
        };
        let covered = q.material.has_diffuse() || (guide.is_some() && c.alpha_mix.1 > 0.0);
        if !covered {
            return plan;
        }
        let confidence = if c.cv_prior > 0.0 { n / (n + c.cv_prior) } else { 1.0 };
        plan.cv = Some(if biased {
            CvPlan { model, integral: integral.value, beta: 1.0, scale: c.gamma, confidence }
        } else {
            CvPlan { model, integral: integral.value, beta: c.beta, scale: 1.0, confidence }
        });
        plan
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>(), Ok(k));
        }
        assert_eq!("IS_CV".parse::<EstimatorKind>(), Ok(EstimatorKind::IsCv));
        assert!("foo".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn zero_beta_is_plain_estimator() {
        let g = Rgb::new(0.3, 0.2, 0.1);
        let h = Rgb::new(9.0, 9.0, 9.0);
        let v = cv_estimate(g, h, 0.5, 0.25, Rgb::WHITE, 0.0);
        assert_eq!(v, g * (0.5 / 0.25));
    }

    #[test]
    fn perfect_cache_returns_integral() {
        let g = Rgb::new(0.4, 0.5, 0.6);
        let i = Rgb::new(1.0, 2.0, 3.0);
        let v = cv_estimate(g, g, 1.0, 0.7, i, 1.0);
        assert_eq!(v, i);
    }

    #[test]
    fn zero_gamma_is_cache_value() {
        let i = Rgb::new(0.1, 0.2, 0.3);
        assert_eq!(biased_estimate(Rgb::WHITE, Rgb::BLACK, 1.0, 0.5, i, 0.0), i);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::new(EstimatorKind::Is).validate().is_ok());
        let mut c = EstimatorConfig::new(EstimatorKind::Is);
        c.alpha_mix = (1.0, 0.0);
        assert!(c.validate().is_err());
        c.kind = EstimatorKind::Cv;
        assert!(c.validate().is_ok());
        c.gamma = 1.5;
        assert!(c.validate().is_err());
    }
}
