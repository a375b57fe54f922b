//! Lambertian + normalized Phong material.

use crate::math::{safe_sqrt, Rgb, Vec3, INV_PI, PI};
use crate::sampling::{square_to_cosine_hemisphere, Frame, SquarePoint};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Material {
    pub diffuse: Rgb,
    pub glossy: Rgb,
    /// Phong exponent of the glossy lobe.
    pub exponent: f64,
    pub emission: Rgb,
}

impl Default for Material {
    fn default() -> Self {
        Material { diffuse: Rgb::BLACK, glossy: Rgb::BLACK, exponent: 1.0, emission: Rgb::BLACK }
    }
}

/// Outcome of sampling a material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BsdfSample {
    /// The material reflects nothing.
    Absorb,
    /// `f` is zero when the direction falls below the surface; `pdf` is the
    /// solid-angle density of the lobe mixture.
    Scatter { wi: Vec3, f: Rgb, pdf: f64 },
}

impl Material {
    pub fn diffuse(albedo: Rgb) -> Self {
        Material { diffuse: albedo, ..Material::default() }
    }

    pub fn glossy(albedo: Rgb, exponent: f64) -> Self {
        Material { glossy: albedo, exponent, ..Material::default() }
    }

    pub fn emitter(emission: Rgb) -> Self {
        Material { emission, ..Material::default() }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let in_unit = |c: Rgb| c.channels().iter().all(|&x| (0.0..=1.0).contains(&x));
        if !in_unit(self.diffuse) || !in_unit(self.glossy) {
            return Err("albedo channels must lie in [0, 1]");
        }
        let sum = self.diffuse + self.glossy;
        if sum.max_channel() > 1.0 + 1e-9 {
            return Err("diffuse + glossy albedo exceeds 1");
        }
        if !(self.exponent >= 0.0 && self.exponent.is_finite()) {
            return Err("glossy exponent must be finite and non-negative");
        }
        if !self.emission.is_finite() || self.emission.channels().iter().any(|&x| x < 0.0) {
            return Err("emission must be finite and non-negative");
        }
        Ok(())
    }

    pub fn is_black(&self) -> bool {
        self.diffuse.is_black() && self.glossy.is_black()
    }

    /// Whether any part of the material scatters over the whole hemisphere.
    pub fn has_diffuse(&self) -> bool {
        !self.diffuse.is_black()
    }

    /// Probability of choosing the diffuse lobe.
    pub fn diffuse_probability(&self) -> f64 {
        let d = self.diffuse.luminance().max(0.0);
        let g = self.glossy.luminance().max(0.0);
        if d + g > 0.0 {
            d / (d + g)
        } else {
            0.0
        }
    }

    /// BSDF value without the cosine factor.
    pub fn eval(&self, wi: Vec3, wo: Vec3, n: Vec3) -> Rgb {
        let ci = wi.dot(n);
        let co = wo.dot(n);
        if ci <= 0.0 || co <= 0.0 {
            return Rgb::BLACK;
        }
        let mut f = self.diffuse * INV_PI;
        if !self.glossy.is_black() {
            let c = wi.dot(wo.reflect(n));
            if c > 0.0 {
                f += self.glossy * ((self.exponent + 2.0) / (2.0 * PI) * libm::pow(c, self.exponent));
            }
        }
        f
    }

    /// Solid-angle density of [`Material::sample`].
    pub fn pdf(&self, wi: Vec3, wo: Vec3, n: Vec3) -> f64 {
        if wo.dot(n) <= 0.0 || self.is_black() {
            return 0.0;
        }
        let pd = self.diffuse_probability();
        let mut p = 0.0;
        let ci = wi.dot(n);
        if pd > 0.0 && ci > 0.0 {
            p += pd * ci * INV_PI;
        }
        if pd < 1.0 {
            let c = wi.dot(wo.reflect(n));
            if c > 0.0 {
                p += (1.0 - pd) * (self.exponent + 1.0) / (2.0 * PI) * libm::pow(c, self.exponent);
            }
        }
        p
    }

    pub fn sample(&self, wo: Vec3, n: Vec3, u: SquarePoint) -> BsdfSample {
        if self.is_black() || wo.dot(n) <= 0.0 {
            return BsdfSample::Absorb;
        }
        let pd = self.diffuse_probability();
        let wi = if u.u < pd {
            let uu = SquarePoint::new((u.u / pd).min(1.0 - f64::EPSILON), u.v);
            Frame::from_normal(n).to_world(square_to_cosine_hemisphere(uu))
        } else {
            let uu = ((u.u - pd) / (1.0 - pd)).clamp(0.0, 1.0);
            let cos_a = libm::pow(1.0 - uu, 1.0 / (self.exponent + 1.0));
            let sin_a = safe_sqrt(1.0 - cos_a * cos_a);
            let phi = 2.0 * PI * u.v;
            let local = Vec3::new(sin_a * libm::cos(phi), sin_a * libm::sin(phi), cos_a);
            Frame::from_normal(wo.reflect(n)).to_world(local)
        };
        let pdf = self.pdf(wi, wo, n);
        if !(pdf > 0.0) {
            return BsdfSample::Absorb;
        }
        BsdfSample::Scatter { wi, f: self.eval(wi, wo, n), pdf }
    }
}
