//! Reproducible random streams, square/sphere parameterizations and
//! orthonormal frames.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::math::{safe_sqrt, Vec3, PI};

/// A source of uniform variates in `[0, 1)`.
pub trait UniformSource {
    fn next_f64(&mut self) -> f64;

    fn next_square(&mut self) -> SquarePoint {
        let u = self.next_f64();
        let v = self.next_f64();
        SquarePoint::new(u, v)
    }
}

/// Counter-based generator with an explicit 64-bit stream selector.
///
/// Identical `(seed, stream)` pairs produce identical sequences on every
/// platform; distinct streams are statistically independent.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    /// Stream for one pixel within one frame.
    pub fn for_pixel(seed: u64, frame: u32, pixel: u32) -> Self {
        Rng::new(seed, ((frame as u64) << 32) | pixel as u64)
    }

    pub fn stream(&self) -> u64 {
        self.inner.get_stream()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

impl UniformSource for Rng {
    #[inline]
    fn next_f64(&mut self) -> f64 {
        // 53 random mantissa bits, so the result is strictly below 1.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Point of the unit square `[0,1]^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SquarePoint {
    pub u: f64,
    pub v: f64,
}

impl SquarePoint {
    #[inline]
    pub const fn new(u: f64, v: f64) -> Self {
        SquarePoint { u, v }
    }

    #[inline]
    pub fn axis(self, axis: usize) -> f64 {
        if axis == 0 {
            self.u
        } else {
            self.v
        }
    }

    #[inline]
    pub fn with_axis(self, axis: usize, value: f64) -> Self {
        if axis == 0 {
            SquarePoint::new(value, self.v)
        } else {
            SquarePoint::new(self.u, value)
        }
    }

    pub fn clamped(self) -> Self {
        SquarePoint::new(self.u.clamp(0.0, 1.0), self.v.clamp(0.0, 1.0))
    }
}

/// Equal-area octahedral map from the unit square to the sphere; `+Z` sits
/// at the centre of the square and `-Z` at its corners.
pub fn square_to_sphere(p: SquarePoint) -> Vec3 {
    let u = 2.0 * p.u - 1.0;
    let v = 2.0 * p.v - 1.0;
    let up = u.abs();
    let vp = v.abs();
    let signed_distance = 1.0 - (up + vp);
    let d = signed_distance.abs();
    let r = 1.0 - d;
    let phi = if r == 0.0 { 1.0 } else { (vp - up) / r + 1.0 } * (PI / 4.0);
    let z = (1.0 - r * r).copysign(signed_distance);
    let cos_phi = libm::cos(phi).copysign(u);
    let sin_phi = libm::sin(phi).copysign(v);
    let s = r * safe_sqrt(2.0 - r * r);
    Vec3::new(cos_phi * s, sin_phi * s, z)
}

/// Inverse of [`square_to_sphere`].
pub fn sphere_to_square(d: Vec3) -> SquarePoint {
    let x = d.x.abs();
    let y = d.y.abs();
    let z = d.z.abs();
    let r = safe_sqrt(1.0 - z);
    let a = x.max(y);
    let b = if a == 0.0 { 0.0 } else { x.min(y) / a };
    let mut phi = libm::atan(b) * (2.0 / PI);
    if x < y {
        phi = 1.0 - phi;
    }
    let mut v = phi * r;
    let mut u = r - v;
    if d.z < 0.0 {
        core::mem::swap(&mut u, &mut v);
        u = 1.0 - u;
        v = 1.0 - v;
    }
    u = u.copysign(d.x);
    v = v.copysign(d.y);
    SquarePoint::new(0.5 * (u + 1.0), 0.5 * (v + 1.0))
}

/// Shirley–Chiu concentric map of the square onto the unit disk.
pub fn square_to_disk(p: SquarePoint) -> (f64, f64) {
    let a = 2.0 * p.u - 1.0;
    let b = 2.0 * p.v - 1.0;
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() { (a, (PI / 4.0) * (b / a)) } else { (b, PI / 2.0 - (PI / 4.0) * (a / b)) };
    (r * libm::cos(phi), r * libm::sin(phi))
}

/// Inverse of [`square_to_disk`].
pub fn disk_to_square(x: f64, y: f64) -> SquarePoint {
    let r = libm::sqrt(x * x + y * y);
    if r == 0.0 {
        return SquarePoint::new(0.5, 0.5);
    }
    let mut phi = libm::atan2(y, x);
    if phi < -PI / 4.0 {
        phi += 2.0 * PI;
    }
    let q = PI / 4.0;
    let (a, b) = if phi < q {
        (r, phi * r / q)
    } else if phi < 3.0 * q {
        (-(phi - PI / 2.0) * r / q, r)
    } else if phi < 5.0 * q {
        (-r, -(phi - PI) * r / q)
    } else {
        ((phi - 3.0 * PI / 2.0) * r / q, -r)
    };
    SquarePoint::new(0.5 * (a + 1.0), 0.5 * (b + 1.0)).clamped()
}

/// Cosine-weighted hemisphere map (local `+Z` up): uniform square density
/// maps to solid-angle density `cos(theta) / pi`.
pub fn square_to_cosine_hemisphere(p: SquarePoint) -> Vec3 {
    let (x, y) = square_to_disk(p);
    Vec3::new(x, y, safe_sqrt(1.0 - x * x - y * y))
}

/// Inverse of [`square_to_cosine_hemisphere`] for local directions with `z >= 0`.
pub fn cosine_hemisphere_to_square(d: Vec3) -> SquarePoint {
    disk_to_square(d.x, d.y)
}

pub fn uniform_sphere(p: SquarePoint) -> Vec3 {
    let z = 1.0 - 2.0 * p.u;
    let r = safe_sqrt(1.0 - z * z);
    let phi = 2.0 * PI * p.v;
    Vec3::new(r * libm::cos(phi), r * libm::sin(phi), z)
}

/// Right-handed orthonormal frame `(t, b, n)` with `t x b = n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub t: Vec3,
    pub b: Vec3,
    pub n: Vec3,
}

impl Frame {
    /// Branchless construction of Duff et al.; no degenerate pole.
    pub fn from_normal(n: Vec3) -> Frame {
        let sign = 1.0f64.copysign(n.z);
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        let t = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
        let bb = Vec3::new(b, sign + n.y * n.y * a, -n.y);
        Frame { t, b: bb, n }
    }

    #[inline]
    pub fn to_local(&self, v: Vec3) -> Vec3 {
        Vec3::new(v.dot(self.t), v.dot(self.b), v.dot(self.n))
    }

    #[inline]
    pub fn to_world(&self, v: Vec3) -> Vec3 {
        self.t * v.x + self.b * v.y + self.n * v.z
    }
}

/// `(t, b, n)` tuple form of [`Frame::from_normal`].
pub fn build_frame(n: Vec3) -> (Vec3, Vec3, Vec3) {
    let f = Frame::from_normal(n);
    (f.t, f.b, f.n)
}
