//! Random streams and BSDF sampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{Frame, Vec3};
use crate::scene::Bsdf;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one `(seed, pixel, sample)` triple.
///
/// `pixel` is the row-major index in the full virtual image, so any tiling
/// of the image reproduces the same per-pixel estimates.
pub fn sample_rng(seed: u64, pixel: u64, sample: u64) -> ChaCha8Rng {
    let key = mix64(mix64(mix64(seed) ^ pixel) ^ sample.wrapping_mul(0xd6e8_feb8_6659_fd93));
    ChaCha8Rng::seed_from_u64(key)
}

#[inline]
pub fn uniform(rng: &mut impl Rng) -> f64 {
    rng.random::<f64>()
}

/// Cosine-weighted direction around +z.
pub fn cosine_hemisphere(u1: f64, u2: f64) -> Vec3 {
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    Vec3::new(r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt())
}

pub fn phong_exponent(roughness: f64) -> f64 {
    (2.0 / (roughness * roughness) - 2.0).max(0.0)
}

#[derive(Debug, Clone, Copy)]
pub struct BsdfSample {
    pub wi: Vec3,
    /// `f * cos / pdf`, or the reflectance for delta lobes.
    pub weight: Vec3,
    /// Solid-angle density; meaningless for delta lobes.
    pub pdf: f64,
    pub delta: bool,
}

/// Evaluates `f(wo, wi)`; both directions point away from the surface and
/// `n` faces `wo`.
pub fn eval(bsdf: &Bsdf, n: Vec3, wo: Vec3, wi: Vec3) -> Vec3 {
    let cos_i = n.dot(wi);
    if cos_i <= 0.0 || n.dot(wo) <= 0.0 {
        return Vec3::ZERO;
    }
    match *bsdf {
        Bsdf::Diffuse { albedo } => albedo / PI,
        Bsdf::Glossy { albedo, roughness } => {
            let e = phong_exponent(roughness);
            let cos_a = wo.reflect(n).dot(wi);
            if cos_a <= 0.0 {
                return Vec3::ZERO;
            }
            albedo * ((e + 2.0) / (2.0 * PI) * cos_a.powf(e))
        }
        Bsdf::Mirror | Bsdf::Black => Vec3::ZERO,
    }
}

pub fn pdf(bsdf: &Bsdf, n: Vec3, wo: Vec3, wi: Vec3) -> f64 {
    let cos_i = n.dot(wi);
    if cos_i <= 0.0 || n.dot(wo) <= 0.0 {
        return 0.0;
    }
    match *bsdf {
        Bsdf::Diffuse { .. } => cos_i / PI,
        Bsdf::Glossy { roughness, .. } => {
            let e = phong_exponent(roughness);
            let cos_a = wo.reflect(n).dot(wi);
            if cos_a <= 0.0 {
                0.0
            } else {
                (e + 1.0) / (2.0 * PI) * cos_a.powf(e)
            }
        }
        Bsdf::Mirror | Bsdf::Black => 0.0,
    }
}

pub fn sample(bsdf: &Bsdf, n: Vec3, wo: Vec3, u1: f64, u2: f64) -> Option<BsdfSample> {
    match *bsdf {
        Bsdf::Diffuse { albedo } => {
            let wi = Frame::from_normal(n).to_world(cosine_hemisphere(u1, u2));
            let cos_i = n.dot(wi);
            if cos_i <= 0.0 {
                return None;
            }
            Some(BsdfSample { wi, weight: albedo, pdf: cos_i / PI, delta: false })
        }
        Bsdf::Glossy { albedo, roughness } => {
            let e = phong_exponent(roughness);
            let cos_a = u1.powf(1.0 / (e + 1.0));
            let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
            let phi = 2.0 * PI * u2;
            let local = Vec3::new(sin_a * phi.cos(), sin_a * phi.sin(), cos_a);
            let wi = Frame::from_normal(wo.reflect(n)).to_world(local);
            let cos_i = n.dot(wi);
            if cos_i <= 0.0 {
                return None;
            }
            let pdf = (e + 1.0) / (2.0 * PI) * cos_a.powf(e);
            Some(BsdfSample { wi, weight: albedo * ((e + 2.0) / (e + 1.0) * cos_i), pdf, delta: false })
        }
        Bsdf::Mirror => Some(BsdfSample {
            wi: wo.reflect(n),
            weight: bsdf.albedo(),
            pdf: 0.0,
            delta: true,
        }),
        Bsdf::Black => None,
    }
}
