//! Unidirectional path tracing with next-event estimation and MIS.

use rand::Rng;

use super::geometry::{sample_shape, Ray, TraceScene};
use super::sampling::{self, uniform};
use crate::math::Vec3;
use crate::scene::Shape;

/// Maximum number of scattering events along a path.
pub const MAX_BOUNCES: usize = 8;
/// Russian roulette starts once this many bounces have been taken.
pub const RR_START: usize = 3;

const RAY_EPS: f64 = 1e-6;

#[inline]
fn power_heuristic(a: f64, b: f64) -> f64 {
    let (a2, b2) = (a * a, b * b);
    if a2 + b2 == 0.0 {
        0.0
    } else {
        a2 / (a2 + b2)
    }
}

/// Emitted radiance leaving `shape` at a point with geometric normal `n`
/// toward direction `-dir`; emitters radiate from their front side only.
#[inline]
fn emitted(emission: Vec3, n: Vec3, dir: Vec3) -> Vec3 {
    if n.dot(dir) < 0.0 {
        emission
    } else {
        Vec3::ZERO
    }
}

/// Solid-angle density of light sampling toward a point on `shape`.
fn light_pdf(scene: &TraceScene, shape: &Shape, from: Vec3, to: Vec3, light_n: Vec3) -> f64 {
    let d = to - from;
    let dist2 = d.length_squared();
    let cos_l = light_n.dot(d).abs() / dist2.sqrt();
    if cos_l <= 0.0 {
        return 0.0;
    }
    dist2 / (cos_l * shape.area() * scene.emitters.len() as f64)
}

/// One radiance sample along `ray`.
pub fn radiance(scene: &TraceScene, ray: Ray, rng: &mut impl Rng) -> Vec3 {
    let mut l = Vec3::ZERO;
    let mut beta = Vec3::ONE;
    let mut ray = ray;
    let mut specular = true;
    let mut prev_pdf = 0.0;
    let env = scene.instance.environment;

    for depth in 0..=MAX_BOUNCES {
        let Some(hit) = scene.intersect(&ray) else {
            l += beta.mul_elem(env);
            break;
        };
        let prim = scene.prim(hit.prim);
        let surface = &prim.surface;
        if surface.is_emissive() {
            let le = emitted(surface.emission, hit.geometric_normal, ray.dir);
            if specular {
                l += beta.mul_elem(le);
            } else if le.max_component() > 0.0 {
                let pl = light_pdf(scene, &prim.shape, ray.origin, hit.point, hit.geometric_normal);
                l += beta.mul_elem(le) * power_heuristic(prev_pdf, pl);
            }
        }
        if depth == MAX_BOUNCES {
            break;
        }
        let bsdf = &surface.bsdf;
        let wo = -ray.dir;
        let n = if hit.geometric_normal.dot(wo) < 0.0 { -hit.geometric_normal } else { hit.geometric_normal };
        let origin = hit.point + n * RAY_EPS;

        if !bsdf.is_delta() && bsdf.has_albedo() && !scene.emitters.is_empty() {
            let pick = ((uniform(rng) * scene.emitters.len() as f64) as usize).min(scene.emitters.len() - 1);
            let light = scene.prim(scene.emitters[pick]);
            let s = sample_shape(&light.shape, uniform(rng), uniform(rng), uniform(rng));
            let wi = (s.point - hit.point).normalized();
            let le = emitted(light.surface.emission, s.normal, wi);
            let cos_i = n.dot(wi);
            if le.max_component() > 0.0 && cos_i > 0.0 {
                let pl = light_pdf(scene, &light.shape, hit.point, s.point, s.normal);
                if pl > 0.0 && scene.visible(origin, s.point) {
                    let f = sampling::eval(bsdf, n, wo, wi);
                    let pb = sampling::pdf(bsdf, n, wo, wi);
                    l += beta.mul_elem(f).mul_elem(le) * (cos_i * power_heuristic(pl, pb) / pl);
                }
            }
        }

        let Some(bs) = sampling::sample(bsdf, n, wo, uniform(rng), uniform(rng)) else {
            break;
        };
        beta = beta.mul_elem(bs.weight);
        specular = bs.delta;
        prev_pdf = bs.pdf;
        if depth + 1 >= RR_START {
            let q = bsdf.albedo().max_component().min(1.0);
            if uniform(rng) >= q {
                break;
            }
            beta = beta / q;
        }
        ray = Ray::new(origin, bs.wi);
    }
    l
}
