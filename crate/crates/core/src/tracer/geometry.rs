//! Ray-primitive intersection and area sampling of emitters.

use std::f64::consts::PI;

use crate::math::Vec3;
use crate::scene::{Primitive, SceneInstance, Shape};

const T_MIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray { origin, dir }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Outward (sphere, box) or `u x v` (quad) unit normal.
    pub geometric_normal: Vec3,
    pub prim: usize,
}

fn intersect_sphere(center: Vec3, radius: f64, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
    let oc = ray.origin - center;
    let b = oc.dot(ray.dir);
    let c = oc.length_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Stable form of the two roots.
    let q = if b > 0.0 { -b - sq } else { -b + sq };
    let (mut t0, mut t1) = (q, c / q);
    if t0 > t1 {
        std::mem::swap(&mut t0, &mut t1);
    }
    let t = if t0 > T_MIN { t0 } else { t1 };
    if t <= T_MIN || t >= t_max || !t.is_finite() {
        return None;
    }
    let n = (ray.at(t) - center) / radius;
    Some((t, n))
}

fn intersect_quad(center: Vec3, u: Vec3, v: Vec3, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
    let nn = u.cross(v);
    let denom = nn.dot(ray.dir);
    if denom.abs() < 1e-14 {
        return None;
    }
    let t = (center - ray.origin).dot(nn) / denom;
    if t <= T_MIN || t >= t_max {
        return None;
    }
    let d = ray.at(t) - center;
    let n2 = nn.length_squared();
    let s = d.cross(v).dot(nn) / n2;
    let r = u.cross(d).dot(nn) / n2;
    if s.abs() > 1.0 || r.abs() > 1.0 {
        return None;
    }
    Some((t, nn / n2.sqrt()))
}

fn intersect_cuboid(center: Vec3, half: Vec3, yaw_deg: f64, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
    let yaw = yaw_deg.to_radians();
    let o = (ray.origin - center).rotate_y(-yaw);
    let d = ray.dir.rotate_y(-yaw);
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis_near = 0;
    let mut axis_far = 0;
    for a in 0..3 {
        let (oa, da, ha) = (o[a], d[a], half[a]);
        if da.abs() < 1e-15 {
            if oa.abs() > ha {
                return None;
            }
            continue;
        }
        let inv = 1.0 / da;
        let mut t0 = (-ha - oa) * inv;
        let mut t1 = (ha - oa) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            axis_near = a;
        }
        if t1 < t_far {
            t_far = t1;
            axis_far = a;
        }
        if t_near > t_far {
            return None;
        }
    }
    let (t, axis) = if t_near > T_MIN { (t_near, axis_near) } else { (t_far, axis_far) };
    if t <= T_MIN || t >= t_max {
        return None;
    }
    let p = o + d * t;
    let mut n_local = Vec3::ZERO;
    match axis {
        0 => n_local.x = p.x.signum(),
        1 => n_local.y = p.y.signum(),
        _ => n_local.z = p.z.signum(),
    }
    Some((t, n_local.rotate_y(yaw)))
}

pub fn intersect_shape(shape: &Shape, ray: &Ray, t_max: f64) -> Option<(f64, Vec3)> {
    match *shape {
        Shape::Sphere { center, radius } => intersect_sphere(center, radius, ray, t_max),
        Shape::Quad { center, u, v } => intersect_quad(center, u, v, ray, t_max),
        Shape::Cuboid { center, half_extents, yaw_deg } => {
            intersect_cuboid(center, half_extents, yaw_deg, ray, t_max)
        }
    }
}

/// A point sampled uniformly on an emitter's surface.
#[derive(Debug, Clone, Copy)]
pub struct AreaSample {
    pub point: Vec3,
    pub normal: Vec3,
    /// Density with respect to surface area.
    pub pdf_area: f64,
}

pub fn sample_shape(shape: &Shape, u1: f64, u2: f64, u3: f64) -> AreaSample {
    let pdf_area = 1.0 / shape.area();
    match *shape {
        Shape::Sphere { center, radius } => {
            let z = 1.0 - 2.0 * u1;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * PI * u2;
            let n = Vec3::new(r * phi.cos(), r * phi.sin(), z);
            AreaSample { point: center + n * radius, normal: n, pdf_area }
        }
        Shape::Quad { center, u, v } => AreaSample {
            point: center + u * (2.0 * u1 - 1.0) + v * (2.0 * u2 - 1.0),
            normal: u.cross(v).normalized(),
            pdf_area,
        },
        Shape::Cuboid { center, half_extents: h, yaw_deg } => {
            // Pick a face proportionally to its area, then a point on it.
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total = areas.iter().sum::<f64>() * 2.0;
            let mut pick = u3 * total;
            let mut face = 5;
            for (i, a) in areas.iter().flat_map(|a| [a, a]).enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut p = [0.0; 3];
            p[axis] = sign * h[axis];
            p[a1] = (2.0 * u1 - 1.0) * h[a1];
            p[a2] = (2.0 * u2 - 1.0) * h[a2];
            let mut n = [0.0; 3];
            n[axis] = sign;
            let yaw = yaw_deg.to_radians();
            AreaSample {
                point: center + Vec3::from(p).rotate_y(yaw),
                normal: Vec3::from(n).rotate_y(yaw),
                pdf_area,
            }
        }
    }
}

/// Scene prepared for tracing: primitives plus the emitter index.
#[derive(Debug, Clone)]
pub struct TraceScene<'a> {
    pub instance: &'a SceneInstance,
    pub emitters: Vec<usize>,
}

impl<'a> TraceScene<'a> {
    pub fn new(instance: &'a SceneInstance) -> Self {
        let emitters = instance
            .primitives
            .iter()
            .enumerate()
            .filter(|(_, p)| p.surface.is_emissive())
            .map(|(i, _)| i)
            .collect();
        TraceScene { instance, emitters }
    }

    #[inline]
    pub fn prim(&self, i: usize) -> &Primitive {
        &self.instance.primitives[i]
    }

    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut t_max = f64::INFINITY;
        for (i, p) in self.instance.primitives.iter().enumerate() {
            if let Some((t, n)) = intersect_shape(&p.shape, ray, t_max) {
                t_max = t;
                best = Some(Hit { t, point: ray.at(t), geometric_normal: n, prim: i });
            }
        }
        best
    }

    /// True when nothing blocks the open segment between `from` and `to`.
    pub fn visible(&self, from: Vec3, to: Vec3) -> bool {
        let d = to - from;
        let dist = d.length();
        let ray = Ray::new(from, d / dist);
        let t_max = dist * (1.0 - 1e-6);
        !self.instance.primitives.iter().any(|p| intersect_shape(&p.shape, &ray, t_max).is_some())
    }
}
