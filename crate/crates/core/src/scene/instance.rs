//! Concrete scene configurations: primitives, surfaces and the camera.

use serde::{Deserialize, Serialize};

use crate::math::Vec3;

/// Reflectance of the ideal mirror surface.
pub const MIRROR_REFLECTANCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Box given by its center and half extents, rotated about +y by `yaw_deg`.
    Cuboid {
        center: Vec3,
        half_extents: Vec3,
        yaw_deg: f64,
    },
    /// Parallelogram `center + s*u + t*v` for `s, t` in `[-1, 1]`; the
    /// geometric normal is `u x v`.
    Quad { center: Vec3, u: Vec3, v: Vec3 },
}

impl Shape {
    pub fn center(&self) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } | Shape::Cuboid { center, .. } | Shape::Quad { center, .. } => {
                center
            }
        }
    }

    pub fn set_center(&mut self, c: Vec3) {
        match self {
            Shape::Sphere { center, .. } | Shape::Cuboid { center, .. } | Shape::Quad { center, .. } => {
                *center = c
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Shape::Cuboid { half_extents: h, .. } => 8.0 * (h.x * h.y + h.y * h.z + h.x * h.z),
            Shape::Quad { u, v, .. } => 4.0 * u.cross(v).length(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Bsdf {
    Diffuse { albedo: Vec3 },
    /// Normalized Phong lobe around the mirror direction.
    Glossy { albedo: Vec3, roughness: f64 },
    Mirror,
    /// Absorbs everything; used for pure emitters.
    Black,
}

impl Bsdf {
    /// Reflectance fed to the G-buffer and used as the Russian-roulette survival.
    pub fn albedo(&self) -> Vec3 {
        match *self {
            Bsdf::Diffuse { albedo } | Bsdf::Glossy { albedo, .. } => albedo,
            Bsdf::Mirror => Vec3::splat(MIRROR_REFLECTANCE),
            Bsdf::Black => Vec3::ZERO,
        }
    }

    pub fn roughness(&self) -> f64 {
        match *self {
            Bsdf::Diffuse { .. } => 1.0,
            Bsdf::Glossy { roughness, .. } => roughness,
            Bsdf::Mirror | Bsdf::Black => 0.0,
        }
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, Bsdf::Mirror)
    }

    pub fn has_albedo(&self) -> bool {
        matches!(self, Bsdf::Diffuse { .. } | Bsdf::Glossy { .. })
    }

    pub fn albedo_mut(&mut self) -> Option<&mut Vec3> {
        match self {
            Bsdf::Diffuse { albedo } | Bsdf::Glossy { albedo, .. } => Some(albedo),
            Bsdf::Mirror | Bsdf::Black => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub bsdf: Bsdf,
    /// Radiance emitted from the front side (quads) or outward (spheres, boxes).
    #[serde(default)]
    pub emission: Vec3,
}

impl Surface {
    pub fn diffuse(albedo: Vec3) -> Self {
        Surface { bsdf: Bsdf::Diffuse { albedo }, emission: Vec3::ZERO }
    }

    pub fn glossy(albedo: Vec3, roughness: f64) -> Self {
        Surface { bsdf: Bsdf::Glossy { albedo, roughness }, emission: Vec3::ZERO }
    }

    pub fn mirror() -> Self {
        Surface { bsdf: Bsdf::Mirror, emission: Vec3::ZERO }
    }

    pub fn emitter(radiance: Vec3) -> Self {
        Surface { bsdf: Bsdf::Black, emission: radiance }
    }

    pub fn is_emissive(&self) -> bool {
        self.emission.max_component() > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub name: String,
    pub shape: Shape,
    pub surface: Surface,
}

impl Primitive {
    pub fn new(name: impl Into<String>, shape: Shape, surface: Surface) -> Self {
        Primitive { name: name.into(), shape, surface }
    }
}

/// Pinhole camera with a fixed 90 degree field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    pub lookat: Vec3,
}

impl Camera {
    pub const FOV_DEG: f64 = 90.0;

    pub fn new(position: Vec3, lookat: Vec3) -> Self {
        Camera { position, lookat }
    }

    /// Parses `px, py, pz, lx, ly, lz`.
    pub fn from_slice(values: &[f64]) -> Option<Camera> {
        if values.len() != 6 {
            return None;
        }
        Some(Camera {
            position: Vec3::new(values[0], values[1], values[2]),
            lookat: Vec3::new(values[3], values[4], values[5]),
        })
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.lookat.x,
            self.lookat.y,
            self.lookat.z,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.position.is_finite()
            && self.lookat.is_finite()
            && (self.lookat - self.position).length_squared() > 1e-18
    }
}

/// One fully specified configuration of a variable scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInstance {
    pub primitives: Vec<Primitive>,
    pub camera: Camera,
    /// Constant radiance returned by rays that leave the scene.
    #[serde(default)]
    pub environment: Vec3,
}

impl SceneInstance {
    pub fn find(&self, name: &str) -> Option<&Primitive> {
        self.primitives.iter().find(|p| p.name == name)
    }

    /// Checks the physical invariants every renderable instance must satisfy.
    pub fn validate(&self) -> Result<(), String> {
        if !self.camera.is_valid() {
            return Err("camera lookat coincides with its position".into());
        }
        for p in &self.primitives {
            let a = p.surface.bsdf.albedo();
            if matches!(p.surface.bsdf, Bsdf::Diffuse { .. } | Bsdf::Glossy { .. })
                && !(a.min_component() >= 0.0 && a.max_component() < 1.0)
            {
                return Err(format!("`{}`: albedo {:?} outside [0, 1)", p.name, a));
            }
            if let Bsdf::Glossy { roughness, .. } = p.surface.bsdf {
                if !(roughness > 0.0 && roughness <= 1.0) {
                    return Err(format!("`{}`: roughness {roughness} outside (0, 1]", p.name));
                }
            }
            if !(p.surface.emission.min_component() >= 0.0 && p.surface.emission.is_finite()) {
                return Err(format!("`{}`: negative or non-finite emission", p.name));
            }
        }
        Ok(())
    }
}
