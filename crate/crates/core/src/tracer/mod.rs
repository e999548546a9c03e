//! CPU path tracer producing ground-truth radiance patches and
//! first-intersection G-buffers.

pub mod geometry;
pub mod integrator;
pub mod sampling;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::image::{Image, ImageError};
use crate::math::Vec3;
use crate::scene::{Camera, SceneInstance};
use geometry::{Ray, TraceScene};

pub use integrator::{MAX_BOUNCES, RR_START};

/// Default side length of training patches.
pub const PATCH_SIZE: usize = 32;

/// A rectangular pixel window of a square virtual image of side `image_res`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchWindow {
    pub image_res: usize,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PatchWindow {
    pub fn square(image_res: usize, x0: usize, y0: usize, size: usize) -> Self {
        PatchWindow { image_res, x0, y0, width: size, height: size }
    }

    /// The whole image as one window.
    pub fn full(image_res: usize) -> Self {
        PatchWindow::square(image_res, 0, 0, image_res)
    }

    /// Window whose origin is `round(u * (R - P))` along each axis.
    pub fn from_unit(image_res: usize, size: usize, ux: f64, uy: f64) -> Self {
        let span = image_res.saturating_sub(size) as f64;
        let x0 = (ux.clamp(0.0, 1.0) * span).round() as usize;
        let y0 = (uy.clamp(0.0, 1.0) * span).round() as usize;
        PatchWindow::square(image_res, x0, y0, size)
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0
            && self.height > 0
            && self.x0 + self.width <= self.image_res
            && self.y0 + self.height <= self.image_res
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Row-major index of local pixel `(x, y)` in the full virtual image.
    #[inline]
    pub fn global_index(&self, x: usize, y: usize) -> u64 {
        ((self.y0 + y) * self.image_res + self.x0 + x) as u64
    }
}

/// Pinhole projection of a square image with a 90 degree field of view.
#[derive(Debug, Clone, Copy)]
pub struct CameraRays {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half: f64,
    res: f64,
}

impl CameraRays {
    pub fn new(camera: &Camera, image_res: usize) -> Self {
        let forward = (camera.lookat - camera.position).normalized();
        let mut world_up = Vec3::new(0.0, 1.0, 0.0);
        if forward.cross(world_up).length_squared() < 1e-12 {
            world_up = Vec3::new(0.0, 0.0, -1.0);
        }
        let right = forward.cross(world_up).normalized();
        let up = right.cross(forward);
        CameraRays {
            origin: camera.position,
            forward,
            right,
            up,
            tan_half: (Camera::FOV_DEG.to_radians() / 2.0).tan(),
            res: image_res as f64,
        }
    }

    /// Ray through the center of pixel `(x, y)`; row 0 is the top row.
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let sx = (2.0 * (x as f64 + 0.5) / self.res - 1.0) * self.tan_half;
        let sy = (1.0 - 2.0 * (y as f64 + 0.5) / self.res) * self.tan_half;
        Ray::new(self.origin, (self.forward + self.right * sx + self.up * sy).normalized())
    }
}

/// First-intersection attributes of one pixel. Misses are all zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Texel {
    pub position: [f32; 3],
    /// Unit surface normal, flipped to face the camera.
    pub normal: [f32; 3],
    pub albedo: [f32; 3],
    pub roughness: f32,
    /// Unit direction from the hit point toward the camera.
    pub omega_o: [f32; 3],
    pub emission: [f32; 3],
    pub hit: bool,
}

fn f32x3(v: Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBufferPatch {
    pub window: PatchWindow,
    /// Row-major texels of the window.
    pub texels: Vec<Texel>,
}

impl GBufferPatch {
    pub fn texel(&self, x: usize, y: usize) -> &Texel {
        &self.texels[y * self.window.width + x]
    }

    /// Emission buffer as an RGB image.
    pub fn emission_image(&self) -> Image {
        self.attribute_image(|t| t.emission)
    }

    pub fn attribute_image(&self, f: impl Fn(&Texel) -> [f32; 3]) -> Image {
        let data = self.texels.iter().flat_map(f).collect();
        Image::from_data(self.window.width, self.window.height, 3, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiancePatch {
    pub window: PatchWindow,
    pub spp: u32,
    pub seed: u64,
    /// Linear RGB radiance, `window.width x window.height`.
    pub image: Image,
}

#[derive(Serialize, Deserialize)]
struct PatchMeta {
    window: PatchWindow,
    spp: u32,
    seed: u64,
}

impl RadiancePatch {
    /// Writes `{stem}.pfm` and the `{stem}.json` sidecar into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), ImageError> {
        self.image.write_pfm(&dir.join(format!("{stem}.pfm")))?;
        let meta = PatchMeta { window: self.window, spp: self.spp, seed: self.seed };
        let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(dir.join(format!("{stem}.json")), json)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self, ImageError> {
        let image = Image::read_pfm(&dir.join(format!("{stem}.pfm")))?;
        let text = fs::read_to_string(dir.join(format!("{stem}.json")))?;
        let meta: PatchMeta =
            serde_json::from_str(&text).map_err(|e| ImageError::Malformed(e.to_string()))?;
        if image.width != meta.window.width || image.height != meta.window.height || image.channels != 3 {
            return Err(ImageError::Malformed("patch size disagrees with its metadata".into()));
        }
        Ok(RadiancePatch { window: meta.window, spp: meta.spp, seed: meta.seed, image })
    }
}

fn texel_for(scene: &TraceScene, ray: &Ray) -> Texel {
    let Some(hit) = scene.intersect(ray) else {
        return Texel::default();
    };
    let surface = &scene.prim(hit.prim).surface;
    let wo = -ray.dir;
    let facing = hit.geometric_normal.dot(wo) >= 0.0;
    let normal = if facing { hit.geometric_normal } else { -hit.geometric_normal };
    let emission = if facing { surface.emission } else { Vec3::ZERO };
    Texel {
        position: f32x3(hit.point),
        normal: f32x3(normal),
        albedo: f32x3(surface.bsdf.albedo()),
        roughness: surface.bsdf.roughness() as f32,
        omega_o: f32x3(wo),
        emission: f32x3(emission),
        hit: true,
    }
}

/// First-intersection G-buffer of `window`, one ray through each pixel center.
pub fn gbuffer_patch(instance: &SceneInstance, window: &PatchWindow) -> GBufferPatch {
    assert!(window.is_valid(), "invalid window {window:?}");
    let scene = TraceScene::new(instance);
    let cam = CameraRays::new(&instance.camera, window.image_res);
    let texels = (0..window.pixel_count())
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % window.width, i / window.width);
            texel_for(&scene, &cam.ray(window.x0 + x, window.y0 + y))
        })
        .collect();
    GBufferPatch { window: *window, texels }
}

/// Path-traced radiance of `window` averaged over `spp` samples per pixel.
pub fn trace_patch(instance: &SceneInstance, window: &PatchWindow, spp: u32, seed: u64) -> RadiancePatch {
    assert!(window.is_valid(), "invalid window {window:?}");
    assert!(spp >= 1, "spp must be at least 1");
    let scene = TraceScene::new(instance);
    let cam = CameraRays::new(&instance.camera, window.image_res);
    let mut image = Image::new(window.width, window.height, 3);
    image.data.par_chunks_mut(window.width * 3).enumerate().for_each(|(y, row)| {
        for x in 0..window.width {
            let ray = cam.ray(window.x0 + x, window.y0 + y);
            let pixel = window.global_index(x, y);
            let mut sum = Vec3::ZERO;
            for s in 0..spp {
                let mut rng = sampling::sample_rng(seed, pixel, s as u64);
                sum += integrator::radiance(&scene, ray, &mut rng);
            }
            let mean = sum / spp as f64;
            row[3 * x..3 * x + 3].copy_from_slice(&f32x3(mean));
        }
    });
    RadiancePatch { window: *window, spp, seed, image }
}

/// Renders the full `resolution x resolution` image by tiling it into
/// patches; every pixel equals what `trace_patch` yields for any window
/// covering it with the same seed.
pub fn render_image(instance: &SceneInstance, resolution: usize, spp: u32, seed: u64) -> (Image, GBufferPatch) {
    let mut image = Image::new(resolution, resolution, 3);
    let mut texels = vec![Texel::default(); resolution * resolution];
    for y0 in (0..resolution).step_by(PATCH_SIZE) {
        for x0 in (0..resolution).step_by(PATCH_SIZE) {
            let window = PatchWindow {
                image_res: resolution,
                x0,
                y0,
                width: PATCH_SIZE.min(resolution - x0),
                height: PATCH_SIZE.min(resolution - y0),
            };
            let patch = trace_patch(instance, &window, spp, seed);
            image.blit(&patch.image, x0, y0);
            let g = gbuffer_patch(instance, &window);
            for y in 0..window.height {
                let dst = (y0 + y) * resolution + x0;
                texels[dst..dst + window.width].copy_from_slice(&g.texels[y * window.width..(y + 1) * window.width]);
            }
        }
    }
    (image, GBufferPatch { window: PatchWindow::full(resolution), texels })
}
