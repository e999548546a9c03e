//! Analytic tracer scenes and their closed-form or quadrature oracles.

use glint::math::Vec3;
use glint::scene::{builtin, Camera, Primitive, SceneInstance, Shape, Surface};
use glint::tracer::{gbuffer_patch, trace_patch, PatchWindow};

pub fn quad(center: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Shape {
    Shape::Quad { center: center.into(), u: u.into(), v: v.into() }
}

/// Largest deviation from the emitted radiance when the camera sees only
/// an emitter, over traced pixels and G-buffer emission.
pub fn emitter_passthrough_error() -> f64 {
    let e = Vec3::new(3.0, 2.5, 0.25);
    let scene = SceneInstance {
        primitives: vec![Primitive::new(
            "light",
            quad([0.0, 0.0, -2.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]),
            Surface::emitter(e),
        )],
        camera: Camera::new(Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0)),
        environment: Vec3::ZERO,
    };
    let expect = [e.x as f32, e.y as f32, e.z as f32];
    let mut err = 0.0f32;
    for spp in [1, 7] {
        let p = trace_patch(&scene, &PatchWindow::full(8), spp, 3);
        for px in p.image.data.chunks_exact(3) {
            for c in 0..3 {
                err = err.max((px[c] - expect[c]).abs());
            }
        }
    }
    for t in gbuffer_patch(&scene, &PatchWindow::full(8)).texels {
        for c in 0..3 {
            err = err.max((t.emission[c] - expect[c]).abs());
        }
    }
    err as f64
}

pub struct FurnaceResult {
    pub mean: f64,
    pub expect: f64,
    /// Standard error of `mean`.
    pub sigma: f64,
}

impl FurnaceResult {
    pub fn within(&self, k: f64, floor: f64) -> bool {
        (self.mean - self.expect).abs() <= k * self.sigma.max(floor)
    }
}

fn mean_and_error(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Diffuse plane of albedo `rho` under a uniform environment `l`; every
/// path is plane then sky, so each pixel should be `rho * l`.
pub fn furnace_plane(rho: f64, l: f64, spp: u32) -> FurnaceResult {
    let scene = SceneInstance {
        primitives: vec![Primitive::new(
            "floor",
            quad([0.0, 0.0, 0.0], [1e4, 0.0, 0.0], [0.0, 0.0, -1e4]),
            Surface::diffuse(Vec3::splat(rho)),
        )],
        camera: Camera::new(Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, -1.0)),
        environment: Vec3::splat(l),
    };
    let p = trace_patch(&scene, &PatchWindow::full(4), spp, 5);
    let g = gbuffer_patch(&scene, &PatchWindow::full(4));
    let vals: Vec<f64> = p
        .image
        .data
        .chunks_exact(3)
        .zip(&g.texels)
        .filter(|(_, t)| t.hit)
        .flat_map(|(px, _)| px.iter().map(|v| *v as f64))
        .collect();
    assert!(!vals.is_empty(), "plane not visible");
    let (mean, sigma) = mean_and_error(&vals);
    FurnaceResult { mean, expect: rho * l, sigma }
}

/// Closed box whose walls reflect diffusely with albedo `rho` and emit `l`:
/// a path with k scattering events contributes `l * rho^k`, so the
/// scattered part is the geometric series truncated at the bounce limit.
pub fn furnace_box(rho: f64, l: f64, spp: u32, max_bounces: i32) -> FurnaceResult {
    let mut surface = Surface::diffuse(Vec3::splat(rho));
    surface.emission = Vec3::splat(l);
    let s = 1.0;
    // Normals (u x v) point into the box.
    let walls = [
        ([0.0, -s, 0.0], [s, 0.0, 0.0], [0.0, 0.0, -s]),
        ([0.0, s, 0.0], [s, 0.0, 0.0], [0.0, 0.0, s]),
        ([-s, 0.0, 0.0], [0.0, 0.0, -s], [0.0, s, 0.0]),
        ([s, 0.0, 0.0], [0.0, 0.0, s], [0.0, s, 0.0]),
        ([0.0, 0.0, -s], [s, 0.0, 0.0], [0.0, s, 0.0]),
        ([0.0, 0.0, s], [0.0, s, 0.0], [s, 0.0, 0.0]),
    ];
    let primitives = walls
        .iter()
        .enumerate()
        .map(|(i, (c, u, v))| Primitive::new(format!("wall{i}"), quad(*c, *u, *v), surface))
        .collect();
    let scene = SceneInstance {
        primitives,
        camera: Camera::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.5, -0.2, -1.0)),
        environment: Vec3::ZERO,
    };
    let g = gbuffer_patch(&scene, &PatchWindow::full(16));
    assert!(g.texels.iter().all(|t| t.hit && t.emission == [l as f32; 3]));
    let p = trace_patch(&scene, &PatchWindow::full(16), spp, 17);
    let vals: Vec<f64> = p.image.data.iter().map(|v| *v as f64 - l).collect();
    let (mean, sigma) = mean_and_error(&vals);
    FurnaceResult { mean, expect: l * rho * (1.0 - rho.powi(max_bounces)) / (1.0 - rho), sigma }
}

/// Direct lighting at a floor point under one square light, by 1000 x 1000
/// midpoint quadrature over the light surface.
pub fn direct_lighting_quadrature(x: Vec3, rho: f64, le: f64, center: Vec3, half: f64) -> f64 {
    let n = 1000;
    let h = 2.0 * half / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p = Vec3::new(
                center.x - half + (i as f64 + 0.5) * h,
                center.y,
                center.z - half + (j as f64 + 0.5) * h,
            );
            let d = p - x;
            let r2 = d.length_squared();
            let cos = d.y / r2.sqrt();
            sum += le * cos * cos / r2 * h * h;
        }
    }
    rho / std::f64::consts::PI * sum
}

/// `(estimate, oracle)` for one floor pixel lit by a square area light.
pub fn direct_lighting(spp: u32) -> (f64, f64) {
    let rho = 0.7;
    let le = 4.0;
    let light_center = Vec3::new(0.3, 1.0, -0.2);
    let half = 0.4;
    let scene = SceneInstance {
        primitives: vec![
            Primitive::new("floor", quad([0.0, 0.0, 0.0], [50.0, 0.0, 0.0], [0.0, 0.0, -50.0]), Surface::diffuse(Vec3::splat(rho))),
            // u x v points down (-y) so the light faces the floor.
            Primitive::new(
                "light",
                quad(light_center.to_array(), [half, 0.0, 0.0], [0.0, 0.0, half]),
                Surface::emitter(Vec3::splat(le)),
            ),
        ],
        camera: Camera::new(Vec3::new(-1.5, 0.5, 0.0), Vec3::new(0.0, 0.0, 0.0)),
        environment: Vec3::ZERO,
    };
    let window = PatchWindow::square(5, 2, 2, 1);
    let g = gbuffer_patch(&scene, &window);
    let t = g.texel(0, 0);
    assert!(t.hit && t.normal == [0.0, 1.0, 0.0], "center pixel must see the floor");
    let x = Vec3::new(t.position[0] as f64, t.position[1] as f64, t.position[2] as f64);
    let oracle = direct_lighting_quadrature(x, rho, le, light_center, half);
    let p = trace_patch(&scene, &window, spp, 11);
    (p.image.data[0] as f64, oracle)
}

/// Whether equal seeds give bitwise-equal patches and different seeds differ.
pub fn seed_determinism() -> bool {
    let (_, scene) = builtin("CornellVar").unwrap();
    let w = PatchWindow::square(48, 8, 12, 16);
    let a = trace_patch(&scene, &w, 4, 42);
    let b = trace_patch(&scene, &w, 4, 42);
    let c = trace_patch(&scene, &w, 4, 43);
    let bitwise = a.image.data.iter().zip(&b.image.data).all(|(x, y)| x.to_bits() == y.to_bits());
    bitwise && a == b && a.image != c.image
}
