mod common;

use common::physics::{self, quad};
use glint::math::Vec3;
use glint::scene::{builtin, Camera, Primitive, SceneInstance, Surface};
use glint::tracer::{gbuffer_patch, render_image, trace_patch, PatchWindow, MAX_BOUNCES};

fn mean_rgb(img: &glint::image::Image) -> Vec3 {
    let mut s = Vec3::ZERO;
    for px in img.data.chunks_exact(3) {
        s += Vec3::new(px[0] as f64, px[1] as f64, px[2] as f64);
    }
    s / (img.width * img.height) as f64
}

#[test]
fn emitter_seen_directly_is_exact() {
    assert_eq!(physics::emitter_passthrough_error(), 0.0);
}

#[test]
fn mirror_reflects_emitter_with_its_reflectance() {
    let e = Vec3::splat(2.0);
    let scene = SceneInstance {
        primitives: vec![
            Primitive::new("mirror", quad([0.0, 0.0, -2.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]), Surface::mirror()),
            // Emits toward -z, behind the camera.
            Primitive::new("light", quad([0.0, 0.0, 1.0], [0.0, 10.0, 0.0], [10.0, 0.0, 0.0]), Surface::emitter(e)),
        ],
        camera: Camera::new(Vec3::ZERO, Vec3::new(0.0, 0.0, -1.0)),
        environment: Vec3::ZERO,
    };
    let p = trace_patch(&scene, &PatchWindow::full(4), 4, 1);
    let expect = (e.x * glint::scene::MIRROR_REFLECTANCE) as f32;
    for v in &p.image.data {
        assert!((v - expect).abs() < 1e-6, "{v}");
    }
}

#[test]
fn furnace_plane_returns_albedo_times_environment() {
    // Every path is floor -> sky, so the estimator has zero variance and
    // the tolerance collapses to float rounding.
    let r = physics::furnace_plane(0.6, 1.5, 256);
    assert!(r.within(3.0, 1e-6), "{} vs {}", r.mean, r.expect);
}

#[test]
fn direct_lighting_matches_quadrature_oracle() {
    let (est, oracle) = physics::direct_lighting(4096);
    let rel = (est - oracle).abs() / oracle;
    assert!(rel < 0.01, "estimate {est}, oracle {oracle}, rel {rel}");
}

#[test]
fn same_seed_is_bitwise_identical() {
    assert!(physics::seed_determinism());
}

#[test]
fn stitched_image_matches_any_covering_patch() {
    let (_, scene) = builtin("CornellVar").unwrap();
    let res = 40;
    let (full, gfull) = render_image(&scene, res, 2, 7);
    for (x0, y0, w) in [(0, 0, 5), (13, 29, 11), (30, 1, 10)] {
        let win = PatchWindow::square(res, x0, y0, w);
        let p = trace_patch(&scene, &win, 2, 7);
        assert_eq!(p.image, full.crop(x0, y0, w, w));
        let g = gbuffer_patch(&scene, &win);
        for y in 0..w {
            for x in 0..w {
                assert_eq!(g.texel(x, y), &gfull.texels[(y0 + y) * res + x0 + x]);
            }
        }
    }
}

#[test]
fn single_pixel_image_is_single_pixel_trace() {
    let (_, scene) = builtin("CornellVar").unwrap();
    let (img, _) = render_image(&scene, 1, 16, 3);
    let p = trace_patch(&scene, &PatchWindow::full(1), 16, 3);
    assert_eq!(img, p.image);
}

#[test]
fn doubling_spp_halves_variance() {
    let (_, scene) = builtin("CornellVar").unwrap();
    // A window on the back wall, away from edges.
    let w = PatchWindow::square(32, 12, 12, 6);
    let variance = |spp: u32| {
        let runs: Vec<_> = (0..20).map(|s| trace_patch(&scene, &w, spp, 1000 + s).image).collect();
        let n = runs[0].data.len();
        let mut total = 0.0;
        for i in 0..n {
            let m = runs.iter().map(|r| r.data[i] as f64).sum::<f64>() / 20.0;
            total += runs.iter().map(|r| (r.data[i] as f64 - m).powi(2)).sum::<f64>() / 19.0;
        }
        total / n as f64
    };
    let ratio = variance(8) / variance(16);
    assert!((1.6..2.5).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn closed_furnace_box_truncates_geometric_series() {
    let r = physics::furnace_box(0.5, 1.0, 64, MAX_BOUNCES as i32);
    assert!(r.within(3.0, 1e-4), "mean {}, expect {}, se {}", r.mean, r.expect, r.sigma);
}

#[test]
fn builtin_renders_are_finite_and_nonnegative() {
    for name in ["CornellVar", "MirrorRoom", "CausticBox"] {
        let (space, _) = builtin(name).unwrap();
        for t in [0.0, 0.5, 1.0] {
            let v = glint::scene::SceneVector::new(vec![t; space.dim()]).unwrap();
            let scene = glint::scene::instantiate(&space, &v, space.camera().default_camera());
            let (img, _) = render_image(&scene, 24, 4, 1);
            assert!(img.data.iter().all(|x| x.is_finite() && *x >= 0.0), "{name}");
            assert!(mean_rgb(&img).max_component() > 0.0, "{name} is black");
        }
    }
}
