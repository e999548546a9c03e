//! Built-in base scenes and their parameter spaces.

use super::instance::{Camera, Primitive, SceneInstance, Shape, Surface};
use super::{CameraSpec, ParamKind, ParamSpec, SceneError, SceneSpace};
use crate::math::Vec3;

pub const BUILTIN_NAMES: [&str; 3] = ["CornellVar", "MirrorRoom", "CausticBox"];

const CORNELL_RED: Vec3 = Vec3::new(0.63, 0.065, 0.05);
const CORNELL_GREEN: Vec3 = Vec3::new(0.14, 0.45, 0.091);
const CORNELL_WHITE: Vec3 = Vec3::new(0.73, 0.73, 0.73);

fn quad(name: &str, center: Vec3, u: Vec3, v: Vec3, surface: Surface) -> Primitive {
    Primitive::new(name, Shape::Quad { center, u, v }, surface)
}

/// Closed-on-five-sides box spanning `[-1, 1]^3`, open towards +z.
fn cornell_shell(left: Vec3, right: Vec3) -> Vec<Primitive> {
    let x = Vec3::new(1.0, 0.0, 0.0);
    let y = Vec3::new(0.0, 1.0, 0.0);
    let z = Vec3::new(0.0, 0.0, 1.0);
    vec![
        quad("floor", Vec3::new(0.0, -1.0, 0.0), x, -z, Surface::diffuse(CORNELL_WHITE)),
        quad("ceiling", Vec3::new(0.0, 1.0, 0.0), x, z, Surface::diffuse(CORNELL_WHITE)),
        quad("back_wall", Vec3::new(0.0, 0.0, -1.0), x, y, Surface::diffuse(CORNELL_WHITE)),
        quad("left_wall", Vec3::new(-1.0, 0.0, 0.0), y, z, Surface::diffuse(left)),
        quad("right_wall", Vec3::new(1.0, 0.0, 0.0), z, y, Surface::diffuse(right)),
        quad(
            "light",
            Vec3::new(0.0, 0.995, 0.0),
            Vec3::new(0.25, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 0.25),
            Surface::emitter(Vec3::new(17.0, 12.0, 4.0)),
        ),
    ]
}

fn cornell_camera() -> Camera {
    Camera::new(Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO)
}

fn cornell_box() -> SceneInstance {
    let mut primitives = cornell_shell(CORNELL_RED, CORNELL_GREEN);
    primitives.push(Primitive::new(
        "tall_box",
        Shape::Cuboid {
            center: Vec3::new(-0.35, -0.4, -0.3),
            half_extents: Vec3::new(0.28, 0.6, 0.28),
            yaw_deg: 18.0,
        },
        Surface::diffuse(CORNELL_WHITE),
    ));
    primitives.push(Primitive::new(
        "short_box",
        Shape::Cuboid {
            center: Vec3::new(0.35, -0.7, 0.3),
            half_extents: Vec3::new(0.28, 0.3, 0.28),
            yaw_deg: -17.0,
        },
        Surface::diffuse(CORNELL_WHITE),
    ));
    SceneInstance { primitives, camera: cornell_camera(), environment: Vec3::ZERO }
}

fn caustic_box() -> SceneInstance {
    let mut primitives = cornell_shell(CORNELL_RED, CORNELL_GREEN);
    primitives.push(Primitive::new(
        "sphere",
        Shape::Sphere { center: Vec3::new(0.0, -0.55, 0.0), radius: 0.45 },
        Surface::glossy(Vec3::new(0.95, 0.95, 0.95), 0.1),
    ));
    SceneInstance { primitives, camera: cornell_camera(), environment: Vec3::ZERO }
}

/// Geometry of the mirror room. The camera looks straight at a narrow
/// mirror on the back wall; a diffuse sphere moves on a horizontal plane
/// behind the camera, so it is only ever seen through the mirror.
pub mod mirror_room {
    use crate::math::Vec3;
    use crate::tracer::PatchWindow;

    pub const HALF_WIDTH: f64 = 7.0;
    pub const HALF_DEPTH: f64 = 2.0;
    pub const FLOOR_Y: f64 = -1.0;
    pub const CEILING_Y: f64 = 1.0;
    pub const EYE_Y: f64 = -0.3;
    pub const CAMERA: Vec3 = Vec3::new(0.0, EYE_Y, -1.0);
    pub const MIRROR_CENTER: Vec3 = Vec3::new(0.0, -0.405, -HALF_DEPTH + 0.01);
    pub const MIRROR_HALF_WIDTH: f64 = 0.25;
    pub const MIRROR_HALF_HEIGHT: f64 = 0.585;
    pub const SPHERE_RADIUS: f64 = 0.7;
    pub const SPHERE_Y: f64 = EYE_Y;
    pub const SPHERE_X_RANGE: (f64, f64) = (-6.0, 6.0);
    pub const SPHERE_Z_RANGE: (f64, f64) = (0.0, 1.25);

    /// Whether any part of a sphere centered at `center` shows in the
    /// mirror, by testing its mirror image against the view pyramid
    /// through the mirror rectangle.
    pub fn sphere_in_reflection(center: Vec3) -> bool {
        let image = Vec3::new(center.x, center.y, 2.0 * MIRROR_CENTER.z - center.z);
        let (w, h) = (MIRROR_HALF_WIDTH, MIRROR_HALF_HEIGHT);
        let corners = [
            MIRROR_CENTER + Vec3::new(-w, -h, 0.0),
            MIRROR_CENTER + Vec3::new(w, -h, 0.0),
            MIRROR_CENTER + Vec3::new(w, h, 0.0),
            MIRROR_CENTER + Vec3::new(-w, h, 0.0),
        ];
        (0..4).all(|i| {
            let a = corners[i] - CAMERA;
            let b = corners[(i + 1) % 4] - CAMERA;
            let mut n = a.cross(b).normalized();
            if n.dot(MIRROR_CENTER - CAMERA) < 0.0 {
                n = -n;
            }
            n.dot(image - CAMERA) > -SPHERE_RADIUS
        })
    }

    /// Smallest pixel window of a `res x res` view containing the mirror.
    pub fn mirror_window(res: usize) -> PatchWindow {
        let d = CAMERA.z - MIRROR_CENTER.z;
        let to_px = |ndc: f64| ((ndc + 1.0) / 2.0 * res as f64).clamp(0.0, res as f64);
        let x0 = to_px(-MIRROR_HALF_WIDTH / d).floor() as usize;
        let x1 = to_px(MIRROR_HALF_WIDTH / d).ceil() as usize;
        let y0 = to_px(-(MIRROR_CENTER.y + MIRROR_HALF_HEIGHT - EYE_Y) / d).floor() as usize;
        let y1 = to_px(-(MIRROR_CENTER.y - MIRROR_HALF_HEIGHT - EYE_Y) / d).ceil() as usize;
        PatchWindow { image_res: res, x0, y0, width: x1 - x0, height: y1 - y0 }
    }

    /// Sphere center for normalized `(x, z)` parameters.
    pub fn sphere_center(ux: f64, uz: f64) -> Vec3 {
        let lerp = |r: (f64, f64), t: f64| r.0 + t * (r.1 - r.0);
        Vec3::new(lerp(SPHERE_X_RANGE, ux), SPHERE_Y, lerp(SPHERE_Z_RANGE, uz))
    }
}

fn mirror_room() -> SceneInstance {
    use mirror_room::*;
    let x = Vec3::new(HALF_WIDTH, 0.0, 0.0);
    let h = (CEILING_Y - FLOOR_Y) / 2.0;
    let mid = (CEILING_Y + FLOOR_Y) / 2.0;
    let y = Vec3::new(0.0, h, 0.0);
    let z = Vec3::new(0.0, 0.0, HALF_DEPTH);
    let primitives = vec![
        quad("floor", Vec3::new(0.0, FLOOR_Y, 0.0), x, -z, Surface::diffuse(Vec3::new(0.3, 0.27, 0.24))),
        quad("ceiling", Vec3::new(0.0, CEILING_Y, 0.0), x, z, Surface::diffuse(Vec3::splat(0.3))),
        quad(
            "back_wall",
            Vec3::new(0.0, mid, -HALF_DEPTH),
            x,
            y,
            Surface::diffuse(Vec3::new(0.25, 0.25, 0.28)),
        ),
        quad(
            "front_wall",
            Vec3::new(0.0, mid, HALF_DEPTH),
            y,
            x,
            Surface::diffuse(Vec3::new(0.12, 0.16, 0.3)),
        ),
        quad(
            "left_wall",
            Vec3::new(-HALF_WIDTH, mid, 0.0),
            y,
            z,
            Surface::diffuse(Vec3::new(0.3, 0.15, 0.12)),
        ),
        quad(
            "right_wall",
            Vec3::new(HALF_WIDTH, mid, 0.0),
            z,
            y,
            Surface::diffuse(Vec3::new(0.15, 0.28, 0.15)),
        ),
        quad(
            "light",
            Vec3::new(0.0, CEILING_Y - 0.005, -1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 0.4),
            Surface::emitter(Vec3::splat(3.5)),
        ),
        quad(
            "mirror",
            MIRROR_CENTER,
            Vec3::new(MIRROR_HALF_WIDTH, 0.0, 0.0),
            Vec3::new(0.0, MIRROR_HALF_HEIGHT, 0.0),
            Surface::mirror(),
        ),
        Primitive::new(
            "sphere",
            Shape::Sphere { center: Vec3::new(0.0, SPHERE_Y, 0.6), radius: SPHERE_RADIUS },
            Surface::diffuse(Vec3::new(0.95, 0.5, 0.1)),
        ),
    ];
    let camera = Camera::new(CAMERA, Vec3::new(CAMERA.x, CAMERA.y, -HALF_DEPTH));
    SceneInstance { primitives, camera, environment: Vec3::ZERO }
}

/// Base scene geometry by identifier.
pub fn base_scene(name: &str) -> Option<SceneInstance> {
    match name {
        "cornell-box" => Some(cornell_box()),
        "caustic-box" => Some(caustic_box()),
        "mirror-room" => Some(mirror_room()),
        _ => None,
    }
}

fn wall_rgb_params(params: &mut Vec<ParamSpec>) {
    for wall in ["left_wall", "right_wall"] {
        for ch in ["r", "g", "b"] {
            params.push(ParamSpec::new(
                &format!("{wall}_{ch}"),
                ParamKind::AlbedoChannel,
                0.05,
                super::MAX_ALBEDO,
                &format!("{wall}.{ch}"),
            ));
        }
    }
}

fn cornell_var() -> Result<SceneSpace, SceneError> {
    let mut params = Vec::new();
    wall_rgb_params(&mut params);
    params.extend([
        ParamSpec::new("tall_box_x", ParamKind::TranslationX, -0.65, -0.05, "tall_box"),
        ParamSpec::new("tall_box_z", ParamKind::TranslationZ, -0.6, 0.0, "tall_box"),
        ParamSpec::new("short_box_x", ParamKind::TranslationX, 0.05, 0.65, "short_box"),
        ParamSpec::new("short_box_z", ParamKind::TranslationZ, -0.1, 0.6, "short_box"),
        ParamSpec::new("light_x", ParamKind::TranslationX, -0.6, 0.6, "light"),
        ParamSpec::new("light_z", ParamKind::TranslationZ, -0.6, 0.6, "light"),
    ]);
    let cam = cornell_camera();
    let camera = CameraSpec::variable(
        cam.position,
        cam.lookat,
        (Vec3::new(-0.4, -0.4, 1.6), Vec3::new(0.4, 0.4, 2.4)),
        (Vec3::new(-0.3, -0.3, -0.3), Vec3::new(0.3, 0.3, 0.3)),
    );
    SceneSpace::new("cornell-box", camera, params)
}

fn mirror_room_space() -> Result<SceneSpace, SceneError> {
    use mirror_room::*;
    let base = mirror_room();
    let params = vec![
        ParamSpec::new("sphere_x", ParamKind::TranslationX, SPHERE_X_RANGE.0, SPHERE_X_RANGE.1, "sphere"),
        ParamSpec::new("sphere_z", ParamKind::TranslationZ, SPHERE_Z_RANGE.0, SPHERE_Z_RANGE.1, "sphere"),
    ];
    SceneSpace::new("mirror-room", CameraSpec::fixed(base.camera.position, base.camera.lookat), params)
}

fn caustic_box_space() -> Result<SceneSpace, SceneError> {
    let mut params = vec![
        ParamSpec::new("sphere_x", ParamKind::TranslationX, -0.45, 0.45, "sphere"),
        ParamSpec::new("sphere_z", ParamKind::TranslationZ, -0.45, 0.45, "sphere"),
        ParamSpec::new("sphere_roughness", ParamKind::Roughness, 0.05, 1.0, "sphere"),
    ];
    wall_rgb_params(&mut params);
    let cam = cornell_camera();
    SceneSpace::new("caustic-box", CameraSpec::fixed(cam.position, cam.lookat), params)
}

/// Built-in variable scene by name, returned with its base geometry.
pub fn builtin(name: &str) -> Result<(SceneSpace, SceneInstance), SceneError> {
    let space = match name {
        "CornellVar" => cornell_var()?,
        "MirrorRoom" => mirror_room_space()?,
        "CausticBox" => caustic_box_space()?,
        other => return Err(SceneError::UnknownBuiltin(other.to_string())),
    };
    let base = space.base().clone();
    Ok((space, base))
}
