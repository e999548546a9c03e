//! Variable-scene parameter spaces.
//!
//! A [`SceneSpace`] lists the tunable parameters of a base scene together
//! with their physical ranges. A point of the unit hypercube, a
//! [`SceneVector`], selects one configuration; [`instantiate`] turns it
//! (plus a camera) into a renderable [`SceneInstance`].

mod builtin;
mod instance;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::Vec3;

pub use builtin::{base_scene, builtin, mirror_room, BUILTIN_NAMES};
pub use instance::{Bsdf, Camera, Primitive, SceneInstance, Shape, Surface, MIRROR_REFLECTANCE};

/// Upper bound accepted for albedo-channel parameters.
pub const MAX_ALBEDO: f64 = 0.97;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("parameter `{name}`: value {value} outside [{min}, {max}]")]
    OutOfRange { name: String, value: f64, min: f64, max: f64 },
    #[error("vector component {index} = {value} outside [0, 1]")]
    VectorOutOfRange { index: usize, value: f64 },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("scene-space file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scene-space file: duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("scene-space file: parameter `{name}` has unknown binding `{binding}`")]
    UnknownBinding { name: String, binding: String },
    #[error("scene-space file: parameter `{name}` has min {min} >= max {max}")]
    EmptyRange { name: String, min: f64, max: f64 },
    #[error("scene-space file: parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("scene-space file: camera: {0}")]
    Camera(String),
    #[error("scene-space file: no parameters declared")]
    NoParams,
    #[error("unknown base scene `{0}`")]
    UnknownBaseScene(String),
    #[error("unknown builtin scene `{0}` (expected one of CornellVar, MirrorRoom, CausticBox)")]
    UnknownBuiltin(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    TranslationX,
    TranslationZ,
    TranslationY,
    RotationDeg,
    AlbedoChannel,
    Roughness,
    EmitterIntensity,
    CameraPosComponent,
    CameraLookatComponent,
}

impl ParamKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamKind::TranslationX => "translation-x",
            ParamKind::TranslationZ => "translation-z",
            ParamKind::TranslationY => "translation-y",
            ParamKind::RotationDeg => "rotation-deg",
            ParamKind::AlbedoChannel => "albedo-channel",
            ParamKind::Roughness => "roughness",
            ParamKind::EmitterIntensity => "emitter-intensity",
            ParamKind::CameraPosComponent => "camera-pos-component",
            ParamKind::CameraLookatComponent => "camera-lookat-component",
        }
    }

    /// Physical unit of the parameter value; empty for dimensionless ones.
    pub fn unit(&self) -> &'static str {
        match self {
            ParamKind::TranslationX
            | ParamKind::TranslationZ
            | ParamKind::TranslationY
            | ParamKind::CameraPosComponent
            | ParamKind::CameraLookatComponent => "m",
            ParamKind::RotationDeg => "deg",
            ParamKind::EmitterIntensity => "W/(sr m^2)",
            ParamKind::AlbedoChannel | ParamKind::Roughness => "",
        }
    }

    fn needs_channel(&self) -> bool {
        matches!(
            self,
            ParamKind::AlbedoChannel | ParamKind::CameraPosComponent | ParamKind::CameraLookatComponent
        )
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tunable parameter. `binding` names the driven scene element; albedo
/// and camera components add a channel suffix (`left_wall.g`, `camera.x`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    pub min: f64,
    pub max: f64,
    pub binding: String,
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind, min: f64, max: f64, binding: &str) -> Self {
        ParamSpec { name: name.into(), kind, min, max, binding: binding.into() }
    }

    fn split_binding(&self) -> (&str, Option<usize>) {
        match self.binding.rsplit_once('.') {
            Some((element, ch)) if self.kind.needs_channel() => {
                let idx = match ch {
                    "r" | "x" => Some(0),
                    "g" | "y" => Some(1),
                    "b" | "z" => Some(2),
                    _ => None,
                };
                (element, idx)
            }
            _ => (self.binding.as_str(), None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraMode {
    Fixed,
    Variable,
}

/// Camera declaration. A variable camera is box-constrained per component;
/// the six camera values travel next to the scene vector, not inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub mode: CameraMode,
    pub position: Vec3,
    pub lookat: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_min: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_max: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookat_min: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookat_max: Option<Vec3>,
}

impl CameraSpec {
    pub fn fixed(position: Vec3, lookat: Vec3) -> Self {
        CameraSpec {
            mode: CameraMode::Fixed,
            position,
            lookat,
            position_min: None,
            position_max: None,
            lookat_min: None,
            lookat_max: None,
        }
    }

    pub fn variable(position: Vec3, lookat: Vec3, pos_range: (Vec3, Vec3), look_range: (Vec3, Vec3)) -> Self {
        CameraSpec {
            mode: CameraMode::Variable,
            position,
            lookat,
            position_min: Some(pos_range.0),
            position_max: Some(pos_range.1),
            lookat_min: Some(look_range.0),
            lookat_max: Some(look_range.1),
        }
    }

    /// Number of camera components explored alongside the scene vector.
    pub fn variable_dim(&self) -> usize {
        match self.mode {
            CameraMode::Fixed => 0,
            CameraMode::Variable => 6,
        }
    }

    pub fn default_camera(&self) -> Camera {
        Camera::new(self.position, self.lookat)
    }

    /// Per-component `(min, max)` over position then lookat.
    pub fn bounds(&self) -> [(f64, f64); 6] {
        let pmin = self.position_min.unwrap_or(self.position);
        let pmax = self.position_max.unwrap_or(self.position);
        let lmin = self.lookat_min.unwrap_or(self.lookat);
        let lmax = self.lookat_max.unwrap_or(self.lookat);
        std::array::from_fn(|i| if i < 3 { (pmin[i], pmax[i]) } else { (lmin[i - 3], lmax[i - 3]) })
    }

    /// Maps six unit-interval values onto the camera box. Fixed cameras
    /// ignore the input.
    pub fn camera_from_unit(&self, unit: &[f64]) -> Camera {
        match self.mode {
            CameraMode::Fixed => self.default_camera(),
            CameraMode::Variable => {
                let b = self.bounds();
                let c: [f64; 6] = std::array::from_fn(|i| b[i].0 + unit[i] * (b[i].1 - b[i].0));
                Camera::from_slice(&c).expect("six components")
            }
        }
    }

    pub fn camera_to_unit(&self, camera: &Camera) -> Vec<f64> {
        match self.mode {
            CameraMode::Fixed => Vec::new(),
            CameraMode::Variable => {
                let b = self.bounds();
                let c = camera.to_array();
                (0..6)
                    .map(|i| {
                        let span = b[i].1 - b[i].0;
                        if span > 0.0 {
                            ((c[i] - b[i].0) / span).clamp(0.0, 1.0)
                        } else {
                            0.5
                        }
                    })
                    .collect()
            }
        }
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.mode == CameraMode::Fixed {
            if !self.default_camera().is_valid() {
                return Err(SceneError::Camera("lookat coincides with position".into()));
            }
            return Ok(());
        }
        if self.position_min.is_none()
            || self.position_max.is_none()
            || self.lookat_min.is_none()
            || self.lookat_max.is_none()
        {
            return Err(SceneError::Camera(
                "variable camera requires position_min/max and lookat_min/max".into(),
            ));
        }
        for (i, (lo, hi)) in self.bounds().iter().enumerate() {
            if !(lo <= hi) {
                return Err(SceneError::Camera(format!("component {i}: min {lo} > max {hi}")));
            }
        }
        // Position and lookat boxes must not overlap, otherwise some corner
        // of the hypercube yields a degenerate view direction.
        let b = self.bounds();
        let disjoint = (0..3).any(|i| b[i].1 < b[i + 3].0 || b[i + 3].1 < b[i].0);
        if !disjoint {
            return Err(SceneError::Camera("position and lookat ranges overlap".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    base_scene: String,
    camera: CameraSpec,
    params: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub kind: ParamKind,
    pub min: f64,
    pub max: f64,
    pub unit: String,
    pub binding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSummary {
    pub base_scene: String,
    pub dim: usize,
    pub params: Vec<ParamSummary>,
    pub camera: CameraSpec,
}

impl SpaceSummary {
    /// Plain-text table, one parameter per line.
    pub fn table(&self) -> String {
        let mut out = format!("base scene: {}\ndim: {}\ncamera: {}\n", self.base_scene, self.dim, match self.camera.mode {
            CameraMode::Fixed => "fixed",
            CameraMode::Variable => "variable",
        });
        out.push_str(&format!("{:<4} {:<20} {:<24} {:>10} {:>10} {:<10} {}\n", "idx", "name", "kind", "min", "max", "unit", "binding"));
        for (i, p) in self.params.iter().enumerate() {
            out.push_str(&format!(
                "{:<4} {:<20} {:<24} {:>10.4} {:>10.4} {:<10} {}\n",
                i,
                p.name,
                p.kind.as_str(),
                p.min,
                p.max,
                p.unit,
                p.binding
            ));
        }
        out
    }
}

/// The normalized parameter hypercube of a variable scene.
#[derive(Debug, Clone)]
pub struct SceneSpace {
    base_scene: String,
    camera: CameraSpec,
    params: Vec<ParamSpec>,
    base: Arc<SceneInstance>,
}

impl PartialEq for SceneSpace {
    fn eq(&self, other: &Self) -> bool {
        self.base_scene == other.base_scene && self.camera == other.camera && self.params == other.params
    }
}

impl SceneSpace {
    /// Builds and validates a space over the named base scene.
    pub fn new(base_scene: &str, camera: CameraSpec, params: Vec<ParamSpec>) -> Result<Self, SceneError> {
        let base = base_scene_arc(base_scene)?;
        let space = SceneSpace { base_scene: base_scene.to_string(), camera, params, base };
        space.validate()?;
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn camera(&self) -> &CameraSpec {
        &self.camera
    }

    pub fn base_scene_name(&self) -> &str {
        &self.base_scene
    }

    pub fn base(&self) -> &SceneInstance {
        &self.base
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.params.is_empty() {
            return Err(SceneError::NoParams);
        }
        self.camera.validate()?;
        let mut seen = HashSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(SceneError::DuplicateName(p.name.clone()));
            }
            if !(p.min.is_finite() && p.max.is_finite() && p.min < p.max) {
                return Err(SceneError::EmptyRange { name: p.name.clone(), min: p.min, max: p.max });
            }
            self.check_binding(p)?;
        }
        Ok(())
    }

    fn check_binding(&self, p: &ParamSpec) -> Result<(), SceneError> {
        let unknown = || SceneError::UnknownBinding { name: p.name.clone(), binding: p.binding.clone() };
        let invalid = |reason: &str| SceneError::InvalidParam { name: p.name.clone(), reason: reason.into() };
        let (element, channel) = p.split_binding();
        if p.kind.needs_channel() && channel.is_none() {
            return Err(unknown());
        }
        match p.kind {
            ParamKind::CameraPosComponent | ParamKind::CameraLookatComponent => {
                if element != "camera" {
                    return Err(unknown());
                }
                return Ok(());
            }
            _ => {}
        }
        let prim = self.base.find(element).ok_or_else(unknown)?;
        match p.kind {
            ParamKind::AlbedoChannel => {
                if !prim.surface.bsdf.has_albedo() {
                    return Err(invalid("bound element has no albedo"));
                }
                if p.min < 0.0 || p.max > MAX_ALBEDO {
                    return Err(invalid("albedo range must lie within [0, 0.97]"));
                }
            }
            ParamKind::Roughness => {
                if !matches!(prim.surface.bsdf, Bsdf::Glossy { .. }) {
                    return Err(invalid("roughness requires a glossy element"));
                }
                if p.min <= 0.0 || p.max > 1.0 {
                    return Err(invalid("roughness range must lie within (0, 1]"));
                }
            }
            ParamKind::EmitterIntensity => {
                if !prim.surface.is_emissive() {
                    return Err(invalid("bound element is not an emitter"));
                }
                if p.min < 0.0 {
                    return Err(invalid("emitter intensity must be nonnegative"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Client-facing description: parameter table and camera declaration.
    pub fn summary(&self) -> SpaceSummary {
        SpaceSummary {
            base_scene: self.base_scene.clone(),
            dim: self.dim(),
            params: self
                .params
                .iter()
                .map(|p| ParamSummary {
                    name: p.name.clone(),
                    kind: p.kind,
                    min: p.min,
                    max: p.max,
                    unit: p.kind.unit().to_string(),
                    binding: p.binding.clone(),
                })
                .collect(),
            camera: self.camera.clone(),
        }
    }

    /// Parses and validates a JSON scene-space description.
    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let file: SpaceFile = serde_json::from_str(text)?;
        SceneSpace::new(&file.base_scene, file.camera, file.params)
    }

    pub fn to_json(&self) -> String {
        let file = SpaceFile {
            base_scene: self.base_scene.clone(),
            camera: self.camera.clone(),
            params: self.params.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scene space serializes")
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    /// Resolves a builtin name or, failing that, a path to a JSON file.
    pub fn resolve(name_or_path: &str) -> Result<Self, SceneError> {
        match builtin(name_or_path) {
            Ok((space, _)) => Ok(space),
            Err(SceneError::UnknownBuiltin(_)) if Path::new(name_or_path).exists() => {
                Self::load(Path::new(name_or_path))
            }
            Err(e) => Err(e),
        }
    }
}

/// Parses a scene-space description from JSON text.
pub fn load_space(config_text: &str) -> Result<SceneSpace, SceneError> {
    SceneSpace::from_json(config_text)
}

fn base_scene_arc(name: &str) -> Result<Arc<SceneInstance>, SceneError> {
    base_scene(name).map(Arc::new).ok_or_else(|| SceneError::UnknownBaseScene(name.into()))
}

/// A point of the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SceneVector(Vec<f64>);

impl SceneVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SceneError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(SceneError::VectorOutOfRange { index, value });
            }
        }
        Ok(SceneVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for SceneVector {
    type Error = SceneError;
    fn try_from(v: Vec<f64>) -> Result<Self, SceneError> {
        SceneVector::new(v)
    }
}

impl From<SceneVector> for Vec<f64> {
    fn from(v: SceneVector) -> Vec<f64> {
        v.0
    }
}

pub fn normalize(space: &SceneSpace, raw: &[f64]) -> Result<SceneVector, SceneError> {
    if raw.len() != space.dim() {
        return Err(SceneError::DimensionMismatch { expected: space.dim(), got: raw.len() });
    }
    let values = space
        .params
        .iter()
        .zip(raw)
        .map(|(p, &value)| {
            if !(p.min..=p.max).contains(&value) {
                return Err(SceneError::OutOfRange { name: p.name.clone(), value, min: p.min, max: p.max });
            }
            Ok(((value - p.min) / (p.max - p.min)).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SceneVector(values))
}

pub fn denormalize(space: &SceneSpace, v: &SceneVector) -> Vec<f64> {
    space
        .params
        .iter()
        .zip(v.values())
        .map(|(p, &t)| if t == 1.0 { p.max } else { p.min + t * (p.max - p.min) })
        .collect()
}

/// Applies the denormalized parameters of `v` to the base scene.
pub fn instantiate(space: &SceneSpace, v: &SceneVector, camera: Camera) -> SceneInstance {
    assert_eq!(v.len(), space.dim(), "scene vector dimension");
    let mut inst = SceneInstance { camera, ..(*space.base).clone() };
    let raw = denormalize(space, v);
    for (p, value) in space.params.iter().zip(raw) {
        let (element, channel) = p.split_binding();
        match p.kind {
            ParamKind::CameraPosComponent => set_component(&mut inst.camera.position, channel, value),
            ParamKind::CameraLookatComponent => set_component(&mut inst.camera.lookat, channel, value),
            _ => {
                let base_prim = space.base.find(element).expect("binding validated");
                let prim = inst
                    .primitives
                    .iter_mut()
                    .find(|q| q.name == element)
                    .expect("binding validated");
                apply_param(p.kind, channel, value, base_prim, prim);
            }
        }
    }
    inst
}

fn set_component(v: &mut Vec3, channel: Option<usize>, value: f64) {
    match channel {
        Some(0) => v.x = value,
        Some(1) => v.y = value,
        Some(2) => v.z = value,
        _ => unreachable!("binding validated"),
    }
}

fn apply_param(kind: ParamKind, channel: Option<usize>, value: f64, base: &Primitive, prim: &mut Primitive) {
    match kind {
        ParamKind::TranslationX | ParamKind::TranslationY | ParamKind::TranslationZ => {
            let mut c = prim.shape.center();
            let axis = match kind {
                ParamKind::TranslationX => 0,
                ParamKind::TranslationY => 1,
                _ => 2,
            };
            set_component(&mut c, Some(axis), value);
            prim.shape.set_center(c);
        }
        ParamKind::RotationDeg => match (&mut prim.shape, &base.shape) {
            (Shape::Cuboid { yaw_deg, .. }, _) => *yaw_deg = value,
            (Shape::Quad { u, v, .. }, Shape::Quad { u: bu, v: bv, .. }) => {
                let a = value.to_radians();
                *u = bu.rotate_y(a);
                *v = bv.rotate_y(a);
            }
            _ => {}
        },
        ParamKind::AlbedoChannel => {
            if let Some(a) = prim.surface.bsdf.albedo_mut() {
                set_component(a, channel, value);
            }
        }
        ParamKind::Roughness => {
            if let Bsdf::Glossy { roughness, .. } = &mut prim.surface.bsdf {
                *roughness = value;
            }
        }
        ParamKind::EmitterIntensity => {
            prim.surface.emission = base.surface.emission * value;
        }
        ParamKind::CameraPosComponent | ParamKind::CameraLookatComponent => unreachable!(),
    }
}
