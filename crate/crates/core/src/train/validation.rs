//! Fixed validation frames rendered once at high sample counts.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FrameSelection, ValidationConfig};
use super::TrainError;
use crate::eval::{frame_metrics, reference_range, FrameMetrics};
use crate::image::Image;
use crate::infer::predict_gbuffer;
use crate::net::{patch_loss, PixelGenerator};
use crate::scene::{instantiate, mirror_room, Camera, SceneSpace, SceneVector};
use crate::tracer::sampling::mix64;
use crate::tracer::{gbuffer_patch, trace_patch, GBufferPatch, PatchWindow};

/// Rejection-sampling budget when searching for frames that satisfy a
/// selection rule.
const MAX_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationFrame {
    pub scene_vector: Vec<f64>,
    pub camera: Camera,
    /// Evaluated region of the frame.
    pub window: PatchWindow,
    pub gbuffer: GBufferPatch,
    pub target: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub frames: Vec<ValidationFrame>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    /// Mean training loss (L1 + DSSIM) over frames.
    pub loss: f64,
    pub mape: f64,
    pub mae: f64,
    pub dssim: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameMeta {
    scene_vector: Vec<f64>,
    camera: Camera,
    window: PatchWindow,
}

fn mirror_visible(space: &SceneSpace, v: &SceneVector) -> bool {
    let inst = instantiate(space, v, space.camera().default_camera());
    inst.find("sphere").is_some_and(|p| mirror_room::sphere_in_reflection(p.shape.center()))
}

impl ValidationSet {
    /// Draws frame states from `seed` and renders their references.
    pub fn build(space: &SceneSpace, config: &ValidationConfig, seed: u64) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ 0x5641_4c49_4441_5445));
        let res = config.resolution;
        let window = match config.selection {
            FrameSelection::Uniform => PatchWindow::full(res),
            FrameSelection::MirrorVisible => {
                if space.base_scene_name() != "mirror-room" {
                    return Err(TrainError::Config("mirror-visible validation needs the mirror-room scene".into()));
                }
                mirror_room::mirror_window(res)
            }
        };
        let mut states = Vec::with_capacity(config.frames);
        let mut draws = 0;
        while states.len() < config.frames {
            draws += 1;
            if draws > MAX_DRAWS {
                return Err(TrainError::Config("no validation frames satisfy the selection rule".into()));
            }
            let v = SceneVector::new((0..space.dim()).map(|_| rng.random::<f64>()).collect()).expect("unit vector");
            let cam_unit: Vec<f64> = (0..space.camera().variable_dim()).map(|_| rng.random::<f64>()).collect();
            if config.selection == FrameSelection::MirrorVisible && !mirror_visible(space, &v) {
                continue;
            }
            let camera = if cam_unit.is_empty() {
                space.camera().default_camera()
            } else {
                space.camera().camera_from_unit(&cam_unit)
            };
            states.push((v, camera));
        }
        let frames = states
            .into_par_iter()
            .enumerate()
            .map(|(k, (v, camera))| {
                let inst = instantiate(space, &v, camera);
                let gbuffer = gbuffer_patch(&inst, &window);
                let target = trace_patch(&inst, &window, config.spp, mix64(seed ^ mix64(k as u64 + 0x1000))).image;
                ValidationFrame { scene_vector: v.into(), camera, window, gbuffer, target }
            })
            .collect();
        Ok(ValidationSet { frames })
    }

    pub fn write(&self, dir: &Path) -> Result<(), TrainError> {
        fs::create_dir_all(dir)?;
        for (k, f) in self.frames.iter().enumerate() {
            f.target.write_pfm(&dir.join(format!("frame_{k:03}_reference.pfm")))?;
            let meta = FrameMeta { scene_vector: f.scene_vector.clone(), camera: f.camera, window: f.window };
            fs::write(dir.join(format!("frame_{k:03}.json")), serde_json::to_string_pretty(&meta)?)?;
        }
        Ok(())
    }

    /// Reads frames written by [`ValidationSet::write`]; G-buffers are
    /// retraced, which is deterministic.
    pub fn read(dir: &Path, space: &SceneSpace) -> Result<Self, TrainError> {
        let mut frames = Vec::new();
        for k in 0.. {
            let meta_path = dir.join(format!("frame_{k:03}.json"));
            if !meta_path.exists() {
                break;
            }
            let meta: FrameMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)?;
            let v = SceneVector::new(meta.scene_vector.clone()).map_err(TrainError::Scene)?;
            if v.len() != space.dim() {
                return Err(TrainError::Config(format!("validation frame {k} does not match the scene dimension")));
            }
            let target = Image::read_pfm(&dir.join(format!("frame_{k:03}_reference.pfm")))?;
            let inst = instantiate(space, &v, meta.camera);
            let gbuffer = gbuffer_patch(&inst, &meta.window);
            frames.push(ValidationFrame { scene_vector: meta.scene_vector, camera: meta.camera, window: meta.window, gbuffer, target });
        }
        if frames.is_empty() {
            return Err(TrainError::MissingValidation(dir.display().to_string()));
        }
        Ok(ValidationSet { frames })
    }

    /// Network predictions for every frame.
    pub fn predict(&self, net: &PixelGenerator<f32>) -> Result<Vec<Image>, TrainError> {
        self.frames
            .iter()
            .map(|f| predict_gbuffer(net, &f.gbuffer, &f.scene_vector, &f.camera).map_err(TrainError::Net))
            .collect()
    }
}

/// Per-frame metrics of `predictions` against the references.
pub fn frame_scores(set: &ValidationSet, predictions: &[Image]) -> Vec<(f64, FrameMetrics)> {
    set.frames
        .iter()
        .zip(predictions)
        .map(|(f, p)| {
            let to64 = |img: &Image| img.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
            let loss = patch_loss(&to64(p), &to64(&f.target), f.window.width, f.window.height, reference_range(&f.target));
            (loss.loss.total, frame_metrics(p, &f.target))
        })
        .collect()
}

pub fn validate(net: &PixelGenerator<f32>, set: &ValidationSet) -> Result<ValidationMetrics, TrainError> {
    if set.frames.is_empty() {
        return Err(TrainError::MissingValidation("empty validation set".into()));
    }
    let preds = set.predict(net)?;
    let scores = frame_scores(set, &preds);
    let n = scores.len() as f64;
    let mean = FrameMetrics::mean(&scores.iter().map(|s| s.1).collect::<Vec<_>>());
    Ok(ValidationMetrics { loss: scores.iter().map(|s| s.0).sum::<f64>() / n, mape: mean.mape, mae: mean.mae, dssim: mean.dssim })
}
