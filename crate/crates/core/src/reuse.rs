//! Storage and loss-weighted replay of rendered training samples, with
//! the reuse probability driven by moving averages of new and replayed
//! losses.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError};
use crate::scene::Camera;
use crate::tracer::{GBufferPatch, PatchWindow, Texel};

pub const DEFAULT_CAPACITY: usize = 20_000;
pub const DEFAULT_BETA: f64 = 4.6;
pub const DEFAULT_DECAY: f64 = 0.99;
/// Decisions before this many iterations always generate.
pub const WARMUP_DECISIONS: u64 = 100;

#[derive(Debug, Error)]
pub enum ReuseError {
    #[error("reuse tracker has not seen both new and replayed losses yet")]
    Unseeded,
    #[error("sample store is empty")]
    EmptyStore,
    #[error("image: {0}")]
    Image(#[from] ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Generate,
    Reuse,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Generate => "generate",
            Decision::Reuse => "reuse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseTracker {
    pub ema_new: Option<f64>,
    pub ema_exist: Option<f64>,
    pub decay: f64,
    pub beta: f64,
    pub warmup: u64,
}

impl Default for ReuseTracker {
    fn default() -> Self {
        ReuseTracker { ema_new: None, ema_exist: None, decay: DEFAULT_DECAY, beta: DEFAULT_BETA, warmup: WARMUP_DECISIONS }
    }
}

fn ema(old: Option<f64>, x: f64, decay: f64) -> f64 {
    match old {
        None => x,
        Some(o) => decay * o + (1.0 - decay) * x,
    }
}

impl ReuseTracker {
    pub fn reuse_probability(&self) -> Result<f64, ReuseError> {
        match (self.ema_exist, self.ema_new) {
            (Some(e), Some(n)) => Ok(sigmoid(e - n + self.beta)),
            _ => Err(ReuseError::Unseeded),
        }
    }

    /// Probability used for decisions: with no replayed loss yet the two
    /// averages are taken as equal.
    pub fn effective_probability(&self) -> f64 {
        self.reuse_probability().unwrap_or_else(|_| sigmoid(self.beta))
    }

    pub fn decide(&self, iteration: u64, rng: &mut impl Rng) -> Decision {
        if iteration < self.warmup {
            return Decision::Generate;
        }
        if rng.random::<f64>() < self.effective_probability() {
            Decision::Reuse
        } else {
            Decision::Generate
        }
    }

    pub fn observe_new(&mut self, loss: f64, large_step: bool) {
        if large_step {
            self.ema_new = Some(ema(self.ema_new, loss, self.decay));
        }
    }

    pub fn observe_reused(&mut self, loss: f64, large_step: bool) {
        if large_step {
            self.ema_exist = Some(ema(self.ema_exist, loss, self.decay));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredSample {
    pub id: u64,
    pub gbuffer: GBufferPatch,
    pub target: Image,
    /// Chain state that produced the sample.
    pub state: Vec<f64>,
    pub scene_vector: Vec<f64>,
    pub camera: Camera,
    /// Last recorded loss.
    pub weight: f64,
    pub large_step: bool,
    pub created: u64,
}

#[derive(Debug, Clone)]
pub struct SampleStore {
    capacity: usize,
    next_id: u64,
    samples: Vec<StoredSample>,
}

impl SampleStore {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "store capacity must be positive");
        SampleStore { capacity, next_id: 0, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn samples(&self) -> &[StoredSample] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> &StoredSample {
        &self.samples[i]
    }

    /// Inserts a sample, evicting the lowest-weight (then oldest) one when
    /// full. Returns the assigned id.
    pub fn insert(&mut self, mut sample: StoredSample) -> u64 {
        if self.samples.len() == self.capacity {
            let victim = self
                .samples
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.weight.total_cmp(&b.weight).then(a.id.cmp(&b.id)))
                .map(|(i, _)| i)
                .expect("store is full");
            self.samples.swap_remove(victim);
        }
        sample.id = self.next_id;
        self.next_id += 1;
        self.samples.push(sample);
        self.next_id - 1
    }

    /// `n` independent draws with probability proportional to weight, or
    /// uniform when every weight is zero.
    pub fn sample_replay_batch(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>, ReuseError> {
        if self.samples.is_empty() {
            return Err(ReuseError::EmptyStore);
        }
        match WeightedIndex::new(self.samples.iter().map(|s| s.weight.max(0.0))) {
            Ok(dist) => Ok((0..n).map(|_| dist.sample(rng)).collect()),
            Err(_) => Ok((0..n).map(|_| rng.random_range(0..self.samples.len())).collect()),
        }
    }

    pub fn record_new(&mut self, tracker: &mut ReuseTracker, mut sample: StoredSample, loss: f64) -> u64 {
        tracker.observe_new(loss, sample.large_step);
        sample.weight = loss;
        self.insert(sample)
    }

    pub fn record_reused(&mut self, tracker: &mut ReuseTracker, index: usize, loss: f64) {
        let s = &mut self.samples[index];
        s.weight = loss;
        tracker.observe_reused(loss, s.large_step);
    }

    /// Writes every sample as a target PFM, a G-buffer PFM and JSON metadata.
    pub fn spill(&self, dir: &Path) -> Result<(), ReuseError> {
        fs::create_dir_all(dir)?;
        for s in &self.samples {
            s.target.write_pfm(&dir.join(format!("sample_{:06}_target.pfm", s.id)))?;
            gbuffer_to_image(&s.gbuffer).write_pfm(&dir.join(format!("sample_{:06}_gbuffer.pfm", s.id)))?;
            let meta = SampleMeta {
                id: s.id,
                window: s.gbuffer.window,
                state: s.state.clone(),
                scene_vector: s.scene_vector.clone(),
                camera: s.camera,
                weight: s.weight,
                large_step: s.large_step,
                created: s.created,
            };
            fs::write(dir.join(format!("sample_{:06}.json", s.id)), serde_json::to_string_pretty(&meta)?)?;
        }
        Ok(())
    }

    /// Loads a directory written by [`SampleStore::spill`].
    pub fn load(dir: &Path, capacity: usize) -> Result<Self, ReuseError> {
        let mut metas: Vec<SampleMeta> = Vec::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                metas.push(serde_json::from_str(&fs::read_to_string(&path)?)?);
            }
        }
        metas.sort_by_key(|m| m.id);
        let mut store = SampleStore::new(capacity);
        for m in metas {
            let target = Image::read_pfm(&dir.join(format!("sample_{:06}_target.pfm", m.id)))?;
            let g = Image::read_pfm(&dir.join(format!("sample_{:06}_gbuffer.pfm", m.id)))?;
            let gbuffer = gbuffer_from_image(&g, m.window)?;
            store.next_id = m.id;
            store.insert(StoredSample {
                id: m.id,
                gbuffer,
                target,
                state: m.state,
                scene_vector: m.scene_vector,
                camera: m.camera,
                weight: m.weight,
                large_step: m.large_step,
                created: m.created,
            });
        }
        Ok(store)
    }
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    id: u64,
    window: PatchWindow,
    state: Vec<f64>,
    scene_vector: Vec<f64>,
    camera: Camera,
    weight: f64,
    large_step: bool,
    created: u64,
}

const GBUFFER_BLOCKS: usize = 6;

/// Stacks the G-buffer attributes vertically as six RGB blocks: position,
/// normal, albedo, (roughness, hit, 0), outgoing direction, emission.
fn gbuffer_to_image(g: &GBufferPatch) -> Image {
    let (w, h) = (g.window.width, g.window.height);
    let mut img = Image::new(w, h * GBUFFER_BLOCKS, 3);
    let blocks: [fn(&Texel) -> [f32; 3]; GBUFFER_BLOCKS] = [
        |t| t.position,
        |t| t.normal,
        |t| t.albedo,
        |t| [t.roughness, t.hit as u8 as f32, 0.0],
        |t| t.omega_o,
        |t| t.emission,
    ];
    for (b, f) in blocks.iter().enumerate() {
        img.blit(&g.attribute_image(f), 0, b * h);
    }
    img
}

fn gbuffer_from_image(img: &Image, window: PatchWindow) -> Result<GBufferPatch, ReuseError> {
    let (w, h) = (window.width, window.height);
    if img.width != w || img.height != h * GBUFFER_BLOCKS || img.channels != 3 {
        return Err(ImageError::Malformed("G-buffer image does not match its window".into()).into());
    }
    let texels = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let px = |b: usize| -> [f32; 3] {
                let p = img.pixel(x, b * h + y);
                [p[0], p[1], p[2]]
            };
            let rh = px(3);
            Texel {
                position: px(0),
                normal: px(1),
                albedo: px(2),
                roughness: rh[0],
                hit: rh[1] > 0.5,
                omega_o: px(4),
                emission: px(5),
            }
        })
        .collect();
    Ok(GBufferPatch { window, texels })
}
