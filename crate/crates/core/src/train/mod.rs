//! The interleaved training loop: chain steps render fresh patches, the
//! network takes one Adam step per iteration on either fresh or replayed
//! patches, and a progressive schedule grows the virtual image size.

pub mod config;
pub mod log;
pub mod validation;

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{
    resolution, FrameSelection, ResolutionMode, SamplerMode, Schedule, TargetMode, TrainConfig, ValidationConfig,
};
pub use log::{LogRow, TrainLog};
pub use validation::{validate, ValidationFrame, ValidationMetrics, ValidationSet};

use crate::explore::{chain_csv_header, init_chains, write_chain_rows, AcceptanceMode, Chain, ChainRow, StateLayout, StepKind};
use crate::image::{Image, ImageError};
use crate::net::checkpoint::{encode, CheckpointError};
use crate::net::{batch_gradients, AdamState, BatchGradients, NetError, NetShape, PixelBatch, PixelGenerator};
use crate::reuse::{Decision, ReuseError, ReuseTracker, SampleStore, StoredSample};
use crate::scene::{instantiate, SceneError, SceneSpace, SceneVector};
use crate::tracer::sampling::mix64;
use crate::tracer::{gbuffer_patch, trace_patch, PatchWindow};

const NET_SALT: u64 = 0x4e45_5457_4f52_4b00;
const CHAIN_SALT: u64 = 0x4348_4149_4e53_0000;
const TRACE_SALT: u64 = 0x5452_4143_4500_0000;
const REUSE_SALT: u64 = 0x5245_5553_4500_0000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: u64, loss: f64 },
    #[error("validation set missing: {0}")]
    MissingValidation(String),
    #[error("sample store: {0}")]
    Reuse(#[from] ReuseError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("image: {0}")]
    Image(#[from] ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Renders the ground-truth patch and G-buffer of one chain state.
fn render_state(
    space: &SceneSpace,
    layout: &StateLayout,
    u: &[f64],
    kind: StepKind,
    resolution: usize,
    patch_size: usize,
    spp: u32,
    seed: u64,
    iteration: u64,
) -> StoredSample {
    let v = SceneVector::new(layout.scene(u).to_vec()).expect("chain states stay in the unit cube");
    let camera = if layout.camera_dim == 0 {
        space.camera().default_camera()
    } else {
        space.camera().camera_from_unit(layout.camera(u))
    };
    let (px, py) = layout.patch(u);
    let window = PatchWindow::from_unit(resolution, patch_size, px, py);
    let inst = instantiate(space, &v, camera);
    let gbuffer = gbuffer_patch(&inst, &window);
    let target = trace_patch(&inst, &window, spp, seed).image;
    StoredSample {
        id: 0,
        gbuffer,
        target,
        state: u.to_vec(),
        scene_vector: v.into(),
        camera,
        weight: 0.0,
        large_step: kind == StepKind::Large,
        created: iteration,
    }
}

struct RunDir {
    root: PathBuf,
    log: csv::Writer<File>,
    chains: csv::Writer<File>,
}

/// Final state of a run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: TrainLog,
    /// Encoded final checkpoint.
    pub checkpoint: Vec<u8>,
    pub validation: Option<ValidationMetrics>,
}

pub struct Trainer {
    config: TrainConfig,
    space: SceneSpace,
    layout: StateLayout,
    net: PixelGenerator<f32>,
    adam: AdamState,
    chains: Vec<Chain>,
    incumbents: Vec<Option<StoredSample>>,
    store: SampleStore,
    tracker: ReuseTracker,
    rng: ChaCha8Rng,
    max_val: f64,
    iteration: u64,
    validation: Option<Arc<ValidationSet>>,
    log: TrainLog,
    chain_rows: Vec<ChainRow>,
    run_dir: Option<RunDir>,
    started: Instant,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let space = SceneSpace::resolve(&config.scene)?;
        let layout = StateLayout { scene_dim: space.dim(), camera_dim: space.camera().variable_dim() };
        let mut shape = NetShape::new(space.dim(), config.hidden, config.layers);
        shape.precondition = config.precondition;
        let net = PixelGenerator::<f32>::new(shape, mix64(config.seed ^ NET_SALT))?;
        let adam = AdamState::new(net.params.len(), config.adam);
        let chains = init_chains(config.batch_chains, layout.dim(), mix64(config.seed ^ CHAIN_SALT));
        Ok(Trainer {
            incumbents: vec![None; chains.len()],
            store: SampleStore::new(config.store_capacity.max(1)),
            tracker: ReuseTracker::default(),
            rng: ChaCha8Rng::seed_from_u64(mix64(config.seed ^ REUSE_SALT)),
            max_val: 1.0,
            iteration: 0,
            validation: None,
            log: TrainLog::default(),
            chain_rows: Vec::new(),
            run_dir: None,
            started: Instant::now(),
            config,
            space,
            layout,
            net,
            adam,
            chains,
        })
    }

    /// Uses a prebuilt validation set instead of rendering one.
    pub fn with_validation(mut self, set: Arc<ValidationSet>) -> Self {
        self.validation = Some(set);
        self
    }

    /// Writes the resolved config and streams logs into `dir`.
    pub fn with_run_dir(mut self, dir: &Path) -> Result<Self, TrainError> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        fs::write(dir.join("config.json"), serde_json::to_string_pretty(&self.config)?)?;
        let log = csv::Writer::from_path(dir.join("log.csv"))?;
        let mut chains = csv::Writer::from_path(dir.join("chains.csv"))?;
        chains.write_record(chain_csv_header(self.layout.dim()))?;
        chains.flush()?;
        self.run_dir = Some(RunDir { root: dir.to_path_buf(), log, chains });
        Ok(self)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn space(&self) -> &SceneSpace {
        &self.space
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn net(&self) -> &PixelGenerator<f32> {
        &self.net
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn store(&self) -> &SampleStore {
        &self.store
    }

    pub fn tracker(&self) -> &ReuseTracker {
        &self.tracker
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn chain_rows(&self) -> &[ChainRow] {
        &self.chain_rows
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        encode(&self.net, &self.adam)
    }

    /// The validation set, rendering (or loading from the run directory)
    /// on first use.
    pub fn validation_set(&mut self) -> Result<Arc<ValidationSet>, TrainError> {
        if let Some(v) = &self.validation {
            return Ok(v.clone());
        }
        let cached = self.run_dir.as_ref().map(|d| d.root.join("validation"));
        let set = match &cached {
            Some(dir) if dir.join("frame_000.json").exists() => ValidationSet::read(dir, &self.space)?,
            _ => {
                let set = ValidationSet::build(&self.space, &self.config.validation, self.config.seed)?;
                if let Some(dir) = &cached {
                    set.write(dir)?;
                }
                set
            }
        };
        let set = Arc::new(set);
        self.validation = Some(set.clone());
        Ok(set)
    }

    fn batch_of(&self, samples: &[&StoredSample]) -> (PixelBatch<f32>, Vec<Image>) {
        let parts: Vec<PixelBatch<f32>> = samples
            .iter()
            .map(|s| PixelBatch::from_gbuffer(&s.gbuffer, &s.scene_vector, &s.camera))
            .collect();
        (PixelBatch::stack(&parts), samples.iter().map(|s| s.target.clone()).collect())
    }

    fn gradients(&self, samples: &[&StoredSample], per_patch: bool) -> Result<BatchGradients<f32>, TrainError> {
        let (batch, targets) = self.batch_of(samples);
        let refs: Vec<&Image> = targets.iter().collect();
        Ok(batch_gradients(&self.net, &batch, &refs, self.max_val, per_patch)?)
    }

    /// Target value of every patch of `g`.
    fn target_values(&self, g: &BatchGradients<f32>) -> Vec<f64> {
        g.loss
            .per_patch
            .iter()
            .zip(&g.per_patch)
            .map(|(l, grad)| match self.config.target {
                TargetMode::LossOnly => l.total,
                TargetMode::LossTimesStep => l.total * self.adam.step_norm_for_patch(grad),
            })
            .collect()
    }

    fn check_finite(&self, loss: f64) -> Result<(), TrainError> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(TrainError::Diverged { iteration: self.iteration, loss })
        }
    }

    /// Chain steps on freshly rendered patches; returns the batch
    /// gradients and the number of accepted proposals.
    fn generate(&mut self, resolution: usize) -> Result<(BatchGradients<f32>, usize), TrainError> {
        let it = self.iteration;
        let proposal_cfg = self.config.effective_proposal();
        let mode = self.config.effective_acceptance();
        let proposals: Vec<_> = self.chains.iter_mut().map(|c| c.propose(&proposal_cfg)).collect();
        let trace_seed = mix64(self.config.seed ^ TRACE_SALT);
        let (space, layout, cfg) = (&self.space, &self.layout, &self.config);
        let samples: Vec<StoredSample> = proposals
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let seed = mix64(trace_seed ^ mix64(it.wrapping_mul(4096).wrapping_add(k as u64)));
                render_state(space, layout, &p.u, p.kind, resolution, cfg.patch_size, cfg.spp, seed, it)
            })
            .collect();
        for s in &samples {
            self.max_val = self.max_val.max(s.target.max_luminance());
        }

        // Re-score the incumbents with the current network so stale target
        // values do not pin a chain.
        if mode != AcceptanceMode::Always {
            let held: Vec<(usize, &StoredSample)> =
                self.incumbents.iter().enumerate().filter_map(|(k, s)| s.as_ref().map(|s| (k, s))).collect();
            if !held.is_empty() {
                let refs: Vec<&StoredSample> = held.iter().map(|h| h.1).collect();
                let g = self.gradients(&refs, true)?;
                self.check_finite(g.loss.total)?;
                let f = self.target_values(&g);
                let ids: Vec<usize> = held.iter().map(|h| h.0).collect();
                for (k, fk) in ids.into_iter().zip(f) {
                    self.chains[k].f = Some(fk);
                }
            }
        }

        let refs: Vec<&StoredSample> = samples.iter().collect();
        let g = self.gradients(&refs, true)?;
        self.check_finite(g.loss.total)?;
        let f = self.target_values(&g);
        let mut accepted = 0;
        for (k, (p, fk)) in proposals.into_iter().zip(&f).enumerate() {
            let kind = p.kind;
            let moved = self.chains[k].resolve(p, *fk, mode);
            if moved {
                accepted += 1;
                self.incumbents[k] = Some(samples[k].clone());
            }
            self.chain_rows.push(ChainRow {
                iteration: it,
                chain: k,
                kind,
                accepted: moved,
                f: self.chains[k].f.unwrap_or(0.0),
                state: self.chains[k].u.clone(),
            });
        }
        if self.config.reuse {
            for (s, l) in samples.into_iter().zip(&g.loss.per_patch) {
                self.store.record_new(&mut self.tracker, s, l.total);
            }
        }
        Ok((g, accepted))
    }

    /// Loss-weighted replay of stored patches.
    fn replay(&mut self) -> Result<BatchGradients<f32>, TrainError> {
        let idx = self.store.sample_replay_batch(self.config.batch_chains, &mut self.rng)?;
        let refs: Vec<&StoredSample> = idx.iter().map(|&i| self.store.get(i)).collect();
        let g = self.gradients(&refs, false)?;
        self.check_finite(g.loss.total)?;
        for (&i, l) in idx.iter().zip(&g.loss.per_patch) {
            self.store.record_reused(&mut self.tracker, i, l.total);
        }
        Ok(g)
    }

    /// One training iteration: decision, batch, Adam update, log row.
    pub fn step(&mut self) -> Result<&LogRow, TrainError> {
        let it = self.iteration;
        let resolution = self.config.resolution(it);
        let p_s = if self.config.reuse { self.tracker.effective_probability() } else { 0.0 };
        let decision = if self.config.reuse && !self.store.is_empty() {
            self.tracker.decide(it, &mut self.rng)
        } else {
            Decision::Generate
        };
        let first_chain_row = self.chain_rows.len();
        let (g, accepted) = match decision {
            Decision::Generate => self.generate(resolution)?,
            Decision::Reuse => (self.replay()?, 0),
        };
        self.adam.step(&mut self.net.params, &g.grad);

        let fs: Vec<f64> = self.chains.iter().filter_map(|c| c.f).collect();
        let mut row = LogRow {
            iteration: it,
            wall_seconds: self.started.elapsed().as_secs_f64(),
            decision,
            resolution,
            loss: g.loss.total,
            l1: g.loss.l1,
            dssim: g.loss.dssim,
            p_s,
            accepted,
            f_mean: fs.iter().sum::<f64>() / fs.len().max(1) as f64,
            f_max: fs.iter().copied().fold(0.0, f64::max),
            val_loss: None,
            val_mape: None,
            val_mae: None,
            val_dssim: None,
        };
        let done = it + 1;
        let every = self.config.validation.every;
        if every > 0 && (done.is_multiple_of(every) || done == self.config.iterations) {
            let set = self.validation_set()?;
            row.set_validation(&validate(&self.net, &set)?);
        }
        if let Some(dir) = &mut self.run_dir {
            dir.log.serialize(&row)?;
            dir.log.flush()?;
            write_chain_rows(&mut dir.chains, &self.chain_rows[first_chain_row..])?;
            dir.chains.flush()?;
            let ce = self.config.checkpoint_every;
            if ce > 0 && done.is_multiple_of(ce) && done != self.config.iterations {
                fs::write(dir.root.join(format!("checkpoints/ckpt_{done}.bin")), encode(&self.net, &self.adam))?;
            }
        }
        self.log.push(row);
        self.iteration += 1;
        Ok(self.log.last().expect("row just pushed"))
    }

    /// Runs the remaining iterations and writes the final checkpoint and
    /// validation predictions.
    pub fn run(&mut self) -> Result<TrainOutcome, TrainError> {
        while self.iteration < self.config.iterations {
            self.step()?;
        }
        let checkpoint = self.checkpoint_bytes();
        let validation = self.log.validations().last().map(|r| ValidationMetrics {
            loss: r.val_loss.unwrap_or(f64::NAN),
            mape: r.val_mape.unwrap_or(f64::NAN),
            mae: r.val_mae.unwrap_or(f64::NAN),
            dssim: r.val_dssim.unwrap_or(f64::NAN),
        });
        if let Some(root) = self.run_dir.as_ref().map(|d| d.root.clone()) {
            fs::write(root.join(format!("checkpoints/ckpt_{}.bin", self.iteration)), &checkpoint)?;
            if validation.is_some() {
                let set = self.validation_set()?;
                let dir = root.join("validation");
                if !dir.join("frame_000.json").exists() {
                    set.write(&dir)?;
                }
                for (k, img) in set.predict(&self.net)?.iter().enumerate() {
                    img.write_pfm(&dir.join(format!("frame_{k:03}_prediction.pfm")))?;
                }
            }
        }
        Ok(TrainOutcome { log: self.log.clone(), checkpoint, validation })
    }
}

/// Path of the newest `ckpt_{iter}.bin` in a run directory.
pub fn latest_checkpoint(run_dir: &Path) -> Option<PathBuf> {
    fs::read_dir(run_dir.join("checkpoints"))
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let iter: u64 = name.strip_prefix("ckpt_")?.strip_suffix(".bin")?.parse().ok()?;
            Some((iter, e.path()))
        })
        .max_by_key(|(iter, _)| *iter)
        .map(|(_, p)| p)
}
