//! Training configuration and the progressive-resolution schedule.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::explore::{AcceptanceMode, ProposalConfig};
use crate::net::AdamConfig;
use crate::reuse::DEFAULT_CAPACITY;
use crate::tracer::PATCH_SIZE;

/// Image-resolution schedule: `min(r_max, r0 + increment * floor(iter / period))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub r0: usize,
    pub increment: usize,
    pub period: u64,
    pub r_max: usize,
}

impl Schedule {
    pub const FULL: Schedule = Schedule { r0: 128, increment: 4, period: 2000, r_max: 600 };
    pub const DESK: Schedule = Schedule { r0: 64, increment: 4, period: 200, r_max: 128 };

    pub fn resolution(&self, iteration: u64) -> usize {
        let steps = iteration / self.period;
        let grown = (self.r0 as u64).saturating_add((self.increment as u64).saturating_mul(steps));
        grown.min(self.r_max as u64) as usize
    }
}

pub fn resolution(iteration: u64, schedule: &Schedule) -> usize {
    schedule.resolution(iteration)
}

macro_rules! kebab_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($name))),
                }
            }
        }
    };
}

kebab_enum!(SamplerMode { Mcmc => "mcmc", Uniform => "uniform" });
kebab_enum!(ResolutionMode { Adaptive => "adaptive", Fixed => "fixed" });
kebab_enum!(TargetMode { LossTimesStep => "loss-times-step", LossOnly => "loss-only" });
kebab_enum!(FrameSelection { Uniform => "uniform", MirrorVisible => "mirror-visible" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Validate after every this many iterations and after the last one;
    /// 0 disables validation.
    pub every: u64,
    pub frames: usize,
    pub spp: u32,
    pub resolution: usize,
    pub selection: FrameSelection,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { every: 250, frames: 16, spp: 256, resolution: 64, selection: FrameSelection::Uniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Builtin scene name or path to a scene-space JSON file.
    pub scene: String,
    pub iterations: u64,
    pub batch_chains: usize,
    pub patch_size: usize,
    pub schedule: Schedule,
    pub resolution_mode: ResolutionMode,
    pub spp: u32,
    pub sampler: SamplerMode,
    pub acceptance: AcceptanceMode,
    pub proposal: ProposalConfig,
    pub target: TargetMode,
    pub reuse: bool,
    pub store_capacity: usize,
    pub hidden: usize,
    pub layers: usize,
    pub precondition: bool,
    pub adam: AdamConfig,
    pub seed: u64,
    pub validation: ValidationConfig,
    /// Write a checkpoint every this many iterations; the final one is
    /// always written. 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl TrainConfig {
    /// Desk-scale defaults for a scene.
    pub fn desk(scene: &str) -> Self {
        TrainConfig {
            scene: scene.to_string(),
            iterations: 5000,
            batch_chains: 16,
            patch_size: PATCH_SIZE,
            schedule: Schedule::DESK,
            resolution_mode: ResolutionMode::Adaptive,
            spp: 16,
            sampler: SamplerMode::Mcmc,
            acceptance: AcceptanceMode::Greedy,
            proposal: ProposalConfig::default(),
            target: TargetMode::LossTimesStep,
            reuse: true,
            store_capacity: DEFAULT_CAPACITY,
            hidden: 64,
            layers: 4,
            precondition: true,
            adam: AdamConfig::default(),
            seed: 0,
            validation: ValidationConfig::default(),
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let s = &self.schedule;
        if self.patch_size == 0 {
            return Err("patch size must be positive".into());
        }
        if s.r0 < self.patch_size {
            return Err(format!("R0 = {} is smaller than the patch size {}", s.r0, self.patch_size));
        }
        if s.r_max < s.r0 {
            return Err(format!("R_max = {} is smaller than R0 = {}", s.r_max, s.r0));
        }
        if s.period == 0 {
            return Err("schedule period must be at least 1".into());
        }
        if self.batch_chains == 0 {
            return Err("need at least one chain".into());
        }
        if self.spp == 0 {
            return Err("spp must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.proposal.p_large) || self.proposal.sigma < 0.0 {
            return Err("proposal needs p_large in [0, 1] and sigma >= 0".into());
        }
        if self.validation.every > 0 && (self.validation.frames == 0 || self.validation.resolution < 16) {
            return Err("validation needs frames and a resolution of at least 16".into());
        }
        Ok(())
    }

    /// Settings that make no sense for the sampler mode, reported so the
    /// caller can warn; they are overridden rather than rejected.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.sampler == SamplerMode::Uniform {
            if self.acceptance != AcceptanceMode::Always {
                w.push(format!("acceptance `{}` is ignored in uniform mode", self.acceptance.as_str()));
            }
            if self.resolution_mode == ResolutionMode::Adaptive {
                w.push("adaptive resolution is disabled in uniform mode".into());
            }
        }
        w
    }

    /// Proposal actually used: uniform sampling takes only large steps.
    pub fn effective_proposal(&self) -> ProposalConfig {
        match self.sampler {
            SamplerMode::Mcmc => self.proposal,
            SamplerMode::Uniform => ProposalConfig { p_large: 1.0, ..self.proposal },
        }
    }

    pub fn effective_acceptance(&self) -> AcceptanceMode {
        match self.sampler {
            SamplerMode::Mcmc => self.acceptance,
            SamplerMode::Uniform => AcceptanceMode::Always,
        }
    }

    pub fn effective_resolution_mode(&self) -> ResolutionMode {
        match self.sampler {
            SamplerMode::Mcmc => self.resolution_mode,
            SamplerMode::Uniform => ResolutionMode::Fixed,
        }
    }

    pub fn resolution(&self, iteration: u64) -> usize {
        match self.effective_resolution_mode() {
            ResolutionMode::Adaptive => self.schedule.resolution(iteration),
            ResolutionMode::Fixed => self.schedule.r0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_schedule_examples() {
        let s = Schedule::FULL;
        assert_eq!(s.resolution(0), 128);
        assert_eq!(s.resolution(1999), 128);
        assert_eq!(s.resolution(2000), 132);
        assert_eq!(s.resolution(u64::MAX), 600);
    }

    #[test]
    fn uniform_overrides() {
        let mut c = TrainConfig::desk("MirrorRoom");
        c.sampler = SamplerMode::Uniform;
        assert_eq!(c.effective_proposal().p_large, 1.0);
        assert_eq!(c.effective_acceptance(), AcceptanceMode::Always);
        assert_eq!(c.resolution(100_000), c.schedule.r0);
        assert_eq!(c.warnings().len(), 2);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let mut c = TrainConfig::desk("MirrorRoom");
        assert!(c.validate().is_ok());
        c.schedule.r0 = 16;
        assert!(c.validate().is_err());
        c.schedule = Schedule { period: 0, ..Schedule::DESK };
        assert!(c.validate().is_err());
        c.schedule = Schedule { r_max: 32, ..Schedule::DESK };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = TrainConfig::desk("CausticBox");
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
        assert_eq!("loss-only".parse::<TargetMode>().unwrap(), TargetMode::LossOnly);
        assert!("sideways".parse::<SamplerMode>().is_err());
    }
}
