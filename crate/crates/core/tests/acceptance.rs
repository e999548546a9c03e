//! Acceptance suite: one check per primary criterion, each printing a
//! single PASS/FAIL line. Arguments select criteria by number or by a
//! substring of their name; without arguments every criterion runs.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use common::physics;
use glint::eval::state_mass;
use glint::explore::{AcceptanceMode, Chain, ProposalConfig, StepKind};
use glint::image::Image;
use glint::net::patch_loss;
use glint::reuse::{sigmoid, ReuseTracker, DEFAULT_BETA};
use glint::scene::{mirror_room, SceneSpace};
use glint::tracer::MAX_BOUNCES;
use glint::train::{
    resolution, FrameSelection, ResolutionMode, SamplerMode, Schedule, TargetMode, TrainConfig, Trainer,
    ValidationConfig, ValidationSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Collects named sub-checks into one outcome.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    notes: Vec<String>,
    info: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, note: String) {
        if !ok {
            self.failed.push(note.clone());
        }
        self.notes.push(note);
    }

    /// Context printed with the outcome either way.
    fn note(&mut self, note: String) {
        self.info.push(note);
    }

    fn finish(self) -> Outcome {
        let mut detail = if self.failed.is_empty() {
            self.notes.join("; ")
        } else {
            let passed: Vec<&String> = self.notes.iter().filter(|n| !self.failed.contains(n)).collect();
            let passed = passed.iter().map(|n| n.as_str()).collect::<Vec<_>>().join("; ");
            format!("failed: {}; passed: {passed}", self.failed.join("; "))
        };
        for note in &self.info {
            detail.push_str("; ");
            detail.push_str(note);
        }
        outcome(self.failed.is_empty(), detail)
    }
}

fn metropolis_correctness() -> Outcome {
    let tv = common::metropolis_tv(1_000_000, 20_000, 64, 2024);
    outcome(tv < 0.05, format!("TV distance {tv:.4} on a 64x64 grid (need < 0.05)"))
}

/// Desk-scale MirrorRoom setup shared by both samplers.
fn mirror_room_config(iterations: u64) -> TrainConfig {
    let mut c = TrainConfig::desk("MirrorRoom");
    c.iterations = iterations;
    c.patch_size = 8;
    c.schedule = Schedule { r0: 64, increment: 4, period: 200, r_max: 64 };
    c.resolution_mode = ResolutionMode::Fixed;
    c.spp = 64;
    c.hidden = 64;
    c.layers = 4;
    c.reuse = false;
    c.acceptance = AcceptanceMode::Greedy;
    c.adam.lr = 1e-3;
    c.seed = 1;
    c.validation =
        ValidationConfig { every: iterations / 5, frames: 16, spp: 1024, resolution: 64, selection: FrameSelection::MirrorVisible };
    c
}

/// Fraction of the sphere's normalized (x, z) range whose reflection is
/// visible, by midpoint quadrature of the geometric test.
fn band_area_fraction() -> f64 {
    let n = 400;
    let inside = (0..n * n)
        .filter(|i| {
            let ux = ((i % n) as f64 + 0.5) / n as f64;
            let uz = ((i / n) as f64 + 0.5) / n as f64;
            mirror_room::sphere_in_reflection(mirror_room::sphere_center(ux, uz))
        })
        .count();
    inside as f64 / (n * n) as f64
}

fn mirror_room_reproduction() -> Outcome {
    let iterations = 10_000;
    let warmup = 2_000;
    let base = mirror_room_config(iterations);
    let space = SceneSpace::resolve(&base.scene).unwrap();
    let set = Arc::new(ValidationSet::build(&space, &base.validation, 7).unwrap());
    let in_band = |u: &[f64]| mirror_room::sphere_in_reflection(mirror_room::sphere_center(u[0], u[1]));
    let mut results = Vec::new();
    let mut curves = Vec::new();
    for sampler in [SamplerMode::Mcmc, SamplerMode::Uniform] {
        let mut c = base.clone();
        c.sampler = sampler;
        let mut t = Trainer::new(c).unwrap().with_validation(set.clone());
        let out = t.run().unwrap();
        let mass = state_mass(t.chain_rows(), warmup, in_band);
        let curve: Vec<String> =
            out.log.validations().map(|r| format!("{}:{:.4}", r.iteration + 1, r.val_loss.unwrap())).collect();
        curves.push(format!("{sampler:?} validation curve [{}]", curve.join(" ")));
        results.push((mass, out.validation.unwrap().loss));
    }
    let band = band_area_fraction();
    let [(mass_mcmc, val_mcmc), (mass_uniform, val_uniform)] = [results[0], results[1]];
    let gain = 1.0 - val_mcmc / val_uniform;
    let mut checks = Checks::default();
    checks.check(mass_mcmc >= 0.6, format!("MCMC band mass {mass_mcmc:.3} (need >= 0.6)"));
    checks.check(
        (mass_uniform - band).abs() < 0.03,
        format!("uniform band mass {mass_uniform:.3} vs band area {band:.3} (need within 0.03)"),
    );
    checks.check(
        gain >= 0.15,
        format!("mirror-visible validation loss MCMC {val_mcmc:.4} vs uniform {val_uniform:.4}, {:.1}% lower (need >= 15%)", 100.0 * gain),
    );
    for curve in curves {
        checks.note(curve);
    }
    checks.finish()
}

/// Reference EMA seeded by its first observation.
fn oracle_ema(values: &[f64], decay: f64) -> Option<f64> {
    let mut it = values.iter();
    let first = *it.next()?;
    Some(it.fold(first, |acc, &x| decay * acc + (1.0 - decay) * x))
}

fn reuse_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let mut tracker = ReuseTracker::default();
        let (mut new_large, mut reused_large) = (Vec::new(), Vec::new());
        let scale_new = rng.random_range(0.01..2.0);
        let scale_old = rng.random_range(0.01..2.0);
        for _ in 0..rng.random_range(1..3000) {
            let large = rng.random::<f64>() < 0.3;
            if rng.random::<bool>() {
                let loss = scale_new * rng.random::<f64>();
                tracker.observe_new(loss, large);
                if large {
                    new_large.push(loss);
                }
            } else {
                let loss = scale_old * rng.random::<f64>();
                tracker.observe_reused(loss, large);
                if large {
                    reused_large.push(loss);
                }
            }
        }
        let (Some(n), Some(e)) = (oracle_ema(&new_large, 0.99), oracle_ema(&reused_large, 0.99)) else {
            if tracker.reuse_probability().is_ok() {
                return outcome(false, format!("trial {trial}: tracker reports p_s before both averages are seeded"));
            }
            continue;
        };
        let expected = 1.0 / (1.0 + (-(e - n + 4.6)).exp());
        worst = worst.max((tracker.reuse_probability().unwrap() - expected).abs());
    }
    let mut equal = ReuseTracker::default();
    for _ in 0..500 {
        equal.observe_new(0.37, true);
        equal.observe_reused(0.37, true);
    }
    let p_equal = equal.reuse_probability().unwrap();
    let mut checks = Checks::default();
    checks.check(worst < 1e-9, format!("max |p_s - oracle| {worst:.2e} (need < 1e-9)"));
    checks.check((p_equal - 0.99).abs() <= 0.001, format!("equal streams p_s {p_equal:.6} (need 0.99 +- 0.001)"));
    checks.check(sigmoid(DEFAULT_BETA) == p_equal, "equal streams give sigmoid(beta)".to_string());
    checks.finish()
}

fn proposal_statistics() -> Outcome {
    let n = 100_000;
    let config = ProposalConfig::default();
    let mut chain = Chain::new(0, 6, 99);
    chain.f = Some(1.0);
    let mut large = 0usize;
    let mut outside = 0usize;
    for _ in 0..n {
        let p = chain.propose(&config);
        if p.kind == StepKind::Large {
            large += 1;
        }
        outside += p.u.iter().filter(|x| !(0.0..=1.0).contains(*x)).count();
        chain.resolve(p, 1.0, AcceptanceMode::Always);
    }
    let freq = large as f64 / n as f64;
    let mut checks = Checks::default();
    checks.check((freq - 0.30).abs() <= 0.01, format!("large-step frequency {freq:.4} (need 0.30 +- 0.01)"));
    checks.check(outside == 0, format!("{outside} components left [0, 1]"));
    checks.finish()
}

fn schedule_exactness() -> Outcome {
    let closed_form = |it: u64, r0: u64, inc: u64, period: u64, cap: u64| (r0 + inc * (it / period)).min(cap) as usize;
    let mut mismatches = Vec::new();
    let full_iters = [0, 1, 1999, 2000, 2001, 3999, 4000, 6000, 100_000, 235_999, 236_000, 236_001, 1_000_000, u32::MAX as u64];
    for it in full_iters {
        let want = closed_form(it, 128, 4, 2000, 600);
        if resolution(it, &Schedule::FULL) != want {
            mismatches.push(format!("full-scale iter {it}"));
        }
    }
    for it in [0, 199, 200, 399, 400, 3000, 3199, 3200, 10_000] {
        let want = closed_form(it, 64, 4, 200, 128);
        if resolution(it, &Schedule::DESK) != want {
            mismatches.push(format!("desk iter {it}"));
        }
    }
    let spot = [(0, 128), (1999, 128), (2000, 132), (4000, 136), (236_000, 600), (10_000_000, 600)];
    for (it, want) in spot {
        if resolution(it, &Schedule::FULL) != want {
            mismatches.push(format!("full-scale spot value at {it}"));
        }
    }
    outcome(mismatches.is_empty(), if mismatches.is_empty() { "all sampled iterations match".into() } else { mismatches.join(", ") })
}

fn tracer_physics() -> Outcome {
    let mut checks = Checks::default();
    let e = physics::emitter_passthrough_error();
    checks.check(e == 0.0, format!("emitter passthrough error {e}"));
    let plane = physics::furnace_plane(0.6, 1.5, 1024);
    checks.check(
        plane.within(3.0, 1e-6),
        format!("furnace plane {:.6} vs rho*L {:.6} (sigma {:.1e})", plane.mean, plane.expect, plane.sigma),
    );
    let cube = physics::furnace_box(0.5, 1.0, 1024, MAX_BOUNCES as i32);
    checks.check(
        cube.within(3.0, 1e-6),
        format!("furnace box {:.5} vs {:.5} (sigma {:.1e})", cube.mean, cube.expect, cube.sigma),
    );
    let (est, oracle) = physics::direct_lighting(4096);
    let rel = (est - oracle).abs() / oracle;
    checks.check(rel < 0.01, format!("direct lighting rel err {:.3}% (need < 1%)", 100.0 * rel));
    checks.check(physics::seed_determinism(), "seed determinism bitwise".to_string());
    checks.finish()
}

fn gradient_correctness() -> Outcome {
    let mut checks = Checks::default();
    let g = common::gradient_check(200, 1e-4, 21);
    checks.check(
        g.checked == 200 && g.max_rel_err < 1e-4,
        format!("{} weights, max rel err {:.2e} (need < 1e-4)", g.checked, g.max_rel_err),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut self_loss: f64 = 0.0;
    let to64 = |img: &Image| img.data.iter().map(|v| *v as f64).collect::<Vec<_>>();
    for (w, h, max_val) in [(32, 32, 1.0), (16, 8, 2.5), (8, 8, 1.0), (24, 16, 4.0)] {
        let x = common::random_image(&mut rng, w, h, 2.0);
        let y = common::random_image(&mut rng, w, h, 2.0);
        let ours = patch_loss(&to64(&x), &to64(&y), w, h, max_val).loss.dssim;
        let oracle = (1.0 - common::naive_ssim(&x, &y, max_val)) / 2.0;
        worst = worst.max((ours - oracle).abs());
        self_loss = self_loss.max(patch_loss(&to64(&x), &to64(&x), w, h, max_val).loss.total.abs());
    }
    checks.check(worst < 1e-6, format!("DSSIM vs naive oracle {worst:.1e} (need < 1e-6)"));
    checks.check(self_loss == 0.0, format!("loss(x, x) = {self_loss:.1e}"));
    checks.finish()
}

/// Small, fast configuration for log-level comparisons.
fn small_config(scene: &str, iterations: u64) -> TrainConfig {
    let mut c = TrainConfig::desk(scene);
    c.iterations = iterations;
    c.batch_chains = 4;
    c.patch_size = 8;
    c.schedule = Schedule { r0: 32, increment: 8, period: 100, r_max: 64 };
    c.spp = 1;
    c.hidden = 16;
    c.layers = 2;
    c.seed = 77;
    c.validation.every = 0;
    c
}

fn uniform_equivalence() -> Outcome {
    let mut checks = Checks::default();
    for reuse in [true, false] {
        let mut uniform = small_config("CornellVar", 1000);
        uniform.reuse = reuse;
        uniform.sampler = SamplerMode::Uniform;
        uniform.acceptance = AcceptanceMode::Greedy;
        uniform.resolution_mode = ResolutionMode::Adaptive;
        let mut explicit = uniform.clone();
        explicit.sampler = SamplerMode::Mcmc;
        explicit.proposal.p_large = 1.0;
        explicit.acceptance = AcceptanceMode::Always;
        explicit.resolution_mode = ResolutionMode::Fixed;
        let run = |c: TrainConfig| {
            let mut t = Trainer::new(c).unwrap();
            let out = t.run().unwrap();
            (out.log.without_timing(), t.chain_rows().to_vec(), out.checkpoint)
        };
        let (log_u, rows_u, ckpt_u) = run(uniform);
        let (log_e, rows_e, ckpt_e) = run(explicit);
        let replays = log_u.iter().filter(|r| r.decision == glint::reuse::Decision::Reuse).count();
        let label = if reuse { "reuse on" } else { "reuse off" };
        checks.check(
            log_u.len() == 1000 && log_u == log_e,
            format!("{label}: {} identical log rows ({replays} replays)", log_u.len()),
        );
        checks.check(rows_u == rows_e, format!("{label}: {} identical chain rows", rows_u.len()));
        checks.check(ckpt_u == ckpt_e, format!("{label}: identical checkpoints"));
    }
    checks.finish()
}

fn caustic_box_config(iterations: u64, target: TargetMode, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::desk("CausticBox");
    c.iterations = iterations;
    c.patch_size = 8;
    c.schedule = Schedule { r0: 64, increment: 4, period: 200, r_max: 64 };
    c.resolution_mode = ResolutionMode::Fixed;
    c.spp = 16;
    c.reuse = false;
    c.target = target;
    c.seed = seed;
    c.validation = ValidationConfig { every: iterations, frames: 16, spp: 512, resolution: 64, selection: FrameSelection::Uniform };
    c
}

/// Mean final validation DSSIM over three training seeds per target.
fn target_ablation() -> Outcome {
    let iterations = 4000;
    let seeds = [3, 4, 5];
    let base = caustic_box_config(iterations, TargetMode::LossTimesStep, seeds[0]);
    let space = SceneSpace::resolve(&base.scene).unwrap();
    let set = Arc::new(ValidationSet::build(&space, &base.validation, 11).unwrap());
    let dssim = |target: TargetMode| -> Vec<f64> {
        seeds
            .iter()
            .map(|&seed| {
                let mut t = Trainer::new(caustic_box_config(iterations, target, seed)).unwrap().with_validation(set.clone());
                t.run().unwrap().validation.unwrap().dssim
            })
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let show = |v: &[f64]| v.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>().join(" ");
    let with_step = dssim(TargetMode::LossTimesStep);
    let loss_only = dssim(TargetMode::LossOnly);
    let worse = mean(&loss_only) / mean(&with_step) - 1.0;
    outcome(
        worse >= 0.05,
        format!(
            "mean validation DSSIM loss-only {:.4} [{}] vs loss x step {:.4} [{}], {:.1}% worse (need >= 5%)",
            mean(&loss_only),
            show(&loss_only),
            mean(&with_step),
            show(&with_step),
            100.0 * worse
        ),
    )
}

fn end_to_end_determinism() -> Outcome {
    let mut c = small_config("MirrorRoom", 300);
    c.validation = ValidationConfig { every: 100, frames: 2, spp: 8, resolution: 32, selection: FrameSelection::Uniform };
    let run = || {
        let mut t = Trainer::new(c.clone()).unwrap();
        let out = t.run().unwrap();
        (out.log, t.chain_rows().to_vec(), out.checkpoint)
    };
    let (log_a, rows_a, ckpt_a) = run();
    let (log_b, rows_b, ckpt_b) = run();
    let mut checks = Checks::default();
    checks.check(
        log_a.without_timing() == log_b.without_timing(),
        format!("{} identical log rows, {} with validation", log_a.rows().len(), log_a.validations().count()),
    );
    checks.check(rows_a == rows_b, "identical chain rows".to_string());
    checks.check(ckpt_a == ckpt_b, format!("identical {}-byte checkpoints", ckpt_a.len()));
    checks.finish()
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "metropolis correctness", metropolis_correctness),
    (2, "mirror room exploration", mirror_room_reproduction),
    (3, "reuse probability exactness", reuse_exactness),
    (4, "proposal statistics", proposal_statistics),
    (5, "resolution schedule", schedule_exactness),
    (6, "tracer physics", tracer_physics),
    (7, "gradient correctness", gradient_correctness),
    (8, "uniform baseline equivalence", uniform_equivalence),
    (9, "target function ablation", target_ablation),
    (10, "end-to-end determinism", end_to_end_determinism),
];

fn selected(filters: &[String], n: u32, name: &str) -> bool {
    filters.is_empty() || filters.iter().any(|f| f.parse::<u32>().map_or(name.contains(f.as_str()), |k| k == n))
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (n, name, check) in CRITERIA {
        if !selected(&filters, n, name) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
