//! Markov chains over the normalized data space: proposals, acceptance
//! and per-step diagnostics.
//!
//! A chain state concatenates the scene vector, the variable camera
//! components (if any) and the normalized patch origin, all in `[0, 1]`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tracer::sampling::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    /// Probability of a large (fresh uniform) step.
    pub p_large: f64,
    /// Standard deviation of the per-component small-step perturbation.
    pub sigma: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig { p_large: 0.3, sigma: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptanceMode {
    /// Accept only strict improvements.
    Greedy,
    /// Accept with probability `min(1, f_new / f_cur)`.
    Metropolis,
    /// Accept every proposal.
    Always,
}

impl AcceptanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AcceptanceMode::Greedy => "greedy",
            AcceptanceMode::Metropolis => "metropolis",
            AcceptanceMode::Always => "always",
        }
    }
}

impl std::str::FromStr for AcceptanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "greedy" => Ok(AcceptanceMode::Greedy),
            "metropolis" => Ok(AcceptanceMode::Metropolis),
            "always" => Ok(AcceptanceMode::Always),
            other => Err(format!("unknown acceptance mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Large,
    Small,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Large => "large",
            StepKind::Small => "small",
        }
    }
}

/// Folds `x` back into `[0, 1]` by mirroring at the boundaries.
pub fn reflect(mut x: f64) -> f64 {
    if !x.is_finite() {
        return 0.5;
    }
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub id: usize,
    pub u: Vec<f64>,
    /// Target value of the current state; `None` until first evaluated.
    pub f: Option<f64>,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub u: Vec<f64>,
    pub kind: StepKind,
}

impl Chain {
    pub fn new(id: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(id as u64 + 1)));
        let u = (0..dim).map(|_| rng.random::<f64>()).collect();
        Chain { id, u, f: None, rng }
    }

    /// Next candidate. A chain that was never evaluated proposes its own
    /// initial state, which counts as a large step.
    pub fn propose(&mut self, config: &ProposalConfig) -> Proposal {
        if self.f.is_none() {
            return Proposal { u: self.u.clone(), kind: StepKind::Large };
        }
        propose(&self.u, config, &mut self.rng)
    }

    /// Accepts or rejects a scored candidate and returns whether it moved.
    pub fn resolve(&mut self, proposal: Proposal, f_proposed: f64, mode: AcceptanceMode) -> bool {
        let Some(f_current) = self.f else {
            self.u = proposal.u;
            self.f = Some(f_proposed);
            return true;
        };
        let ok = accept(f_current, f_proposed, mode, &mut self.rng);
        if ok {
            self.u = proposal.u;
            self.f = Some(f_proposed);
        }
        ok
    }
}

pub fn init_chains(n: usize, dim: usize, seed: u64) -> Vec<Chain> {
    (0..n).map(|id| Chain::new(id, dim, seed)).collect()
}

pub fn propose(u: &[f64], config: &ProposalConfig, rng: &mut impl Rng) -> Proposal {
    if rng.random::<f64>() < config.p_large {
        return Proposal { u: (0..u.len()).map(|_| rng.random::<f64>()).collect(), kind: StepKind::Large };
    }
    let u = if config.sigma > 0.0 {
        let normal = Normal::new(0.0, config.sigma).expect("positive sigma");
        u.iter().map(|&x| reflect(x + normal.sample(rng))).collect()
    } else {
        u.to_vec()
    };
    Proposal { u, kind: StepKind::Small }
}

pub fn accept(f_current: f64, f_proposed: f64, mode: AcceptanceMode, rng: &mut impl Rng) -> bool {
    match mode {
        AcceptanceMode::Greedy => f_proposed > f_current,
        AcceptanceMode::Metropolis => {
            if f_current <= 0.0 {
                return true;
            }
            let a = (f_proposed / f_current).min(1.0);
            rng.random::<f64>() < a
        }
        AcceptanceMode::Always => true,
    }
}

/// An unnormalized target over the unit hypercube.
pub trait Target {
    fn eval(&mut self, u: &[f64]) -> f64;
}

impl<F: FnMut(&[f64]) -> f64> Target for F {
    fn eval(&mut self, u: &[f64]) -> f64 {
        self(u)
    }
}

/// One propose-evaluate-accept step against a fixed target.
pub fn chain_step(chain: &mut Chain, target: &mut impl Target, config: &ProposalConfig, mode: AcceptanceMode) -> StepRecord {
    let p = chain.propose(config);
    let kind = p.kind;
    let f = target.eval(&p.u);
    let accepted = chain.resolve(p, f, mode);
    StepRecord { kind, accepted, f }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub kind: StepKind,
    pub accepted: bool,
    /// Target value of the proposal.
    pub f: f64,
}

/// How a chain state splits into scene vector, camera and patch position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub scene_dim: usize,
    pub camera_dim: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.scene_dim + self.camera_dim + 2
    }

    pub fn scene<'a>(&self, u: &'a [f64]) -> &'a [f64] {
        &u[..self.scene_dim]
    }

    pub fn camera<'a>(&self, u: &'a [f64]) -> &'a [f64] {
        &u[self.scene_dim..self.scene_dim + self.camera_dim]
    }

    pub fn patch(&self, u: &[f64]) -> (f64, f64) {
        let i = self.scene_dim + self.camera_dim;
        (u[i], u[i + 1])
    }
}

/// One row of the per-iteration chain diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRow {
    pub iteration: u64,
    pub chain: usize,
    pub kind: StepKind,
    pub accepted: bool,
    pub f: f64,
    /// State after the step.
    pub state: Vec<f64>,
}

pub fn chain_csv_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "chain", "step", "accepted", "f"].iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|i| format!("u{i}")));
    h
}

pub fn write_chain_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[ChainRow]) -> csv::Result<()> {
    for r in rows {
        let mut rec = vec![
            r.iteration.to_string(),
            r.chain.to_string(),
            r.kind.as_str().to_string(),
            (r.accepted as u8).to_string(),
            format!("{:e}", r.f),
        ];
        rec.extend(r.state.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ChainCsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Bad { line: u64, msg: String },
}

pub fn read_chain_rows<R: Read>(reader: R) -> Result<Vec<ChainRow>, ChainCsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k as u64 + 2;
        let bad = |msg: &str| ChainCsvError::Bad { line, msg: msg.to_string() };
        if rec.len() < 5 {
            return Err(bad("too few columns"));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&format!("column {i} is not a number")));
        let kind = match &rec[2] {
            "large" => StepKind::Large,
            "small" => StepKind::Small,
            _ => return Err(bad("unknown step kind")),
        };
        rows.push(ChainRow {
            iteration: rec[0].parse().map_err(|_| bad("bad iteration"))?,
            chain: rec[1].parse().map_err(|_| bad("bad chain id"))?,
            kind,
            accepted: &rec[3] == "1",
            f: num(4)?,
            state: (5..rec.len()).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok(rows)
}
