//! Binary checkpoints of network weights and optimizer moments.
//!
//! Layout (little-endian): magic `GLNT`, version `u32`, scene dim `u32`,
//! hidden width `u32`, layer count `u32`, then all weights as `f32` in
//! layer order, Adam first and second moments, and the Adam step count as
//! `u64`. Version 2 inserts a `u32` flag word after the layer count; bit 0
//! marks a network without position preconditioning.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::adam::{AdamConfig, AdamState};
use super::{NetShape, PixelGenerator};

pub const MAGIC: &[u8; 4] = b"GLNT";
const FLAG_NO_PRECONDITION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint was trained for scene dim {found}, space has dim {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid network shape in checkpoint: {0}")]
    Shape(String),
}

pub fn encode(net: &PixelGenerator<f32>, adam: &AdamState) -> Vec<u8> {
    let shape = net.shape();
    let n = net.params.len();
    assert_eq!(adam.m.len(), n, "optimizer size");
    let mut out = Vec::with_capacity(32 + 12 * n);
    out.extend_from_slice(MAGIC);
    let version: u32 = if shape.precondition { 1 } else { 2 };
    for v in [version, shape.scene_dim as u32, shape.hidden as u32, shape.layers as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if version == 2 {
        out.extend_from_slice(&FLAG_NO_PRECONDITION.to_le_bytes());
    }
    for w in net.params.iter().chain(&adam.m).chain(&adam.v) {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&adam.t.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8], adam_config: AdamConfig) -> Result<(PixelGenerator<f32>, AdamState), CheckpointError> {
    let truncated = |expected: usize| CheckpointError::Truncated { expected, found: bytes.len() };
    if bytes.len() < 4 {
        return Err(truncated(4));
    }
    if &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let u32_at = |i: usize| -> Result<u32, CheckpointError> {
        let b = bytes.get(i..i + 4).ok_or_else(|| truncated(i + 4))?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    };
    let version = u32_at(4)?;
    let (mut at, precondition) = match version {
        1 => (20, true),
        2 => (24, u32_at(20)? & FLAG_NO_PRECONDITION == 0),
        v => return Err(CheckpointError::Version(v)),
    };
    let shape = NetShape {
        scene_dim: u32_at(8)? as usize,
        hidden: u32_at(12)? as usize,
        layers: u32_at(16)? as usize,
        precondition,
    };
    shape.validate().map_err(|e| CheckpointError::Shape(e.to_string()))?;
    let n = shape.param_count();
    let expected = at + 12 * n + 8;
    if bytes.len() != expected {
        return Err(truncated(expected));
    }
    let mut read = |count: usize| -> Vec<f32> {
        let v = bytes[at..at + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        at += 4 * count;
        v
    };
    let mut net = PixelGenerator::zeros(shape);
    net.params = read(n);
    let mut adam = AdamState::new(n, adam_config);
    adam.m = read(n);
    adam.v = read(n);
    adam.t = u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    Ok((net, adam))
}

pub fn save_checkpoint(net: &PixelGenerator<f32>, adam: &AdamState, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode(net, adam))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(PixelGenerator<f32>, AdamState), CheckpointError> {
    decode(&fs::read(path)?, AdamConfig::default())
}

/// Loads a checkpoint and checks it was trained for a space of `scene_dim`.
pub fn load_for_space(path: &Path, scene_dim: usize) -> Result<(PixelGenerator<f32>, AdamState), CheckpointError> {
    let (net, adam) = load_checkpoint(path)?;
    if net.shape().scene_dim != scene_dim {
        return Err(CheckpointError::DimMismatch { expected: scene_dim, found: net.shape().scene_dim });
    }
    Ok((net, adam))
}
