//! Image metrics, chain-state histograms and run comparison reports.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::explore::{read_chain_rows, ChainCsvError, ChainRow};
use crate::image::Image;
use crate::net::patch_loss;

/// Guard added to the reference magnitude in [`mape`].
pub const MAPE_EPS: f64 = 0.01;

fn check_shapes(pred: &Image, reference: &Image) {
    assert_eq!(
        (pred.width, pred.height, pred.channels),
        (reference.width, reference.height, reference.channels),
        "image shapes differ"
    );
}

/// Mean over pixels and channels of `|pred - ref| / (|ref| + 0.01)`.
pub fn mape(pred: &Image, reference: &Image) -> f64 {
    check_shapes(pred, reference);
    let sum: f64 = pred
        .data
        .iter()
        .zip(&reference.data)
        .map(|(&p, &r)| (p as f64 - r as f64).abs() / ((r as f64).abs() + MAPE_EPS))
        .sum();
    sum / pred.data.len().max(1) as f64
}

pub fn mae(pred: &Image, reference: &Image) -> f64 {
    check_shapes(pred, reference);
    let sum: f64 = pred.data.iter().zip(&reference.data).map(|(&p, &r)| (p as f64 - r as f64).abs()).sum();
    sum / pred.data.len().max(1) as f64
}

/// Dynamic range used for SSIM constants: the reference's peak luminance,
/// at least 1.
pub fn reference_range(reference: &Image) -> f64 {
    reference.max_luminance().max(1.0)
}

/// `(1 - SSIM) / 2` with the training loss's windowing.
pub fn dssim(pred: &Image, reference: &Image, max_val: f64) -> f64 {
    check_shapes(pred, reference);
    assert_eq!(pred.channels, 3, "DSSIM expects RGB images");
    let to64 = |img: &Image| img.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
    patch_loss(&to64(pred), &to64(reference), pred.width, pred.height, max_val).loss.dssim
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub mape: f64,
    pub mae: f64,
    pub dssim: f64,
}

impl FrameMetrics {
    pub fn mean(frames: &[FrameMetrics]) -> FrameMetrics {
        let n = frames.len().max(1) as f64;
        FrameMetrics {
            mape: frames.iter().map(|f| f.mape).sum::<f64>() / n,
            mae: frames.iter().map(|f| f.mae).sum::<f64>() / n,
            dssim: frames.iter().map(|f| f.dssim).sum::<f64>() / n,
        }
    }
}

pub fn frame_metrics(pred: &Image, reference: &Image) -> FrameMetrics {
    FrameMetrics { mape: mape(pred, reference), mae: mae(pred, reference), dssim: dssim(pred, reference, reference_range(reference)) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Free-form run label, typically the run directory name.
    pub run: String,
    pub mode: String,
    pub iterations: u64,
    pub wall_seconds: f64,
    pub frames: Vec<FrameMetrics>,
    pub mean: FrameMetrics,
}

impl MetricReport {
    pub fn new(run: &str, mode: &str, iterations: u64, wall_seconds: f64, frames: Vec<FrameMetrics>) -> Self {
        let mean = FrameMetrics::mean(&frames);
        MetricReport { run: run.to_string(), mode: mode.to_string(), iterations, wall_seconds, frames, mean }
    }

    /// One row per frame followed by a `mean` row.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["run", "frame", "mode", "iterations", "mape", "mae", "dssim"])?;
        let rows = self.frames.iter().enumerate().map(|(i, f)| (i.to_string(), f)).chain([("mean".to_string(), &self.mean)]);
        for (label, f) in rows {
            wr.write_record([
                self.run.clone(),
                label,
                self.mode.clone(),
                self.iterations.to_string(),
                format!("{:.6e}", f.mape),
                format!("{:.6e}", f.mae),
                format!("{:.6e}", f.dssim),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "{} ({}) after {} iterations ({:.1} s): MAPE {:.4}  MAE {:.4}  DSSIM {:.4} over {} frames",
            self.run,
            self.mode,
            self.iterations,
            self.wall_seconds,
            self.mean.mape,
            self.mean.mae,
            self.mean.dssim,
            self.frames.len()
        )
    }
}

/// Writes several reports into one CSV, one block of rows per run, so
/// modes can be compared side by side.
pub fn compare_runs<W: Write>(reports: &[MetricReport], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["run", "frame", "mode", "iterations", "wall_seconds", "mape", "mae", "dssim"])?;
    for r in reports {
        let rows = r.frames.iter().enumerate().map(|(i, f)| (i.to_string(), f)).chain([("mean".to_string(), &r.mean)]);
        for (label, f) in rows {
            wr.write_record([
                r.run.clone(),
                label,
                r.mode.clone(),
                r.iterations.to_string(),
                format!("{:.3}", r.wall_seconds),
                format!("{:.6e}", f.mape),
                format!("{:.6e}", f.mae),
                format!("{:.6e}", f.dssim),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Counts of chain states projected onto two components.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    pub bins: usize,
    /// Row-major, row index from component `j`.
    pub counts: Vec<u64>,
}

impl Histogram2d {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn nonzero_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Single-channel grid of bin fractions, row 0 at `u_j` near 0.
    pub fn to_image(&self) -> Image {
        let total = self.total().max(1) as f32;
        Image::from_data(self.bins, self.bins, 1, self.counts.iter().map(|&c| c as f32 / total).collect())
    }

    /// Pearson chi-square statistic and p-value against equal bin mass.
    pub fn chi_square_uniform(&self) -> (f64, f64) {
        let k = self.counts.len();
        let expected = self.total() as f64 / k as f64;
        let stat: f64 = self.counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dist = ChiSquared::new((k - 1) as f64).expect("at least two bins");
        (stat, 1.0 - dist.cdf(stat))
    }
}

fn bin(u: f64, bins: usize) -> usize {
    ((u * bins as f64) as usize).min(bins - 1)
}

/// Histogram of the states of all rows with `iteration >= warmup`.
pub fn chain_histogram(rows: &[ChainRow], dims: (usize, usize), bins: usize, warmup: u64) -> Histogram2d {
    assert!(bins > 0, "need at least one bin");
    let mut counts = vec![0u64; bins * bins];
    for r in rows.iter().filter(|r| r.iteration >= warmup) {
        counts[bin(r.state[dims.1], bins) * bins + bin(r.state[dims.0], bins)] += 1;
    }
    Histogram2d { bins, counts }
}

pub fn chain_histogram_csv<R: Read>(
    reader: R,
    dims: (usize, usize),
    bins: usize,
    warmup: u64,
) -> Result<Histogram2d, ChainCsvError> {
    let rows = read_chain_rows(reader)?;
    if let Some(r) = rows.iter().find(|r| r.state.len() <= dims.0.max(dims.1)) {
        return Err(ChainCsvError::Bad {
            line: r.iteration,
            msg: format!("state has {} components, dims {:?} requested", r.state.len(), dims),
        });
    }
    Ok(chain_histogram(rows.as_slice(), dims, bins, warmup))
}

/// Fraction of post-warmup chain states satisfying `inside`.
pub fn state_mass(rows: &[ChainRow], warmup: u64, inside: impl Fn(&[f64]) -> bool) -> f64 {
    let post: Vec<&ChainRow> = rows.iter().filter(|r| r.iteration >= warmup).collect();
    if post.is_empty() {
        return 0.0;
    }
    post.iter().filter(|r| inside(&r.state)).count() as f64 / post.len() as f64
}
