//! Per-iteration training log.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::validation::ValidationMetrics;
use crate::reuse::Decision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: u64,
    pub wall_seconds: f64,
    pub decision: Decision,
    pub resolution: usize,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    /// Reuse probability at decision time; 0 with reuse disabled.
    pub p_s: f64,
    /// Chains that moved this iteration.
    pub accepted: usize,
    /// Mean and maximum target value over the chains' current states.
    pub f_mean: f64,
    pub f_max: f64,
    pub val_loss: Option<f64>,
    pub val_mape: Option<f64>,
    pub val_mae: Option<f64>,
    pub val_dssim: Option<f64>,
}

impl LogRow {
    pub fn set_validation(&mut self, m: &ValidationMetrics) {
        self.val_loss = Some(m.loss);
        self.val_mape = Some(m.mape);
        self.val_mae = Some(m.mae);
        self.val_dssim = Some(m.dssim);
    }
}

/// Append-only sequence of log rows with strictly increasing iterations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.iteration > last.iteration, "log iterations must increase");
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[LogRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// The rows with wall-clock times zeroed, for run-to-run comparison.
    pub fn without_timing(&self) -> Vec<LogRow> {
        self.rows.iter().map(|r| LogRow { wall_seconds: 0.0, ..r.clone() }).collect()
    }

    /// Rows carrying validation metrics.
    pub fn validations(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.val_loss.is_some())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> csv::Result<Self> {
        let mut log = TrainLog::default();
        for row in csv::Reader::from_reader(r).deserialize() {
            log.rows.push(row?);
        }
        Ok(log)
    }
}
