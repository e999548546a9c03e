//! Batch loss over patches and the matching weight gradients.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::loss::{patch_loss, PatchLoss};
use super::{ForwardCache, NetError, PixelBatch, PixelGenerator, Scalar};
use crate::image::Image;

/// Loss of a batch: means over patches plus the per-patch values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub total: f64,
    pub l1: f64,
    pub dssim: f64,
    pub per_patch: Vec<PatchLoss>,
}

#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    pub loss: BatchLoss,
    /// Gradient of the batch mean loss.
    pub grad: Vec<T>,
    /// Gradient of each patch's own loss, if requested.
    pub per_patch: Vec<Vec<T>>,
    /// Network predictions, one row per pixel.
    pub prediction: Array2<T>,
}

/// Rows of the batch belonging to each target patch, in order.
fn patch_rows(targets: &[&Image]) -> Vec<std::ops::Range<usize>> {
    let mut at = 0;
    targets
        .iter()
        .map(|t| {
            let r = at..at + t.width * t.height;
            at = r.end;
            r
        })
        .collect()
}

fn loss_of_patch<T: Scalar>(out: &Array2<T>, rows: std::ops::Range<usize>, target: &Image, max_val: f64) -> super::loss::PatchLossGrad {
    let pred: Vec<f64> = out.slice(s![rows, ..]).iter().map(|v| v.as_f64()).collect();
    let tgt: Vec<f64> = target.data.iter().map(|&v| v as f64).collect();
    patch_loss(&pred, &tgt, target.width, target.height, max_val)
}

fn mean_loss(per_patch: Vec<PatchLoss>) -> BatchLoss {
    let n = per_patch.len().max(1) as f64;
    BatchLoss {
        total: per_patch.iter().map(|p| p.total).sum::<f64>() / n,
        l1: per_patch.iter().map(|p| p.l1).sum::<f64>() / n,
        dssim: per_patch.iter().map(|p| p.dssim).sum::<f64>() / n,
        per_patch,
    }
}

/// Loss only, for validation.
pub fn batch_loss<T: Scalar>(
    net: &PixelGenerator<T>,
    batch: &PixelBatch<T>,
    targets: &[&Image],
    max_val: f64,
) -> Result<(BatchLoss, Array2<T>), NetError> {
    check_rows(batch, targets)?;
    let (out, _) = net.forward(batch)?;
    let per = patch_rows(targets)
        .into_iter()
        .zip(targets)
        .map(|(rows, t)| loss_of_patch(&out, rows, t, max_val).loss)
        .collect();
    Ok((mean_loss(per), out))
}

fn check_rows<T: Scalar>(batch: &PixelBatch<T>, targets: &[&Image]) -> Result<(), NetError> {
    let rows: usize = targets.iter().map(|t| t.width * t.height).sum();
    if rows != batch.len() {
        return Err(NetError::DimensionMismatch { expected: rows, got: batch.len() });
    }
    Ok(())
}

/// Forward pass, per-patch losses and backpropagation. The batch holds the
/// pixels of each target patch consecutively in row-major order.
pub fn batch_gradients<T: Scalar>(
    net: &PixelGenerator<T>,
    batch: &PixelBatch<T>,
    targets: &[&Image],
    max_val: f64,
    want_per_patch: bool,
) -> Result<BatchGradients<T>, NetError> {
    check_rows(batch, targets)?;
    let (out, cache): (Array2<T>, ForwardCache<T>) = net.forward(batch)?;
    let n_patches = targets.len() as f64;
    let mut grad = vec![T::zero(); net.params.len()];
    let mut per_patch_grads = Vec::new();
    let mut losses = Vec::with_capacity(targets.len());
    for (rows, target) in patch_rows(targets).into_iter().zip(targets) {
        let lg = loss_of_patch(&out, rows.clone(), target, max_val);
        losses.push(lg.loss);
        let d_out = Array2::from_shape_vec((rows.len(), 3), lg.grad.iter().map(|&g| T::from_f64(g)).collect())
            .expect("patch gradient shape");
        let g = net.backward(&cache, batch, d_out.view(), rows);
        let inv = T::from_f64(1.0 / n_patches);
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc = *acc + *gi * inv;
        }
        if want_per_patch {
            per_patch_grads.push(g);
        }
    }
    Ok(BatchGradients { loss: mean_loss(losses), grad, per_patch: per_patch_grads, prediction: out })
}
