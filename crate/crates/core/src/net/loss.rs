//! L1 + DSSIM patch loss with analytic gradients.

use serde::{Deserialize, Serialize};

/// SSIM window side; patches smaller than this use one window of the patch size.
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PatchLoss {
    pub total: f64,
    pub l1: f64,
    pub dssim: f64,
}

/// Loss of one RGB patch together with `d total / d pred`.
#[derive(Debug, Clone)]
pub struct PatchLossGrad {
    pub loss: PatchLoss,
    pub grad: Vec<f64>,
}

/// Window origins along an axis of length `len` for window size `win`.
pub(crate) fn window_starts(len: usize, win: usize) -> Vec<usize> {
    (0..=len - win).step_by(SSIM_STRIDE).collect()
}

pub fn ssim_constants(max_val: f64) -> (f64, f64) {
    ((0.01 * max_val).powi(2), (0.03 * max_val).powi(2))
}

/// Loss of a `width x height` RGB patch stored row-major with interleaved
/// channels. `max_val` sets the SSIM stabilizing constants.
pub fn patch_loss(pred: &[f64], target: &[f64], width: usize, height: usize, max_val: f64) -> PatchLossGrad {
    let n = width * height * 3;
    assert_eq!(pred.len(), n, "prediction size");
    assert_eq!(target.len(), n, "target size");
    assert!(
        pred.iter().chain(target).all(|v| v.is_finite()),
        "loss inputs must be finite"
    );
    let mut grad = vec![0.0; n];

    let mut l1 = 0.0;
    for i in 0..n {
        let d = pred[i] - target[i];
        l1 += d.abs();
        // Subgradient 0 at d == 0.
        grad[i] = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        } / n as f64;
    }
    l1 /= n as f64;

    let (c1, c2) = ssim_constants(max_val);
    let wx = SSIM_WINDOW.min(width);
    let wy = SSIM_WINDOW.min(height);
    let xs = window_starts(width, wx);
    let ys = window_starts(height, wy);
    let count = (xs.len() * ys.len() * 3) as f64;
    let m = (wx * wy) as f64;
    let mut ssim_sum = 0.0;
    for &y0 in &ys {
        for &x0 in &xs {
            for c in 0..3 {
                let idx = |x: usize, y: usize| ((y0 + y) * width + x0 + x) * 3 + c;
                let (mut mx, mut my) = (0.0, 0.0);
                for y in 0..wy {
                    for x in 0..wx {
                        mx += pred[idx(x, y)];
                        my += target[idx(x, y)];
                    }
                }
                mx /= m;
                my /= m;
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for y in 0..wy {
                    for x in 0..wx {
                        let dx = pred[idx(x, y)] - mx;
                        let dy = target[idx(x, y)] - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cxy += dx * dy;
                    }
                }
                vx /= m;
                vy /= m;
                cxy /= m;
                let a1 = 2.0 * mx * my + c1;
                let a2 = 2.0 * cxy + c2;
                let b1 = mx * mx + my * my + c1;
                let b2 = vx + vy + c2;
                let s = a1 * a2 / (b1 * b2);
                ssim_sum += s;
                // dssim = (1 - mean s) / 2, so each window contributes
                // -ds/dx / (2 count).
                let scale = -0.5 / count;
                for y in 0..wy {
                    for x in 0..wx {
                        let i = idx(x, y);
                        let da1 = 2.0 * my / m;
                        let da2 = 2.0 * (target[i] - my) / m;
                        let db1 = 2.0 * mx / m;
                        let db2 = 2.0 * (pred[i] - mx) / m;
                        let ds = (da1 * a2 + a1 * da2) / (b1 * b2) - s * (db1 * b2 + b1 * db2) / (b1 * b2);
                        grad[i] += scale * ds;
                    }
                }
            }
        }
    }
    let dssim = ((1.0 - ssim_sum / count) / 2.0).clamp(0.0, 1.0);
    PatchLossGrad { loss: PatchLoss { total: l1 + dssim, l1, dssim }, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_patch(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0).collect()
    }

    #[test]
    fn identical_patches_have_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_patch(&mut rng, 16 * 16 * 3);
        let r = patch_loss(&x, &x, 16, 16, 1.0);
        assert_eq!(r.loss.l1, 0.0);
        assert!(r.loss.dssim.abs() < 1e-15);
        assert!(r.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn constant_offset_gives_l1_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random_patch(&mut rng, 8 * 8 * 3);
        let x: Vec<f64> = y.iter().map(|v| v + 0.25).collect();
        let r = patch_loss(&x, &y, 8, 8, 1.0);
        assert!((r.loss.l1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn window_layout() {
        assert_eq!(window_starts(32, 8), vec![0, 4, 8, 12, 16, 20, 24]);
        assert_eq!(window_starts(8, 8), vec![0]);
        assert_eq!(window_starts(4, 4), vec![0]);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (12, 9);
        let x = random_patch(&mut rng, w * h * 3);
        let y = random_patch(&mut rng, w * h * 3);
        let r = patch_loss(&x, &y, w, h, 1.5);
        for i in (0..x.len()).step_by(7) {
            let eps = 1e-6;
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let dp = patch_loss(&xp, &y, w, h, 1.5).loss.dssim;
            let dm = patch_loss(&xm, &y, w, h, 1.5).loss.dssim;
            let fd = (dp - dm) / (2.0 * eps);
            let l1_part = (x[i] - y[i]).signum() / x.len() as f64;
            let analytic = r.grad[i] - l1_part;
            assert!((fd - analytic).abs() < 1e-7, "index {i}: {fd} vs {analytic}");
        }
    }
}
