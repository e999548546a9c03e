//! Helpers shared by the integration and acceptance test targets.
#![allow(dead_code)]

pub mod physics;

use glint::image::Image;
use glint::net::{batch_gradients, batch_loss, NetShape, PixelBatch, PixelGenerator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean SSIM over 8x8 windows (stride 4) and channels by direct summation.
pub fn naive_ssim(x: &Image, y: &Image, max_val: f64) -> f64 {
    let c1 = (0.01 * max_val) * (0.01 * max_val);
    let c2 = (0.03 * max_val) * (0.03 * max_val);
    let win = 8.min(x.width).min(x.height);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut wy = 0;
    while wy + win <= x.height {
        let mut wx = 0;
        while wx + win <= x.width {
            for c in 0..3 {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for j in wy..wy + win {
                    for i in wx..wx + win {
                        xs.push(x.pixel(i, j)[c] as f64);
                        ys.push(y.pixel(i, j)[c] as f64);
                    }
                }
                let n = xs.len() as f64;
                let mx: f64 = xs.iter().sum::<f64>() / n;
                let my: f64 = ys.iter().sum::<f64>() / n;
                let mut sxx = 0.0;
                let mut syy = 0.0;
                let mut sxy = 0.0;
                for k in 0..xs.len() {
                    sxx += (xs[k] - mx) * (xs[k] - mx) / n;
                    syy += (ys[k] - my) * (ys[k] - my) / n;
                    sxy += (xs[k] - mx) * (ys[k] - my) / n;
                }
                total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
                count += 1;
            }
            wx += 4;
        }
        wy += 4;
    }
    total / count as f64
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, scale: f32) -> Image {
    let data = (0..w * h * 3).map(|_| rng.random::<f32>() * scale).collect();
    Image::from_data(w, h, 3, data)
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, cond_dim: usize) -> PixelBatch<f64> {
    let mut b = PixelBatch::<f64>::zeros(n, cond_dim);
    b.position.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    b.cond.mapv_inplace(|_| rng.random_range(0.0..1.0));
    b.emission.mapv_inplace(|_| if rng.random::<f64>() < 0.1 { 0.5 } else { 0.0 });
    b
}

pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
}

/// Signs of every hidden pre-activation and every loss residual; a
/// perturbation that changes any of them crosses a kink of the
/// piecewise-linear parts and invalidates the difference quotient there.
fn kink_signature(net: &PixelGenerator<f64>, batch: &PixelBatch<f64>, targets: &[&Image]) -> Vec<bool> {
    let (out, cache) = net.forward(batch).unwrap();
    let mut sig: Vec<bool> = cache.pre_activations().iter().flat_map(|z| z.iter().map(|v| *v > 0.0)).collect();
    let mut row = 0;
    for t in targets {
        for (k, &v) in t.data.iter().enumerate() {
            sig.push(out[[row + k / 3, k % 3]] > v as f64);
        }
        row += t.width * t.height;
    }
    sig
}

/// Central differences with step `h` on `samples` random weights of a
/// small 64-bit network, against backpropagation.
pub fn gradient_check(samples: usize, h: f64, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = NetShape::new(2, 8, 4);
    let mut net = PixelGenerator::<f64>::new(shape, seed).unwrap();
    for p in net.params.iter_mut() {
        *p += rng.random_range(-0.05..0.05);
    }
    let (w, hgt) = (8, 8);
    let batch = random_batch(&mut rng, 2 * w * hgt, shape.cond_dim());
    let t1 = random_image(&mut rng, w, hgt, 1.0);
    let t2 = random_image(&mut rng, w, hgt, 1.0);
    let targets = [&t1, &t2];
    let max_val = 1.3;
    let analytic = batch_gradients(&net, &batch, &targets, max_val, false).unwrap().grad;
    let base_sig = kink_signature(&net, &batch, &targets);
    let loss_at = |net: &PixelGenerator<f64>| batch_loss(net, &batch, &targets, max_val).unwrap().0.total;

    let mut result = GradCheck { checked: 0, skipped: 0, max_rel_err: 0.0 };
    while result.checked < samples {
        let i = rng.random_range(0..net.params.len());
        let orig = net.params[i];
        net.params[i] = orig + h;
        let plus_ok = kink_signature(&net, &batch, &targets) == base_sig;
        let lp = loss_at(&net);
        net.params[i] = orig - h;
        let minus_ok = kink_signature(&net, &batch, &targets) == base_sig;
        let lm = loss_at(&net);
        net.params[i] = orig;
        if !(plus_ok && minus_ok) {
            result.skipped += 1;
            assert!(result.skipped < 10 * samples, "too many kink crossings");
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        result.max_rel_err = result.max_rel_err.max(rel);
        result.checked += 1;
    }
    result
}

/// Smooth two-bump density on the unit square with a positive floor.
pub fn analytic_target(u: &[f64]) -> f64 {
    let bump = |cx: f64, cy: f64, s: f64| (-((u[0] - cx).powi(2) + (u[1] - cy).powi(2)) / (2.0 * s * s)).exp();
    0.2 + bump(0.3, 0.35, 0.12) + 0.6 * bump(0.72, 0.7, 0.09)
}

/// Total-variation distance between a Metropolis chain's histogram and the
/// grid-normalized target, on a `bins x bins` grid.
pub fn metropolis_tv(steps: usize, burn_in: usize, bins: usize, seed: u64) -> f64 {
    use glint::explore::{chain_step, AcceptanceMode, Chain, ProposalConfig};
    let mut chain = Chain::new(0, 2, seed);
    let mut target = |u: &[f64]| analytic_target(u);
    let cfg = ProposalConfig::default();
    let mut hist = vec![0u64; bins * bins];
    for k in 0..burn_in + steps {
        chain_step(&mut chain, &mut target, &cfg, AcceptanceMode::Metropolis);
        if k >= burn_in {
            let bx = ((chain.u[0] * bins as f64) as usize).min(bins - 1);
            let by = ((chain.u[1] * bins as f64) as usize).min(bins - 1);
            hist[by * bins + bx] += 1;
        }
    }
    // Oracle: target mass per bin by 8x8 midpoint quadrature within each bin.
    let mut mass = vec![0.0; bins * bins];
    let sub = 8;
    for by in 0..bins {
        for bx in 0..bins {
            let mut m = 0.0;
            for j in 0..sub {
                for i in 0..sub {
                    let x = (bx as f64 + (i as f64 + 0.5) / sub as f64) / bins as f64;
                    let y = (by as f64 + (j as f64 + 0.5) / sub as f64) / bins as f64;
                    m += analytic_target(&[x, y]);
                }
            }
            mass[by * bins + bx] = m;
        }
    }
    let total: f64 = mass.iter().sum();
    let n = steps as f64;
    0.5 * hist.iter().zip(&mass).map(|(&h, &m)| (h as f64 / n - m / total).abs()).sum::<f64>()
}
