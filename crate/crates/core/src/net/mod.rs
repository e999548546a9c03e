//! The per-pixel generator network, its loss, optimizer and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod input;
pub mod loss;
pub mod objective;

use std::fmt::Debug;
use std::ops::Range;

use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, LinalgScalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use input::PixelBatch;
pub use loss::{patch_loss, PatchLoss};
pub use objective::{batch_gradients, batch_loss, BatchGradients, BatchLoss};

/// Inputs besides position: normal, albedo, roughness, outgoing direction
/// and the six camera values; the scene vector is appended to these.
pub const FIXED_COND_DIM: usize = 3 + 3 + 1 + 3 + 6;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
}

/// Floating-point types the network runs in.
pub trait Scalar: LinalgScalar + num_traits::Float + Send + Sync + Debug + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub scene_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Route the position alone through the first layer.
    pub precondition: bool,
}

/// What a hidden layer sees next to the previous activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Extra {
    None,
    Cond,
    Full,
}

impl NetShape {
    pub fn new(scene_dim: usize, hidden: usize, layers: usize) -> Self {
        NetShape { scene_dim, hidden, layers, precondition: true }
    }

    pub fn cond_dim(&self) -> usize {
        FIXED_COND_DIM + self.scene_dim
    }

    /// 1-based index of the hidden layer that re-reads the full input.
    pub fn skip_layer(&self) -> usize {
        self.layers / 2 + 2
    }

    fn extra(&self, layer: usize) -> Extra {
        if layer == 2 && self.precondition {
            Extra::Cond
        } else if layer == self.skip_layer() {
            Extra::Full
        } else {
            Extra::None
        }
    }

    fn extra_dim(&self, e: Extra) -> usize {
        match e {
            Extra::None => 0,
            Extra::Cond => self.cond_dim(),
            Extra::Full => 3 + self.cond_dim(),
        }
    }

    /// `(fan_in, fan_out)` of every layer, hidden layers first, then the head.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layers + 1);
        let first_in = if self.precondition { 3 } else { 3 + self.cond_dim() };
        dims.push((first_in, self.hidden));
        for l in 2..=self.layers {
            dims.push((self.hidden + self.extra_dim(self.extra(l)), self.hidden));
        }
        dims.push((self.hidden, 3));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers < 2 {
            return Err(NetError::InvalidShape("at least two hidden layers are required".into()));
        }
        if self.hidden == 0 {
            return Err(NetError::InvalidShape("hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// Fully connected generator with flat parameter storage. Each layer holds
/// a row-major `fan_in x fan_out` weight matrix followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGenerator<T: Scalar> {
    shape: NetShape,
    offsets: Vec<usize>,
    pub params: Vec<T>,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input matrix of every layer, head last.
    inputs: Vec<Array2<T>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<T>>,
    /// Raw network output (before the emission passthrough).
    pub net_out: Array2<T>,
}

impl<T> ForwardCache<T> {
    /// Pre-activations of every hidden layer.
    pub fn pre_activations(&self) -> &[Array2<T>] {
        &self.pre
    }
}

#[inline]
fn leaky<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z
    } else {
        z * T::from_f64(LEAKY_SLOPE)
    }
}

#[inline]
fn leaky_grad<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        T::one()
    } else {
        T::from_f64(LEAKY_SLOPE)
    }
}

impl<T: Scalar> PixelGenerator<T> {
    /// He-uniform weights drawn from a fixed seed, zero biases.
    pub fn new(shape: NetShape, seed: u64) -> Result<Self, NetError> {
        shape.validate()?;
        let mut net = PixelGenerator::zeros(shape);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, (fan_in, fan_out)) in shape.layer_dims().into_iter().enumerate() {
            let bound = (6.0 / fan_in as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn zeros(shape: NetShape) -> Self {
        let mut offsets = Vec::new();
        let mut at = 0;
        for (i, o) in shape.layer_dims() {
            offsets.push(at);
            at += i * o + o;
        }
        PixelGenerator { shape, offsets, params: vec![T::zero(); at] }
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> PixelGenerator<U> {
        PixelGenerator {
            shape: self.shape,
            offsets: self.offsets.clone(),
            params: self.params.iter().map(|p| U::from_f64(p.as_f64())).collect(),
        }
    }

    fn weights(&self, l: usize) -> (ArrayView2<'_, T>, ArrayView1<'_, T>) {
        let (i, o) = self.shape.layer_dims()[l];
        let start = self.offsets[l];
        let w = ArrayView2::from_shape((i, o), &self.params[start..start + i * o]).expect("layer shape");
        let b = ArrayView1::from(&self.params[start + i * o..start + i * o + o]);
        (w, b)
    }

    fn grad_views<'a>(&self, grad: &'a mut [T], l: usize) -> (ArrayViewMut2<'a, T>, ArrayViewMut1<'a, T>) {
        let (i, o) = self.shape.layer_dims()[l];
        let start = self.offsets[l];
        let (w, rest) = grad[start..start + i * o + o].split_at_mut(i * o);
        (ArrayViewMut2::from_shape((i, o), w).expect("layer shape"), ArrayViewMut1::from(rest))
    }

    /// Network output plus emission for every pixel of the batch, with the
    /// activations needed by [`PixelGenerator::backward`].
    pub fn forward(&self, batch: &PixelBatch<T>) -> Result<(Array2<T>, ForwardCache<T>), NetError> {
        let cond_dim = self.shape.cond_dim();
        if batch.cond.ncols() != cond_dim {
            return Err(NetError::DimensionMismatch { expected: cond_dim, got: batch.cond.ncols() });
        }
        let full = || concatenate(Axis(1), &[batch.position.view(), batch.cond.view()]).expect("same rows");
        let mut inputs = Vec::with_capacity(self.shape.layers + 1);
        let mut pre = Vec::with_capacity(self.shape.layers);
        let mut h = if self.shape.precondition { batch.position.clone() } else { full() };
        for l in 0..self.shape.layers {
            let layer = l + 1;
            if layer > 1 {
                h = match self.shape.extra(layer) {
                    Extra::None => h,
                    Extra::Cond => concatenate(Axis(1), &[h.view(), batch.cond.view()]).expect("same rows"),
                    Extra::Full => concatenate(Axis(1), &[h.view(), full().view()]).expect("same rows"),
                };
            }
            let (w, b) = self.weights(l);
            let z = h.dot(&w) + b;
            inputs.push(h);
            h = z.mapv(leaky);
            pre.push(z);
        }
        let (w, b) = self.weights(self.shape.layers);
        let mut net_out = h.dot(&w) + b;
        inputs.push(h);
        for (mut row, &hit) in net_out.rows_mut().into_iter().zip(&batch.mask) {
            if !hit {
                row.fill(T::zero());
            }
        }
        let out = &net_out + &batch.emission;
        Ok((out, ForwardCache { inputs, pre, net_out }))
    }

    /// Gradient of the weights given `d_out`, the loss gradient w.r.t. the
    /// outputs of the pixel rows in `rows`. Rows outside the range are
    /// ignored, so disjoint ranges give per-patch gradients whose sum is
    /// the full-batch gradient.
    pub fn backward(&self, cache: &ForwardCache<T>, batch: &PixelBatch<T>, d_out: ArrayView2<T>, rows: Range<usize>) -> Vec<T> {
        assert_eq!(d_out.nrows(), rows.len(), "gradient rows");
        let mut grad = vec![T::zero(); self.params.len()];
        let mut dy = d_out.to_owned();
        for (mut row, &hit) in dy.rows_mut().into_iter().zip(&batch.mask[rows.clone()]) {
            if !hit {
                row.fill(T::zero());
            }
        }
        let h = self.shape.hidden;
        let mut l = self.shape.layers;
        loop {
            let a = cache.inputs[l].slice(s![rows.clone(), ..]);
            let (mut gw, mut gb) = self.grad_views(&mut grad, l);
            gw.assign(&a.t().dot(&dy));
            gb.assign(&dy.sum_axis(Axis(0)));
            if l == 0 {
                break;
            }
            let (w, _) = self.weights(l);
            let da = dy.dot(&w.t());
            // Keep only the columns fed by the previous layer's activations.
            let mut dz = da.slice(s![.., ..h]).to_owned();
            let z = cache.pre[l - 1].slice(s![rows.clone(), ..]);
            dz.zip_mut_with(&z, |d, &zv| *d = *d * leaky_grad(zv));
            dy = dz;
            l -= 1;
        }
        grad
    }
}
