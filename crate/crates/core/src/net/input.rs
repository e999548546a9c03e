//! Assembly of per-pixel network inputs from G-buffers.

use ndarray::{concatenate, Array2, Axis};

use super::Scalar;
use crate::scene::Camera;
use crate::tracer::GBufferPatch;

/// Network inputs for a batch of pixels, one row per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBatch<T> {
    pub position: Array2<T>,
    /// Normal, albedo, roughness, outgoing direction, camera, scene vector.
    pub cond: Array2<T>,
    pub emission: Array2<T>,
    pub mask: Vec<bool>,
}

impl<T: Scalar> PixelBatch<T> {
    pub fn zeros(n: usize, cond_dim: usize) -> Self {
        PixelBatch {
            position: Array2::zeros((n, 3)),
            cond: Array2::zeros((n, cond_dim)),
            emission: Array2::zeros((n, 3)),
            mask: vec![true; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// Inputs for every pixel of `gbuffer`, rows in row-major pixel order.
    pub fn from_gbuffer(gbuffer: &GBufferPatch, scene_vector: &[f64], camera: &Camera) -> Self {
        let n = gbuffer.texels.len();
        let cond_dim = super::FIXED_COND_DIM + scene_vector.len();
        let mut b = PixelBatch::zeros(n, cond_dim);
        let cam = camera.to_array();
        let f = |v: f32| T::from_f64(v as f64);
        for (i, t) in gbuffer.texels.iter().enumerate() {
            b.mask[i] = t.hit;
            for k in 0..3 {
                b.position[[i, k]] = f(t.position[k]);
                b.emission[[i, k]] = f(t.emission[k]);
            }
            let mut row = b.cond.row_mut(i);
            let mut c = 0;
            let mut push = |v: T| {
                row[c] = v;
                c += 1;
            };
            t.normal.iter().for_each(|&v| push(f(v)));
            t.albedo.iter().for_each(|&v| push(f(v)));
            push(f(t.roughness));
            t.omega_o.iter().for_each(|&v| push(f(v)));
            cam.iter().for_each(|&v| push(T::from_f64(v)));
            scene_vector.iter().for_each(|&v| push(T::from_f64(v)));
        }
        b
    }

    /// Row-wise concatenation.
    pub fn stack(parts: &[PixelBatch<T>]) -> Self {
        let cat = |f: fn(&PixelBatch<T>) -> &Array2<T>| {
            let views: Vec<_> = parts.iter().map(|p| f(p).view()).collect();
            concatenate(Axis(0), &views).expect("matching columns")
        };
        PixelBatch {
            position: cat(|p| &p.position),
            cond: cat(|p| &p.cond),
            emission: cat(|p| &p.emission),
            mask: parts.iter().flat_map(|p| p.mask.iter().copied()).collect(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        PixelBatch {
            position: self.position.select(Axis(0), rows),
            cond: self.cond.select(Axis(0), rows),
            emission: self.emission.select(Axis(0), rows),
            mask: rows.iter().map(|&r| self.mask[r]).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> PixelBatch<U> {
        let c = |a: &Array2<T>| a.mapv(|v| U::from_f64(v.as_f64()));
        PixelBatch {
            position: c(&self.position),
            cond: c(&self.cond),
            emission: c(&self.emission),
            mask: self.mask.clone(),
        }
    }
}
