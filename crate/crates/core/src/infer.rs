//! Network inference over G-buffers: patches and full images.

use ndarray::Array2;
use rayon::prelude::*;

use crate::image::Image;
use crate::net::{NetError, PixelBatch, PixelGenerator};
use crate::scene::{Camera, SceneInstance};
use crate::tracer::{gbuffer_patch, GBufferPatch, PatchWindow};

/// Rows per forward call when rendering large windows.
const CHUNK_ROWS: usize = 4096;

fn rows_to_image(out: &Array2<f32>, width: usize, height: usize) -> Image {
    Image::from_data(width, height, 3, out.iter().copied().collect())
}

/// Predicted radiance for every pixel of a G-buffer.
pub fn predict_gbuffer(
    net: &PixelGenerator<f32>,
    gbuffer: &GBufferPatch,
    scene_vector: &[f64],
    camera: &Camera,
) -> Result<Image, NetError> {
    let batch = PixelBatch::<f32>::from_gbuffer(gbuffer, scene_vector, camera);
    let (w, h) = (gbuffer.window.width, gbuffer.window.height);
    if batch.len() <= CHUNK_ROWS {
        let (out, _) = net.forward(&batch)?;
        return Ok(rows_to_image(&out, w, h));
    }
    let chunks: Vec<Vec<usize>> =
        (0..batch.len()).step_by(CHUNK_ROWS).map(|s| (s..(s + CHUNK_ROWS).min(batch.len())).collect()).collect();
    let parts = chunks
        .par_iter()
        .map(|rows| net.forward(&batch.select_rows(rows)).map(|(out, _)| out))
        .collect::<Result<Vec<_>, _>>()?;
    let data = parts.iter().flat_map(|p| p.iter().copied()).collect();
    Ok(Image::from_data(w, h, 3, data))
}

/// Traces the G-buffer of `window` and evaluates the network on it.
pub fn render_window(
    net: &PixelGenerator<f32>,
    instance: &SceneInstance,
    scene_vector: &[f64],
    window: &PatchWindow,
) -> Result<Image, NetError> {
    let g = gbuffer_patch(instance, window);
    predict_gbuffer(net, &g, scene_vector, &instance.camera)
}

/// Full `resolution x resolution` network rendering.
pub fn render_network(
    net: &PixelGenerator<f32>,
    instance: &SceneInstance,
    scene_vector: &[f64],
    resolution: usize,
) -> Result<Image, NetError> {
    render_window(net, instance, scene_vector, &PatchWindow::full(resolution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetShape;
    use crate::scene::{builtin, instantiate, SceneVector};

    #[test]
    fn chunked_matches_single_forward() {
        let (space, _) = builtin("MirrorRoom").unwrap();
        let v = SceneVector::new(vec![0.5, 0.5]).unwrap();
        let inst = instantiate(&space, &v, space.camera().default_camera());
        let net = PixelGenerator::<f32>::new(NetShape::new(2, 16, 4), 3).unwrap();
        let big = render_network(&net, &inst, v.values(), 80).unwrap();
        assert_eq!(big.width, 80);
        let win = PatchWindow::square(80, 10, 70, 10);
        let small = render_window(&net, &inst, v.values(), &win).unwrap();
        assert_eq!(small, big.crop(10, 70, 10, 10));
    }

    #[test]
    fn vector_length_is_checked() {
        let (space, _) = builtin("MirrorRoom").unwrap();
        let v = SceneVector::new(vec![0.5, 0.5]).unwrap();
        let inst = instantiate(&space, &v, space.camera().default_camera());
        let net = PixelGenerator::<f32>::new(NetShape::new(3, 8, 4), 3).unwrap();
        assert!(matches!(render_network(&net, &inst, v.values(), 16), Err(NetError::DimensionMismatch { .. })));
    }
}
