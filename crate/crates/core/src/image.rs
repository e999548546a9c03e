//! Float images with PFM and PPM encoders.
//!
//! PFM files are written little-endian (negative scale) with scanlines
//! bottom-up, as the format prescribes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed PFM: {0}")]
    Malformed(String),
}

/// Row-major single- or three-channel float image. Row 0 is the top row.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3);
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Image { width, height, channels, data }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = self.index(x, y);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Copies `src` into `self` with its top-left corner at `(x0, y0)`.
    pub fn blit(&mut self, src: &Image, x0: usize, y0: usize) {
        assert_eq!(self.channels, src.channels);
        for y in 0..src.height {
            let d = self.index(x0, y0 + y);
            let s = src.index(0, y);
            let n = src.width * src.channels;
            self.data[d..d + n].copy_from_slice(&src.data[s..s + n]);
        }
    }

    /// Extracts the `w x h` window at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        let mut out = Image::new(w, h, self.channels);
        for y in 0..h {
            let s = self.index(x0, y0 + y);
            let d = out.index(0, y);
            let n = w * self.channels;
            out.data[d..d + n].copy_from_slice(&self.data[s..s + n]);
        }
        out
    }

    /// Largest Rec. 709 luminance over all pixels (the value itself for
    /// single-channel images).
    pub fn max_luminance(&self) -> f64 {
        self.data.chunks_exact(self.channels).map(luminance).fold(0.0, f64::max)
    }

    pub fn encode_pfm(&self) -> Vec<u8> {
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 4);
        for y in (0..self.height).rev() {
            let row = self.index(0, y);
            for v in &self.data[row..row + self.width * self.channels] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode_pfm(bytes: &[u8]) -> Result<Image, ImageError> {
        let mut fields = Vec::new();
        let mut pos = 0;
        // Header: three whitespace-separated tokens lines (tag, dims, scale).
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::Malformed("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        pos += 1; // single whitespace byte after the scale
        let channels = match fields[0].as_str() {
            "PF" => 3,
            "Pf" => 1,
            t => return Err(ImageError::Malformed(format!("unknown tag {t}"))),
        };
        let parse = |s: &str| s.parse::<usize>().map_err(|_| ImageError::Malformed(format!("bad size {s}")));
        let width = parse(&fields[1])?;
        let height = parse(&fields[2])?;
        let scale: f32 = fields[3].parse().map_err(|_| ImageError::Malformed("bad scale".into()))?;
        let little = scale < 0.0;
        let n = width * height * channels;
        let body = bytes.get(pos..pos + 4 * n).ok_or_else(|| ImageError::Malformed("truncated data".into()))?;
        let mut img = Image::new(width, height, channels);
        let row_len = width * channels;
        for (k, chunk) in body.chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            let file_row = k / row_len;
            let y = height - 1 - file_row;
            img.data[y * row_len + k % row_len] = v;
        }
        Ok(img)
    }

    pub fn write_pfm(&self, path: &Path) -> Result<(), ImageError> {
        fs::write(path, self.encode_pfm())?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<Image, ImageError> {
        Image::decode_pfm(&fs::read(path)?)
    }

    /// 8-bit sRGB-ish bytes: `exposure` scale, clamp to `[0, 1]`, gamma 2.2.
    pub fn to_rgb8(&self, exposure: f32) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for px in self.data.chunks_exact(self.channels) {
            for c in 0..3 {
                let v = px[if self.channels == 3 { c } else { 0 }];
                out.push(tonemap_byte(v * exposure));
            }
        }
        out
    }

    pub fn encode_ppm(&self, exposure: f32) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_rgb8(exposure));
        out
    }

    pub fn write_ppm(&self, path: &Path, exposure: f32) -> Result<(), ImageError> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        f.write_all(&self.encode_ppm(exposure))?;
        Ok(())
    }
}

pub fn luminance(px: &[f32]) -> f64 {
    match px {
        [r, g, b] => 0.2126 * *r as f64 + 0.7152 * *g as f64 + 0.0722 * *b as f64,
        [v] => *v as f64,
        _ => panic!("pixel must have 1 or 3 channels"),
    }
}

#[inline]
pub fn tonemap_byte(v: f32) -> u8 {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    (v.powf(1.0 / 2.2) * 255.0 + 0.5) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_is_bottom_up_little_endian() {
        let mut img = Image::new(2, 2, 1);
        img.data = vec![1.0, 2.0, 3.0, 4.0];
        let bytes = img.encode_pfm();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0, "bottom row first");
        assert_eq!(Image::decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn truncated_pfm_is_an_error() {
        let img = Image::new(4, 3, 3);
        let bytes = img.encode_pfm();
        assert!(Image::decode_pfm(&bytes[..bytes.len() - 2]).is_err());
    }

    #[test]
    fn tonemap_is_gamma_22() {
        assert_eq!(tonemap_byte(0.0), 0);
        assert_eq!(tonemap_byte(1.0), 255);
        assert_eq!(tonemap_byte(7.0), 255);
        assert_eq!(tonemap_byte(0.5), (0.5f32.powf(1.0 / 2.2) * 255.0 + 0.5) as u8);
    }
}
