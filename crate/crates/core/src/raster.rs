//! Grayscale rasters with bilinear sampling, plus PNG helpers for images,
//! binary masks and 16-bit label maps.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png error on {path}: {msg}")]
    Png { path: String, msg: String },
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
}

/// Row-major grayscale image, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.width + col] = v;
    }

    /// Bilinear sample at sub-pixel (row, col). Caller guarantees the four
    /// neighbors exist; the plane-sweep validity check enforces it.
    #[inline]
    pub fn bilinear(&self, row: f64, col: f64) -> f32 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = (row - r0) as f32;
        let fc = (col - c0) as f32;
        let r0 = r0 as usize;
        let c0 = c0 as usize;
        let idx = r0 * self.width + c0;
        let top = self.data[idx] * (1.0 - fc) + self.data[idx + 1] * fc;
        let bot = self.data[idx + self.width] * (1.0 - fc) + self.data[idx + self.width + 1] * fc;
        top * (1.0 - fr) + bot * fr
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        Self {
            width,
            height,
            data: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RasterError + '_ {
    move |source| RasterError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<(), RasterError> {
    image::save_buffer(
        path,
        &img.to_u8(),
        img.width as u32,
        img.height as u32,
        image::ColorType::L8,
    )
    .map_err(|e| RasterError::Png {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn read_gray_png(path: &Path) -> Result<GrayImage, RasterError> {
    let img = image::open(path)
        .map_err(|e| RasterError::Png {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .into_luma8();
    Ok(GrayImage::from_u8(
        img.width() as usize,
        img.height() as usize,
        img.as_raw(),
    ))
}

/// 16-bit instance label raster; label 0 is background.
pub fn write_label_png(
    path: &Path,
    width: usize,
    height: usize,
    labels: &[u16],
) -> Result<(), RasterError> {
    let mut bytes = Vec::with_capacity(labels.len() * 2);
    for &l in labels {
        // save_buffer expects 16-bit samples in native endian.
        bytes.extend_from_slice(&l.to_ne_bytes());
    }
    image::save_buffer(
        path,
        &bytes,
        width as u32,
        height as u32,
        image::ColorType::L16,
    )
    .map_err(|e| RasterError::Png {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

pub fn read_label_png(path: &Path) -> Result<(usize, usize, Vec<u16>), RasterError> {
    let img = image::open(path)
        .map_err(|e| RasterError::Png {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .into_luma16();
    Ok((
        img.width() as usize,
        img.height() as usize,
        img.as_raw().clone(),
    ))
}

/// Binary mask PNG: any nonzero sample is a member pixel.
pub fn write_mask_png(
    path: &Path,
    width: usize,
    height: usize,
    bits: &[bool],
) -> Result<(), RasterError> {
    let bytes: Vec<u8> = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, width as u32, height as u32, image::ColorType::L8).map_err(
        |e| RasterError::Png {
            path: path.display().to_string(),
            msg: e.to_string(),
        },
    )
}

pub fn read_mask_png(path: &Path) -> Result<(usize, usize, Vec<bool>), RasterError> {
    let img = image::open(path)
        .map_err(|e| RasterError::Png {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?
        .into_luma8();
    Ok((
        img.width() as usize,
        img.height() as usize,
        img.as_raw().iter().map(|&b| b != 0).collect(),
    ))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, RasterError> {
    std::fs::read(path).map_err(io_err(path))
}
