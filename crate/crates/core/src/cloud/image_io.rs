use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::histogram_equalize;
use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::Argument(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> f64 {
        self.pixels[row as usize * self.width as usize + col as usize]
    }

    #[inline]
    pub fn set(&mut self, col: u32, row: u32, v: f64) {
        let w = self.width as usize;
        self.pixels[row as usize * w + col as usize] = v;
    }

    pub fn equalized(mut self) -> Self {
        if !self.pixels.is_empty() {
            self.pixels = histogram_equalize(&self.pixels);
        }
        self
    }

    /// Loads any PNG; color images are converted to luma. 8- and 16-bit
    /// depths map to `[0, 1]`.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?;
        let gray = match img {
            DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                let px = g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
                GrayImage::from_pixels(w, h, px)?
            }
            _ => {
                let g = img.to_luma16();
                let (w, h) = g.dimensions();
                let px = g.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
                GrayImage::from_pixels(w, h, px)?
            }
        };
        Ok(gray)
    }

    /// Saves as a 16-bit grayscale PNG.
    pub fn save_png16(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: Vec<u16> = self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, raw).expect("buffer size matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Saves as an 8-bit grayscale PNG.
    pub fn save_png8(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let raw: Vec<u8> = self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        ImageBuffer::from_raw(self.width, self.height, raw).expect("buffer size matches dimensions")
    }

    /// Encodes as an 8-bit PNG in memory.
    pub fn encode_png8(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_luma8().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}
