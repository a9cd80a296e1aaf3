//! 8-bit RGB rasters and PNG/JPEG codec helpers.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage as ImageBuffer};

use super::DatasetError;

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    /// Builds a raster from row-major pixels. Fails on zero dimensions or a
    /// pixel count that does not equal `width * height`.
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self, DatasetError> {
        if width == 0 || height == 0 {
            return Err(DatasetError::InvalidImage(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(DatasetError::InvalidImage(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width as usize * height as usize,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Solid-color raster. Panics on zero dimensions.
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, color: [u8; 3]) {
        let i = self.index(x, y);
        self.pixels[i] = color;
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "pixel ({x},{y}) out of bounds");
        y as usize * self.width as usize + x as usize
    }

    pub fn from_buffer(buf: &ImageBuffer) -> Result<Self, DatasetError> {
        let pixels = buf.pixels().map(|p| p.0).collect();
        Self::new(buf.width(), buf.height(), pixels)
    }

    pub fn to_buffer(&self) -> ImageBuffer {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        ImageBuffer::from_raw(self.width, self.height, raw).expect("pixel count checked at construction")
    }

    /// Decodes PNG or JPEG bytes into RGB, dropping any alpha channel.
    pub fn decode(bytes: &[u8]) -> Result<Self, DatasetError> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| DatasetError::InvalidImage(e.to_string()))?;
        Self::from_buffer(&img.to_rgb8())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let bytes = std::fs::read(path).map_err(|e| DatasetError::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            DatasetError::InvalidImage(msg) => {
                DatasetError::InvalidImage(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Lossless PNG encoding.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.to_buffer()
            .write_to(&mut out, ImageFormat::Png)
            .expect("PNG encoding into memory cannot fail");
        out.into_inner()
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.encode_png()).map_err(|e| DatasetError::io(path, e))
    }
}
