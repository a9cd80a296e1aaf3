//! Sign-specific output stage: color-coded segmentation map to binary mask.

use std::path::{Path, PathBuf};

use image::GrayImage;

use crate::dataset::{DatasetError, RgbImage};

pub type Rgb = [u8; 3];

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("legend line {line}: {message}")]
    LegendParse { line: usize, message: String },
    #[error("legend colors for \"{0}\" and \"{1}\" coincide")]
    DuplicateColor(String, String),
    #[error("legend has no entry labeled \"{0}\"")]
    MissingSignLabel(String),
    #[error(transparent)]
    Image(#[from] DatasetError),
    #[error("mask PNG {path}: {message}")]
    MaskPng { path: PathBuf, message: String },
}

/// Label to color mapping for a segmentation palette.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Legend {
    entries: Vec<(String, Rgb)>,
}

impl Legend {
    pub fn new(entries: Vec<(String, Rgb)>) -> Result<Self, MaskError> {
        for (i, (label_a, color_a)) in entries.iter().enumerate() {
            if let Some((label_b, _)) = entries[i + 1..].iter().find(|(_, c)| c == color_a) {
                return Err(MaskError::DuplicateColor(label_a.clone(), label_b.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Parses `label<TAB>R,G,B` lines; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self, MaskError> {
        let mut entries = Vec::new();
        for (line, fields) in crate::dataset::records(text) {
            let [label, rgb] = fields[..] else {
                return Err(MaskError::LegendParse {
                    line,
                    message: "expected label<TAB>R,G,B".into(),
                });
            };
            let channels: Vec<u8> = rgb
                .split(',')
                .map(|c| c.trim().parse::<u8>())
                .collect::<Result<_, _>>()
                .map_err(|e| MaskError::LegendParse {
                    line,
                    message: format!("bad color \"{rgb}\": {e}"),
                })?;
            let [r, g, b] = channels[..] else {
                return Err(MaskError::LegendParse {
                    line,
                    message: format!("color \"{rgb}\" needs three channels"),
                });
            };
            entries.push((label.trim().to_string(), [r, g, b]));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, MaskError> {
        let text = std::fs::read_to_string(path).map_err(|source| MaskError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn color_of(&self, label: &str) -> Option<Rgb> {
        self.entries.iter().find(|(l, _)| l == label).map(|&(_, c)| c)
    }

    pub fn contains_color(&self, color: Rgb) -> bool {
        self.entries.iter().any(|&(_, c)| c == color)
    }

    pub fn entries(&self) -> &[(String, Rgb)] {
        &self.entries
    }
}

/// Color-coded segmentation output with its palette.
#[derive(Debug, Clone)]
pub struct SegmentationMap {
    pub image: RgbImage,
    pub legend: Legend,
    sign_label: String,
}

impl SegmentationMap {
    pub fn new(image: RgbImage, legend: Legend, sign_label: &str) -> Result<Self, MaskError> {
        if legend.color_of(sign_label).is_none() {
            return Err(MaskError::MissingSignLabel(sign_label.to_string()));
        }
        Ok(Self {
            image,
            legend,
            sign_label: sign_label.to_string(),
        })
    }

    pub fn sign_color(&self) -> Rgb {
        self.legend
            .color_of(&self.sign_label)
            .expect("checked at construction")
    }

    pub fn dims(&self) -> (u32, u32) {
        self.image.dims()
    }
}

/// Row-major 0/1 raster marking sign foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(
            bits.len(),
            width as usize * height as usize,
            "mask bit count must equal width * height"
        );
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn ones(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![true; width as usize * height as usize])
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

    pub fn get(&self, x: u32, y: u32) -> bool {
        assert!(x < self.width && y < self.height, "mask pixel ({x},{y}) out of bounds");
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        assert!(x < self.width && y < self.height, "mask pixel ({x},{y}) out of bounds");
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// 8-bit grayscale PNG, 0 as black and 1 as white.
    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let raw = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = GrayImage::from_raw(self.width, self.height, raw).expect("sized at construction");
        img.save(path).map_err(|e| MaskError::MaskPng {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Any nonzero luma reads as foreground.
    pub fn load_png(path: &Path) -> Result<Self, MaskError> {
        let img = image::open(path).map_err(|e| MaskError::MaskPng {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let gray = img.to_luma8();
        Ok(Self::new(
            gray.width(),
            gray.height(),
            gray.pixels().map(|p| p.0[0] != 0).collect(),
        ))
    }
}

/// Marks pixels whose largest per-channel deviation from `sign_color` is at
/// most `tolerance`.
///
/// A `sign_color` missing from the legend only logs a warning, since legends
/// exported by some segmenters are partial.
pub fn to_binary_mask(seg: &SegmentationMap, sign_color: Rgb, tolerance: u8) -> BinaryMask {
    if !seg.legend.contains_color(sign_color) {
        log::warn!(
            "sign color {},{},{} is not in the segmentation legend",
            sign_color[0],
            sign_color[1],
            sign_color[2]
        );
    }
    let bits = seg
        .image
        .pixels()
        .iter()
        .map(|px| {
            px.iter()
                .zip(sign_color)
                .all(|(&a, b)| a.abs_diff(b) <= tolerance)
        })
        .collect();
    BinaryMask::new(seg.image.width(), seg.image.height(), bits)
}
