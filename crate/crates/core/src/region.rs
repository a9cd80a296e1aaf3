//! Maps detections back onto the road image: black out everything outside
//! the sign mask, then crop each detection.

use std::path::Path;

use crate::contour::{BoundingBox, DetectionSet};
use crate::dataset::{DatasetError, RgbImage};
use crate::mask::BinaryMask;

pub const BLACK: [u8; 3] = [0, 0, 0];

#[derive(Debug, thiserror::Error)]
pub enum RegionError {
    #[error("road image is {road:?} but mask is {mask:?}")]
    DimensionMismatch { road: (u32, u32), mask: (u32, u32) },
    #[error("bounding box {bbox:?} lies outside a {width}x{height} image")]
    OutOfBounds {
        bbox: BoundingBox,
        width: u32,
        height: u32,
    },
    #[error(transparent)]
    Image(#[from] DatasetError),
}

/// Road image with every non-sign pixel set to black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedImage {
    pub image: RgbImage,
    pub source_sample: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignCrop {
    pub image: RgbImage,
    /// Box actually cropped, after padding and clamping.
    pub bbox: BoundingBox,
    pub source_sample: String,
    pub detection_index: usize,
}

impl SignCrop {
    /// `<sample_id>_<detection_index>.png`
    pub fn file_name(&self) -> String {
        crop_file_name(&self.source_sample, self.detection_index)
    }

    pub fn save(&self, dir: &Path) -> Result<(), RegionError> {
        Ok(self.image.save_png(&dir.join(self.file_name()))?)
    }
}

pub fn crop_file_name(sample_id: &str, detection_index: usize) -> String {
    format!("{sample_id}_{detection_index}.png")
}

pub fn apply_mask(
    road: &RgbImage,
    mask: &BinaryMask,
    sample_id: &str,
) -> Result<MaskedImage, RegionError> {
    if road.dims() != mask.dims() {
        return Err(RegionError::DimensionMismatch {
            road: road.dims(),
            mask: mask.dims(),
        });
    }
    let pixels = road
        .pixels()
        .iter()
        .zip(mask.bits())
        .map(|(&px, &keep)| if keep { px } else { BLACK })
        .collect();
    Ok(MaskedImage {
        image: RgbImage::new(road.width(), road.height(), pixels)?,
        source_sample: sample_id.to_string(),
    })
}

/// Expands `bbox` by `padding` on each side, clamped to `width x height`.
pub fn padded_box(bbox: BoundingBox, padding: u32, width: u32, height: u32) -> BoundingBox {
    BoundingBox::new(
        bbox.x_min.saturating_sub(padding),
        bbox.y_min.saturating_sub(padding),
        bbox.x_max.saturating_add(padding).min(width - 1),
        bbox.y_max.saturating_add(padding).min(height - 1),
    )
}

pub fn crop_image(image: &RgbImage, bbox: BoundingBox) -> Result<RgbImage, RegionError> {
    if !bbox.fits_within(image.width(), image.height()) {
        return Err(RegionError::OutOfBounds {
            bbox,
            width: image.width(),
            height: image.height(),
        });
    }
    let mut pixels = Vec::with_capacity(bbox.width() as usize * bbox.height() as usize);
    for y in bbox.y_min..=bbox.y_max {
        for x in bbox.x_min..=bbox.x_max {
            pixels.push(image.get(x, y));
        }
    }
    Ok(RgbImage::new(bbox.width(), bbox.height(), pixels)?)
}

pub fn crop(
    masked: &MaskedImage,
    bbox: BoundingBox,
    padding: u32,
    detection_index: usize,
) -> Result<SignCrop, RegionError> {
    let (w, h) = masked.image.dims();
    if !bbox.fits_within(w, h) {
        return Err(RegionError::OutOfBounds {
            bbox,
            width: w,
            height: h,
        });
    }
    let clamped = padded_box(bbox, padding, w, h);
    Ok(SignCrop {
        image: crop_image(&masked.image, clamped)?,
        bbox: clamped,
        source_sample: masked.source_sample.clone(),
        detection_index,
    })
}

/// One crop per detection, in detection order.
pub fn extract_all(
    road: &RgbImage,
    mask: &BinaryMask,
    detections: &DetectionSet,
    padding: u32,
    sample_id: &str,
) -> Result<Vec<SignCrop>, RegionError> {
    let masked = apply_mask(road, mask, sample_id)?;
    detections
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| crop(&masked, d.bbox, padding, i))
        .collect()
}
