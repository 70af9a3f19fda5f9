//! Eye region of interest cut from the face box by fixed facial proportions,
//! then contrast-normalized and rescaled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face_detect::FaceBox;
use crate::imgproc::{downscale, GrayFrame};

/// Anatomical side of the user's eye. The user's left eye appears on the image right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeSide {
    Left,
    Right,
}

/// Eye band as fractions of the face box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EyeProportions {
    pub vertical: [f64; 2],
    /// Horizontal band of the user's right eye (image left).
    pub right_eye: [f64; 2],
    /// Horizontal band of the user's left eye (image right).
    pub left_eye: [f64; 2],
}

impl Default for EyeProportions {
    fn default() -> Self {
        Self { vertical: [0.25, 0.45], right_eye: [0.13, 0.45], left_eye: [0.55, 0.87] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EyeRoi {
    pub crop: GrayFrame,
    /// Top-left corner of the crop in frame coordinates.
    pub origin: (usize, usize),
    /// ROI pixels per frame pixel.
    pub scale_factor: f64,
    pub side: EyeSide,
    /// Mean crop intensity, the stand-in for ambient illumination.
    pub mean_intensity: f64,
}

/// Contrast stretching kicks in below this mean intensity.
pub const DIM_MEAN_THRESHOLD: f64 = 80.0;
pub const DEFAULT_TARGET_HEIGHT: usize = 24;

pub fn extract_eye_roi(frame: &GrayFrame, face: &FaceBox, side: EyeSide, proportions: &EyeProportions) -> Result<EyeRoi> {
    let band = match side {
        EyeSide::Right => proportions.right_eye,
        EyeSide::Left => proportions.left_eye,
    };
    let fx = face.x as f64;
    let fy = face.y as f64;
    let x0 = (fx + band[0] * face.w as f64).round().max(0.0) as usize;
    let x1 = ((fx + band[1] * face.w as f64).round().max(0.0) as usize).min(frame.width());
    let y0 = (fy + proportions.vertical[0] * face.h as f64).round().max(0.0) as usize;
    let y1 = ((fy + proportions.vertical[1] * face.h as f64).round().max(0.0) as usize).min(frame.height());
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::Extraction(format!(
            "empty eye band x [{x0},{x1}) y [{y0},{y1}) for face {face:?} in {}x{} frame",
            frame.width(),
            frame.height()
        )));
    }
    let crop = frame.crop(x0, y0, x1 - x0, y1 - y0)?;
    let mean_intensity = crop.mean_intensity();
    Ok(EyeRoi { crop, origin: (x0, y0), scale_factor: 1.0, side, mean_intensity })
}

/// Linear map of `[min, max]` onto `[0, 255]`; frames with zero range are returned as is.
pub fn contrast_stretch(g: &GrayFrame) -> GrayFrame {
    let lo = *g.data().iter().min().expect("frames are non-empty");
    let hi = *g.data().iter().max().expect("frames are non-empty");
    if hi == lo {
        return g.clone();
    }
    let span = (hi - lo) as f64;
    let data = g.data().iter().map(|&p| ((p - lo) as f64 * 255.0 / span).round() as u8).collect();
    GrayFrame::new(g.width(), g.height(), data).expect("same dimensions")
}

/// Stretches dim crops, then downscales to `target_height`.
pub fn normalize_roi(roi: &EyeRoi, target_height: usize) -> Result<EyeRoi> {
    let stretched = if roi.crop.mean_intensity() < DIM_MEAN_THRESHOLD {
        contrast_stretch(&roi.crop)
    } else {
        roi.crop.clone()
    };
    let (crop, _) = downscale(&stretched, target_height)?;
    let scale_factor = roi.scale_factor * crop.height() as f64 / roi.crop.height() as f64;
    let mean_intensity = crop.mean_intensity();
    Ok(EyeRoi { crop, origin: roi.origin, scale_factor, side: roi.side, mean_intensity })
}
