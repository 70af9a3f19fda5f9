//! Viola-Jones style face detection over haar rectangle features.
//!
//! Only stump-based cascades with a square base window are supported. Head
//! tilt is not compensated; strongly rotated faces are simply missed.

mod cascade;
mod detect;
mod xml;

pub use cascade::{Cascade, CascadeStage, HaarFeature, Stump, WeightedRect};
pub use detect::{
    detect_face, detect_face_with, group_detections, raw_detections, DetectParams, FaceBox, FrameTables, Window,
    MIN_WINDOW_STDDEV,
};
