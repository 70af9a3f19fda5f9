//! Point-of-gaze estimation for low-resolution cameras.
//!
//! A frame goes through face detection, eye-region extraction, iris
//! localization and eyelid landmarking; the resulting ocular feature vector
//! (eye aspect ratio, iris displacement and their rolling extrema) is
//! classified into one of nine screen directions by a small feed-forward
//! network. Dataset tooling, metrics and the calibration session logic live
//! alongside.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eye_region;
pub mod face_detect;
pub mod gaze;
pub mod imgproc;
pub mod metrics;
pub mod nn;
pub mod ocular;
pub mod pipeline;
pub mod pnm;
pub mod session;
pub mod synthetic;

pub use error::{Error, Result};
pub use gaze::GazeClass;
