//! TOML configuration shared by the CLI and the service.
//!
//! Every key is optional; omitted keys take the defaults below.
//!
//! ```toml
//! eye_side = "right"
//! target_height = 24
//! feature_window = 25
//! smoothing_window = 15
//!
//! [proportions]
//! vertical = [0.25, 0.45]
//!
//! [training]
//! hidden_sizes = [32, 24, 16]
//! epochs = 100
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eye_region::{EyeProportions, EyeSide, DEFAULT_TARGET_HEIGHT};
use crate::imgproc::MIN_SCALE_HEIGHT;
use crate::nn::TrainConfig;
use crate::ocular::DEFAULT_FEATURE_WINDOW;
use crate::session::SessionConfig;

pub const DEFAULT_SMOOTHING_WINDOW: usize = 15;

/// Smallest face the live pipeline searches for. A user seated in front of a
/// 640x480 webcam appears well above this size.
pub const DEFAULT_MIN_FACE_SIZE: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Cascade XML; the bundled frontal-face cascade when absent.
    pub cascade: Option<PathBuf>,
    pub eye_side: EyeSide,
    pub proportions: EyeProportions,
    pub target_height: usize,
    pub min_face_size: usize,
    pub feature_window: usize,
    pub smoothing_window: usize,
    pub training: TrainConfig,
    pub session: SessionConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            cascade: None,
            eye_side: EyeSide::Right,
            proportions: EyeProportions::default(),
            target_height: DEFAULT_TARGET_HEIGHT,
            min_face_size: DEFAULT_MIN_FACE_SIZE,
            feature_window: DEFAULT_FEATURE_WINDOW,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            training: TrainConfig::default(),
            session: SessionConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let band = |name: &str, b: [f64; 2]| {
            if (0.0..=1.0).contains(&b[0]) && (0.0..=1.0).contains(&b[1]) && b[0] < b[1] {
                Ok(())
            } else {
                Err(Error::Config(format!("proportions.{name} {b:?} must be an increasing pair in [0, 1]")))
            }
        };
        band("vertical", self.proportions.vertical)?;
        band("right_eye", self.proportions.right_eye)?;
        band("left_eye", self.proportions.left_eye)?;
        if self.target_height < MIN_SCALE_HEIGHT {
            return Err(Error::Config(format!("target_height {} is below {MIN_SCALE_HEIGHT}", self.target_height)));
        }
        if self.feature_window == 0 || self.smoothing_window == 0 {
            return Err(Error::Config("feature_window and smoothing_window must be at least 1".into()));
        }
        if self.min_face_size == 0 {
            return Err(Error::Config("min_face_size must be positive".into()));
        }
        self.training.validate().map_err(|e| Error::Config(format!("training: {e}")))?;
        self.session.validate().map_err(|e| Error::Config(format!("session: {e}")))?;
        Ok(())
    }
}
