//! Browser demo of the ocular feature extractor, compiled to WebAssembly.
//!
//! Each exported function renders a synthetic eye crop or simulates a
//! prediction stream and returns its result as a JSON string for the page
//! script to draw.

use ocugaze::eye_region::{EyeRoi, EyeSide};
use ocugaze::imgproc::GrayFrame;
use ocugaze::ocular::{eye_aspect_ratio, landmarks_from_mask, locate_iris_in, segment_eye, Point};
use ocugaze::pipeline::smooth;
use ocugaze::synthetic::{render_disc, render_ellipse, DiscSpec, EllipseSpec};
use ocugaze::GazeClass;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

/// Size of the rendered eye crops.
pub const CROP_WIDTH: usize = 48;
pub const CROP_HEIGHT: usize = 32;

#[derive(Debug, Serialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl From<&GrayFrame> for Raster {
    fn from(g: &GrayFrame) -> Self {
        Self { width: g.width(), height: g.height(), pixels: g.data().to_vec() }
    }
}

#[derive(Debug, Serialize)]
pub struct IrisDemo {
    pub crop: Raster,
    pub mask: Raster,
    pub threshold: u8,
    /// Estimated centre in render coordinates (pixel centres at +0.5).
    pub estimate: Option<Point>,
    pub truth: Point,
    pub error_px: Option<f64>,
    pub candidates: usize,
    pub message: Option<String>,
}

/// Renders a dark disc on a lighter background and localizes it.
pub fn iris_demo(center_x: f64, center_y: f64, radius: f64, brightness: u8) -> Result<IrisDemo, String> {
    let spec = DiscSpec {
        width: CROP_WIDTH,
        height: CROP_HEIGHT,
        center_x,
        center_y,
        radius,
        background: brightness,
        foreground: (brightness as f64 * 0.2).round() as u8,
    };
    let crop = render_disc(&spec).map_err(|e| e.to_string())?;
    let seg = segment_eye(&crop).map_err(|e| e.to_string())?;
    let mean_intensity = crop.mean_intensity();
    let roi = EyeRoi { crop, origin: (0, 0), scale_factor: 1.0, side: EyeSide::Right, mean_intensity };
    let truth = Point::new(center_x, center_y);
    let (estimate, candidates, message) = match locate_iris_in(&seg, mean_intensity) {
        Ok(iris) => (Some(Point::new(iris.x + 0.5, iris.y + 0.5)), iris.candidate_count, None),
        Err(e) => (None, 0, Some(e.to_string())),
    };
    Ok(IrisDemo {
        crop: Raster::from(&roi.crop),
        mask: Raster::from(&seg.mask),
        threshold: seg.threshold,
        estimate,
        truth,
        error_px: estimate.map(|p| p.distance(truth)),
        candidates,
        message,
    })
}

#[derive(Debug, Serialize)]
pub struct EarDemo {
    pub crop: Raster,
    /// Corners, upper lid and lower lid points, in render coordinates.
    pub landmarks: Option<[Point; 6]>,
    pub measured: Option<f64>,
    /// EAR of the ideal ellipse sampled at the same one-third columns.
    pub analytic: f64,
    pub message: Option<String>,
}

/// Renders an eye opening as a dark ellipse and measures its aspect ratio.
pub fn ear_demo(semi_major: f64, semi_minor: f64) -> Result<EarDemo, String> {
    let spec = EllipseSpec {
        width: CROP_WIDTH,
        height: CROP_HEIGHT,
        center_x: CROP_WIDTH as f64 / 2.0,
        center_y: CROP_HEIGHT as f64 / 2.0,
        semi_major,
        semi_minor,
        background: 200,
        foreground: 40,
    };
    let crop = render_ellipse(&spec).map_err(|e| e.to_string())?;
    let analytic = (1.0f64 - 1.0 / 9.0).sqrt() * semi_minor / semi_major;
    let measured = segment_eye(&crop)
        .and_then(|seg| landmarks_from_mask(&seg.mask))
        .and_then(|lm| eye_aspect_ratio(&lm).map(|ear| (lm, ear)));
    let (landmarks, measured, message) = match measured {
        Ok((lm, ear)) => {
            let shift = |p: Point| Point::new(p.x + 0.5, p.y + 0.5);
            let points = [lm.left_corner, lm.upper_left, lm.upper_right, lm.right_corner, lm.lower_right, lm.lower_left];
            (Some(points.map(shift)), Some(ear), None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(EarDemo { crop: Raster::from(&crop), landmarks, measured, analytic, message })
}

#[derive(Debug, Serialize)]
pub struct SmoothingPoint {
    pub window: usize,
    pub accuracy: f64,
}

/// Window accuracy of majority-vote smoothing for windows 1..=`max_window`
/// when each frame is right with probability `frame_accuracy` and otherwise
/// names one of the eight wrong classes at random.
pub fn smoothing_curve(frame_accuracy: f64, max_window: usize, trials: usize, seed: u64) -> Vec<SmoothingPoint> {
    let p = frame_accuracy.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=max_window.max(1))
        .map(|window| {
            let mut correct = 0usize;
            for _ in 0..trials {
                let truth = GazeClass::new(rng.random_range(1..=9)).expect("label in range");
                let votes: Vec<(GazeClass, f64)> = (0..window)
                    .map(|_| {
                        let class = if rng.random_bool(p) {
                            truth
                        } else {
                            let wrong = rng.random_range(1..=8u8);
                            GazeClass::new(if wrong >= truth.label() { wrong + 1 } else { wrong }).expect("label in range")
                        };
                        (class, rng.random_range(0.2..1.0))
                    })
                    .collect();
                correct += usize::from(smooth(&votes).expect("non-empty window") == truth);
            }
            SmoothingPoint { window, accuracy: correct as f64 / trials.max(1) as f64 }
        })
        .collect()
}

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(value) => serde_json::to_string(&value).expect("demo results serialize"),
        Err(message) => serde_json::json!({ "error": message }).to_string(),
    }
}

#[wasm_bindgen(js_name = irisDemo)]
pub fn iris_demo_json(center_x: f64, center_y: f64, radius: f64, brightness: u8) -> String {
    to_json(iris_demo(center_x, center_y, radius, brightness))
}

#[wasm_bindgen(js_name = earDemo)]
pub fn ear_demo_json(semi_major: f64, semi_minor: f64) -> String {
    to_json(ear_demo(semi_major, semi_minor))
}

#[wasm_bindgen(js_name = smoothingCurve)]
pub fn smoothing_curve_json(frame_accuracy: f64, max_window: usize, trials: usize, seed: u32) -> String {
    to_json(Ok(smoothing_curve(frame_accuracy, max_window, trials, u64::from(seed))))
}
