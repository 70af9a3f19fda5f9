//! Ocular feature extraction: iris-center localization, eyelid landmarks,
//! eye aspect ratio, iris displacement and the rolling extrema that make up
//! one feature vector per frame.
//!
//! The iris is found on the inverted eye crop: dark structures become bright,
//! Otsu's threshold separates them, blobs touching the crop border (lashes,
//! eye corners, brow) are cleared, and the surviving region is scored with a
//! centre-peaked 5x5 kernel. The strongest few local maxima are candidates;
//! how many depends on how dark the crop is.

use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eye_region::EyeRoi;
use crate::imgproc::{binarize, clear_border_components, convolve_plane, invert, otsu_threshold, GrayFrame, Kernel, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrisCenter {
    /// Sub-pixel position in ROI coordinates.
    pub x: f64,
    pub y: f64,
    /// Winning pixel before refinement.
    pub pixel: (usize, usize),
    pub response: f64,
    pub candidate_count: usize,
}

/// Six eyelid points. Corners are the extreme foreground columns; the lid
/// points sit on the columns one and two thirds of the way between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyelidLandmarks {
    pub left_corner: Point,
    pub upper_left: Point,
    pub upper_right: Point,
    pub right_corner: Point,
    pub lower_right: Point,
    pub lower_left: Point,
}

impl EyelidLandmarks {
    pub fn corner_midpoint(&self) -> Point {
        Point::new(
            (self.left_corner.x + self.right_corner.x) / 2.0,
            (self.left_corner.y + self.right_corner.y) / 2.0,
        )
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self {
            left_corner: f(self.left_corner),
            upper_left: f(self.upper_left),
            upper_right: f(self.upper_right),
            right_corner: f(self.right_corner),
            lower_right: f(self.lower_right),
            lower_left: f(self.lower_left),
        }
    }
}

/// The six per-frame features in their canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcularFeatureVector {
    pub aspect_ratio: f64,
    pub min_r: f64,
    pub max_r: f64,
    pub displacement: f64,
    pub min_d: f64,
    pub max_d: f64,
}

pub const NUM_FEATURES: usize = 6;

impl OcularFeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [self.aspect_ratio, self.min_r, self.max_r, self.displacement, self.min_d, self.max_d]
    }

    pub fn from_array(v: [f64; NUM_FEATURES]) -> Self {
        Self { aspect_ratio: v[0], min_r: v[1], max_r: v[2], displacement: v[3], min_d: v[4], max_d: v[5] }
    }

    /// Extrema bound the instantaneous values and everything is finite.
    pub fn is_consistent(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.min_r <= self.aspect_ratio
            && self.aspect_ratio <= self.max_r
            && self.min_d <= self.displacement
            && self.displacement <= self.max_d
    }
}

/// Outer product of `[1, 2, 4, 2, 1] / 10` with itself.
pub fn iris_kernel() -> Kernel {
    const TAPS: [f64; 5] = [0.1, 0.2, 0.4, 0.2, 0.1];
    let weights = (0..25).map(|k| TAPS[k / 5] * TAPS[k % 5]).collect();
    Kernel::new(5, weights).expect("5x5 kernel")
}

/// Number of iris candidates for a crop of the given mean intensity: more in the dark.
pub fn candidate_budget(mean_intensity: f64) -> usize {
    let raw = 1.0 + (4.0 * (1.0 - mean_intensity / 255.0)).floor();
    raw.clamp(1.0, 5.0) as usize
}

/// Intermediate images of the iris search.
#[derive(Debug, Clone)]
pub struct EyeSegmentation {
    pub inverted: GrayFrame,
    pub threshold: u8,
    /// Binary mask of dark structures not connected to the crop border.
    pub mask: GrayFrame,
}

pub fn segment_eye(crop: &GrayFrame) -> Result<EyeSegmentation> {
    let inverted = invert(crop);
    let threshold = otsu_threshold(&inverted);
    let mask = clear_border_components(&binarize(&inverted, threshold))?;
    Ok(EyeSegmentation { inverted, threshold, mask })
}

impl EyeSegmentation {
    pub fn has_foreground(&self) -> bool {
        self.mask.data().iter().any(|&p| p == 255)
    }

    /// Inverted crop restricted to the mask, scored with the iris kernel.
    pub fn iris_response(&self) -> Result<Plane> {
        let masked = Plane {
            width: self.inverted.width(),
            height: self.inverted.height(),
            data: self
                .inverted
                .data()
                .iter()
                .zip(self.mask.data())
                .map(|(&v, &m)| if m == 255 { v as f64 } else { 0.0 })
                .collect(),
        };
        convolve_plane(&masked, &iris_kernel()).map_err(|e| Error::Localization(e.to_string()))
    }
}

pub fn locate_iris(roi: &EyeRoi) -> Result<IrisCenter> {
    let seg = segment_eye(&roi.crop)?;
    locate_iris_in(&seg, roi.crop.mean_intensity())
}

/// Iris search on an existing segmentation; `mean_intensity` sets the candidate budget.
pub fn locate_iris_in(seg: &EyeSegmentation, mean_intensity: f64) -> Result<IrisCenter> {
    if !seg.has_foreground() {
        return Err(Error::Localization("no dark region left after border clearing".into()));
    }
    let response = seg.iris_response()?;
    let (w, h) = (response.width, response.height);
    let center = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);

    let mut maxima: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = response.get(x, y);
            if v > 0.0 && neighbours(x, y, w, h).all(|(nx, ny)| response.get(nx, ny) <= v) {
                maxima.push((x, y));
            }
        }
    }
    if maxima.is_empty() {
        return Err(Error::Localization("flat iris response".into()));
    }
    maxima.sort_by(|&a, &b| rank_candidates(&response, center, a, b));
    let budget = candidate_budget(mean_intensity);
    let candidates = &maxima[..budget.min(maxima.len())];
    // Candidates are already ordered by response, then by distance to the crop centre.
    let (px, py) = candidates[0];
    let (x, y) = refine(&response, px, py);
    Ok(IrisCenter { x, y, pixel: (px, py), response: response.get(px, py), candidate_count: candidates.len() })
}

/// Higher response first; ties go to the pixel nearer the crop centre, then raster order.
pub fn rank_candidates(response: &Plane, center: (f64, f64), a: (usize, usize), b: (usize, usize)) -> Ordering {
    let dist = |(x, y): (usize, usize)| (x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2);
    response
        .get(b.0, b.1)
        .partial_cmp(&response.get(a.0, a.1))
        .unwrap_or(Ordering::Equal)
        .then(dist(a).partial_cmp(&dist(b)).unwrap_or(Ordering::Equal))
        .then((a.1, a.0).cmp(&(b.1, b.0)))
}

fn neighbours(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(move |dy| (-1i64..=1).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| dx != 0 || dy != 0)
        .map(move |(dx, dy)| (x as i64 + dx, y as i64 + dy))
        .filter(move |&(nx, ny)| nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64)
        .map(|(nx, ny)| (nx as usize, ny as usize))
}

/// Centroid of the 3x3 neighbourhood weighted by response above the neighbourhood minimum.
fn refine(response: &Plane, px: usize, py: usize) -> (f64, f64) {
    let cells: Vec<(usize, usize, f64)> = neighbours(px, py, response.width, response.height)
        .chain(std::iter::once((px, py)))
        .map(|(x, y)| (x, y, response.get(x, y)))
        .collect();
    let floor = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let total: f64 = cells.iter().map(|c| c.2 - floor).sum();
    if total <= 0.0 {
        return (px as f64, py as f64);
    }
    let sx: f64 = cells.iter().map(|c| c.0 as f64 * (c.2 - floor)).sum();
    let sy: f64 = cells.iter().map(|c| c.1 as f64 * (c.2 - floor)).sum();
    (sx / total, sy / total)
}

/// Minimum horizontal corner span, in pixels, for a usable eye contour.
pub const MIN_CORNER_SPAN: usize = 4;

pub fn eyelid_landmarks(roi: &EyeRoi) -> Result<EyelidLandmarks> {
    landmarks_from_mask(&segment_eye(&roi.crop)?.mask)
}

/// Landmarks on a cleared binary mask.
pub fn landmarks_from_mask(mask: &GrayFrame) -> Result<EyelidLandmarks> {
    let (w, h) = (mask.width(), mask.height());
    let fg = |x: usize, y: usize| mask.get(x, y) == 255;
    let column_extent = |x: usize| -> Option<(usize, usize)> {
        let top = (0..h).find(|&y| fg(x, y))?;
        let bottom = (0..h).rev().find(|&y| fg(x, y))?;
        Some((top, bottom))
    };

    let Some(left_x) = (0..w).find(|&x| column_extent(x).is_some()) else {
        return Err(Error::Landmark("empty eye mask".into()));
    };
    let right_x = (0..w).rev().find(|&x| column_extent(x).is_some()).expect("left column exists");
    let span = right_x - left_x;
    if span < MIN_CORNER_SPAN {
        return Err(Error::Landmark(format!("corner span {span} px below {MIN_CORNER_SPAN}")));
    }
    // Ties on the corner columns go to the smaller y.
    let left_y = column_extent(left_x).expect("non-empty").0;
    let right_y = column_extent(right_x).expect("non-empty").0;

    let a = left_x + (span as f64 / 3.0).round() as usize;
    let b = left_x + (2.0 * span as f64 / 3.0).round() as usize;
    let (a_top, a_bottom) = column_extent(a).ok_or_else(|| Error::Landmark(format!("no contour in column {a}")))?;
    let (b_top, b_bottom) = column_extent(b).ok_or_else(|| Error::Landmark(format!("no contour in column {b}")))?;

    let p = |x: usize, y: usize| Point::new(x as f64, y as f64);
    Ok(EyelidLandmarks {
        left_corner: p(left_x, left_y),
        upper_left: p(a, a_top),
        upper_right: p(b, b_top),
        right_corner: p(right_x, right_y),
        lower_right: p(b, b_bottom),
        lower_left: p(a, a_bottom),
    })
}

/// Eye aspect ratio: summed lid gaps over twice the corner distance.
pub fn eye_aspect_ratio(lm: &EyelidLandmarks) -> Result<f64> {
    let corners = lm.left_corner.distance(lm.right_corner);
    if corners <= 0.0 {
        return Err(Error::Parameter("coincident eye corners".into()));
    }
    let gaps = lm.upper_left.distance(lm.lower_left) + lm.upper_right.distance(lm.lower_right);
    Ok(gaps / (2.0 * corners))
}

/// Horizontal iris offset from the corner midpoint; positive towards image right.
pub fn displacement(iris: &IrisCenter, lm: &EyelidLandmarks) -> f64 {
    iris.x - lm.corner_midpoint().x
}

pub const DEFAULT_FEATURE_WINDOW: usize = 25;

/// Trailing-window extrema of EAR and displacement for one stream.
#[derive(Debug, Clone)]
pub struct FeatureAccumulator {
    window: usize,
    samples: VecDeque<(f64, f64)>,
}

impl FeatureAccumulator {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Parameter("feature window must be at least 1".into()));
        }
        Ok(Self { window, samples: VecDeque::with_capacity(window) })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn reset(&mut self) {
        self.samples.clear();
    }

    pub fn push(&mut self, ear: f64, displacement: f64) -> OcularFeatureVector {
        if self.samples.len() == self.window {
            self.samples.pop_front();
        }
        self.samples.push_back((ear, displacement));
        let (mut min_r, mut max_r) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_d, mut max_d) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(r, d) in &self.samples {
            min_r = min_r.min(r);
            max_r = max_r.max(r);
            min_d = min_d.min(d);
            max_d = max_d.max(d);
        }
        OcularFeatureVector { aspect_ratio: ear, min_r, max_r, displacement, min_d, max_d }
    }
}
