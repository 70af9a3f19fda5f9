//! Sliding-window cascade evaluation and detection grouping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{GrayFrame, IntegralImage};

use super::cascade::Cascade;

/// Face rectangle in frame pixels; `score` is the number of merged raw detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub score: usize,
}

impl FaceBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn iou(&self, other: &FaceBox) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        if x1 <= x0 || y1 <= y0 {
            return 0.0;
        }
        let inter = ((x1 - x0) * (y1 - y0)) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

/// Window placement: top-left corner in frame pixels and the scale relative to the base window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub scale: f64,
}

/// Integral and squared-integral tables of one frame.
pub struct FrameTables {
    pub sum: IntegralImage,
    pub squared: IntegralImage,
}

impl FrameTables {
    pub fn new(frame: &GrayFrame) -> Self {
        Self { sum: IntegralImage::new(frame), squared: IntegralImage::squared(frame) }
    }
}

/// Windows whose pixel standard deviation is below this are rejected outright.
pub const MIN_WINDOW_STDDEV: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct ScaledRect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    weight: f64,
}

/// A rectangle as four offsets into the integral table, relative to the
/// window's top-left table entry: sum = br - tr - bl + tl.
#[derive(Debug, Clone, Copy, Default)]
struct TableRect {
    tl: usize,
    tr: usize,
    bl: usize,
    br: usize,
    weight: f64,
}

impl TableRect {
    fn new(r: &ScaledRect, stride: usize) -> Self {
        let top = r.y * stride;
        let bottom = (r.y + r.h) * stride;
        Self { tl: top + r.x, tr: top + r.x + r.w, bl: bottom + r.x, br: bottom + r.x + r.w, weight: r.weight }
    }

    #[inline]
    fn sum(&self, table: &[u64], base: usize) -> u64 {
        (table[base + self.br] + table[base + self.tl]) - (table[base + self.tr] + table[base + self.bl])
    }
}

/// A stump with its feature's rectangles inlined; `count` of them are used.
#[derive(Debug, Clone, Copy)]
struct FlatStump {
    rects: [TableRect; 3],
    count: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

/// Cascade geometry resolved at one scale for one table stride.
struct ScaledCascade {
    /// Side of the square window actually touched by any rectangle.
    extent: usize,
    norm: ScaledRect,
    norm_rect: TableRect,
    /// Stumps of all stages in order, with the end index of each stage.
    stumps: Vec<FlatStump>,
    stage_ends: Vec<usize>,
    stage_thresholds: Vec<f64>,
}

fn round(v: f64) -> usize {
    v.round().max(0.0) as usize
}

impl ScaledCascade {
    fn new(cascade: &Cascade, scale: f64, stride: usize) -> Self {
        let win_w = round(cascade.window_width as f64 * scale);
        let win_h = round(cascade.window_height as f64 * scale);
        let mut extent = win_w.max(win_h);
        // Variance is measured on the window shrunk by one base pixel on each side.
        let inset = round(scale);
        let norm = ScaledRect {
            x: inset,
            y: inset,
            w: round((cascade.window_width as f64 - 2.0) * scale).max(1),
            h: round((cascade.window_height as f64 - 2.0) * scale).max(1),
            weight: 1.0,
        };
        let features: Vec<Vec<ScaledRect>> = cascade
            .features
            .iter()
            .map(|f| {
                let mut rects: Vec<ScaledRect> = f
                    .rects
                    .iter()
                    .map(|r| ScaledRect {
                        x: round(r.x as f64 * scale),
                        y: round(r.y as f64 * scale),
                        w: round(r.w as f64 * scale).max(1),
                        h: round(r.h as f64 * scale).max(1),
                        weight: r.weight,
                    })
                    .collect();
                // Rebalance the first rectangle so rounding does not bias the feature.
                let others: f64 = rects[1..].iter().map(|r| r.weight * (r.w * r.h) as f64).sum();
                rects[0].weight = -others / (rects[0].w * rects[0].h) as f64;
                for r in &rects {
                    extent = extent.max(r.x + r.w).max(r.y + r.h);
                }
                rects
            })
            .collect();
        let mut stumps = Vec::with_capacity(cascade.stump_count());
        let mut stage_ends = Vec::with_capacity(cascade.stages.len());
        for stage in &cascade.stages {
            for s in &stage.stumps {
                let rects = &features[s.feature];
                let mut flat = [TableRect::default(); 3];
                for (slot, r) in flat.iter_mut().zip(rects) {
                    *slot = TableRect::new(r, stride);
                }
                stumps.push(FlatStump {
                    rects: flat,
                    count: rects.len(),
                    threshold: s.threshold,
                    left: s.left,
                    right: s.right,
                });
            }
            stage_ends.push(stumps.len());
        }
        Self {
            extent,
            norm,
            norm_rect: TableRect::new(&norm, stride),
            stumps,
            stage_ends,
            stage_thresholds: cascade.stages.iter().map(|s| s.threshold).collect(),
        }
    }

    /// `None` when the window is too flat to normalize.
    #[inline]
    fn norm_factor(&self, t: &FrameTables, base: usize) -> Option<f64> {
        let area = (self.norm.w * self.norm.h) as i128;
        let s = self.norm_rect.sum(t.sum.table(), base) as i128;
        let sq = self.norm_rect.sum(t.squared.table(), base) as i128;
        let spread = (area * sq - s * s) as f64;
        let variance = spread / (area * area) as f64;
        (variance >= MIN_WINDOW_STDDEV * MIN_WINDOW_STDDEV).then(|| spread.sqrt())
    }

    #[inline]
    fn stage_sum(&self, stage: usize, table: &[u64], base: usize, nf: f64) -> f64 {
        let begin = if stage == 0 { 0 } else { self.stage_ends[stage - 1] };
        self.stumps[begin..self.stage_ends[stage]]
            .iter()
            .map(|s| {
                let v: f64 = s.rects[..s.count].iter().map(|r| r.weight * r.sum(table, base) as f64).sum();
                if v < s.threshold * nf { s.left } else { s.right }
            })
            .sum()
    }

    #[inline]
    fn passes(&self, t: &FrameTables, base: usize) -> bool {
        let Some(nf) = self.norm_factor(t, base) else {
            return false;
        };
        let table = t.sum.table();
        (0..self.stage_ends.len()).all(|i| self.stage_sum(i, table, base, nf) >= self.stage_thresholds[i])
    }

    fn fits(&self, t: &FrameTables, x: usize, y: usize) -> bool {
        x + self.extent <= t.sum.width() && y + self.extent <= t.sum.height()
    }
}

impl Cascade {
    /// Runs the stages in order, stopping at the first rejection.
    pub fn evaluate_window(&self, tables: &FrameTables, window: Window) -> bool {
        let scaled = ScaledCascade::new(self, window.scale, tables.sum.stride());
        scaled.fits(tables, window.x, window.y)
            && scaled.passes(tables, window.y * tables.sum.stride() + window.x)
    }

    /// Every stage's stump sum for a window, without early exit.
    /// `None` if the window is out of bounds or has near-zero variance.
    pub fn stage_sums(&self, tables: &FrameTables, window: Window) -> Option<Vec<f64>> {
        let scaled = ScaledCascade::new(self, window.scale, tables.sum.stride());
        if !scaled.fits(tables, window.x, window.y) {
            return None;
        }
        let base = window.y * tables.sum.stride() + window.x;
        let nf = scaled.norm_factor(tables, base)?;
        Some((0..self.stages.len()).map(|i| scaled.stage_sum(i, tables.sum.table(), base, nf)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub scale_factor: f64,
    pub merge_iou: f64,
    pub min_group: usize,
    pub min_size: usize,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { scale_factor: 1.2, merge_iou: 0.4, min_group: 3, min_size: 24 }
    }
}

/// Every window accepted by the cascade over the scale pyramid.
pub fn raw_detections(frame: &GrayFrame, cascade: &Cascade, params: &DetectParams) -> Result<Vec<FaceBox>> {
    if frame.width() < params.min_size || frame.height() < params.min_size {
        return Err(Error::Dimension(format!(
            "{}x{} frame is smaller than the minimum face size {}",
            frame.width(),
            frame.height(),
            params.min_size
        )));
    }
    if params.scale_factor <= 1.0 {
        return Err(Error::Parameter(format!("scale factor {} must exceed 1", params.scale_factor)));
    }
    let tables = FrameTables::new(frame);
    let base = cascade.window_width.max(cascade.window_height) as f64;
    let mut scale = (params.min_size as f64 / base).max(1.0);
    let mut hits = Vec::new();
    loop {
        let scaled = ScaledCascade::new(cascade, scale, tables.sum.stride());
        if scaled.extent > frame.width() || scaled.extent > frame.height() {
            break;
        }
        let side = round(base * scale);
        let step = round(scale * 2.0).max(1);
        for y in (0..=frame.height() - scaled.extent).step_by(step) {
            for x in (0..=frame.width() - scaled.extent).step_by(step) {
                if scaled.passes(&tables, y * tables.sum.stride() + x) {
                    hits.push(FaceBox { x, y, w: side, h: side, score: 1 });
                }
            }
        }
        scale *= params.scale_factor;
    }
    Ok(hits)
}

/// Single-linkage grouping of raw detections; each group is averaged into one box.
pub fn group_detections(raw: &[FaceBox], merge_iou: f64) -> Vec<FaceBox> {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if raw[i].iou(&raw[j]) >= merge_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<(usize, [f64; 3], usize)> = Vec::new(); // (root, sums of x/y/side, count)
    for i in 0..n {
        let root = find(&mut parent, i);
        let entry = match groups.iter_mut().find(|g| g.0 == root) {
            Some(g) => g,
            None => {
                groups.push((root, [0.0; 3], 0));
                groups.last_mut().expect("just pushed")
            }
        };
        entry.1[0] += raw[i].x as f64;
        entry.1[1] += raw[i].y as f64;
        entry.1[2] += raw[i].w as f64;
        entry.2 += 1;
    }
    groups
        .into_iter()
        .map(|(_, s, count)| {
            let c = count as f64;
            let side = round(s[2] / c);
            FaceBox { x: round(s[0] / c), y: round(s[1] / c), w: side, h: side, score: count }
        })
        .collect()
}

/// Strongest face in the frame, or `None` when no group reaches `min_group` members.
pub fn detect_face_with(frame: &GrayFrame, cascade: &Cascade, params: &DetectParams) -> Result<Option<FaceBox>> {
    let raw = raw_detections(frame, cascade, params)?;
    let best = group_detections(&raw, params.merge_iou)
        .into_iter()
        .filter(|g| g.score >= params.min_group)
        .max_by(|a, b| a.score.cmp(&b.score).then(a.area().cmp(&b.area())).then(b.y.cmp(&a.y)).then(b.x.cmp(&a.x)));
    Ok(best.map(|mut b| {
        let side = b.w.min(frame.width() - b.x.min(frame.width())).min(frame.height() - b.y.min(frame.height()));
        b.w = side;
        b.h = side;
        b
    }))
}

pub fn detect_face(frame: &GrayFrame, cascade: &Cascade, min_size: usize) -> Result<Option<FaceBox>> {
    detect_face_with(frame, cascade, &DetectParams { min_size, ..DetectParams::default() })
}
