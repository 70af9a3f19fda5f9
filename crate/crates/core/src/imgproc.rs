//! Pixel-level primitives shared by face detection and feature extraction.
//!
//! Everything here is a pure function over immutable frames.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Single-channel 8-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("{width}x{height} frame")));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{width}x{height} frame needs {} bytes, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// A frame filled with one intensity.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Pixels are generated in row-major order.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    pub fn mean_intensity(&self) -> f64 {
        let sum: u64 = self.data.iter().map(|&p| p as u64).sum();
        sum as f64 / self.data.len() as f64
    }

    /// Copy of the sub-rectangle `[x, x+w) x [y, y+h)`; the rectangle must lie inside the frame.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayFrame> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::Dimension(format!(
                "crop ({x},{y},{w},{h}) outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        GrayFrame::new(w, h, data)
    }

    pub fn flip_horizontal(&self) -> GrayFrame {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width) {
            data.extend(row.iter().rev());
        }
        GrayFrame { width: self.width, height: self.height, data }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&p| p == 0 || p == 255)
    }
}

/// Interleaved 8-bit R, G, B image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Luma conversion with the 0.299/0.587/0.114 weights.
pub fn to_gray(frame: &RgbFrame) -> Result<GrayFrame> {
    if frame.width == 0 || frame.height == 0 {
        return Err(Error::Dimension(format!("{}x{} image", frame.width, frame.height)));
    }
    if frame.data.len() != frame.width * frame.height * 3 {
        return Err(Error::Dimension(format!(
            "{}x{} RGB image needs {} bytes, got {}",
            frame.width,
            frame.height,
            frame.width * frame.height * 3,
            frame.data.len()
        )));
    }
    let data = frame
        .data
        .chunks_exact(3)
        .map(|px| {
            let v = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayFrame::new(frame.width, frame.height, data)
}

pub fn invert(g: &GrayFrame) -> GrayFrame {
    GrayFrame {
        width: g.width,
        height: g.height,
        data: g.data.iter().map(|&p| 255 - p).collect(),
    }
}

/// Summed-area table with a zero first row and column.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<u64>,
}

impl IntegralImage {
    pub fn new(g: &GrayFrame) -> Self {
        Self::build(g, |p| p as u64)
    }

    /// Table of squared intensities, used for window variance.
    pub fn squared(g: &GrayFrame) -> Self {
        Self::build(g, |p| (p as u64) * (p as u64))
    }

    fn build(g: &GrayFrame, f: impl Fn(u8) -> u64) -> Self {
        let stride = g.width + 1;
        let mut table = vec![0u64; stride * (g.height + 1)];
        for y in 0..g.height {
            let mut row_sum = 0u64;
            for x in 0..g.width {
                row_sum += f(g.get(x, y));
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        Self { width: g.width, height: g.height, table }
    }

    /// Source frame width (the table itself is one wider).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row length of the raw table.
    pub fn stride(&self) -> usize {
        self.width + 1
    }

    /// Raw table, row-major with [`stride`](Self::stride) entries per row.
    pub fn table(&self) -> &[u64] {
        &self.table
    }

    /// Table entry `(i, j)`: sum of pixels with x < i and y < j.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> u64 {
        self.table[j * (self.width + 1) + i]
    }

    /// Sum of the pixels in `[x, x+w) x [y, y+h)`.
    #[inline]
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let stride = self.width + 1;
        let a = self.table[y * stride + x];
        let b = self.table[y * stride + x + w];
        let c = self.table[(y + h) * stride + x];
        let d = self.table[(y + h) * stride + x + w];
        d + a - b - c
    }
}

/// Zeroes every foreground pixel 4-connected to a foreground pixel on the image border.
pub fn clear_border_components(binary: &GrayFrame) -> Result<GrayFrame> {
    if !binary.is_binary() {
        return Err(Error::Precondition("border clearing needs a 0/255 image".into()));
    }
    let (w, h) = (binary.width, binary.height);
    let mut out = binary.clone();
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, out: &mut GrayFrame, queue: &mut VecDeque<(usize, usize)>| {
        if out.get(x, y) == 255 {
            out.set(x, y, 0);
            queue.push_back((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut out, &mut queue);
        seed(x, h - 1, &mut out, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut out, &mut queue);
        seed(w - 1, y, &mut out, &mut queue);
    }
    while let Some((x, y)) = queue.pop_front() {
        if x > 0 {
            seed(x - 1, y, &mut out, &mut queue);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut out, &mut queue);
        }
        if y > 0 {
            seed(x, y - 1, &mut out, &mut queue);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut out, &mut queue);
        }
    }
    Ok(out)
}

/// What `downscale` did to its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleOutcome {
    Identity,
    Scaled,
    /// Target was taller than the source; frame returned unchanged.
    RefusedUpscale,
}

/// Smallest eye-crop height the pipeline configuration accepts.
pub const MIN_SCALE_HEIGHT: usize = 8;

/// Area-average resampling to `target_height`, preserving aspect ratio.
pub fn downscale(g: &GrayFrame, target_height: usize) -> Result<(GrayFrame, ScaleOutcome)> {
    if target_height == 0 {
        return Err(Error::Parameter("target height must be positive".into()));
    }
    if target_height > g.height {
        log::debug!("downscale target {target_height} exceeds source height {}", g.height);
        return Ok((g.clone(), ScaleOutcome::RefusedUpscale));
    }
    if target_height == g.height {
        return Ok((g.clone(), ScaleOutcome::Identity));
    }
    let factor = target_height as f64 / g.height as f64;
    let new_w = ((g.width as f64 * factor).round() as usize).max(1);
    let xw = box_weights(g.width, new_w);
    let yw = box_weights(g.height, target_height);
    let area = (g.width as f64 / new_w as f64) * (g.height as f64 / target_height as f64);

    let mut data = Vec::with_capacity(new_w * target_height);
    for ys in &yw {
        for xs in &xw {
            let mut acc = 0.0;
            for &(sy, wy) in ys {
                for &(sx, wx) in xs {
                    acc += wy * wx * g.get(sx, sy) as f64;
                }
            }
            data.push((acc / area).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok((GrayFrame::new(new_w, target_height, data)?, ScaleOutcome::Scaled))
}

/// For each output cell, the source indices it overlaps and the overlap length.
fn box_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let step = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * step;
            let hi = lo + step;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (hi.min(s as f64 + 1.0) - lo.max(s as f64)).max(0.0);
                    (overlap > 1e-12).then_some((s, overlap))
                })
                .collect()
        })
        .collect()
}

/// Real-valued image plane; also the output of `convolve`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

impl From<&GrayFrame> for Plane {
    fn from(g: &GrayFrame) -> Self {
        Self {
            width: g.width,
            height: g.height,
            data: g.data.iter().map(|&p| p as f64).collect(),
        }
    }
}

/// Square odd-sized convolution kernel; `weight(i, j)` is column `i`, row `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::Parameter(format!("kernel size {size} must be odd")));
        }
        if weights.len() != size * size {
            return Err(Error::Parameter(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        Ok(Self { size, weights })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[j * self.size + i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

pub fn convolve(g: &GrayFrame, kernel: &Kernel) -> Result<Plane> {
    convolve_plane(&Plane::from(g), kernel)
}

/// Zero-padded correlation: `out(x,y) = sum k(i,j) * in(x+i-K/2, y+j-K/2)`.
pub fn convolve_plane(input: &Plane, kernel: &Kernel) -> Result<Plane> {
    let k = kernel.size;
    if k > input.width.min(input.height) {
        return Err(Error::Parameter(format!(
            "kernel size {k} exceeds {}x{} image",
            input.width, input.height
        )));
    }
    let half = (k / 2) as isize;
    let (w, h) = (input.width as isize, input.height as isize);
    let mut out = Plane::zeros(input.width, input.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for j in 0..k as isize {
                let sy = y + j - half;
                if sy < 0 || sy >= h {
                    continue;
                }
                for i in 0..k as isize {
                    let sx = x + i - half;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    acc += kernel.weight(i as usize, j as usize) * input.get(sx as usize, sy as usize);
                }
            }
            out.data[(y * w + x) as usize] = acc;
        }
    }
    Ok(out)
}

/// Otsu's threshold: pixels strictly above the returned level are foreground.
pub fn otsu_threshold(g: &GrayFrame) -> u8 {
    let mut hist = [0u64; 256];
    for &p in &g.data {
        hist[p as usize] += 1;
    }
    let total = g.data.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();

    let mut best = (f64::NEG_INFINITY, 0u8);
    let mut weight_bg = 0.0;
    let mut sum_bg = 0.0;
    for t in 0..256usize {
        weight_bg += hist[t] as f64;
        sum_bg += t as f64 * hist[t] as f64;
        let weight_fg = total - weight_bg;
        if weight_bg == 0.0 {
            continue;
        }
        if weight_fg == 0.0 {
            // Everything at or below t; only chosen when the image has a single level.
            if best.0 == f64::NEG_INFINITY {
                best = (0.0, t as u8);
            }
            break;
        }
        let mean_bg = sum_bg / weight_bg;
        let mean_fg = (sum_all - sum_bg) / weight_fg;
        let between = weight_bg * weight_fg * (mean_bg - mean_fg).powi(2);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    best.1
}

/// Maps pixels above `threshold` to 255 and the rest to 0.
pub fn binarize(g: &GrayFrame, threshold: u8) -> GrayFrame {
    GrayFrame {
        width: g.width,
        height: g.height,
        data: g.data.iter().map(|&p| if p > threshold { 255 } else { 0 }).collect(),
    }
}
