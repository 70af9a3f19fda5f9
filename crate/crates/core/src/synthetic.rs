//! Rendered test imagery: anti-aliased dark discs on a flat background as
//! stand-ins for an iris inside an eye crop, and filled eye-opening ellipses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imgproc::GrayFrame;

/// Supersampling factor per axis used when rendering.
const SUBSAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscSpec {
    pub width: usize,
    pub height: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub radius: f64,
    pub background: u8,
    pub foreground: u8,
}

/// Disc with coverage-weighted edges; pixel `(x, y)` covers `[x, x+1) x [y, y+1)`
/// and its centre sits at `(x + 0.5, y + 0.5)`, so a disc centred on `(cx, cy)`
/// has its pixel-index centre at `(cx - 0.5, cy - 0.5)`.
pub fn render_disc(spec: &DiscSpec) -> Result<GrayFrame> {
    let inside = |px: f64, py: f64| (px - spec.center_x).hypot(py - spec.center_y) <= spec.radius;
    render_coverage(spec.width, spec.height, spec.background, spec.foreground, inside)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub width: usize,
    pub height: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub background: u8,
    pub foreground: u8,
}

/// Axis-aligned ellipse, major axis horizontal.
pub fn render_ellipse(spec: &EllipseSpec) -> Result<GrayFrame> {
    let inside = |px: f64, py: f64| {
        let u = (px - spec.center_x) / spec.semi_major;
        let v = (py - spec.center_y) / spec.semi_minor;
        u * u + v * v <= 1.0
    };
    render_coverage(spec.width, spec.height, spec.background, spec.foreground, inside)
}

fn render_coverage(
    width: usize,
    height: usize,
    background: u8,
    foreground: u8,
    inside: impl Fn(f64, f64) -> bool,
) -> Result<GrayFrame> {
    let step = 1.0 / SUBSAMPLES as f64;
    GrayFrame::from_fn(width, height, |x, y| {
        let mut hits = 0;
        for sy in 0..SUBSAMPLES {
            for sx in 0..SUBSAMPLES {
                let px = x as f64 + (sx as f64 + 0.5) * step;
                let py = y as f64 + (sy as f64 + 0.5) * step;
                if inside(px, py) {
                    hits += 1;
                }
            }
        }
        let cover = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
        (background as f64 + cover * (foreground as f64 - background as f64)).round() as u8
    })
}

/// Pastes `src` onto a `width` x `height` canvas filled with `fill`, top-left at
/// `(dx, dy)` (may be negative); parts falling outside are cut.
pub fn place_on_canvas(src: &GrayFrame, width: usize, height: usize, dx: i64, dy: i64, fill: u8) -> Result<GrayFrame> {
    GrayFrame::from_fn(width, height, |x, y| {
        let sx = x as i64 - dx;
        let sy = y as i64 - dy;
        if sx >= 0 && sy >= 0 && (sx as usize) < src.width() && (sy as usize) < src.height() {
            src.get(sx as usize, sy as usize)
        } else {
            fill
        }
    })
}

/// Adds independent uniform noise in `[-amplitude, amplitude]` to every pixel, saturating.
pub fn add_noise(frame: &GrayFrame, amplitude: u8, seed: u64) -> GrayFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = amplitude as i16;
    let data = frame
        .data()
        .iter()
        .map(|&p| (p as i16 + rng.random_range(-a..=a)).clamp(0, 255) as u8)
        .collect();
    GrayFrame::new(frame.width(), frame.height(), data).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_coverage() {
        let spec = DiscSpec { width: 20, height: 20, center_x: 10.0, center_y: 10.0, radius: 4.0, background: 200, foreground: 0 };
        let g = render_disc(&spec).unwrap();
        assert_eq!(g.get(9, 9), 0);
        assert_eq!(g.get(0, 0), 200);
        let dark: f64 = g.data().iter().map(|&p| (200 - p) as f64 / 200.0).sum();
        assert!((dark - std::f64::consts::PI * 16.0).abs() < 1.5, "{dark}");
    }

    #[test]
    fn ellipse_is_symmetric() {
        let spec = EllipseSpec {
            width: 40,
            height: 20,
            center_x: 20.0,
            center_y: 10.0,
            semi_major: 15.0,
            semi_minor: 5.0,
            background: 255,
            foreground: 0,
        };
        let g = render_ellipse(&spec).unwrap();
        assert_eq!(g, g.flip_horizontal());
    }

    #[test]
    fn canvas_and_noise() {
        let src = GrayFrame::filled(4, 4, 100).unwrap();
        let c = place_on_canvas(&src, 10, 8, -2, 6, 7).unwrap();
        assert_eq!(c.get(0, 6), 100);
        assert_eq!(c.get(1, 7), 100);
        assert_eq!(c.get(2, 6), 7);
        assert_eq!(c.get(0, 5), 7);
        let n = add_noise(&c, 3, 9);
        assert!(n.data().iter().zip(c.data()).all(|(&a, &b)| (a as i16 - b as i16).abs() <= 3));
        assert_eq!(n, add_noise(&c, 3, 9));
        assert_eq!(add_noise(&c, 0, 1), c);
    }
}
