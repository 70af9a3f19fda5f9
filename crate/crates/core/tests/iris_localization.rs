use ocugaze::eye_region::{EyeRoi, EyeSide};
use ocugaze::imgproc::GrayFrame;
use ocugaze::ocular::{locate_iris, segment_eye};
use ocugaze::synthetic::{render_disc, DiscSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn roi(crop: GrayFrame) -> EyeRoi {
    let mean_intensity = crop.mean_intensity();
    EyeRoi { crop, origin: (0, 0), scale_factor: 1.0, side: EyeSide::Right, mean_intensity }
}

fn random_spec(rng: &mut ChaCha8Rng) -> DiscSpec {
    let (width, height) = (36, 24);
    let radius = rng.random_range(3.0..=4.5);
    let margin = radius + 2.0;
    let background: u8 = rng.random_range(70..=200);
    // Same iris-to-sclera contrast at every brightness.
    let foreground = (background as f64 * 0.2).round() as u8;
    DiscSpec {
        width,
        height,
        center_x: rng.random_range(margin..width as f64 - margin),
        center_y: rng.random_range(margin..height as f64 - margin),
        radius,
        background,
        foreground,
    }
}

/// Masked inverted crop convolved with the separable kernel by direct summation,
/// then the global maximum (ties: nearest the centre, then raster order).
fn exhaustive_argmax(crop: &GrayFrame) -> (usize, usize) {
    let seg = segment_eye(crop).unwrap();
    let taps = [0.1, 0.2, 0.4, 0.2, 0.1];
    let (w, h) = (crop.width() as i64, crop.height() as i64);
    let input = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h || seg.mask.get(x as usize, y as usize) != 255 {
            0.0
        } else {
            seg.inverted.get(x as usize, y as usize) as f64
        }
    };
    let centre = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let mut best: Option<(f64, f64, (usize, usize))> = None;
    for y in 0..h {
        for x in 0..w {
            let mut r = 0.0;
            for j in 0..5 {
                for i in 0..5 {
                    r += taps[i] * taps[j] * input(x + i as i64 - 2, y + j as i64 - 2);
                }
            }
            let d = (x as f64 - centre.0).powi(2) + (y as f64 - centre.1).powi(2);
            let better = match best {
                None => true,
                Some((br, bd, _)) => r > br + 1e-9 || ((r - br).abs() <= 1e-9 && d < bd),
            };
            if better {
                best = Some((r, d, (x as usize, y as usize)));
            }
        }
    }
    best.unwrap().2
}

#[test]
fn synthetic_discs_are_localized() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut total_error = 0.0;
    for _ in 0..200 {
        let spec = random_spec(&mut rng);
        let crop = render_disc(&spec).unwrap();
        let iris = locate_iris(&roi(crop.clone())).unwrap();
        // Pixel (x, y) is centred at (x + 0.5, y + 0.5) in render coordinates.
        let err = (iris.x + 0.5 - spec.center_x).hypot(iris.y + 0.5 - spec.center_y);
        total_error += err;
        assert_eq!(iris.pixel, exhaustive_argmax(&crop), "{spec:?}");
    }
    let mean = total_error / 200.0;
    assert!(mean <= 1.0, "mean error {mean}");
}
