//! Deterministic synthetic images for tests, examples and the CLI.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::imaging::Image;

/// A textured board: smooth low-frequency waves plus pseudo-random Gaussian
/// blobs of mixed polarity and size. Plenty of well-conditioned corners,
/// smooth enough for gradient-based alignment.
pub fn textured_board(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blobs = (width * height / 160).max(8);
    // Amplitudes span faint to strong so detected corners vary in quality,
    // like keypoints in a real photograph.
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let amp = rng.random_range(0.06..0.40f64);
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(1.0..3.5f64),
                if rng.random_bool(0.5) { amp } else { -amp },
            )
        })
        .collect();

    // Baked-in pixel noise, as in any real exposure. It roughens the SSD
    // landscape around weak corners without breaking determinism.
    let mut grain = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6169_6e00_0001);
    Image::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = 0.5
            + 0.12 * (xf * 0.21).sin() * (yf * 0.17).cos()
            + 0.08 * ((xf * 0.045 + yf * 0.062).sin());
        for &(bx, by, s, amp) in &blobs {
            let d2 = (xf - bx).powi(2) + (yf - by).powi(2);
            v += amp * (-d2 / (2.0 * s * s)).exp();
        }
        v += grain.random_range(-0.02..0.02);
        v.clamp(0.02, 0.98)
    })
}

/// A gently varying scene: long-wavelength waves and fat blobs only. The
/// bilinear interpolant of this image is close to the underlying smooth
/// function, which gradient-based refiners rely on.
pub fn smooth_board(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blobs = (width * height / 300).max(6);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(2.5..5.0f64),
                if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            )
        })
        .collect();

    Image::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = 0.5
            + 0.15 * (xf * 0.31).sin() * (yf * 0.27).cos()
            + 0.10 * ((xf * 0.022 + yf * 0.035).sin());
        for &(bx, by, s, sign) in &blobs {
            let d2 = (xf - bx).powi(2) + (yf - by).powi(2);
            v += sign * 0.3 * (-d2 / (2.0 * s * s)).exp();
        }
        v.clamp(0.02, 0.98)
    })
}

/// A checkerboard with square cells of the given side.
pub fn checkerboard(width: usize, height: usize, cell: usize) -> Image {
    Image::from_fn(width, height, |x, y| {
        if (x / cell + y / cell) % 2 == 0 {
            0.9
        } else {
            0.1
        }
    })
}

/// Uniform pseudo-random noise in `[0, 1]`; maximally textured, useful for
/// well-conditioned learning instances.
pub fn noise(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(width, height, |_, _| rng.random_range(0.0..=1.0))
}
