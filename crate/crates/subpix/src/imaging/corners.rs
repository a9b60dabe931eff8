//! Harris-style corner detection with 3x3 non-maximum suppression.
//!
//! The benchmark only needs repeatable, textured keypoints; the response is
//! the classic `det(S) - k trace(S)^2` on 3x3-summed gradient products.

use super::Image;

const HARRIS_K: f64 = 0.04;

/// A detected corner with its response score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: u32,
    pub y: u32,
    pub score: f64,
}

/// Detects corners, strongest first.
///
/// Keeps local maxima of the Harris response above `min_score` that lie at
/// least `margin` pixels from every border, and returns at most `max_count`
/// of them sorted by descending score (ties broken by row-major position).
pub fn detect_corners(img: &Image, max_count: usize, min_score: f64, margin: u32) -> Vec<Corner> {
    let (w, h) = (img.width(), img.height());
    if w < 5 || h < 5 || max_count == 0 {
        return Vec::new();
    }

    // Gradient products on the interior.
    let mut gxx = vec![0.0f64; w * h];
    let mut gyy = vec![0.0f64; w * h];
    let mut gxy = vec![0.0f64; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (img.get(x + 1, y) - img.get(x - 1, y)) / 2.0;
            let gy = (img.get(x, y + 1) - img.get(x, y - 1)) / 2.0;
            gxx[y * w + x] = gx * gx;
            gyy[y * w + x] = gy * gy;
            gxy[y * w + x] = gx * gy;
        }
    }

    // 3x3 box sums and the Harris response.
    let mut score = vec![f64::NEG_INFINITY; w * h];
    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    let i = (y + dy - 1) * w + (x + dx - 1);
                    sxx += gxx[i];
                    syy += gyy[i];
                    sxy += gxy[i];
                }
            }
            let det = sxx * syy - sxy * sxy;
            let tr = sxx + syy;
            score[y * w + x] = det - HARRIS_K * tr * tr;
        }
    }

    let margin = margin.max(2) as usize;
    if w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let mut corners = Vec::new();
    for y in margin..h - margin {
        for x in margin..w - margin {
            let s = score[y * w + x];
            if s < min_score {
                continue;
            }
            // Non-max suppression over the 3x3 neighborhood; equal scores
            // keep the row-major-first pixel so ties yield one corner.
            let mut is_max = true;
            'nms: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let q = score[(y as i32 + dy) as usize * w + (x as i32 + dx) as usize];
                    if q > s || (q == s && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                corners.push(Corner { x: x as u32, y: y as u32, score: s });
            }
        }
    }

    corners.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| (a.y, a.x).cmp(&(b.y, b.x)))
    });
    corners.truncate(max_count);
    corners
}
