//! Grayscale image container, bilinear sampling, patch extraction,
//! gradients, corner detection and PGM I/O.

mod corners;
mod pgm;

pub use corners::{detect_corners, Corner};
pub use pgm::{load_pgm, save_pgm};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::warp::AffineParams;

/// Normalized grayscale image: row-major intensities in `[0, 1]`.
///
/// Immutable after construction; all operations are read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Parse(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Image { width, height, data })
    }

    /// Builds an image from a per-pixel function; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }
}

/// Bilinearly interpolated intensity at a subpixel location.
///
/// Valid for `x in [0, width-1]` and `y in [0, height-1]`; integral
/// locations return the stored pixel value exactly.
pub fn bilinear_sample(img: &Image, x: f64, y: f64) -> Result<f64> {
    let (w, h) = (img.width, img.height);
    if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
        return Err(Error::OutOfBounds(format!("({x}, {y}) in {w}x{h}")));
    }
    // Clamp the cell index so the right/bottom image edge samples exactly.
    let ix = (x.floor() as usize).min(w.saturating_sub(2));
    let iy = (y.floor() as usize).min(h.saturating_sub(2));
    let fx = x - ix as f64;
    let fy = y - iy as f64;
    let v00 = img.get(ix, iy);
    let v10 = img.get((ix + 1).min(w - 1), iy);
    let v01 = img.get(ix, (iy + 1).min(h - 1));
    let v11 = img.get((ix + 1).min(w - 1), (iy + 1).min(h - 1));
    Ok((1.0 - fx) * (1.0 - fy) * v00
        + fx * (1.0 - fy) * v10
        + (1.0 - fx) * fy * v01
        + fx * fy * v11)
}

/// Central-difference gradient at an interior pixel.
pub fn gradient(img: &Image, x: usize, y: usize) -> Result<(f64, f64)> {
    if x < 1 || y < 1 || x + 1 >= img.width || y + 1 >= img.height {
        return Err(Error::OutOfBounds(format!(
            "gradient at ({x}, {y}) needs a 1-pixel margin"
        )));
    }
    let gx = (img.get(x + 1, y) - img.get(x - 1, y)) / 2.0;
    let gy = (img.get(x, y + 1) - img.get(x, y - 1)) / 2.0;
    Ok((gx, gy))
}

/// Pixel-selection pattern inside a square patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplePattern {
    /// Every pixel of the side x side grid.
    Dense,
    /// Every `stride`-th pixel in both directions, anchored at the top-left
    /// corner of the grid.
    Strided(u32),
}

impl SamplePattern {
    /// Numeric id used in persisted model headers: 0 = dense, k = strided-k.
    pub fn id(self) -> u32 {
        match self {
            SamplePattern::Dense => 0,
            SamplePattern::Strided(s) => s,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            0 => Ok(SamplePattern::Dense),
            1 => Err(Error::Format("stride must be >= 2".into())),
            s => Ok(SamplePattern::Strided(s)),
        }
    }
}

/// A square patch centered on an integer pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    /// Keypoint location in the image.
    pub center: (i32, i32),
    /// Odd side length, at least 3.
    pub side: u32,
    pub pattern: SamplePattern,
}

impl PatchSpec {
    pub fn new(center: (i32, i32), side: u32, pattern: SamplePattern) -> Result<Self> {
        let spec = PatchSpec { center, side, pattern };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dense(center: (i32, i32), side: u32) -> Result<Self> {
        PatchSpec::new(center, side, SamplePattern::Dense)
    }

    fn validate(&self) -> Result<()> {
        if self.side < 3 || self.side % 2 == 0 {
            return Err(Error::Config(format!(
                "patch side must be odd and >= 3, got {}",
                self.side
            )));
        }
        if let SamplePattern::Strided(s) = self.pattern {
            if s < 2 {
                return Err(Error::Config("stride must be >= 2".into()));
            }
        }
        let n = pattern_offsets(self.side, self.pattern).len();
        if n < 7 {
            return Err(Error::Config(format!(
                "pattern selects {n} pixels; at least 7 are needed for 6 warp parameters"
            )));
        }
        Ok(())
    }

    pub fn half(&self) -> i32 {
        (self.side / 2) as i32
    }

    /// Selected pixel offsets relative to the center, row-major.
    pub fn offsets(&self) -> Vec<(i32, i32)> {
        pattern_offsets(self.side, self.pattern)
    }

    /// Number of selected pixels.
    pub fn len(&self) -> usize {
        self.offsets().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn pattern_offsets(side: u32, pattern: SamplePattern) -> Vec<(i32, i32)> {
    let half = (side / 2) as i32;
    let mut out = Vec::new();
    for dy in -half..=half {
        for dx in -half..=half {
            let keep = match pattern {
                SamplePattern::Dense => true,
                SamplePattern::Strided(s) => {
                    ((dx + half) as u32 % s == 0) && ((dy + half) as u32 % s == 0)
                }
            };
            if keep {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Template intensities at the patch's integer locations, in offset order.
pub type TemplateVector = DVector<f64>;

/// Bounding-box intensities, row-major over the box.
pub type BBoxVector = DVector<f64>;

/// Extracts the template vector `T(0)` for a patch.
pub fn extract_template(img: &Image, spec: &PatchSpec) -> Result<TemplateVector> {
    let (cx, cy) = spec.center;
    let half = spec.half();
    check_rect(img, cx - half, cx + half, cy - half, cy + half)?;
    let values: Vec<f64> = spec
        .offsets()
        .iter()
        .map(|&(dx, dy)| img.get((cx + dx) as usize, (cy + dy) as usize))
        .collect();
    Ok(DVector::from_vec(values))
}

/// A template patch ready for alignment: values plus their offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplatePatch {
    pub values: TemplateVector,
    pub offsets: Vec<(i32, i32)>,
}

impl TemplatePatch {
    pub fn extract(img: &Image, spec: &PatchSpec) -> Result<Self> {
        Ok(TemplatePatch {
            values: extract_template(img, spec)?,
            offsets: spec.offsets(),
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Samples a patch under a warp: bilinear values at `center + M(p)·offset`.
pub fn sample_warped_patch(
    img: &Image,
    center: (i32, i32),
    offsets: &[(i32, i32)],
    params: &AffineParams,
) -> Result<DVector<f64>> {
    let m = params.to_matrix();
    let (cx, cy) = (center.0 as f64, center.1 as f64);
    let mut out = DVector::zeros(offsets.len());
    for (b, &(dx, dy)) in offsets.iter().enumerate() {
        let (wx, wy) = m.apply(dx as f64, dy as f64);
        out[b] = bilinear_sample(img, cx + wx, cy + wy)?;
    }
    Ok(out)
}

/// Extracts the row-major intensity vector of a rectangle around `center`,
/// spanning `x in [center.0 - left, center.0 + right]` and the analogous
/// vertical extent.
pub fn extract_rect(
    img: &Image,
    center: (i32, i32),
    left: i32,
    right: i32,
    top: i32,
    bottom: i32,
) -> Result<BBoxVector> {
    let (cx, cy) = center;
    check_rect(img, cx - left, cx + right, cy - top, cy + bottom)?;
    let mut out = Vec::with_capacity(((left + right + 1) * (top + bottom + 1)) as usize);
    for dy in -top..=bottom {
        for dx in -left..=right {
            out.push(img.get((cx + dx) as usize, (cy + dy) as usize));
        }
    }
    Ok(DVector::from_vec(out))
}

fn check_rect(img: &Image, x0: i32, x1: i32, y0: i32, y1: i32) -> Result<()> {
    if x0 < 0 || y0 < 0 || x1 >= img.width as i32 || y1 >= img.height as i32 {
        return Err(Error::OutOfBounds(format!(
            "rect x [{x0}, {x1}], y [{y0}, {y1}] outside {}x{}",
            img.width, img.height
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, _| x as f64 / w as f64)
    }

    #[test]
    fn bilinear_integer_and_midpoint() {
        let img = Image::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(bilinear_sample(&img, 0.0, 0.0).unwrap(), 0.25);
        assert_eq!(bilinear_sample(&img, 1.0, 0.0).unwrap(), 0.75);
        assert_abs_diff_eq!(bilinear_sample(&img, 0.5, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn bilinear_hand_expanded() {
        // 2x2 image {(0,0):0, (1,0):1, (0,1):0, (1,1):1} at (0.25, 0.75):
        // 0.75*0.25*0 + 0.25*0.25*1 + 0.75*0.75*0 + 0.25*0.75*1 = 0.25.
        let img = Image::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(
            bilinear_sample(&img, 0.25, 0.75).unwrap(),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn bilinear_out_of_bounds() {
        let img = ramp(4, 4);
        assert!(bilinear_sample(&img, -0.01, 0.0).is_err());
        assert!(bilinear_sample(&img, 0.0, 3.01).is_err());
        assert!(bilinear_sample(&img, 3.0, 3.0).is_ok());
    }

    #[test]
    fn gradient_examples() {
        let flat = Image::from_fn(5, 5, |_, _| 0.5);
        assert_eq!(gradient(&flat, 2, 2).unwrap(), (0.0, 0.0));

        let r = ramp(10, 4);
        let (gx, gy) = gradient(&r, 5, 2).unwrap();
        assert_abs_diff_eq!(gx, 0.1, epsilon = 1e-15);
        assert_eq!(gy, 0.0);

        // Central differences are exact on quadratics: d/dx (x^2/100) at 3 is 0.06.
        let q = Image::from_fn(10, 4, |x, _| (x * x) as f64 / 100.0);
        let (gx, _) = gradient(&q, 3, 1).unwrap();
        assert_abs_diff_eq!(gx, 0.06, epsilon = 1e-15);

        assert!(gradient(&r, 0, 2).is_err());
    }

    #[test]
    fn template_extraction() {
        let c = Image::from_fn(16, 16, |_, _| 0.625);
        let spec = PatchSpec::dense((8, 8), 3).unwrap();
        let t = extract_template(&c, &spec).unwrap();
        assert_eq!(t.len(), 9);
        assert!(t.iter().all(|&v| v == 0.625));

        // Each row of a 3x3 patch on an x-ramp increases strictly.
        let r = ramp(16, 16);
        let t = extract_template(&r, &spec).unwrap();
        for row in 0..3 {
            assert!(t[row * 3] < t[row * 3 + 1] && t[row * 3 + 1] < t[row * 3 + 2]);
        }

        // Footprint must stay inside.
        let edge = PatchSpec::dense((0, 8), 3).unwrap();
        assert!(extract_template(&r, &edge).is_err());
    }

    #[test]
    fn template_matches_bilinear_at_integer_locations() {
        let img = Image::from_fn(32, 32, |x, y| {
            (0.3 + 0.2 * ((x * 7 + y * 13) % 11) as f64 / 11.0).clamp(0.0, 1.0)
        });
        let spec = PatchSpec::dense((16, 16), 9).unwrap();
        let t = extract_template(&img, &spec).unwrap();
        for (b, &(dx, dy)) in spec.offsets().iter().enumerate() {
            let s = bilinear_sample(&img, (16 + dx) as f64, (16 + dy) as f64).unwrap();
            assert_eq!(t[b], s);
        }
    }

    #[test]
    fn strided_pattern_counts() {
        let spec = PatchSpec::new((10, 10), 9, SamplePattern::Strided(2)).unwrap();
        assert_eq!(spec.len(), 25); // every other pixel of a 9x9 grid
        let offs = spec.offsets();
        assert_eq!(offs[0], (-4, -4));
        assert_eq!(offs[1], (-2, -4));
        // 3x3 strided-2 has 4 pixels: below the 7-pixel minimum.
        assert!(PatchSpec::new((10, 10), 3, SamplePattern::Strided(2)).is_err());
    }

    #[test]
    fn rect_extraction() {
        let r = ramp(8, 8);
        let v = extract_rect(&r, (4, 4), 1, 2, 1, 0).unwrap();
        assert_eq!(v.len(), 4 * 2);
        assert_eq!(v[0], r.get(3, 3));
        assert_eq!(v[3], r.get(6, 3));
        assert_eq!(v[7], r.get(6, 4));
        assert!(extract_rect(&r, (0, 0), 1, 1, 1, 1).is_err());
    }

    proptest! {
        // Interpolating a constant image returns the constant: the four
        // bilinear weights sum to one (up to a rounding ulp).
        #[test]
        fn weights_sum_to_one(x in 0.0f64..7.0, y in 0.0f64..7.0) {
            let img = Image::from_fn(8, 8, |_, _| 0.4375);
            let v = bilinear_sample(&img, x, y).unwrap();
            prop_assert!((v - 0.4375).abs() < 1e-15);
        }

        // Lipschitz continuity in x with bound 2 * eps * max |delta I|.
        #[test]
        fn lipschitz(x in 0.5f64..6.0, y in 0.5f64..6.0, eps in 1e-6f64..0.5) {
            let img = Image::from_fn(8, 8, |x, y| ((x * 31 + y * 17) % 13) as f64 / 13.0);
            let a = bilinear_sample(&img, x, y).unwrap();
            let b = bilinear_sample(&img, x + eps, y).unwrap();
            prop_assert!((a - b).abs() <= 2.0 * eps * 1.0 + 1e-12);
        }
    }
}
