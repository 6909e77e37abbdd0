//! Grayscale images, integral images and the image pyramid.

use alloc::vec;
use alloc::vec::Vec;

/// A rectangle query fell outside the image it was evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("rectangle x={x} y={y} w={w} h={h} exceeds {width}x{height} image")]
pub struct BoundsError {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} bytes, {width}x{height} needs {expected}")]
    LengthMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("target dimensions {out_w}x{out_h} must lie in 1x1..={width}x{height}")]
    BadTarget {
        out_w: usize,
        out_h: usize,
        width: usize,
        height: usize,
    },
    #[error("scale factor must be finite and > 1, got {0}")]
    BadScaleFactor(f64),
}

/// Axis-aligned rectangle, `(x, y)` is the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub const fn area(&self) -> usize {
        self.w * self.h
    }

    pub const fn right(&self) -> usize {
        self.x + self.w
    }

    pub const fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn translate(&self, dx: usize, dy: usize) -> Rect {
        Rect::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// True when the rectangle is non-empty and fits in a `width x height` frame.
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1 && self.h >= 1 && self.right() <= width && self.bottom() <= height
    }

    pub fn intersection_area(&self, other: &Rect) -> usize {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            (x1 - x0) * (y1 - y0)
        } else {
            0
        }
    }

    /// Intersection over union; `0.0` when both rectangles are empty.
    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width * height;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    /// Image with every pixel set to `value`.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        GrayImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from a `(x, y) -> intensity` function.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Copies out a sub-image.
    pub fn crop(&self, r: Rect) -> Result<GrayImage, BoundsError> {
        if !r.fits(self.width, self.height) {
            return Err(self.bounds_error(r));
        }
        Ok(GrayImage::from_fn(r.w, r.h, |x, y| self.get(r.x + x, r.y + y)))
    }

    fn bounds_error(&self, r: Rect) -> BoundsError {
        BoundsError {
            x: r.x,
            y: r.y,
            w: r.w,
            h: r.h,
            width: self.width,
            height: self.height,
        }
    }
}

/// Plain and squared integral images of a [`GrayImage`].
///
/// Tables are stored with a zero row and column prepended, so every
/// rectangle sum is exactly four lookups with no edge cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralPair {
    width: usize,
    height: usize,
    stride: usize,
    ii: Vec<u64>,
    sq_ii: Vec<u64>,
}

impl IntegralPair {
    /// Single-pass running-row construction of both tables.
    pub fn new(img: &GrayImage) -> Self {
        let (width, height) = img.dims();
        let stride = width + 1;
        let mut ii = vec![0u64; stride * (height + 1)];
        let mut sq_ii = vec![0u64; stride * (height + 1)];
        for y in 0..height {
            let row = &img.as_raw()[y * width..(y + 1) * width];
            let mut run = 0u64;
            let mut run_sq = 0u64;
            let above = y * stride;
            let here = (y + 1) * stride;
            for (x, &p) in row.iter().enumerate() {
                let p = u64::from(p);
                run += p;
                run_sq += p * p;
                ii[here + x + 1] = ii[above + x + 1] + run;
                sq_ii[here + x + 1] = sq_ii[above + x + 1] + run_sq;
            }
        }
        IntegralPair {
            width,
            height,
            stride,
            ii,
            sq_ii,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum of all pixels with coordinates `<= (x, y)`.
    pub fn ii(&self, x: usize, y: usize) -> u64 {
        self.ii[(y + 1) * self.stride + x + 1]
    }

    /// Sum of squared pixels with coordinates `<= (x, y)`.
    pub fn sq_ii(&self, x: usize, y: usize) -> u64 {
        self.sq_ii[(y + 1) * self.stride + x + 1]
    }

    /// The bottom-right entry of the plain table: the sum of every pixel.
    pub fn integral_value(&self) -> u64 {
        self.ii(self.width - 1, self.height - 1)
    }

    /// `D + A - B - C` over the selected table.
    pub fn rect_sum(&self, r: Rect, use_squared: bool) -> Result<u64, BoundsError> {
        if !r.fits(self.width, self.height) {
            return Err(BoundsError {
                x: r.x,
                y: r.y,
                w: r.w,
                h: r.h,
                width: self.width,
                height: self.height,
            });
        }
        let table = if use_squared { &self.sq_ii } else { &self.ii };
        Ok(self.corner_sum(table, r))
    }

    /// Caller guarantees `r` fits.
    #[inline]
    pub(crate) fn sum_unchecked(&self, r: Rect) -> u64 {
        self.corner_sum(&self.ii, r)
    }

    #[inline]
    fn corner_sum(&self, table: &[u64], r: Rect) -> u64 {
        let a = table[r.y * self.stride + r.x];
        let b = table[r.y * self.stride + r.right()];
        let c = table[r.bottom() * self.stride + r.x];
        let d = table[r.bottom() * self.stride + r.right()];
        (d + a) - (b + c)
    }

    /// `floor(sqrt(N * sum(x^2) - sum(x)^2))` over the window, i.e. `N * sigma`
    /// with sigma the population deviation and `N = w * h`.
    pub fn window_stddev(&self, x: usize, y: usize, w: usize, h: usize) -> Result<u64, BoundsError> {
        let r = Rect::new(x, y, w, h);
        let s = self.rect_sum(r, false)?;
        let sq = self.rect_sum(r, true)?;
        Ok(scaled_deviation(r.area() as u64, s, sq))
    }

    /// Caller guarantees the window fits.
    #[inline]
    pub(crate) fn window_stddev_unchecked(&self, r: Rect) -> u64 {
        let s = self.corner_sum(&self.ii, r);
        let sq = self.corner_sum(&self.sq_ii, r);
        scaled_deviation(r.area() as u64, s, sq)
    }
}

#[inline]
fn scaled_deviation(n: u64, sum: u64, sum_sq: u64) -> u64 {
    let lhs = u128::from(n) * u128::from(sum_sq);
    let rhs = u128::from(sum) * u128::from(sum);
    // Cauchy-Schwarz keeps lhs >= rhs; saturate anyway.
    lhs.saturating_sub(rhs).isqrt() as u64
}

pub fn compute_integrals(img: &GrayImage) -> IntegralPair {
    IntegralPair::new(img)
}

/// Nearest-neighbour reduction: output `(i, j)` samples source
/// `(floor(i * width / out_w), floor(j * height / out_h))`.
pub fn downscale_nearest(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, ImageError> {
    let (width, height) = img.dims();
    if out_w == 0 || out_h == 0 || out_w > width || out_h > height {
        return Err(ImageError::BadTarget {
            out_w,
            out_h,
            width,
            height,
        });
    }
    let cols: Vec<usize> = (0..out_w).map(|i| i * width / out_w).collect();
    let mut data = Vec::with_capacity(out_w * out_h);
    for j in 0..out_h {
        let src = j * height / out_h;
        let row = &img.as_raw()[src * width..(src + 1) * width];
        data.extend(cols.iter().map(|&c| row[c]));
    }
    Ok(GrayImage {
        width: out_w,
        height: out_h,
        data,
    })
}

/// One pyramid level and its absolute scale relative to the source.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub image: GrayImage,
    pub scale: f64,
}

// Guards `floor(w / s^k)` against representation error in `s`
// (e.g. 33 / 1.1 evaluating to 29.999999999999996).
const FLOOR_EPS: f64 = 1e-9;

/// Dimensions of pyramid level `k`: `floor(dim / scale_factor^k)`.
pub fn level_dims(width: usize, height: usize, scale_factor: f64, k: u32) -> (usize, usize, f64) {
    let scale = libm::pow(scale_factor, f64::from(k));
    let w = libm::floor(width as f64 / scale + FLOOR_EPS) as usize;
    let h = libm::floor(height as f64 / scale + FLOOR_EPS) as usize;
    (w, h, scale)
}

/// Level dimensions and scales, without materialising the images.
pub fn pyramid_shape(
    width: usize,
    height: usize,
    scale_factor: f64,
    min_w: usize,
    min_h: usize,
) -> Result<Vec<(usize, usize, f64)>, ImageError> {
    if !(scale_factor.is_finite() && scale_factor > 1.0) {
        return Err(ImageError::BadScaleFactor(scale_factor));
    }
    let mut levels = Vec::new();
    for k in 0.. {
        let (w, h, s) = level_dims(width, height, scale_factor, k);
        if w < min_w.max(1) || h < min_h.max(1) {
            break;
        }
        levels.push((w, h, s));
    }
    Ok(levels)
}

/// Scales the image (not the window) down by `scale_factor` per level until
/// either side would drop below its minimum. Level 0 is the original.
pub fn build_pyramid(
    img: &GrayImage,
    scale_factor: f64,
    min_w: usize,
    min_h: usize,
) -> Result<Vec<PyramidLevel>, ImageError> {
    pyramid_shape(img.width(), img.height(), scale_factor, min_w, min_h)?
        .into_iter()
        .map(|(w, h, scale)| {
            let image = if (w, h) == img.dims() {
                img.clone()
            } else {
                downscale_nearest(img, w, h)?
            };
            Ok(PyramidLevel { image, scale })
        })
        .collect()
}
