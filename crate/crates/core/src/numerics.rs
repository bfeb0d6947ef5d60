//! Dense image/volume containers and the small set of array operations the
//! rest of the engine builds on.
//!
//! Values are stored as `f32`; reductions (sums, means, softmax denominators)
//! accumulate in `f64` so results are deterministic and well conditioned.
//! All containers are plain row-major buffers, immutable after construction
//! from the caller's point of view.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("kernel size must be odd, got {0}")]
    EvenKernel(usize),
    #[error("target dimensions must be >= 1, got {0}x{1}")]
    ZeroTargetDims(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Row-major H x W x C image of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * channels, "data length mismatch");
        Self { height, width, channels, data }
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.idx(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major D x H x W x C volume of `f32` values (planes outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeF {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl VolumeF {
    pub fn new(planes: usize, height: usize, width: usize, channels: usize) -> Self {
        Self { planes, height, width, channels, data: vec![0.0; planes * height * width * channels] }
    }

    #[inline]
    pub fn idx(&self, p: usize, y: usize, x: usize, c: usize) -> usize {
        ((p * self.height + y) * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, p: usize, y: usize, x: usize, c: usize) -> f32 {
        self.data[self.idx(p, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, y: usize, x: usize, c: usize, v: f32) {
        let i = self.idx(p, y, x, c);
        self.data[i] = v;
    }
}

/// Result of sampling an image at a real-valued coordinate.
///
/// `valid = false` means the coordinate fell outside `[0, W-1] x [0, H-1]`;
/// the value vector is then all zero so invalidity can propagate into loss
/// masks instead of fabricating border colors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleResult {
    pub value: Vec<f32>,
    pub valid: bool,
}

/// Bilinear sample of `img` at continuous coordinate `(x, y)`.
///
/// Pixel centers sit at integer coordinates. Out-of-bounds coordinates yield
/// an invalid, all-zero result.
pub fn bilinear_sample(img: &ImageF, x: f64, y: f64) -> SampleResult {
    let mut value = vec![0.0f32; img.channels];
    let valid = sample_into(img, x, y, &mut value);
    if !valid {
        value.iter_mut().for_each(|v| *v = 0.0);
    }
    SampleResult { value, valid }
}

/// Allocation-free form of [`bilinear_sample`]; returns whether the sample is
/// in bounds. `out` is left untouched when out of bounds.
#[inline]
pub fn sample_into(img: &ImageF, x: f64, y: f64, out: &mut [f32]) -> bool {
    debug_assert_eq!(out.len(), img.channels);
    let w = img.width;
    let h = img.height;
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return false;
    }
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    for c in 0..img.channels {
        let v = w00 * img.get(y0, x0, c) as f64
            + w10 * img.get(y0, x1, c) as f64
            + w01 * img.get(y1, x0, c) as f64
            + w11 * img.get(y1, x1, c) as f64;
        out[c] = v as f32;
    }
    true
}

/// Bilinear sample plus the analytic partial derivatives of each channel with
/// respect to `x` and `y`. Used by the image-synthesis loss gradient.
///
/// Returns `false` (out untouched) when out of bounds. The derivative is the
/// one-sided derivative of the bilinear patch containing the coordinate.
pub fn sample_with_grad(
    img: &ImageF,
    x: f64,
    y: f64,
    value: &mut [f32],
    dvdx: &mut [f64],
    dvdy: &mut [f64],
) -> bool {
    let w = img.width;
    let h = img.height;
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return false;
    }
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    // identical arithmetic to sample_into so that equal inputs give
    // bit-equal values (the synthesis loss relies on an exact zero at
    // ground truth)
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    for c in 0..img.channels {
        let v00 = img.get(y0, x0, c) as f64;
        let v10 = img.get(y0, x1, c) as f64;
        let v01 = img.get(y1, x0, c) as f64;
        let v11 = img.get(y1, x1, c) as f64;
        value[c] = (w00 * v00 + w10 * v10 + w01 * v01 + w11 * v11) as f32;
        dvdx[c] = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
        dvdy[c] = v01 + fx * (v11 - v01) - (v00 + fx * (v10 - v00));
    }
    true
}

/// Convolve each channel with a fixed odd-sized kernel, replicate padding at
/// the borders. Linear in the input.
pub fn conv2d_fixed(img: &ImageF, kernel: &[f32], k: usize) -> Result<ImageF, NumericsError> {
    if k % 2 == 0 {
        return Err(NumericsError::EvenKernel(k));
    }
    assert_eq!(kernel.len(), k * k, "kernel length mismatch");
    let r = (k / 2) as isize;
    let h = img.height as isize;
    let w = img.width as isize;
    let mut out = ImageF::new(img.height, img.width, img.channels);
    for y in 0..h {
        for x in 0..w {
            for c in 0..img.channels {
                let mut acc = 0.0f64;
                for ky in -r..=r {
                    let sy = (y + ky).clamp(0, h - 1) as usize;
                    for kx in -r..=r {
                        let sx = (x + kx).clamp(0, w - 1) as usize;
                        let kv = kernel[((ky + r) as usize) * k + (kx + r) as usize] as f64;
                        acc += kv * img.get(sy, sx, c) as f64;
                    }
                }
                out.set(y as usize, x as usize, c, acc as f32);
            }
        }
    }
    Ok(out)
}

/// Exp-normalize along the plane axis, independently per (y, x, channel).
///
/// Computed with max subtraction, so the result is invariant under per-pixel
/// constant shifts of the input. Per-pixel plane sums are 1 within 1e-6.
pub fn softmax_over_planes(v: &VolumeF) -> VolumeF {
    assert!(v.planes >= 1, "need at least one plane");
    let mut out = VolumeF::new(v.planes, v.height, v.width, v.channels);
    for y in 0..v.height {
        for x in 0..v.width {
            for c in 0..v.channels {
                let mut max = f64::NEG_INFINITY;
                for p in 0..v.planes {
                    max = max.max(v.get(p, y, x, c) as f64);
                }
                let mut denom = 0.0f64;
                for p in 0..v.planes {
                    denom += ((v.get(p, y, x, c) as f64) - max).exp();
                }
                for p in 0..v.planes {
                    let e = ((v.get(p, y, x, c) as f64) - max).exp();
                    out.set(p, y, x, c, (e / denom) as f32);
                }
            }
        }
    }
    out
}

/// Bilinear resize with corner-aligned coordinate mapping: source corner
/// pixels map exactly onto destination corner pixels.
pub fn resize_bilinear(img: &ImageF, new_h: usize, new_w: usize) -> Result<ImageF, NumericsError> {
    if new_h == 0 || new_w == 0 {
        return Err(NumericsError::ZeroTargetDims(new_h, new_w));
    }
    if new_h == img.height && new_w == img.width {
        return Ok(img.clone());
    }
    let sy = if new_h > 1 { (img.height - 1) as f64 / (new_h - 1) as f64 } else { 0.0 };
    let sx = if new_w > 1 { (img.width - 1) as f64 / (new_w - 1) as f64 } else { 0.0 };
    let mut out = ImageF::new(new_h, new_w, img.channels);
    let mut buf = vec![0.0f32; img.channels];
    for y in 0..new_h {
        for x in 0..new_w {
            // the product can overshoot the last pixel by an ulp
            let src_y = (y as f64 * sy).min((img.height - 1) as f64);
            let src_x = (x as f64 * sx).min((img.width - 1) as f64);
            let ok = sample_into(img, src_x, src_y, &mut buf);
            debug_assert!(ok);
            for c in 0..img.channels {
                out.set(y, x, c, buf[c]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_image(h: usize, w: usize) -> ImageF {
        let data = (0..h * w).map(|i| i as f32).collect();
        ImageF::from_data(h, w, 1, data)
    }

    #[test]
    fn bilinear_at_grid_node_is_exact() {
        let img = ramp_image(5, 4);
        let s = bilinear_sample(&img, 2.0, 3.0);
        assert!(s.valid);
        assert_eq!(s.value[0], img.get(3, 2, 0));
    }

    #[test]
    fn bilinear_center_of_four_pixels() {
        let img = ImageF::from_data(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]);
        let s = bilinear_sample(&img, 0.5, 0.5);
        assert!(s.valid);
        assert!((s.value[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn bilinear_out_of_bounds_invalid_zero() {
        let img = ramp_image(3, 3);
        let s = bilinear_sample(&img, -0.5, 1.0);
        assert!(!s.valid);
        assert_eq!(s.value, vec![0.0]);
    }

    #[test]
    fn bilinear_grad_matches_finite_differences() {
        let img = ImageF::from_data(
            4,
            4,
            1,
            (0..16).map(|i| ((i * 7919) % 23) as f32 / 23.0).collect(),
        );
        // interpolation is linear within a cell, so a generous step keeps
        // the stencil exact while drowning out f32 rounding
        let step = 5e-2;
        for &(x, y) in &[(1.3, 1.7), (0.2, 2.6), (2.1, 0.4)] {
            let mut v = [0.0f32];
            let mut dx = [0.0f64];
            let mut dy = [0.0f64];
            assert!(sample_with_grad(&img, x, y, &mut v, &mut dx, &mut dy));
            let fxp = bilinear_sample(&img, x + step, y).value[0] as f64;
            let fxm = bilinear_sample(&img, x - step, y).value[0] as f64;
            let fyp = bilinear_sample(&img, x, y + step).value[0] as f64;
            let fym = bilinear_sample(&img, x, y - step).value[0] as f64;
            let fd_x = (fxp - fxm) / (2.0 * step);
            let fd_y = (fyp - fym) / (2.0 * step);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-8);
            assert!(rel(dx[0], fd_x) < 1e-4, "dx {} vs fd {}", dx[0], fd_x);
            assert!(rel(dy[0], fd_y) < 1e-4, "dy {} vs fd {}", dy[0], fd_y);
        }
    }

    #[test]
    fn conv_identity_kernel() {
        let img = ramp_image(4, 5);
        let mut kernel = vec![0.0f32; 9];
        kernel[4] = 1.0;
        let out = conv2d_fixed(&img, &kernel, 3).unwrap();
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn conv_constant_preserved_by_normalized_kernel() {
        let img = ImageF::from_data(3, 3, 1, vec![2.5; 9]);
        let kernel = vec![1.0 / 9.0; 9];
        let out = conv2d_fixed(&img, &kernel, 3).unwrap();
        for v in &out.data {
            assert!((v - 2.5).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_impulse_box_kernel() {
        let mut img = ImageF::new(5, 5, 1);
        img.set(2, 2, 0, 1.0);
        let kernel = vec![1.0 / 9.0; 9];
        let out = conv2d_fixed(&img, &kernel, 3).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let expect = if (1..=3).contains(&y) && (1..=3).contains(&x) { 1.0 / 9.0 } else { 0.0 };
                assert!((out.get(y, x, 0) - expect).abs() < 1e-6, "at ({y},{x})");
            }
        }
    }

    #[test]
    fn conv_rejects_even_kernel() {
        let img = ramp_image(3, 3);
        assert!(conv2d_fixed(&img, &[0.25; 4], 2).is_err());
    }

    #[test]
    fn conv_linearity() {
        let a = ramp_image(4, 4);
        let b = ImageF::from_data(4, 4, 1, (0..16).map(|i| ((i * 31) % 11) as f32).collect());
        let kernel: Vec<f32> = (0..9).map(|i| (i as f32 - 4.0) * 0.1).collect();
        let combo = ImageF::from_data(
            4,
            4,
            1,
            a.data.iter().zip(&b.data).map(|(x, y)| 2.0 * x - 0.5 * y).collect(),
        );
        let ca = conv2d_fixed(&a, &kernel, 3).unwrap();
        let cb = conv2d_fixed(&b, &kernel, 3).unwrap();
        let cc = conv2d_fixed(&combo, &kernel, 3).unwrap();
        for i in 0..cc.data.len() {
            let expect = 2.0 * ca.data[i] - 0.5 * cb.data[i];
            assert!((cc.data[i] - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn softmax_uniform_planes() {
        let v = VolumeF::new(4, 2, 2, 1);
        let s = softmax_over_planes(&v);
        for val in &s.data {
            assert!((val - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn softmax_hand_evaluated() {
        let mut v = VolumeF::new(2, 1, 1, 1);
        v.set(0, 0, 0, 0, 0.0);
        v.set(1, 0, 0, 0, 3.0f32.ln());
        let s = softmax_over_planes(&v);
        assert!((s.get(0, 0, 0, 0) - 0.25).abs() < 1e-6);
        assert!((s.get(1, 0, 0, 0) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut v = VolumeF::new(3, 2, 2, 1);
        for (i, d) in v.data.iter_mut().enumerate() {
            *d = ((i * 17) % 7) as f32 * 0.3;
        }
        let mut shifted = v.clone();
        for p in 0..3 {
            for y in 0..2 {
                for x in 0..2 {
                    let c = (y * 2 + x) as f32 * 5.0;
                    let val = shifted.get(p, y, x, 0) + c;
                    shifted.set(p, y, x, 0, val);
                }
            }
        }
        let a = softmax_over_planes(&v);
        let b = softmax_over_planes(&shifted);
        for i in 0..a.data.len() {
            assert!((a.data[i] - b.data[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_same_size_identity() {
        let img = ramp_image(4, 5);
        let out = resize_bilinear(&img, 4, 5).unwrap();
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = ImageF::from_data(3, 3, 2, vec![0.7; 18]);
        let out = resize_bilinear(&img, 7, 5).unwrap();
        for v in &out.data {
            assert!((v - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_2x2_to_3x3_center() {
        let img = ImageF::from_data(2, 2, 1, vec![0.0, 1.0, 2.0, 3.0]);
        let out = resize_bilinear(&img, 3, 3).unwrap();
        assert!((out.get(1, 1, 0) - 1.5).abs() < 1e-6);
        // corners align exactly
        assert_eq!(out.get(0, 0, 0), 0.0);
        assert_eq!(out.get(2, 2, 0), 3.0);
    }

    #[test]
    fn resize_rejects_zero_dims() {
        let img = ramp_image(2, 2);
        assert!(resize_bilinear(&img, 0, 3).is_err());
    }
}
