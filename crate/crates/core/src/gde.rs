//! Geometric depth embedding: refine the coarse depth map with an edge-aware
//! filter, lift it to a depth feature map, and fuse it additively with the
//! finer stage's image features. Applied at stages 2 and 3 only.
//!
//! The learned refinement network and fusion convolutions of the lineage are
//! replaced by a joint-bilateral filter and fixed kernels; the dataflow and
//! module boundary are unchanged.

use crate::hypothesis::DepthMap;
use crate::matching::{FeatureMap, FEATURE_CHANNELS};
use crate::numerics::{conv2d_fixed, ImageF};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GdeError {
    #[error("guide image must match depth resolution ({0}x{1} vs {2}x{3})")]
    GuideResolution(usize, usize, usize, usize),
    #[error("depth feature channel count {0} does not match image features {1}")]
    ChannelMismatch(usize, usize),
    #[error("shape mismatch between image and depth features")]
    ShapeMismatch,
}

/// Image features with the depth embedding mixed in (or passed through
/// untouched when the module is disabled).
#[derive(Debug, Clone)]
pub struct FusedFeature {
    pub features: ImageF,
    pub gde_applied: bool,
}

const SPATIAL_SIGMA: f64 = 2.0;
const RANGE_SIGMA: f64 = 0.1;
const WINDOW_RADIUS: isize = 2; // 5x5 window

/// Joint-bilateral refinement of the coarse depth with the RGB guide.
///
/// Depth is averaged over a 5x5 window with weights that fall off with both
/// spatial distance (sigma = 2 px) and guide-intensity difference (sigma =
/// 0.1 in normalized intensity), so depth edges aligned with image edges stay
/// sharp while flat-guide regions smooth. The output at each pixel is a
/// convex combination of the input window, hence stays within its range.
pub fn refine_depth(initial: &DepthMap, guide: &ImageF) -> Result<DepthMap, GdeError> {
    let (h, w) = (initial.height, initial.width);
    if guide.height != h || guide.width != w {
        return Err(GdeError::GuideResolution(guide.height, guide.width, h, w));
    }
    let mut intensity = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let px = guide.pixel(y, x);
            intensity[y * w + x] = px.iter().map(|v| *v as f64).sum::<f64>() / px.len() as f64;
        }
    }
    let inv_2ss = 1.0 / (2.0 * SPATIAL_SIGMA * SPATIAL_SIGMA);
    let inv_2rs = 1.0 / (2.0 * RANGE_SIGMA * RANGE_SIGMA);
    let mut out = initial.clone();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center_i = intensity[y as usize * w + x as usize];
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
                let sy = y + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
                    let sx = x + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let p = sy as usize * w + sx as usize;
                    let di = intensity[p] - center_i;
                    let wgt = (-((dy * dy + dx * dx) as f64) * inv_2ss - di * di * inv_2rs).exp();
                    num += wgt * initial.depth[p] as f64;
                    den += wgt;
                }
            }
            out.depth[y as usize * w + x as usize] = (num / den) as f32;
        }
    }
    Ok(out)
}

const IDENTITY: [f32; 9] = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
const GRAD_X: [f32; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const GRAD_Y: [f32; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
const LINE_0: [f32; 9] = [-1.0, -1.0, -1.0, 2.0, 2.0, 2.0, -1.0, -1.0, -1.0];
const LINE_45: [f32; 9] = [-1.0, -1.0, 2.0, -1.0, 2.0, -1.0, 2.0, -1.0, -1.0];
const LINE_90: [f32; 9] = [-1.0, 2.0, -1.0, -1.0, 2.0, -1.0, -1.0, 2.0, -1.0];
const LINE_135: [f32; 9] = [2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0];
const LAPLACIAN: [f32; 9] = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];

const DEPTH_KERNELS: [&[f32; 9]; FEATURE_CHANNELS] =
    [&IDENTITY, &GRAD_X, &GRAD_Y, &LINE_0, &LINE_45, &LINE_90, &LINE_135, &LAPLACIAN];

/// Lift a depth map into a feature map: depth normalized to [0, 1] by the
/// global stage range, then convolved with fixed 3x3 kernels (identity, two
/// gradients, four oriented line detectors, Laplacian).
pub fn depth_to_feature(
    depth: &DepthMap,
    global_range: (f64, f64),
    channels: usize,
) -> Result<ImageF, GdeError> {
    if channels != FEATURE_CHANNELS {
        return Err(GdeError::ChannelMismatch(channels, FEATURE_CHANNELS));
    }
    let (h, w) = (depth.height, depth.width);
    let (lo, hi) = global_range;
    let span = (hi - lo).max(1e-9);
    let normalized = ImageF::from_data(
        h,
        w,
        1,
        depth.depth.iter().map(|d| (((*d as f64) - lo) / span) as f32).collect(),
    );
    let mut out = ImageF::new(h, w, channels);
    for (c, kernel) in DEPTH_KERNELS.iter().enumerate() {
        let resp = conv2d_fixed(&normalized, *kernel, 3).unwrap();
        for p in 0..h * w {
            out.data[p * channels + c] = resp.data[p];
        }
    }
    Ok(out)
}

fn smooth_kernel() -> [f32; 9] {
    let side = (-0.5f64).exp();
    let corner = (-1.0f64).exp();
    let sum = 1.0 + 4.0 * side + 4.0 * corner;
    let (c, s, d) = ((1.0 / sum) as f32, (side / sum) as f32, (corner / sum) as f32);
    [d, s, d, s, c, s, d, s, d]
}

const SHARPEN: [f32; 9] = [0.0, -0.125, 0.0, -0.125, 1.5, -0.125, 0.0, -0.125, 0.0];

/// Add depth features to image features and pass the sum through two fixed
/// 3x3 convolutions (Gaussian smoothing, then identity-dominant sharpening).
/// Linear in both inputs.
pub fn fuse(img_feat: &FeatureMap, depth_feat: &ImageF) -> Result<FusedFeature, GdeError> {
    let f = &img_feat.features;
    if f.height != depth_feat.height || f.width != depth_feat.width || f.channels != depth_feat.channels
    {
        return Err(GdeError::ShapeMismatch);
    }
    let summed = ImageF::from_data(
        f.height,
        f.width,
        f.channels,
        f.data.iter().zip(&depth_feat.data).map(|(a, b)| a + b).collect(),
    );
    let stage1 = conv2d_fixed(&summed, &smooth_kernel(), 3).unwrap();
    let stage2 = conv2d_fixed(&stage1, &SHARPEN, 3).unwrap();
    Ok(FusedFeature { features: stage2, gde_applied: true })
}

/// Bypass used when the module is disabled: the image features pass through
/// exactly.
pub fn passthrough(img_feat: &FeatureMap) -> FusedFeature {
    FusedFeature { features: img_feat.features.clone(), gde_applied: false }
}
