//! Plane-sweep matching: deterministic feature extraction, warping of source
//! features onto reference hypothesis planes, cross-view variance cost,
//! separable regularization, and conversion to a probability volume.
//!
//! The learned feature pyramid and 3D regularizer of the lineage networks are
//! substituted with a fixed 8-channel filter bank and a fixed separable
//! smoothing; the module boundary keeps learned replacements drop-in.

use crate::camera::{reproject, Camera};
use crate::hypothesis::{DepthMap, HypothesisSet, ProbabilityVolume};
use crate::numerics::{conv2d_fixed, resize_bilinear, sample_into, softmax_over_planes, ImageF, VolumeF};
use thiserror::Error;

/// Feature channels produced by [`extract_features`].
pub const FEATURE_CHANNELS: usize = 8;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("at least one source view is required")]
    NoSourceViews,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A stage-resolution feature map with its provenance.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub features: ImageF,
    pub view_id: usize,
    pub stage: usize,
}

/// Per-plane, per-pixel matching cost (lower is better), single channel.
#[derive(Debug, Clone)]
pub struct CostVolume {
    pub volume: VolumeF,
    /// Cost written where fewer than two views observed the pixel.
    pub sentinel: f32,
}

/// Per-plane, per-pixel validity of a warped source view.
#[derive(Debug, Clone)]
pub struct ViewWeightMask {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub valid: Vec<bool>,
}

impl ViewWeightMask {
    #[inline]
    pub fn get(&self, p: usize, y: usize, x: usize) -> bool {
        self.valid[(p * self.height + y) * self.width + x]
    }
}

const SOBEL_X: [f32; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f32; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
const EDGE_D1: [f32; 9] = [0.0, 1.0, 2.0, -1.0, 0.0, 1.0, -2.0, -1.0, 0.0];
const EDGE_D2: [f32; 9] = [2.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, -2.0];
const EDGE_CS: [f32; 9] = [-1.0, -1.0, -1.0, -1.0, 8.0, -1.0, -1.0, -1.0, -1.0];
const BOX3: [f32; 9] = [1.0 / 9.0; 9];

fn grayscale(img: &ImageF) -> ImageF {
    if img.channels == 1 {
        return img.clone();
    }
    let mut out = ImageF::new(img.height, img.width, 1);
    for y in 0..img.height {
        for x in 0..img.width {
            let px = img.pixel(y, x);
            let mean = px.iter().map(|v| *v as f64).sum::<f64>() / px.len() as f64;
            out.set(y, x, 0, mean as f32);
        }
    }
    out
}

/// Gaussian antialias prefilter for downscaling: without it, decimation
/// aliases fine texture into view-dependent patterns that bias matching.
fn prefiltered_gray(img: &ImageF, scale: f64, h: usize, w: usize) -> ImageF {
    let gray = grayscale(img);
    if scale >= 1.0 {
        return resize_bilinear(&gray, h, w).expect("positive dims");
    }
    let sigma = 0.5 / scale;
    let radius = (2.0 * sigma).ceil() as i64;
    let k = (2 * radius + 1) as usize;
    let mut kernel = vec![0.0f64; k * k];
    let mut sum = 0.0f64;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let v = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
            kernel[((dy + radius) * k as i64 + dx + radius) as usize] = v;
            sum += v;
        }
    }
    let kernel: Vec<f32> = kernel.iter().map(|v| (v / sum) as f32).collect();
    let blurred = conv2d_fixed(&gray, &kernel, k).expect("odd kernel");
    resize_bilinear(&blurred, h, w).expect("positive dims")
}

fn standardize_channel(data: &mut [f32], stride: usize, offset: usize, count: usize) {
    let mut sum = 0.0f64;
    for i in 0..count {
        sum += data[i * stride + offset] as f64;
    }
    let mean = sum / count as f64;
    let mut var = 0.0f64;
    for i in 0..count {
        let d = data[i * stride + offset] as f64 - mean;
        var += d * d;
    }
    let std = (var / count as f64).sqrt().max(1e-6);
    for i in 0..count {
        let idx = i * stride + offset;
        data[idx] = ((data[idx] as f64 - mean) / std) as f32;
    }
}

/// Deterministic 8-channel feature bank at the given stage scale: intensity,
/// Sobel x/y gradients, 3x3 local mean and standard deviation, and three
/// oriented edge responses; each channel standardized over the image.
pub fn extract_features(img: &ImageF, view_id: usize, stage: usize, scale: f64) -> FeatureMap {
    let h = ((img.height as f64 * scale).round() as usize).max(1);
    let w = ((img.width as f64 * scale).round() as usize).max(1);
    let gray = prefiltered_gray(img, scale, h, w);

    let gx = conv2d_fixed(&gray, &SOBEL_X, 3).unwrap();
    let gy = conv2d_fixed(&gray, &SOBEL_Y, 3).unwrap();
    let mean = conv2d_fixed(&gray, &BOX3, 3).unwrap();
    let sq = ImageF::from_data(h, w, 1, gray.data.iter().map(|v| v * v).collect());
    let mean_sq = conv2d_fixed(&sq, &BOX3, 3).unwrap();
    let d1 = conv2d_fixed(&gray, &EDGE_D1, 3).unwrap();
    let d2 = conv2d_fixed(&gray, &EDGE_D2, 3).unwrap();
    let cs = conv2d_fixed(&gray, &EDGE_CS, 3).unwrap();

    let mut features = ImageF::new(h, w, FEATURE_CHANNELS);
    for p in 0..h * w {
        let var = (mean_sq.data[p] as f64 - (mean.data[p] as f64).powi(2)).max(0.0);
        let base = p * FEATURE_CHANNELS;
        features.data[base] = gray.data[p];
        features.data[base + 1] = gx.data[p];
        features.data[base + 2] = gy.data[p];
        features.data[base + 3] = mean.data[p];
        features.data[base + 4] = var.sqrt() as f32;
        features.data[base + 5] = d1.data[p];
        features.data[base + 6] = d2.data[p];
        features.data[base + 7] = cs.data[p];
    }
    for c in 0..FEATURE_CHANNELS {
        standardize_channel(&mut features.data, FEATURE_CHANNELS, c, h * w);
    }
    FeatureMap { features, view_id, stage }
}

const EDGE_SNAP: f64 = 1e-6;

fn snap_to_edge(v: f64, max: f64) -> f64 {
    if (-EDGE_SNAP..0.0).contains(&v) {
        0.0
    } else if v > max && v <= max + EDGE_SNAP {
        max
    } else {
        v
    }
}

/// Warp source features onto every hypothesis plane of the reference view.
///
/// Each reference pixel is reprojected at its per-pixel plane depth and the
/// source feature map is sampled bilinearly there; out-of-view or
/// behind-camera samples are zeroed and flagged in the mask.
pub fn warp_features(
    src_feat: &FeatureMap,
    reference: &Camera,
    source: &Camera,
    hyp: &HypothesisSet,
) -> (VolumeF, ViewWeightMask) {
    let (n, h, w) = (hyp.planes, hyp.height, hyp.width);
    let c = src_feat.features.channels;
    let mut volume = VolumeF::new(n, h, w, c);
    let mut valid = vec![false; n * h * w];
    let mut buf = vec![0.0f32; c];
    for i in 0..n {
        for y in 0..h {
            for x in 0..w {
                let d = hyp.get(i, y, x) as f64;
                if d <= 0.0 {
                    continue;
                }
                let proj = match reproject(reference, source, x as f64, y as f64, d) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                // reprojection round-trips can land a few ulps outside the
                // image at border pixels; snap those back instead of masking
                let sx = snap_to_edge(proj.x, (src_feat.features.width - 1) as f64);
                let sy = snap_to_edge(proj.y, (src_feat.features.height - 1) as f64);
                if !sample_into(&src_feat.features, sx, sy, &mut buf) {
                    continue;
                }
                let base = volume.idx(i, y, x, 0);
                volume.data[base..base + c].copy_from_slice(&buf);
                valid[(i * h + y) * w + x] = true;
            }
        }
    }
    (volume, ViewWeightMask { planes: n, height: h, width: w, valid })
}

/// Cross-view feature variance cost. The reference view always participates;
/// a plane/pixel observed by fewer than two views in total receives a
/// sentinel cost of 10x the 99th percentile of the valid costs.
pub fn variance_cost(
    ref_feat: &FeatureMap,
    warped: &[(VolumeF, ViewWeightMask)],
) -> Result<CostVolume, MatchingError> {
    if warped.is_empty() {
        return Err(MatchingError::NoSourceViews);
    }
    let (h, w, c) = (ref_feat.features.height, ref_feat.features.width, ref_feat.features.channels);
    let n = warped[0].0.planes;
    for (vol, mask) in warped {
        if vol.height != h || vol.width != w || vol.channels != c || vol.planes != n {
            return Err(MatchingError::ShapeMismatch("warped volume vs reference features".into()));
        }
        if mask.planes != n || mask.height != h || mask.width != w {
            return Err(MatchingError::ShapeMismatch("mask vs volume".into()));
        }
    }

    let mut volume = VolumeF::new(n, h, w, 1);
    let mut underobserved = vec![false; n * h * w];
    let mut valid_costs: Vec<f32> = Vec::new();
    let mut views: Vec<&[f32]> = Vec::with_capacity(warped.len() + 1);
    for i in 0..n {
        for y in 0..h {
            for x in 0..w {
                views.clear();
                views.push(ref_feat.features.pixel(y, x));
                for (vol, mask) in warped {
                    if mask.get(i, y, x) {
                        let base = vol.idx(i, y, x, 0);
                        views.push(&vol.data[base..base + c]);
                    }
                }
                let p = (i * h + y) * w + x;
                if views.len() < 2 {
                    underobserved[p] = true;
                    continue;
                }
                let count = views.len() as f64;
                let mut cost = 0.0f64;
                for ch in 0..c {
                    let mut sum = 0.0f64;
                    for v in &views {
                        sum += v[ch] as f64;
                    }
                    let mean = sum / count;
                    let mut var = 0.0f64;
                    for v in &views {
                        let d = v[ch] as f64 - mean;
                        var += d * d;
                    }
                    cost += var / count;
                }
                let cost = (cost / c as f64) as f32;
                volume.data[p] = cost;
                valid_costs.push(cost);
            }
        }
    }

    let sentinel = if valid_costs.is_empty() {
        1.0
    } else {
        valid_costs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((valid_costs.len() as f64 * 0.99) as usize).min(valid_costs.len() - 1);
        (10.0 * valid_costs[idx]).max(1e-6)
    };
    for (p, flag) in underobserved.iter().enumerate() {
        if *flag {
            volume.data[p] = sentinel;
        }
    }
    Ok(CostVolume { volume, sentinel })
}

fn gaussian3() -> [f32; 9] {
    let side = (-0.5f64).exp();
    let corner = (-1.0f64).exp();
    let sum = 1.0 + 4.0 * side + 4.0 * corner;
    let (c, s, d) = ((1.0 / sum) as f32, (side / sum) as f32, (corner / sum) as f32);
    [d, s, d, s, c, s, d, s, d]
}

/// Fixed separable smoothing standing in for the learned 3D regularizer:
/// a 3x3 spatial Gaussian (sigma = 1) per plane followed by a [0.25, 0.5,
/// 0.25] filter along the plane axis (replicated at the ends).
pub fn regularize(cost: &CostVolume) -> CostVolume {
    let v = &cost.volume;
    let (n, h, w) = (v.planes, v.height, v.width);
    let kernel = gaussian3();
    let mut spatial = VolumeF::new(n, h, w, 1);
    for i in 0..n {
        let plane = ImageF::from_data(h, w, 1, v.data[i * h * w..(i + 1) * h * w].to_vec());
        let smoothed = conv2d_fixed(&plane, &kernel, 3).unwrap();
        spatial.data[i * h * w..(i + 1) * h * w].copy_from_slice(&smoothed.data);
    }
    let mut out = VolumeF::new(n, h, w, 1);
    for i in 0..n {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        for p in 0..h * w {
            let a = spatial.data[lo * h * w + p] as f64;
            let b = spatial.data[i * h * w + p] as f64;
            let c = spatial.data[hi * h * w + p] as f64;
            out.data[i * h * w + p] = (0.25 * a + 0.5 * b + 0.25 * c) as f32;
        }
    }
    CostVolume { volume: out, sentinel: cost.sentinel }
}

/// Probability volume from costs: per-pixel softmax of -cost / temperature
/// over the plane axis.
pub fn cost_to_probability(
    cost: &CostVolume,
    temperature: f64,
) -> Result<ProbabilityVolume, MatchingError> {
    if temperature <= 0.0 {
        return Err(MatchingError::NonPositiveTemperature(temperature));
    }
    let v = &cost.volume;
    let scaled = VolumeF {
        planes: v.planes,
        height: v.height,
        width: v.width,
        channels: 1,
        data: v.data.iter().map(|c| (-(*c as f64) / temperature) as f32).collect(),
    };
    let soft = softmax_over_planes(&scaled);
    Ok(ProbabilityVolume { planes: v.planes, height: v.height, width: v.width, values: soft.data })
}

/// Probability mass on the (up to) 4 planes nearest the regressed depth.
pub fn photometric_confidence(
    prob: &ProbabilityVolume,
    hyp: &HypothesisSet,
    depth: &DepthMap,
) -> Result<Vec<f32>, MatchingError> {
    if prob.planes != hyp.planes || prob.height != hyp.height || prob.width != hyp.width {
        return Err(MatchingError::ShapeMismatch("probability vs hypotheses".into()));
    }
    if depth.height != hyp.height || depth.width != hyp.width {
        return Err(MatchingError::ShapeMismatch("depth vs hypotheses".into()));
    }
    let (n, h, w) = (hyp.planes, hyp.height, hyp.width);
    let window = n.min(4);
    let mut conf = vec![0.0f32; h * w];
    for p in 0..h * w {
        let d = depth.depth[p];
        let mut best = 0usize;
        let mut best_dist = f32::INFINITY;
        for i in 0..n {
            let dist = (hyp.values[i * h * w + p] - d).abs();
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        // symmetric window of `window` planes around the nearest one
        let lo = best.saturating_sub((window - 1) / 2).min(n - window);
        let mut acc = 0.0f64;
        for i in lo..lo + window {
            acc += prob.values[i * h * w + p] as f64;
        }
        conf[p] = acc.min(1.0) as f32;
    }
    Ok(conf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Extrinsics, Intrinsics};
    use crate::hypothesis::{regress_depth, uniform_hypotheses, DepthRangeMap};

    fn test_camera() -> Camera {
        Camera::new(
            Intrinsics::new(100.0, 100.0, 16.0, 12.0).unwrap(),
            Extrinsics::identity(),
            1.0,
            50.0,
        )
        .unwrap()
    }

    fn textured_image(h: usize, w: usize) -> ImageF {
        let data = (0..h * w)
            .map(|i| {
                let y = i / w;
                let x = i % w;
                (((x * 37 + y * 91 + x * y) % 17) as f32) / 17.0
            })
            .collect();
        ImageF::from_data(h, w, 1, data)
    }

    #[test]
    fn constant_image_gradient_channels_zero() {
        let img = ImageF::from_data(8, 8, 1, vec![0.5; 64]);
        let f = extract_features(&img, 0, 3, 1.0);
        // standardization maps constant channels to zero
        for v in &f.features.data {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn features_deterministic() {
        let img = textured_image(10, 12);
        let a = extract_features(&img, 0, 3, 1.0);
        let b = extract_features(&img, 0, 3, 1.0);
        assert_eq!(a.features.data, b.features.data);
    }

    #[test]
    fn vertical_step_edge_peaks_x_gradient() {
        let mut img = ImageF::new(9, 9, 1);
        for y in 0..9 {
            for x in 5..9 {
                img.set(y, x, 0, 1.0);
            }
        }
        let f = extract_features(&img, 0, 3, 1.0);
        // x-gradient channel (1) is maximal across the columns at the edge
        let mid = 4;
        for y in 2..7 {
            let edge = f.features.get(y, mid, 1).abs();
            for x in [1usize, 7] {
                assert!(edge >= f.features.get(y, x, 1).abs());
            }
        }
    }

    #[test]
    fn warp_identity_camera_reproduces_features() {
        let cam = test_camera();
        let img = textured_image(24, 32);
        let feat = extract_features(&img, 0, 3, 1.0);
        let range = DepthRangeMap::constant(24, 32, 3, 2.0, 8.0);
        let hyp = uniform_hypotheses(&range, 3).unwrap();
        let (vol, mask) = warp_features(&feat, &cam, &cam, &hyp);
        for i in 0..3 {
            for y in 0..24 {
                for x in 0..32 {
                    assert!(mask.get(i, y, x));
                    for c in 0..FEATURE_CHANNELS {
                        assert!((vol.get(i, y, x, c) - feat.features.get(y, x, c)).abs() < 1e-4);
                    }
                }
            }
        }
    }

    #[test]
    fn warp_behind_camera_fully_masked() {
        let reference = test_camera();
        // source far forward along z so shallow reference planes fall behind it
        let source = Camera::new(
            reference.intrinsics,
            Extrinsics::new(nalgebra::Matrix3::identity(), nalgebra::Vector3::new(0.0, 0.0, -20.0))
                .unwrap(),
            1.0,
            50.0,
        )
        .unwrap();
        let img = textured_image(8, 8);
        let feat = extract_features(&img, 1, 3, 1.0);
        let range = DepthRangeMap::constant(8, 8, 2, 2.0, 8.0);
        let hyp = uniform_hypotheses(&range, 2).unwrap();
        let (_, mask) = warp_features(&feat, &reference, &source, &hyp);
        assert!(mask.valid.iter().all(|v| !v));
    }

    #[test]
    fn variance_zero_for_identical_views() {
        let img = textured_image(8, 8);
        let feat = extract_features(&img, 0, 3, 1.0);
        let cam = test_camera();
        let range = DepthRangeMap::constant(8, 8, 2, 2.0, 8.0);
        let hyp = uniform_hypotheses(&range, 2).unwrap();
        let warped = vec![
            warp_features(&feat, &cam, &cam, &hyp),
            warp_features(&feat, &cam, &cam, &hyp),
        ];
        let cost = variance_cost(&feat, &warped).unwrap();
        for v in &cost.volume.data {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn variance_two_view_definition() {
        // one reference pixel with value a, one warped view with value b
        let mut ref_feat = extract_features(&ImageF::from_data(1, 1, 1, vec![0.0]), 0, 1, 1.0);
        ref_feat.features = ImageF::from_data(1, 1, 1, vec![2.0]);
        let vol = VolumeF { planes: 1, height: 1, width: 1, channels: 1, data: vec![6.0] };
        let mask = ViewWeightMask { planes: 1, height: 1, width: 1, valid: vec![true] };
        let cost = variance_cost(&ref_feat, &[(vol, mask)]).unwrap();
        // mean 4, variance ((2-4)^2 + (6-4)^2)/2 = 4
        assert!((cost.volume.data[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn variance_excludes_masked_views_and_is_order_invariant() {
        let mut ref_feat = extract_features(&ImageF::from_data(1, 2, 1, vec![0.0, 0.0]), 0, 1, 1.0);
        ref_feat.features = ImageF::from_data(1, 2, 1, vec![1.0, 1.0]);
        let va = VolumeF { planes: 1, height: 1, width: 2, channels: 1, data: vec![3.0, 3.0] };
        let ma = ViewWeightMask { planes: 1, height: 1, width: 2, valid: vec![true, true] };
        let vb = VolumeF { planes: 1, height: 1, width: 2, channels: 1, data: vec![99.0, 5.0] };
        let mb = ViewWeightMask { planes: 1, height: 1, width: 2, valid: vec![false, true] };
        let ab = variance_cost(&ref_feat, &[(va.clone(), ma.clone()), (vb.clone(), mb.clone())])
            .unwrap();
        let ba = variance_cost(&ref_feat, &[(vb, mb), (va, ma)]).unwrap();
        assert_eq!(ab.volume.data, ba.volume.data);
        // pixel 0: views {1, 3} -> variance 1; pixel 1: views {1, 3, 5} -> 8/3
        assert!((ab.volume.data[0] - 1.0).abs() < 1e-6);
        assert!((ab.volume.data[1] - 8.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn variance_rejects_zero_sources() {
        let feat = extract_features(&textured_image(2, 2), 0, 1, 1.0);
        assert!(matches!(variance_cost(&feat, &[]), Err(MatchingError::NoSourceViews)));
    }

    #[test]
    fn regularize_constant_unchanged() {
        let vol = VolumeF {
            planes: 3,
            height: 4,
            width: 4,
            channels: 1,
            data: vec![0.7; 48],
        };
        let out = regularize(&CostVolume { volume: vol, sentinel: 1.0 });
        for v in &out.volume.data {
            assert!((v - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn regularize_single_plane_spatial_only() {
        let mut vol = VolumeF::new(1, 5, 5, 1);
        vol.set(0, 2, 2, 0, 1.0);
        let out = regularize(&CostVolume { volume: vol.clone(), sentinel: 1.0 });
        let plane = ImageF::from_data(5, 5, 1, vol.data[0..25].to_vec());
        let expect = conv2d_fixed(&plane, &gaussian3(), 3).unwrap();
        for p in 0..25 {
            assert!((out.volume.data[p] - expect.data[p]).abs() < 1e-6);
        }
    }

    #[test]
    fn regularize_impulse_footprint() {
        let mut vol = VolumeF::new(3, 5, 5, 1);
        vol.set(1, 2, 2, 0, 1.0);
        let out = regularize(&CostVolume { volume: vol, sentinel: 1.0 });
        let g = gaussian3();
        // center plane gets 0.5 x spatial gaussian; neighbors 0.25 each
        assert!((out.volume.get(1, 2, 2, 0) - 0.5 * g[4]).abs() < 1e-6);
        assert!((out.volume.get(0, 2, 2, 0) - 0.25 * g[4]).abs() < 1e-6);
        assert!((out.volume.get(2, 2, 1, 0) - 0.25 * g[3]).abs() < 1e-6);
    }

    #[test]
    fn probability_dominant_plane_and_uniform() {
        let mut vol = VolumeF::new(4, 1, 1, 1);
        for i in 1..4 {
            vol.set(i, 0, 0, 0, 50.0);
        }
        let p = cost_to_probability(&CostVolume { volume: vol, sentinel: 50.0 }, 1.0).unwrap();
        assert!(p.values[0] > 0.999);

        let flat = VolumeF { planes: 4, height: 1, width: 1, channels: 1, data: vec![3.0; 4] };
        let p = cost_to_probability(&CostVolume { volume: flat, sentinel: 50.0 }, 1.0).unwrap();
        for v in &p.values {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn probability_high_temperature_flattens() {
        let vol = VolumeF {
            planes: 3,
            height: 1,
            width: 1,
            channels: 1,
            data: vec![0.0, 1.0, 2.0],
        };
        let p = cost_to_probability(&CostVolume { volume: vol, sentinel: 10.0 }, 1e6).unwrap();
        for v in &p.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-5);
        }
    }

    #[test]
    fn probability_rejects_bad_temperature() {
        let vol = VolumeF::new(2, 1, 1, 1);
        assert!(cost_to_probability(&CostVolume { volume: vol, sentinel: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn confidence_delta_and_uniform() {
        let range = DepthRangeMap::constant(1, 1, 8, 2.0, 10.0);
        let hyp = uniform_hypotheses(&range, 8).unwrap();
        let mut delta = vec![0.0f32; 8];
        delta[3] = 1.0;
        let prob = ProbabilityVolume { planes: 8, height: 1, width: 1, values: delta };
        let d = regress_depth(&hyp, &prob).unwrap();
        let conf = photometric_confidence(&prob, &hyp, &d).unwrap();
        assert!((conf[0] - 1.0).abs() < 1e-6);

        let uniform = ProbabilityVolume { planes: 8, height: 1, width: 1, values: vec![0.125; 8] };
        let d = regress_depth(&hyp, &uniform).unwrap();
        let conf = photometric_confidence(&uniform, &hyp, &d).unwrap();
        assert!((conf[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn confidence_monotone_under_sharpening() {
        let vol = VolumeF {
            planes: 8,
            height: 1,
            width: 1,
            channels: 1,
            data: vec![0.9, 0.5, 0.2, 0.05, 0.2, 0.5, 0.9, 1.3],
        };
        let cost = CostVolume { volume: vol, sentinel: 10.0 };
        let range = DepthRangeMap::constant(1, 1, 8, 2.0, 10.0);
        let hyp = uniform_hypotheses(&range, 8).unwrap();
        let mut prev = 0.0f32;
        for temp in [4.0, 1.0, 0.25] {
            let p = cost_to_probability(&cost, temp).unwrap();
            let d = regress_depth(&hyp, &p).unwrap();
            let c = photometric_confidence(&p, &hyp, &d).unwrap()[0];
            assert!(c >= prev, "confidence should not drop when sharpening");
            prev = c;
        }
    }
}
