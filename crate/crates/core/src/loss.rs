//! Supervision terms: masked L1 depth loss, the image-synthesis loss with its
//! analytic gradient with respect to the predicted depth, the combined
//! three-stage total, and a finite-difference gradient checker.
//!
//! Synthesis is inverse warping on the reference grid: each reference pixel
//! is reprojected at its (predicted or ground-truth) depth and the source
//! image is sampled there. Both branches run identical synthesis, so equal
//! depths give exactly zero loss.

use crate::camera::{reproject_with_jacobian, Camera};
use crate::hypothesis::DepthMap;
use crate::numerics::{sample_into, sample_with_grad, ImageF};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("at least one source view is required")]
    NoSourceViews,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("step must be positive, got {0}")]
    NonPositiveStep(f64),
}

/// Per-pixel validity with its cached count of valid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidMask {
    pub height: usize,
    pub width: usize,
    pub valid: Vec<bool>,
    pub count: usize,
}

impl ValidMask {
    pub fn new(height: usize, width: usize, valid: Vec<bool>) -> Self {
        assert_eq!(valid.len(), height * width);
        let count = valid.iter().filter(|v| **v).count();
        Self { height, width, valid, count }
    }

    pub fn all_valid(height: usize, width: usize) -> Self {
        Self { height, width, valid: vec![true; height * width], count: height * width }
    }
}

/// Per-stage loss values and the weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub stages: [(f64, f64); 3],
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
}

/// Synthesize the source view on the reference grid at the given depth map.
///
/// A pixel is valid iff its depth is positive, the reprojected point lies in
/// front of the source camera, and the bilinear sample falls inside the
/// source image.
pub fn synthesize_view(
    src_img: &ImageF,
    reference: &Camera,
    source: &Camera,
    depth: &DepthMap,
) -> (ImageF, ValidMask) {
    let (h, w) = (depth.height, depth.width);
    let c = src_img.channels;
    let mut out = ImageF::new(h, w, c);
    let mut valid = vec![false; h * w];
    let mut buf = vec![0.0f32; c];
    for y in 0..h {
        for x in 0..w {
            let d = depth.at(y, x) as f64;
            if d <= 0.0 {
                continue;
            }
            let proj = match reproject_with_jacobian(reference, source, x as f64, y as f64, d) {
                Ok(p) => p,
                Err(_) => continue,
            };
            if !sample_into(src_img, proj.x, proj.y, &mut buf) {
                continue;
            }
            let base = out.idx(y, x, 0);
            out.data[base..base + c].copy_from_slice(&buf);
            valid[y * w + x] = true;
        }
    }
    (out, ValidMask::new(h, w, valid))
}

/// Conjunction of the synthesis masks and the ground-truth depth validity.
pub fn compute_mask(
    pred_synth: &ValidMask,
    gt_synth: &ValidMask,
    gt_depth_valid: &[bool],
) -> Result<ValidMask, LossError> {
    if pred_synth.height != gt_synth.height
        || pred_synth.width != gt_synth.width
        || gt_depth_valid.len() != pred_synth.valid.len()
    {
        return Err(LossError::ShapeMismatch("mask resolutions differ".into()));
    }
    let valid: Vec<bool> = pred_synth
        .valid
        .iter()
        .zip(&gt_synth.valid)
        .zip(gt_depth_valid)
        .map(|((a, b), c)| *a && *b && *c)
        .collect();
    Ok(ValidMask::new(pred_synth.height, pred_synth.width, valid))
}

/// Image-synthesis loss over all source views, with the analytic per-pixel
/// gradient with respect to the predicted depth.
///
/// Per view j: sum_x ||(I_hat_j(x) - I_j(x)) . M_j(x)||_1 / m_j where
/// I_hat_j synthesizes with the predicted depth and I_j with the ground
/// truth. The mask and the ground-truth branch are treated as constants;
/// gradient flows through the predicted synthesis only. A view with no valid
/// pixels contributes zero.
pub fn is_loss(
    pred_depth: &DepthMap,
    gt_depth: &DepthMap,
    gt_depth_valid: &[bool],
    reference: &Camera,
    sources: &[(ImageF, Camera)],
) -> Result<(f64, Vec<f64>), LossError> {
    if sources.is_empty() {
        return Err(LossError::NoSourceViews);
    }
    let (h, w) = (pred_depth.height, pred_depth.width);
    if gt_depth.height != h || gt_depth.width != w || gt_depth_valid.len() != h * w {
        return Err(LossError::ShapeMismatch("prediction vs ground truth".into()));
    }
    let mut total = 0.0f64;
    let mut grad = vec![0.0f64; h * w];
    for (src_img, src_cam) in sources {
        let c = src_img.channels;
        let (gt_synth, gt_mask) = synthesize_view(src_img, reference, src_cam, gt_depth);

        // predicted-branch synthesis with gradients, in one pass
        let mut pred_vals = vec![0.0f32; h * w * c];
        let mut pred_grad_d = vec![0.0f64; h * w * c];
        let mut pred_valid = vec![false; h * w];
        let mut val_buf = vec![0.0f32; c];
        let mut dx_buf = vec![0.0f64; c];
        let mut dy_buf = vec![0.0f64; c];
        for y in 0..h {
            for x in 0..w {
                let d = pred_depth.at(y, x) as f64;
                if d <= 0.0 {
                    continue;
                }
                let proj =
                    match reproject_with_jacobian(reference, src_cam, x as f64, y as f64, d) {
                        Ok(p) => p,
                        Err(_) => continue,
                    };
                if !sample_with_grad(src_img, proj.x, proj.y, &mut val_buf, &mut dx_buf, &mut dy_buf)
                {
                    continue;
                }
                let p = y * w + x;
                for ch in 0..c {
                    pred_vals[p * c + ch] = val_buf[ch];
                    pred_grad_d[p * c + ch] = dx_buf[ch] * proj.dx_dd + dy_buf[ch] * proj.dy_dd;
                }
                pred_valid[p] = true;
            }
        }
        let pred_mask = ValidMask::new(h, w, pred_valid);
        let mask = compute_mask(&pred_mask, &gt_mask, gt_depth_valid)?;
        if mask.count == 0 {
            continue;
        }
        let m = mask.count as f64;
        let mut view_sum = 0.0f64;
        for p in 0..h * w {
            if !mask.valid[p] {
                continue;
            }
            for ch in 0..c {
                let diff = pred_vals[p * c + ch] as f64 - gt_synth.data[p * c + ch] as f64;
                view_sum += diff.abs();
                if diff != 0.0 {
                    grad[p] += diff.signum() * pred_grad_d[p * c + ch] / m;
                }
            }
        }
        total += view_sum / m;
    }
    Ok((total, grad))
}

/// Mean absolute depth error over valid pixels, with its subgradient
/// sign(pred - gt) / m at valid pixels. Zero valid pixels yields value 0 and
/// `valid_count` 0 so the caller can flag it.
pub fn l1_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    valid: &[bool],
) -> Result<(f64, Vec<f64>, usize), LossError> {
    let n = pred.height * pred.width;
    if gt.height != pred.height || gt.width != pred.width || valid.len() != n {
        return Err(LossError::ShapeMismatch("prediction vs ground truth".into()));
    }
    let m = valid.iter().filter(|v| **v).count();
    let mut grad = vec![0.0f64; n];
    if m == 0 {
        return Ok((0.0, grad, 0));
    }
    let mut sum = 0.0f64;
    for p in 0..n {
        if valid[p] {
            let diff = pred.depth[p] as f64 - gt.depth[p] as f64;
            sum += diff.abs();
            if diff != 0.0 {
                grad[p] = diff.signum() / m as f64;
            }
        }
    }
    Ok((sum / m as f64, grad, m))
}

/// Weighted three-stage total: sum_a (lambda1 l1_a + lambda2 is_a).
pub fn total_loss(stages: [(f64, f64); 3], lambda1: f64, lambda2: f64) -> LossBreakdown {
    let total = stages.iter().map(|(l1, is)| lambda1 * l1 + lambda2 * is).sum();
    LossBreakdown { stages, lambda1, lambda2, total }
}

/// Compare an analytic gradient against central finite differences of a loss
/// functional at the given probe pixels; returns the maximum relative error
/// (absolute floor 1e-8 in the denominator).
pub fn finite_diff_check<F>(
    loss_eval: F,
    analytic_grad: &[f64],
    depth: &DepthMap,
    probe_pixels: &[(usize, usize)],
    step: f64,
) -> Result<f64, LossError>
where
    F: Fn(&DepthMap) -> f64,
{
    if step <= 0.0 {
        return Err(LossError::NonPositiveStep(step));
    }
    let mut max_rel = 0.0f64;
    let mut perturbed = depth.clone();
    for &(y, x) in probe_pixels {
        let p = y * depth.width + x;
        let original = depth.depth[p];
        perturbed.depth[p] = (original as f64 + step) as f32;
        let actual_plus = perturbed.depth[p] as f64;
        let plus = loss_eval(&perturbed);
        perturbed.depth[p] = (original as f64 - step) as f32;
        let actual_minus = perturbed.depth[p] as f64;
        let minus = loss_eval(&perturbed);
        perturbed.depth[p] = original;
        // divide by the step that survived f32 storage, not the nominal one
        let fd = (plus - minus) / (actual_plus - actual_minus);
        let rel = (analytic_grad[p] - fd).abs() / fd.abs().max(analytic_grad[p].abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
