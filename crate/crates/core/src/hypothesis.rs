//! Depth hypothesis plane generation and probability-volume statistics.
//!
//! Stage 1 places planes uniformly over the scene range; the later stages
//! refine a per-pixel range from the previous prediction's variance and
//! optionally reweight the uniform planes with softmax offsets derived from
//! the normalized distance to the previous prediction (the adaptive
//! depth-interval adjustment, ADIA).

use crate::numerics::{resize_bilinear, ImageF};
use thiserror::Error;

/// Sigma clamp applied wherever the previous prediction's spread divides a
/// score; keeps the offset softmax defined for delta distributions.
pub const SIGMA_FLOOR: f32 = 1e-3;

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("need at least 2 planes, got {0}")]
    TooFewPlanes(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("adjusted planes lost per-pixel monotonicity at pixel ({0}, {1})")]
    MonotonicityViolation(usize, usize),
}

/// How the plane offsets are scored before the per-pixel softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdiaMode {
    /// Signed normalized distance (H_i - D) / sigma.
    Literal,
    /// Negative absolute normalized distance, concentrating planes around the
    /// previous prediction.
    Concentrate,
}

/// Per-pixel depth range with the implied equal interval e = (max - min) / n.
#[derive(Debug, Clone)]
pub struct DepthRangeMap {
    pub height: usize,
    pub width: usize,
    pub planes: usize,
    pub d_min: Vec<f32>,
    pub d_max: Vec<f32>,
    pub interval: Vec<f32>,
}

impl DepthRangeMap {
    pub fn new(height: usize, width: usize, planes: usize, d_min: Vec<f32>, d_max: Vec<f32>) -> Self {
        assert_eq!(d_min.len(), height * width);
        assert_eq!(d_max.len(), height * width);
        let interval = d_min
            .iter()
            .zip(&d_max)
            .map(|(lo, hi)| {
                debug_assert!(lo < hi, "degenerate range [{lo}, {hi}]");
                (hi - lo) / planes as f32
            })
            .collect();
        Self { height, width, planes, d_min, d_max, interval }
    }

    /// Constant range over the whole image.
    pub fn constant(height: usize, width: usize, planes: usize, d_min: f64, d_max: f64) -> Self {
        Self::new(
            height,
            width,
            planes,
            vec![d_min as f32; height * width],
            vec![d_max as f32; height * width],
        )
    }
}

/// Per-pixel depth hypothesis planes, strictly increasing along the plane
/// index. Plane-major layout: `values[(i * H + y) * W + x]`.
#[derive(Debug, Clone)]
pub struct HypothesisSet {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl HypothesisSet {
    #[inline]
    pub fn get(&self, i: usize, y: usize, x: usize) -> f32 {
        self.values[(i * self.height + y) * self.width + x]
    }
}

/// Per-pixel distribution over hypothesis planes; same layout as
/// [`HypothesisSet`]. Per-pixel sums over planes are 1 within 1e-5.
#[derive(Debug, Clone)]
pub struct ProbabilityVolume {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl ProbabilityVolume {
    #[inline]
    pub fn get(&self, i: usize, y: usize, x: usize) -> f32 {
        self.values[(i * self.height + y) * self.width + x]
    }
}

/// Softmax offsets in (0, 1) summing to 1 per pixel; same layout as
/// [`HypothesisSet`].
#[derive(Debug, Clone)]
pub struct OffsetVolume {
    pub planes: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

/// Predicted per-pixel depth with the spread of its distribution and a
/// photometric confidence.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub depth: Vec<f32>,
    pub sigma: Vec<f32>,
    pub confidence: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize) -> Self {
        let n = height * width;
        Self { height, width, depth: vec![0.0; n], sigma: vec![0.0; n], confidence: vec![0.0; n] }
    }

    pub fn from_depth(height: usize, width: usize, depth: Vec<f32>) -> Self {
        assert_eq!(depth.len(), height * width);
        let n = height * width;
        Self { height, width, depth, sigma: vec![0.0; n], confidence: vec![1.0; n] }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.depth[y * self.width + x]
    }

    /// Bilinear upsample/downsample of depth, sigma, and confidence to a new
    /// resolution (the coarse-to-fine transfer).
    pub fn resize(&self, new_h: usize, new_w: usize) -> DepthMap {
        let one = |v: &Vec<f32>| -> Vec<f32> {
            let img = ImageF::from_data(self.height, self.width, 1, v.clone());
            resize_bilinear(&img, new_h, new_w).expect("positive dims").data
        };
        DepthMap {
            height: new_h,
            width: new_w,
            depth: one(&self.depth),
            sigma: one(&self.sigma),
            confidence: one(&self.confidence),
        }
    }
}

/// Uniform planes at interval centers: H_i(x) = d_min(x) + (i + 0.5) e(x).
pub fn uniform_hypotheses(range: &DepthRangeMap, n: usize) -> Result<HypothesisSet, HypothesisError> {
    if n < 2 {
        return Err(HypothesisError::TooFewPlanes(n));
    }
    assert_eq!(range.planes, n, "range interval was computed for a different plane count");
    let (h, w) = (range.height, range.width);
    let mut values = vec![0.0f32; n * h * w];
    for i in 0..n {
        for p in 0..h * w {
            values[i * h * w + p] =
                (range.d_min[p] as f64 + (i as f64 + 0.5) * range.interval[p] as f64) as f32;
        }
    }
    Ok(HypothesisSet { planes: n, height: h, width: w, values })
}

fn check_shapes(
    h: &HypothesisSet,
    planes: usize,
    height: usize,
    width: usize,
) -> Result<(), HypothesisError> {
    if h.planes != planes || h.height != height || h.width != width {
        return Err(HypothesisError::ShapeMismatch(format!(
            "hypotheses {}x{}x{} vs volume {}x{}x{}",
            h.planes, h.height, h.width, planes, height, width
        )));
    }
    Ok(())
}

/// Expected depth under the probability volume: D(x) = sum_i H_i(x) P_i(x).
pub fn regress_depth(
    hyp: &HypothesisSet,
    prob: &ProbabilityVolume,
) -> Result<DepthMap, HypothesisError> {
    check_shapes(hyp, prob.planes, prob.height, prob.width)?;
    let (h, w) = (hyp.height, hyp.width);
    let mut out = DepthMap::new(h, w);
    for p in 0..h * w {
        let mut acc = 0.0f64;
        for i in 0..hyp.planes {
            acc += hyp.values[i * h * w + p] as f64 * prob.values[i * h * w + p] as f64;
        }
        out.depth[p] = acc as f32;
    }
    Ok(out)
}

/// Spread of the distribution around the regressed depth:
/// sigma(x) = sqrt(sum_i P_i(x) (H_i(x) - D(x))^2).
pub fn depth_variance(
    hyp: &HypothesisSet,
    prob: &ProbabilityVolume,
    depth: &DepthMap,
) -> Result<Vec<f32>, HypothesisError> {
    check_shapes(hyp, prob.planes, prob.height, prob.width)?;
    if depth.height != hyp.height || depth.width != hyp.width {
        return Err(HypothesisError::ShapeMismatch("depth map vs hypotheses".into()));
    }
    let (h, w) = (hyp.height, hyp.width);
    let mut sigma = vec![0.0f32; h * w];
    for p in 0..h * w {
        let d = depth.depth[p] as f64;
        let mut acc = 0.0f64;
        for i in 0..hyp.planes {
            let diff = hyp.values[i * h * w + p] as f64 - d;
            acc += prob.values[i * h * w + p] as f64 * diff * diff;
        }
        sigma[p] = acc.max(0.0).sqrt() as f32;
    }
    Ok(sigma)
}

/// Per-pixel confidence range around the previous prediction, clamped to the
/// scene range. When the variance interval falls below half the configured
/// stage interval, the range is widened to `n_next` uniform steps of that
/// interval so planes never collapse onto one depth.
pub fn refine_range(
    prev: &DepthMap,
    lambda: f64,
    global_range: (f64, f64),
    n_next: usize,
    min_interval: f64,
) -> DepthRangeMap {
    let (g_lo, g_hi) = global_range;
    let (h, w) = (prev.height, prev.width);
    let mut d_min = vec![0.0f32; h * w];
    let mut d_max = vec![0.0f32; h * w];
    for p in 0..h * w {
        let d = prev.depth[p] as f64;
        let half = {
            let hw = lambda * prev.sigma[p] as f64;
            if hw < 0.5 * min_interval {
                0.5 * n_next as f64 * min_interval
            } else {
                hw
            }
        };
        let mut lo = (d - half).max(g_lo);
        let mut hi = (d + half).min(g_hi);
        if hi - lo < min_interval.min(g_hi - g_lo) * 1e-3 {
            // prediction escaped or hugged the scene boundary
            lo = g_lo.max(d - half).min(g_hi - min_interval);
            hi = (lo + 2.0 * half).min(g_hi);
        }
        d_min[p] = lo as f32;
        d_max[p] = hi as f32;
    }
    DepthRangeMap::new(h, w, n_next, d_min, d_max)
}

/// Softmax offsets over the plane index from the normalized distance between
/// the uniform planes and the previous prediction.
/// Softmax offsets are kept this far inside (0, 1); see the saturation note
/// in [`adia_offsets`].
const OFFSET_MARGIN: f64 = 1e-3;

pub fn adia_offsets(
    h_uniform: &HypothesisSet,
    prev: &DepthMap,
    mode: AdiaMode,
    sigma_floor: f32,
) -> Result<OffsetVolume, HypothesisError> {
    if prev.height != h_uniform.height || prev.width != h_uniform.width {
        return Err(HypothesisError::ShapeMismatch("previous depth vs hypotheses".into()));
    }
    let (n, h, w) = (h_uniform.planes, h_uniform.height, h_uniform.width);
    let mut values = vec![0.0f32; n * h * w];
    let mut scores = vec![0.0f64; n];
    for p in 0..h * w {
        let d = prev.depth[p] as f64;
        let sigma = prev.sigma[p].max(sigma_floor) as f64;
        for i in 0..n {
            let s = (h_uniform.values[i * h * w + p] as f64 - d) / sigma;
            scores[i] = match mode {
                AdiaMode::Literal => s,
                AdiaMode::Concentrate => -s.abs(),
            };
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        for i in 0..n {
            // Saturated exponentials would yield offsets of exactly 0 or 1,
            // letting adjacent adjusted planes tie in f32; clamp into the
            // open interval to keep them strictly increasing.
            let o = ((scores[i] - max).exp() / denom).clamp(OFFSET_MARGIN, 1.0 - OFFSET_MARGIN);
            values[i * h * w + p] = o as f32;
        }
    }
    Ok(OffsetVolume { planes: n, height: h, width: w, values })
}

/// Adjusted planes H_i(x) + e(x) o_i(x).
///
/// Consecutive uniform planes differ by exactly e(x) and offsets lie in
/// (0, 1), so the adjusted planes stay strictly increasing; violated
/// monotonicity indicates a bug and is reported as an internal error.
pub fn adia_hypotheses(
    h_uniform: &HypothesisSet,
    interval: &[f32],
    offsets: &OffsetVolume,
) -> Result<HypothesisSet, HypothesisError> {
    if offsets.planes != h_uniform.planes
        || offsets.height != h_uniform.height
        || offsets.width != h_uniform.width
    {
        return Err(HypothesisError::ShapeMismatch("offsets vs hypotheses".into()));
    }
    let (n, h, w) = (h_uniform.planes, h_uniform.height, h_uniform.width);
    assert_eq!(interval.len(), h * w);
    let mut values = vec![0.0f32; n * h * w];
    for i in 0..n {
        for p in 0..h * w {
            values[i * h * w + p] = (h_uniform.values[i * h * w + p] as f64
                + interval[p] as f64 * offsets.values[i * h * w + p] as f64)
                as f32;
        }
    }
    for p in 0..h * w {
        for i in 1..n {
            if values[i * h * w + p] <= values[(i - 1) * h * w + p] {
                return Err(HypothesisError::MonotonicityViolation(p / w, p % w));
            }
        }
    }
    Ok(HypothesisSet { planes: n, height: h, width: w, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_prob(n: usize, h: usize, w: usize, at: usize) -> ProbabilityVolume {
        let mut values = vec![0.0f32; n * h * w];
        for p in 0..h * w {
            values[at * h * w + p] = 1.0;
        }
        ProbabilityVolume { planes: n, height: h, width: w, values }
    }

    #[test]
    fn uniform_hypotheses_dtu_style_range() {
        let range = DepthRangeMap::constant(2, 2, 64, 425.0, 937.0);
        assert!((range.interval[0] - 8.0).abs() < 1e-6);
        let hyp = uniform_hypotheses(&range, 64).unwrap();
        assert!((hyp.get(0, 0, 0) - 429.0).abs() < 1e-4);
        assert!((hyp.get(63, 1, 1) - 933.0).abs() < 1e-3);
    }

    #[test]
    fn uniform_two_centers() {
        let range = DepthRangeMap::constant(1, 1, 2, f64::MIN_POSITIVE, 4.0);
        let hyp = uniform_hypotheses(&range, 2).unwrap();
        assert!((hyp.get(0, 0, 0) - 1.0).abs() < 1e-6);
        assert!((hyp.get(1, 0, 0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_rejects_single_plane() {
        let range = DepthRangeMap::constant(1, 1, 2, 1.0, 2.0);
        assert!(matches!(uniform_hypotheses(&range, 1), Err(HypothesisError::TooFewPlanes(1))));
    }

    #[test]
    fn uniform_per_pixel_interval_matches_definition() {
        let d_min = vec![1.0, 2.0, 3.0, 4.0];
        let d_max = vec![9.0, 10.0, 7.0, 12.0];
        let range = DepthRangeMap::new(2, 2, 4, d_min.clone(), d_max.clone());
        for p in 0..4 {
            let expect = (d_max[p] - d_min[p]) / 4.0;
            assert!((range.interval[p] - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn regress_delta_returns_that_plane() {
        let range = DepthRangeMap::constant(2, 3, 4, 2.0, 10.0);
        let hyp = uniform_hypotheses(&range, 4).unwrap();
        let prob = delta_prob(4, 2, 3, 2);
        let d = regress_depth(&hyp, &prob).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                assert!((d.at(y, x) - hyp.get(2, y, x)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn regress_two_plane_halves() {
        let hyp = HypothesisSet { planes: 2, height: 1, width: 1, values: vec![1.0, 3.0] };
        let prob = ProbabilityVolume { planes: 2, height: 1, width: 1, values: vec![0.5, 0.5] };
        let d = regress_depth(&hyp, &prob).unwrap();
        assert!((d.at(0, 0) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn regress_rejects_shape_mismatch() {
        let hyp = HypothesisSet { planes: 2, height: 1, width: 1, values: vec![1.0, 3.0] };
        let prob = ProbabilityVolume { planes: 3, height: 1, width: 1, values: vec![0.3; 3] };
        assert!(regress_depth(&hyp, &prob).is_err());
    }

    #[test]
    fn variance_delta_is_zero_and_two_plane_is_one() {
        let hyp = HypothesisSet { planes: 2, height: 1, width: 1, values: vec![1.0, 3.0] };
        let delta = ProbabilityVolume { planes: 2, height: 1, width: 1, values: vec![1.0, 0.0] };
        let d = regress_depth(&hyp, &delta).unwrap();
        let s = depth_variance(&hyp, &delta, &d).unwrap();
        assert!(s[0].abs() < 1e-6);

        let even = ProbabilityVolume { planes: 2, height: 1, width: 1, values: vec![0.5, 0.5] };
        let d = regress_depth(&hyp, &even).unwrap();
        let s = depth_variance(&hyp, &even, &d).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn refine_range_hand_case() {
        let mut prev = DepthMap::new(1, 1);
        prev.depth[0] = 600.0;
        prev.sigma[0] = 10.0;
        let range = refine_range(&prev, 1.5, (425.0, 937.0), 8, 1.0);
        assert!((range.d_min[0] - 585.0).abs() < 1e-3);
        assert!((range.d_max[0] - 615.0).abs() < 1e-3);
    }

    #[test]
    fn refine_range_zero_sigma_widens() {
        let mut prev = DepthMap::new(1, 1);
        prev.depth[0] = 600.0;
        prev.sigma[0] = 0.0;
        let range = refine_range(&prev, 1.5, (425.0, 937.0), 8, 1.0);
        let width = range.d_max[0] - range.d_min[0];
        assert!((width - 8.0).abs() < 1e-3, "width = {width}");
        assert!(range.d_min[0] < range.d_max[0]);
    }

    #[test]
    fn refine_range_respects_global_clamp() {
        let mut prev = DepthMap::new(1, 2);
        prev.depth = vec![426.0, 936.0];
        prev.sigma = vec![50.0, 50.0];
        let range = refine_range(&prev, 1.5, (425.0, 937.0), 8, 1.0);
        for p in 0..2 {
            assert!(range.d_min[p] >= 425.0 - 1e-4);
            assert!(range.d_max[p] <= 937.0 + 1e-4);
            assert!(range.d_min[p] < range.d_max[p]);
        }
    }

    #[test]
    fn adia_offsets_hand_case() {
        let hyp = HypothesisSet { planes: 2, height: 1, width: 1, values: vec![1.0, 3.0] };
        let mut prev = DepthMap::new(1, 1);
        prev.depth[0] = 2.0;
        prev.sigma[0] = 1.0;
        let o = adia_offsets(&hyp, &prev, AdiaMode::Literal, SIGMA_FLOOR).unwrap();
        // scores (-1, +1) -> softmax (0.1192, 0.8808)
        assert!((o.values[0] - 0.119_203).abs() < 1e-4);
        assert!((o.values[1] - 0.880_797).abs() < 1e-4);
    }

    #[test]
    fn adia_offsets_large_sigma_uniform_limit() {
        let hyp = HypothesisSet { planes: 4, height: 1, width: 1, values: vec![1.0, 2.0, 3.0, 4.0] };
        let mut prev = DepthMap::new(1, 1);
        prev.depth[0] = 2.5;
        prev.sigma[0] = 1e9;
        let o = adia_offsets(&hyp, &prev, AdiaMode::Literal, SIGMA_FLOOR).unwrap();
        for v in &o.values {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn adia_offsets_sum_to_one() {
        let range = DepthRangeMap::constant(3, 3, 5, 2.0, 12.0);
        let hyp = uniform_hypotheses(&range, 5).unwrap();
        let mut prev = DepthMap::new(3, 3);
        for p in 0..9 {
            prev.depth[p] = 3.0 + p as f32;
            prev.sigma[p] = 0.5 + 0.1 * p as f32;
        }
        for mode in [AdiaMode::Literal, AdiaMode::Concentrate] {
            let o = adia_offsets(&hyp, &prev, mode, SIGMA_FLOOR).unwrap();
            for p in 0..9 {
                let sum: f64 = (0..5).map(|i| o.values[i * 9 + p] as f64).sum();
                // softmax sums to one up to the open-interval clamp
                assert!((sum - 1.0).abs() <= 5.0 * OFFSET_MARGIN + 1e-5);
                for i in 0..5 {
                    let v = o.values[i * 9 + p];
                    assert!(v > 0.0 && v < 1.0);
                }
            }
        }
    }

    #[test]
    fn adia_hypotheses_hand_case() {
        let hyp = HypothesisSet { planes: 2, height: 1, width: 1, values: vec![1.0, 3.0] };
        let offsets = OffsetVolume {
            planes: 2,
            height: 1,
            width: 1,
            values: vec![0.119_202_9, 0.880_797_1],
        };
        let adj = adia_hypotheses(&hyp, &[2.0], &offsets).unwrap();
        assert!((adj.get(0, 0, 0) - 1.2384).abs() < 1e-3);
        assert!((adj.get(1, 0, 0) - 4.7616).abs() < 1e-3);
    }

    #[test]
    fn adia_uniform_offsets_rigid_shift() {
        let range = DepthRangeMap::constant(1, 1, 4, 0.0f64.max(1e-9), 8.0);
        let hyp = uniform_hypotheses(&range, 4).unwrap();
        let offsets = OffsetVolume { planes: 4, height: 1, width: 1, values: vec![0.25; 4] };
        let adj = adia_hypotheses(&hyp, &range.interval, &offsets).unwrap();
        for i in 0..4 {
            let shift = adj.get(i, 0, 0) - hyp.get(i, 0, 0);
            assert!((shift - 2.0 * 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn adia_adjusted_planes_stay_monotone() {
        let range = DepthRangeMap::constant(4, 4, 8, 425.0, 937.0);
        let hyp = uniform_hypotheses(&range, 8).unwrap();
        let mut prev = DepthMap::new(4, 4);
        for p in 0..16 {
            prev.depth[p] = 430.0 + 30.0 * p as f32;
            prev.sigma[p] = 0.001 + p as f32;
        }
        for mode in [AdiaMode::Literal, AdiaMode::Concentrate] {
            let o = adia_offsets(&hyp, &prev, mode, SIGMA_FLOOR).unwrap();
            let adj = adia_hypotheses(&hyp, &range.interval, &o).unwrap();
            for p in 0..16 {
                for i in 1..8 {
                    assert!(adj.values[i * 16 + p] > adj.values[(i - 1) * 16 + p]);
                }
                // adjusted planes stay inside [H_0, H_{n-1} + e]
                assert!(adj.values[p] >= hyp.values[p]);
                assert!(adj.values[7 * 16 + p] <= hyp.values[7 * 16 + p] + range.interval[p]);
            }
        }
    }
}
