//! Three-stage coarse-to-fine cascade and its configuration.
//!
//! Stage 1 sweeps uniform planes over the global depth range at quarter
//! resolution; stages 2 and 3 refine a per-pixel range around the previous
//! prediction (optionally sharpened by the depth-embedding module and
//! redistributed by adaptive intervals) at half and full resolution.

use crate::camera::{Camera, CameraError, Intrinsics};
use crate::gde::{self, GdeError};
use crate::hypothesis::{
    adia_hypotheses, adia_offsets, depth_variance, refine_range, regress_depth,
    uniform_hypotheses, AdiaMode, DepthMap, DepthRangeMap, HypothesisError, HypothesisSet,
    ProbabilityVolume,
};
use crate::loss::{is_loss, l1_loss, total_loss, LossBreakdown, LossError, ValidMask};
use crate::matching::{
    cost_to_probability, extract_features, photometric_confidence, regularize, variance_cost,
    warp_features, FeatureMap, MatchingError, FEATURE_CHANNELS,
};
use crate::numerics::{resize_bilinear, ImageF, NumericsError};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {0} out of range 1..=3")]
    BadStage(usize),
    #[error("stage {0} requires the previous stage output")]
    MissingPrev(usize),
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Gde(#[from] GdeError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Hypothesis planes per stage.
    pub planes: [usize; 3],
    /// Stage plane spacings in depth units; stages 2-3 use theirs as the
    /// minimum interval when refining ranges (stage 1 spans the full range).
    pub intervals: [f64; 3],
    /// Working resolution per stage as a fraction of input resolution.
    pub scales: [f64; 3],
    /// Confidence-range width multiplier on sigma.
    pub lambda: f64,
    /// Depth-loss and synthesis-loss weights.
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_floor: f32,
    pub temperature: f64,
    /// `None` disables adaptive intervals (plain uniform refinement).
    pub adia: Option<AdiaMode>,
    pub gde: bool,
    pub is_loss: bool,
    pub fusion: crate::fusion::FilterParams,
    /// Total views consumed per cascade (reference + sources).
    pub num_views: usize,
    /// Retain per-stage probability volumes (memory-heavy at full res).
    pub keep_probability: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            planes: [64, 32, 8],
            intervals: [4.0, 2.0, 1.0],
            scales: [0.25, 0.5, 1.0],
            lambda: 1.5,
            lambda1: 1.0,
            lambda2: 0.1,
            sigma_floor: 1e-3,
            temperature: 0.01,
            adia: Some(AdiaMode::Literal),
            gde: true,
            is_loss: true,
            fusion: crate::fusion::FilterParams::default(),
            num_views: 4,
            keep_probability: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("bad value {value:?} for key {key:?}")))
}

fn parse_triple<T: std::str::FromStr + Copy>(key: &str, value: &str) -> Result<[T; 3], PipelineError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(PipelineError::Config(format!("key {key:?} needs 3 comma-separated values")));
    }
    Ok([parse(key, parts[0])?, parse(key, parts[1])?, parse(key, parts[2])?])
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value.trim() {
        "true" | "on" | "1" | "yes" => Ok(true),
        "false" | "off" | "0" | "no" => Ok(false),
        other => Err(PipelineError::Config(format!("bad boolean {other:?} for key {key:?}"))),
    }
}

impl PipelineConfig {
    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        match key {
            "planes" => self.planes = parse_triple(key, value)?,
            "intervals" => self.intervals = parse_triple(key, value)?,
            "scales" => self.scales = parse_triple(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "sigma_floor" => self.sigma_floor = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "adia" => {
                self.adia = match value.trim() {
                    "off" => None,
                    "literal" => Some(AdiaMode::Literal),
                    "concentrate" => Some(AdiaMode::Concentrate),
                    other => {
                        return Err(PipelineError::Config(format!(
                            "adia must be off|literal|concentrate, got {other:?}"
                        )))
                    }
                }
            }
            "gde" => self.gde = parse_bool(key, value)?,
            "is_loss" => self.is_loss = parse_bool(key, value)?,
            "conf_min" => self.fusion.conf_min = parse(key, value)?,
            "reproj_max" => self.fusion.reproj_max = parse(key, value)?,
            "rel_depth_max" => self.fusion.rel_depth_max = parse(key, value)?,
            "min_consistent" => self.fusion.min_consistent = parse(key, value)?,
            "num_views" => self.num_views = parse(key, value)?,
            "keep_probability" => self.keep_probability = parse_bool(key, value)?,
            other => return Err(PipelineError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Load a `key = value` file ('#' comments, blank lines ignored) on top
    /// of the defaults.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (ln, line) in std::fs::read_to_string(path)?.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key=value", ln + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.planes.iter().any(|n| *n < 2) {
            return Err(PipelineError::Config("each stage needs at least 2 planes".into()));
        }
        if !(self.scales[0] < self.scales[1] && self.scales[1] < self.scales[2]) {
            return Err(PipelineError::Config("scales must be strictly ascending".into()));
        }
        if self.scales.iter().any(|s| *s <= 0.0 || *s > 1.0) {
            return Err(PipelineError::Config("scales must lie in (0, 1]".into()));
        }
        if self.intervals.iter().any(|i| *i <= 0.0) {
            return Err(PipelineError::Config("intervals must be positive".into()));
        }
        for (name, v) in
            [("lambda", self.lambda), ("lambda1", self.lambda1), ("lambda2", self.lambda2)]
        {
            if v < 0.0 {
                return Err(PipelineError::Config(format!("{name} must be non-negative")));
            }
        }
        if self.temperature <= 0.0 {
            return Err(PipelineError::Config("temperature must be positive".into()));
        }
        if self.num_views < 2 {
            return Err(PipelineError::Config("num_views must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StageOutput {
    pub stage: usize,
    pub depth: DepthMap,
    pub hypotheses: HypothesisSet,
    pub probability: Option<ProbabilityVolume>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CascadeOutput {
    pub stages: Vec<StageOutput>,
    /// Stage-3 depth at full input resolution.
    pub depth: DepthMap,
    pub loss: Option<LossBreakdown>,
}

fn stage_dims(h: usize, w: usize, scale: f64) -> (usize, usize) {
    (
        ((h as f64 * scale).round() as usize).max(1),
        ((w as f64 * scale).round() as usize).max(1),
    )
}

/// Intrinsics for the resized stage image. Resizing is corner-aligned
/// (pixel 0 -> pixel 0, last -> last), so the per-axis factor is
/// (dim-1)/(full-1), not the nominal scale.
fn stage_camera(cam: &Camera, full: (usize, usize), dims: (usize, usize)) -> Camera {
    let ky = if dims.0 == full.0 { 1.0 } else { (dims.0 - 1) as f64 / (full.0 - 1) as f64 };
    let kx = if dims.1 == full.1 { 1.0 } else { (dims.1 - 1) as f64 / (full.1 - 1) as f64 };
    Camera {
        intrinsics: Intrinsics {
            fx: cam.intrinsics.fx * kx,
            fy: cam.intrinsics.fy * ky,
            cx: cam.intrinsics.cx * kx,
            cy: cam.intrinsics.cy * ky,
        },
        extrinsics: cam.extrinsics,
        depth_min: cam.depth_min,
        depth_max: cam.depth_max,
    }
}

/// One cascade stage over `views` (index 0 is the reference). Stages 2 and 3
/// require the previous stage's output; the depth-embedding and
/// adaptive-interval toggles only affect those stages.
pub fn run_stage(
    stage: usize,
    views: &[(ImageF, Camera)],
    cfg: &PipelineConfig,
    prev: Option<&StageOutput>,
) -> Result<StageOutput, PipelineError> {
    if !(1..=3).contains(&stage) {
        return Err(PipelineError::BadStage(stage));
    }
    if stage > 1 && prev.is_none() {
        return Err(PipelineError::MissingPrev(stage));
    }
    if views.len() < 2 {
        return Err(PipelineError::TooFewViews(views.len()));
    }
    let t0 = Instant::now();
    let idx = stage - 1;
    let (ref_img, ref_cam) = &views[0];
    let full = (ref_img.height, ref_img.width);
    let (h, w) = stage_dims(full.0, full.1, cfg.scales[idx]);
    let global = (ref_cam.depth_min, ref_cam.depth_max);

    // Search planes for this stage, plus the (possibly refined) prior depth
    // the embedding module featurizes.
    let (hyp, prior) = if stage == 1 {
        let range = DepthRangeMap::constant(h, w, cfg.planes[0], global.0, global.1);
        (uniform_hypotheses(&range, cfg.planes[0])?, None)
    } else {
        let mut up = prev.unwrap().depth.resize(h, w);
        if cfg.gde {
            let guide = resize_bilinear(ref_img, h, w)?;
            up = gde::refine_depth(&up, &guide)?;
        }
        let range = refine_range(&up, cfg.lambda, global, cfg.planes[idx], cfg.intervals[idx]);
        let uniform = uniform_hypotheses(&range, cfg.planes[idx])?;
        let hyp = match cfg.adia {
            Some(mode) => {
                let offsets = adia_offsets(&uniform, &up, mode, cfg.sigma_floor)?;
                adia_hypotheses(&uniform, &range.interval, &offsets)?
            }
            None => uniform,
        };
        (hyp, Some(up))
    };

    let feats: Vec<FeatureMap> = views
        .iter()
        .enumerate()
        .map(|(i, (img, _))| extract_features(img, i, stage, cfg.scales[idx]))
        .collect();
    let ref_feat = match &prior {
        Some(prior) if cfg.gde => {
            let depth_feat = gde::depth_to_feature(prior, global, FEATURE_CHANNELS)?;
            let fused = gde::fuse(&feats[0], &depth_feat)?;
            FeatureMap { features: fused.features, view_id: 0, stage }
        }
        _ => feats[0].clone(),
    };

    let cams: Vec<Camera> = views.iter().map(|(_, c)| stage_camera(c, full, (h, w))).collect();
    let warped: Vec<_> =
        feats[1..].iter().zip(&cams[1..]).map(|(f, c)| warp_features(f, &cams[0], c, &hyp)).collect();
    let cost = regularize(&variance_cost(&ref_feat, &warped)?);
    let prob = cost_to_probability(&cost, cfg.temperature)?;
    let mut depth = regress_depth(&hyp, &prob)?;
    depth.sigma = depth_variance(&hyp, &prob, &depth)?;
    depth.confidence = photometric_confidence(&prob, &hyp, &depth)?;

    Ok(StageOutput {
        stage,
        depth,
        hypotheses: hyp,
        probability: cfg.keep_probability.then_some(prob),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Weighted per-stage depth + synthesis loss of arbitrary predictions
/// against ground truth. Predictions below full resolution are upsampled
/// first. Public so fixed points (ground truth in, zero out) are testable.
pub fn cascade_loss(
    preds: [&DepthMap; 3],
    gt: &DepthMap,
    gt_valid: &ValidMask,
    views: &[(ImageF, Camera)],
    cfg: &PipelineConfig,
) -> Result<LossBreakdown, PipelineError> {
    if views.len() < 2 {
        return Err(PipelineError::TooFewViews(views.len()));
    }
    let (h, w) = (gt.height, gt.width);
    let sources: Vec<(ImageF, Camera)> = views[1..].to_vec();
    let mut terms = [(0.0, 0.0); 3];
    for (i, pred) in preds.iter().enumerate() {
        let up;
        let pred = if pred.height == h && pred.width == w {
            *pred
        } else {
            up = pred.resize(h, w);
            &up
        };
        let (l1, _, _) = l1_loss(pred, gt, &gt_valid.valid)?;
        let is = if cfg.is_loss {
            is_loss(pred, gt, &gt_valid.valid, &views[0].1, &sources)?.0
        } else {
            0.0
        };
        terms[i] = (l1, is);
    }
    Ok(total_loss(terms, cfg.lambda1, cfg.lambda2))
}

/// Full three-stage cascade; computes the loss breakdown when ground truth
/// is supplied.
pub fn run_cascade(
    views: &[(ImageF, Camera)],
    cfg: &PipelineConfig,
    gt: Option<(&DepthMap, &ValidMask)>,
) -> Result<CascadeOutput, PipelineError> {
    cfg.validate()?;
    if views.len() < 2 {
        return Err(PipelineError::TooFewViews(views.len()));
    }
    let used = &views[..views.len().min(cfg.num_views)];
    let mut stages: Vec<StageOutput> = Vec::with_capacity(3);
    for k in 1..=3 {
        let out = run_stage(k, used, cfg, stages.last())?;
        stages.push(out);
    }
    let depth = stages[2].depth.clone();
    let loss = match gt {
        Some((gt_depth, gt_valid)) => Some(cascade_loss(
            [&stages[0].depth, &stages[1].depth, &stages[2].depth],
            gt_depth,
            gt_valid,
            used,
            cfg,
        )?),
        None => None,
    };
    Ok(CascadeOutput { stages, depth, loss })
}
