//! Depth-map filtering, point-cloud fusion, and the distance metrics used to
//! score reconstructions: accuracy, completeness, overall, and F-score.
//!
//! Nearest-neighbor queries run on a uniform voxel grid with expanding-ring
//! search; the search is exact (identical distances to a brute-force scan),
//! the grid only accelerates it.

use crate::camera::Camera;
use crate::hypothesis::DepthMap;
use crate::numerics::ImageF;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("at least two views are required, got {0}")]
    TooFewViews(usize),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("distance threshold must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("per-view inputs have inconsistent lengths")]
    InconsistentViews,
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Accuracy/completeness report at threshold tau.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub completeness: f64,
    pub overall: f64,
    pub f_score: f64,
    pub tau: f64,
}

/// Exact nearest-neighbor index over a fixed point set.
pub struct NearestNeighborGrid {
    points: Vec<[f64; 3]>,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    origin: [f64; 3],
    cell: f64,
    key_lo: (i64, i64, i64),
    key_hi: (i64, i64, i64),
}

impl NearestNeighborGrid {
    pub fn build(points: &[[f64; 3]], cell: f64) -> Self {
        assert!(!points.is_empty(), "cannot index an empty set");
        assert!(cell > 0.0 && cell.is_finite());
        let mut origin = points[0];
        for p in points {
            for k in 0..3 {
                origin[k] = origin[k].min(p[k]);
            }
        }
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut key_lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let key = (
                ((p[0] - origin[0]) / cell).floor() as i64,
                ((p[1] - origin[1]) / cell).floor() as i64,
                ((p[2] - origin[2]) / cell).floor() as i64,
            );
            key_lo = (key_lo.0.min(key.0), key_lo.1.min(key.1), key_lo.2.min(key.2));
            key_hi = (key_hi.0.max(key.0), key_hi.1.max(key.1), key_hi.2.max(key.2));
            cells.entry(key).or_default().push(i as u32);
        }
        Self { points: points.to_vec(), cells, origin, cell, key_lo, key_hi }
    }

    /// Heuristic cell size: target a handful of points per occupied cell.
    pub fn default_cell(points: &[[f64; 3]]) -> f64 {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2) + (hi[2] - lo[2]).powi(2))
            .sqrt();
        let cell = diag / (points.len() as f64).cbrt().max(1.0);
        if cell > 0.0 && cell.is_finite() {
            cell
        } else {
            1.0
        }
    }

    /// Exact nearest-neighbor distance from `q` to the indexed set.
    ///
    /// Rings of cells at increasing Chebyshev radius are scanned; any point
    /// in a ring-`r` cell is at least `(r - 1) * cell` away, so the scan can
    /// stop once that bound exceeds the best distance found.
    pub fn nearest_distance(&self, q: [f64; 3]) -> f64 {
        let key = (
            ((q[0] - self.origin[0]) / self.cell).floor() as i64,
            ((q[1] - self.origin[1]) / self.cell).floor() as i64,
            ((q[2] - self.origin[2]) / self.cell).floor() as i64,
        );
        // every occupied cell has Chebyshev distance <= max_r from the query
        let axis_span = |c: i64, lo: i64, hi: i64| (c - lo).abs().max((hi - c).abs());
        let max_r = axis_span(key.0, self.key_lo.0, self.key_hi.0)
            .max(axis_span(key.1, self.key_lo.1, self.key_hi.1))
            .max(axis_span(key.2, self.key_lo.2, self.key_hi.2));
        let mut best_sq = f64::INFINITY;
        for r in 0..=max_r {
            if best_sq.is_finite() {
                let lower = (r - 1).max(0) as f64 * self.cell;
                if lower * lower > best_sq {
                    break;
                }
            }
            self.for_ring(key, r, |cell_pts| {
                for &i in cell_pts {
                    let p = self.points[i as usize];
                    let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    if d < best_sq {
                        best_sq = d;
                    }
                }
            });
        }
        best_sq.sqrt()
    }

    /// Visit the occupied cells on the Chebyshev ring of radius `r` around
    /// `center`, clamped to the occupied bounding box.
    fn for_ring<F: FnMut(&[u32])>(&self, center: (i64, i64, i64), r: i64, mut f: F) {
        if r == 0 {
            if let Some(pts) = self.cells.get(&center) {
                f(pts);
            }
            return;
        }
        let clamp = |lo: i64, hi: i64, b_lo: i64, b_hi: i64| (lo.max(b_lo), hi.min(b_hi));
        let (xl, xh) = clamp(center.0 - r, center.0 + r, self.key_lo.0, self.key_hi.0);
        let (yl, yh) = clamp(center.1 - r, center.1 + r, self.key_lo.1, self.key_hi.1);
        let (zl, zh) = clamp(center.2 - r, center.2 + r, self.key_lo.2, self.key_hi.2);
        let mut visit = |x: i64, y: i64, z: i64| {
            if let Some(pts) = self.cells.get(&(x, y, z)) {
                f(pts);
            }
        };
        // two x faces
        for &x in &[center.0 - r, center.0 + r] {
            if x < self.key_lo.0 || x > self.key_hi.0 {
                continue;
            }
            for y in yl..=yh {
                for z in zl..=zh {
                    visit(x, y, z);
                }
            }
        }
        // two y faces, excluding the x-face columns
        let (ixl, ixh) = ((center.0 - r + 1).max(xl), (center.0 + r - 1).min(xh));
        for &y in &[center.1 - r, center.1 + r] {
            if y < self.key_lo.1 || y > self.key_hi.1 {
                continue;
            }
            for x in ixl..=ixh {
                for z in zl..=zh {
                    visit(x, y, z);
                }
            }
        }
        // two z faces, excluding x and y faces
        let (iyl, iyh) = ((center.1 - r + 1).max(yl), (center.1 + r - 1).min(yh));
        for &z in &[center.2 - r, center.2 + r] {
            if z < self.key_lo.2 || z > self.key_hi.2 {
                continue;
            }
            for x in ixl..=ixh {
                for y in iyl..=iyh {
                    visit(x, y, z);
                }
            }
        }
    }
}

fn mean_nn_distance(
    from: &PointCloud,
    to: &PointCloud,
    dist_cap: Option<f64>,
) -> Result<f64, FusionError> {
    if from.is_empty() || to.is_empty() {
        return Err(FusionError::EmptyCloud);
    }
    let grid = NearestNeighborGrid::build(&to.points, NearestNeighborGrid::default_cell(&to.points));
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for p in &from.points {
        let d = grid.nearest_distance(*p);
        if let Some(cap) = dist_cap {
            if d > cap {
                continue;
            }
        }
        sum += d;
        count += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}

/// Mean distance from reconstructed points to their nearest ground-truth
/// point; distances above `dist_cap` (when set) are excluded as outliers.
pub fn accuracy(
    recon: &PointCloud,
    gt: &PointCloud,
    dist_cap: Option<f64>,
) -> Result<f64, FusionError> {
    mean_nn_distance(recon, gt, dist_cap)
}

/// Mean distance from ground-truth points to their nearest reconstructed
/// point.
pub fn completeness(recon: &PointCloud, gt: &PointCloud) -> Result<f64, FusionError> {
    mean_nn_distance(gt, recon, None)
}

/// F-score at threshold tau: harmonic mean of precision (recon points within
/// tau of gt) and recall (gt points within tau of recon), as a percentage.
pub fn f_score(recon: &PointCloud, gt: &PointCloud, tau: f64) -> Result<f64, FusionError> {
    if tau <= 0.0 {
        return Err(FusionError::NonPositiveTau(tau));
    }
    if recon.is_empty() || gt.is_empty() {
        return Err(FusionError::EmptyCloud);
    }
    let gt_grid = NearestNeighborGrid::build(&gt.points, NearestNeighborGrid::default_cell(&gt.points));
    let within_gt = recon.points.iter().filter(|p| gt_grid.nearest_distance(**p) <= tau).count();
    let precision = within_gt as f64 / recon.len() as f64;
    let recon_grid =
        NearestNeighborGrid::build(&recon.points, NearestNeighborGrid::default_cell(&recon.points));
    let within_recon = gt.points.iter().filter(|p| recon_grid.nearest_distance(**p) <= tau).count();
    let recall = within_recon as f64 / gt.len() as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(200.0 * precision * recall / (precision + recall))
}

/// Full metric report: accuracy, completeness, their mean, and the F-score.
pub fn evaluate(recon: &PointCloud, gt: &PointCloud, tau: f64) -> Result<EvalReport, FusionError> {
    let acc = accuracy(recon, gt, None)?;
    let comp = completeness(recon, gt)?;
    let f = f_score(recon, gt, tau)?;
    Ok(EvalReport { accuracy: acc, completeness: comp, overall: 0.5 * (acc + comp), f_score: f, tau })
}

/// One view's inputs to filtering and fusion.
#[derive(Debug, Clone)]
pub struct FusionView {
    pub depth: DepthMap,
    pub camera: Camera,
    pub image: Option<ImageF>,
}

/// Geometric-consistency filter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    pub conf_min: f64,
    pub reproj_max: f64,
    pub rel_depth_max: f64,
    pub min_consistent: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self { conf_min: 0.5, reproj_max: 1.0, rel_depth_max: 0.01, min_consistent: 2 }
    }
}

/// Keep a pixel iff its confidence clears `conf_min` and at least
/// `min_consistent` other views agree with it geometrically (forward-backward
/// reprojection within `reproj_max` pixels and relative depth within
/// `rel_depth_max`). Returns one keep-mask per view.
pub fn filter_depths(
    views: &[FusionView],
    params: &FilterParams,
) -> Result<Vec<Vec<bool>>, FusionError> {
    if views.len() < 2 {
        return Err(FusionError::TooFewViews(views.len()));
    }
    let mut keep = Vec::with_capacity(views.len());
    for (vi, view) in views.iter().enumerate() {
        let (h, w) = (view.depth.height, view.depth.width);
        let mut mask = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let d = view.depth.depth[p] as f64;
                if d <= 0.0 || (view.depth.confidence[p] as f64) < params.conf_min {
                    continue;
                }
                let world = match view.camera.backproject(x as f64, y as f64, d) {
                    Ok(pt) => pt,
                    Err(_) => continue,
                };
                let mut consistent = 0usize;
                for (vj, other) in views.iter().enumerate() {
                    if vj == vi {
                        continue;
                    }
                    let proj = match other.camera.project(world) {
                        Ok(pr) => pr,
                        Err(_) => continue,
                    };
                    let (ow, oh) = (other.depth.width, other.depth.height);
                    let ox = proj.x.round();
                    let oy = proj.y.round();
                    if ox < 0.0 || oy < 0.0 || ox >= ow as f64 || oy >= oh as f64 {
                        continue;
                    }
                    let od = other.depth.depth[oy as usize * ow + ox as usize] as f64;
                    if od <= 0.0 {
                        continue;
                    }
                    // forward-backward: other's estimate back into this view
                    let back_world = match other.camera.backproject(ox, oy, od) {
                        Ok(pt) => pt,
                        Err(_) => continue,
                    };
                    let back = match view.camera.project(back_world) {
                        Ok(pr) => pr,
                        Err(_) => continue,
                    };
                    let reproj_err =
                        ((back.x - x as f64).powi(2) + (back.y - y as f64).powi(2)).sqrt();
                    let rel_depth = (back.depth - d).abs() / d;
                    if reproj_err <= params.reproj_max && rel_depth <= params.rel_depth_max {
                        consistent += 1;
                    }
                }
                mask[p] = consistent >= params.min_consistent;
            }
        }
        keep.push(mask);
    }
    Ok(keep)
}

/// Backproject surviving pixels and merge points within a voxel of edge
/// `voxel_size` (0 disables merging) to their centroid. Output order follows
/// first appearance, so fusion is deterministic.
pub fn fuse_points(
    views: &[FusionView],
    keep: &[Vec<bool>],
    voxel_size: f64,
) -> Result<PointCloud, FusionError> {
    if views.len() != keep.len() {
        return Err(FusionError::InconsistentViews);
    }
    struct Accum {
        pos: [f64; 3],
        color: [f64; 3],
        count: usize,
    }
    let mut order: Vec<(i64, i64, i64)> = Vec::new();
    let mut buckets: HashMap<(i64, i64, i64), Accum> = HashMap::new();
    let mut raw_points: Vec<[f64; 3]> = Vec::new();
    let mut raw_colors: Vec<[u8; 3]> = Vec::new();
    let has_color = views.iter().all(|v| v.image.is_some());

    for (view, mask) in views.iter().zip(keep) {
        let (h, w) = (view.depth.height, view.depth.width);
        if mask.len() != h * w {
            return Err(FusionError::InconsistentViews);
        }
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if !mask[p] {
                    continue;
                }
                let d = view.depth.depth[p] as f64;
                let world = match view.camera.backproject(x as f64, y as f64, d) {
                    Ok(pt) => pt,
                    Err(_) => continue,
                };
                let color = view.image.as_ref().map(|img| {
                    let px = img.pixel(y, x);
                    let get = |c: usize| px.get(c).copied().unwrap_or(px[0]);
                    [get(0) as f64, get(1) as f64, get(2) as f64]
                });
                if voxel_size > 0.0 {
                    let key = (
                        (world.x / voxel_size).floor() as i64,
                        (world.y / voxel_size).floor() as i64,
                        (world.z / voxel_size).floor() as i64,
                    );
                    let entry = buckets.entry(key).or_insert_with(|| {
                        order.push(key);
                        Accum { pos: [0.0; 3], color: [0.0; 3], count: 0 }
                    });
                    entry.pos[0] += world.x;
                    entry.pos[1] += world.y;
                    entry.pos[2] += world.z;
                    if let Some(c) = color {
                        for k in 0..3 {
                            entry.color[k] += c[k];
                        }
                    }
                    entry.count += 1;
                } else {
                    raw_points.push([world.x, world.y, world.z]);
                    if let Some(c) = color {
                        raw_colors.push([
                            (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                            (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                            (c[2].clamp(0.0, 1.0) * 255.0).round() as u8,
                        ]);
                    }
                }
            }
        }
    }

    if voxel_size > 0.0 {
        let mut points = Vec::with_capacity(order.len());
        let mut colors = Vec::with_capacity(order.len());
        for key in order {
            let a = &buckets[&key];
            let n = a.count as f64;
            points.push([a.pos[0] / n, a.pos[1] / n, a.pos[2] / n]);
            if has_color {
                colors.push([
                    ((a.color[0] / n).clamp(0.0, 1.0) * 255.0).round() as u8,
                    ((a.color[1] / n).clamp(0.0, 1.0) * 255.0).round() as u8,
                    ((a.color[2] / n).clamp(0.0, 1.0) * 255.0).round() as u8,
                ]);
            }
        }
        Ok(PointCloud { points, colors: has_color.then_some(colors) })
    } else {
        Ok(PointCloud { points: raw_points, colors: has_color.then_some(raw_colors) })
    }
}
