//! Render-and-compare refinement: depth hole filling, discrepancy maps,
//! detection of planes hidden behind other layout components, and the
//! floor fallback.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::PolygonId;
use crate::error::{LayoutError, Result};
use crate::geometry::{CameraIntrinsics, Pixel, PlaneEq, PlaneId, PlaneLabel, Vec3};
use crate::pipeline::{SolveContext, Stage};
use crate::raster::{rasterize_polygon, render_layout_depth, BitMask, DepthMap};

/// Iterations of 5x5 min-dilation before the nearest-valid pass.
const DILATION_ROUNDS: usize = 10;

/// Fills invalid pixels: repeated 5x5 dilation picking the smallest valid
/// neighbor depth, then nearest valid pixel (4-connected BFS) for whatever is
/// left. Valid pixels are never modified.
pub fn fill_depth_holes(depth: &DepthMap) -> DepthMap {
    let (w, h) = (depth.width(), depth.height());
    let mut out = depth.clone();
    if depth.valid_count() == 0 {
        if !depth.is_empty() {
            log::warn!("depth map has no valid pixel; hole filling skipped");
        }
        return out;
    }
    for _ in 0..DILATION_ROUNDS {
        let src = out.clone();
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if src.is_valid(i) {
                    continue;
                }
                let mut best = f64::INFINITY;
                for yy in y.saturating_sub(2)..(y + 3).min(h) {
                    for xx in x.saturating_sub(2)..(x + 3).min(w) {
                        let j = yy * w + xx;
                        if src.is_valid(j) {
                            best = best.min(src.values()[j]);
                        }
                    }
                }
                if best.is_finite() {
                    out.values_mut()[i] = best;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if out.valid_count() < out.len() {
        let mut queue: VecDeque<usize> = (0..out.len()).filter(|&i| out.is_valid(i)).collect();
        let mut done: Vec<bool> = (0..out.len()).map(|i| out.is_valid(i)).collect();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let v = out.values()[i];
            let mut visit = |j: usize, out: &mut DepthMap| {
                if !done[j] {
                    done[j] = true;
                    out.values_mut()[j] = v;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1, &mut out);
            }
            if x + 1 < w {
                visit(i + 1, &mut out);
            }
            if y > 0 {
                visit(i - w, &mut out);
            }
            if y + 1 < h {
                visit(i + w, &mut out);
            }
        }
    }
    out
}

/// Per-pixel positive part of observed minus rendered layout depth.
#[derive(Debug, Clone)]
pub struct DiscrepancyMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Mean over the layout-segmented pixels.
    pub mean: f64,
}

impl DiscrepancyMap {
    /// Pixels where either depth is invalid get 0. `layout_pixels` selects
    /// the pixels of the summary mean; an empty selection means all pixels.
    pub fn compute(observed: &DepthMap, rendered: &DepthMap, layout_pixels: &BitMask) -> Self {
        let (width, height) = (observed.width(), observed.height());
        let values: Vec<f64> = (0..observed.len())
            .map(|i| {
                if observed.is_valid(i) && rendered.is_valid(i) {
                    (observed.values()[i] - rendered.values()[i]).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let (sum, n) = if layout_pixels.count() > 0 {
            layout_pixels
                .ones()
                .fold((0.0, 0usize), |(s, n), i| (s + values[i], n + 1))
        } else {
            (values.iter().sum(), values.len())
        };
        DiscrepancyMap {
            width,
            height,
            mean: if n > 0 { sum / n as f64 } else { 0.0 },
            values,
        }
    }

    /// Wraps raw values; the mean is taken over all pixels.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        DiscrepancyMap {
            width,
            height,
            values,
            mean,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Gradient magnitude with differences taken only between pixels of
    /// `mask`; one-sided at the mask border.
    fn gradient_within(&self, mask: &BitMask, i: usize) -> f64 {
        let (w, h) = (self.width, self.height);
        let (x, y) = (i % w, i / w);
        let d = &self.values;
        let axis = |prev: Option<usize>, next: Option<usize>| -> f64 {
            let prev = prev.filter(|&j| mask.get_index(j));
            let next = next.filter(|&j| mask.get_index(j));
            match (prev, next) {
                (Some(a), Some(b)) => (d[b] - d[a]) / 2.0,
                (Some(a), None) => d[i] - d[a],
                (None, Some(b)) => d[b] - d[i],
                (None, None) => 0.0,
            }
        };
        let gx = axis(x.checked_sub(1).map(|_| i - 1), (x + 1 < w).then_some(i + 1));
        let gy = axis(y.checked_sub(1).map(|_| i - w), (y + 1 < h).then_some(i + w));
        gx.hypot(gy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Inlier distance to the line, pixels.
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 500,
            inlier_threshold: 2.0,
            min_inlier_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// A polygon is flagged when its mean discrepancy exceeds this, meters...
    pub trigger_mean: f64,
    /// ...and at least this fraction of its footprint exceeds `trigger_mean`.
    pub trigger_fraction: f64,
    pub max_iterations: usize,
    /// Required decrease of the mean layout discrepancy, meters.
    pub improvement_epsilon: f64,
    /// Percentile of nonzero discrepancy gradients above which pixels become
    /// line candidates.
    pub gradient_percentile: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            trigger_mean: 0.05,
            trigger_fraction: 0.02,
            max_iterations: 5,
            improvement_epsilon: 1e-3,
            gradient_percentile: 0.9,
        }
    }
}

/// A polygon whose footprint shows too much discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPolygon {
    pub polygon: PolygonId,
    pub mean: f64,
    pub sum: f64,
    pub fraction_above: f64,
}

/// Applies the trigger to one footprint.
pub fn flag_polygon(
    polygon: PolygonId,
    footprint: &BitMask,
    disc: &DiscrepancyMap,
    cfg: &RefineConfig,
) -> Option<FlaggedPolygon> {
    let n = footprint.count();
    if n == 0 {
        return None;
    }
    let (mut sum, mut above) = (0.0, 0usize);
    for i in footprint.ones() {
        let d = disc.values[i];
        sum += d;
        if d > cfg.trigger_mean {
            above += 1;
        }
    }
    let mean = sum / n as f64;
    let fraction_above = above as f64 / n as f64;
    (mean > cfg.trigger_mean && fraction_above >= cfg.trigger_fraction).then_some(FlaggedPolygon {
        polygon,
        mean,
        sum,
        fraction_above,
    })
}

fn fit_line_tls(pts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // principal direction of the 2x2 scatter matrix
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    ([cx, cy], [theta.cos(), theta.sin()])
}

/// A 2D image line fitted by RANSAC followed by a total-least-squares refit
/// on the inliers. Returns (point on line, unit direction).
pub fn ransac_line(pts: &[[f64; 2]], rc: &RansacConfig) -> Option<([f64; 2], [f64; 2])> {
    if pts.len() < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let mut best: Option<(usize, usize, usize)> = None;
    for _ in 0..rc.iterations.max(1) {
        let a = rng.random_range(0..pts.len());
        let b = rng.random_range(0..pts.len());
        let (p, q) = (pts[a], pts[b]);
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = dx.hypot(dy);
        if a == b || len == 0.0 {
            continue;
        }
        let inliers = pts
            .iter()
            .filter(|r| ((r[0] - p[0]) * dy - (r[1] - p[1]) * dx).abs() / len <= rc.inlier_threshold)
            .count();
        if best.is_none_or(|(n, _, _)| inliers > n) {
            best = Some((inliers, a, b));
        }
    }
    let (count, a, b) = best?;
    if (count as f64) < rc.min_inlier_fraction * pts.len() as f64 {
        return None;
    }
    let (p, q) = (pts[a], pts[b]);
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let len = dx.hypot(dy);
    let inliers: Vec<[f64; 2]> = pts
        .iter()
        .copied()
        .filter(|r| ((r[0] - p[0]) * dy - (r[1] - p[1]) * dx).abs() / len <= rc.inlier_threshold)
        .collect();
    Some(fit_line_tls(&inliers))
}

/// The plane through the camera center containing the image line, with its
/// normal pointing to the side with the larger mean discrepancy inside the
/// footprint.
pub fn plane_through_image_line(
    id: PlaneId,
    point: [f64; 2],
    dir: [f64; 2],
    k: &CameraIntrinsics,
    footprint: &BitMask,
    disc: &DiscrepancyMap,
) -> Option<PlaneEq> {
    let span = 100.0;
    let r1 = k.ray(Pixel::new(point[0] - dir[0] * span, point[1] - dir[1] * span));
    let r2 = k.ray(Pixel::new(point[0] + dir[0] * span, point[1] + dir[1] * span));
    let n = r1.cross(&r2);
    if n.norm() < 1e-12 {
        return None;
    }
    let n = n.normalize();
    let (mut pos, mut neg) = ((0.0, 0usize), (0.0, 0usize));
    let w = k.width as usize;
    for i in footprint.ones() {
        let side = n.dot(&k.ray(CameraIntrinsics::pixel_center(i % w, i / w)));
        let d = disc.values[i];
        if side > 0.0 {
            pos = (pos.0 + d, pos.1 + 1);
        } else if side < 0.0 {
            neg = (neg.0 + d, neg.1 + 1);
        }
    }
    let mean = |(s, c): (f64, usize)| if c > 0 { s / c as f64 } else { 0.0 };
    let normal = if mean(neg) > mean(pos) { -n } else { n };
    Some(PlaneEq::new(id, normal, 0.0, PlaneLabel::Wall))
}

/// Gradients at or below this magnitude, meters per pixel, count as zero;
/// depth stored as f32 leaves residue around 1e-7 on perfectly fitting planes.
pub const GRADIENT_FLOOR: f64 = 1e-5;

/// Looks for the image line along which discrepancy changes most inside a
/// flagged footprint and returns the plane through it and the camera center.
pub fn detect_missing_plane(
    id: PlaneId,
    footprint: &BitMask,
    disc: &DiscrepancyMap,
    k: &CameraIntrinsics,
    cfg: &RefineConfig,
    rc: &RansacConfig,
) -> Option<PlaneEq> {
    let grads: Vec<(usize, f64)> = footprint
        .ones()
        .map(|i| (i, disc.gradient_within(footprint, i)))
        .filter(|(_, g)| *g > GRADIENT_FLOOR)
        .collect();
    if grads.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = grads.iter().map(|(_, g)| *g).collect();
    sorted.sort_by(f64::total_cmp);
    let rank = ((sorted.len() - 1) as f64 * cfg.gradient_percentile).floor() as usize;
    let threshold = sorted[rank];
    let w = disc.width;
    let pts: Vec<[f64; 2]> = grads
        .iter()
        .filter(|(_, g)| *g >= threshold)
        .map(|(i, _)| [(i % w) as f64 + 0.5, (i / w) as f64 + 0.5])
        .collect();
    let (point, dir) = ransac_line(&pts, rc)?;
    plane_through_image_line(id, point, dir, k, footprint, disc)
}

/// A floor plane for scenes without one: normal from the wall normals
/// crossed with the optical axis, camera `camera_height` above it.
///
/// The cross products are brought into one hemisphere before averaging so
/// that opposite walls reinforce rather than cancel. The result is oriented
/// like every layout plane, normal pointing away from the camera (downward).
pub fn floor_fallback(walls: &[PlaneEq], id: PlaneId, camera_height: f64) -> Result<PlaneEq> {
    let axis = Vec3::new(0.0, 0.0, 1.0);
    let mut crosses: Vec<Vec3> = walls.iter().map(|w| w.normal.cross(&axis)).collect();
    crosses.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    if crosses.first().is_none_or(|c| c.norm() < 1e-6) {
        return Err(LayoutError::DegenerateFloorFallback(
            "no wall normal is transverse to the optical axis".into(),
        ));
    }
    let mut acc = Vec3::zeros();
    for c in &crosses {
        acc += if c.dot(&acc) < 0.0 { -c } else { *c };
    }
    let mut n = acc.normalize();
    if n.y < 0.0 {
        n = -n;
    }
    Ok(PlaneEq::new(id, n, camera_height, PlaneLabel::Floor))
}

/// One pass of the refinement loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineIteration {
    pub iteration: usize,
    pub discrepancy_before: f64,
    pub flagged: Option<FlaggedPolygon>,
    pub added_plane: Option<PlaneEq>,
    pub discrepancy_after: Option<f64>,
    pub cost_after: Option<f64>,
    pub accepted: bool,
}

/// Rendered layout depth and its discrepancy for a solved stage.
pub fn stage_discrepancy(ctx: &SolveContext, stage: &Stage) -> Option<DiscrepancyMap> {
    let sol = stage.solution.as_ref()?;
    let (rendered, _) = render_layout_depth(&sol.polygons, ctx.k);
    Some(DiscrepancyMap::compute(ctx.depth, &rendered, ctx.regions.union()))
}

fn next_plane_id(planes: &[PlaneEq]) -> PlaneId {
    planes
        .iter()
        .filter(|p| !p.is_frustum())
        .map(|p| p.id + 1)
        .max()
        .unwrap_or(0)
}

/// Repeatedly adds one plane behind the worst polygon and re-solves while
/// the mean layout discrepancy keeps dropping. Returns the best stage and
/// the per-iteration trace.
pub fn refine_loop(
    ctx: &SolveContext,
    initial: Stage,
    cfg: &RefineConfig,
    rc: &RansacConfig,
) -> (Stage, Vec<RefineIteration>) {
    let mut trace = Vec::new();
    let Some(mut best_disc) = stage_discrepancy(ctx, &initial) else {
        return (initial, trace);
    };
    let mut best = initial;
    for iteration in 0..cfg.max_iterations {
        let sol = best.solution.as_ref().expect("accepted stages are solved");
        let worst = sol
            .polygons
            .iter()
            .filter_map(|p| flag_polygon(p.id, &rasterize_polygon(p, ctx.k), &best_disc, cfg))
            .max_by(|a, b| a.sum.total_cmp(&b.sum).then(b.polygon.cmp(&a.polygon)));
        // nothing above the trigger: converged, no iteration to record
        let Some(flag) = worst else {
            break;
        };
        let mut record = RefineIteration {
            iteration,
            discrepancy_before: best_disc.mean,
            flagged: Some(flag),
            added_plane: None,
            discrepancy_after: None,
            cost_after: None,
            accepted: false,
        };
        let poly = sol
            .polygons
            .iter()
            .find(|p| p.id == flag.polygon)
            .expect("flagged polygon is in the solution");
        let footprint = rasterize_polygon(poly, ctx.k);
        let iter_rc = RansacConfig {
            seed: rc.seed.wrapping_add(iteration as u64),
            ..*rc
        };
        let id = next_plane_id(&best.planes);
        let Some(plane) = detect_missing_plane(id, &footprint, &best_disc, ctx.k, cfg, &iter_rc) else {
            trace.push(record);
            break;
        };
        record.added_plane = Some(plane);
        let mut planes = best.planes.clone();
        planes.push(plane);
        let stage = ctx.solve_planes(&planes);
        let disc = stage_discrepancy(ctx, &stage);
        record.discrepancy_after = disc.as_ref().map(|d| d.mean);
        record.cost_after = stage.solution.as_ref().map(|s| s.cost);
        let improved = disc
            .as_ref()
            .is_some_and(|d| d.mean < best_disc.mean - cfg.improvement_epsilon);
        record.accepted = improved;
        trace.push(record);
        if !improved {
            break;
        }
        best = stage;
        best_disc = disc.expect("improved implies solved");
    }
    (best, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_holes_is_identity() {
        let d = DepthMap::from_values(3, 2, vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(fill_depth_holes(&d).values(), d.values());
    }

    #[test]
    fn uniform_hole_filled_exactly() {
        let mut d = DepthMap::filled(30, 30, 2.0);
        for y in 10..20 {
            for x in 10..20 {
                d.set(x, y, f64::NAN);
            }
        }
        let f = fill_depth_holes(&d);
        assert!(f.values().iter().all(|v| *v == 2.0));
    }

    #[test]
    fn step_edge_fill_stays_in_range() {
        let mut d = DepthMap::from_values(40, 20, (0..800).map(|i| if i % 40 < 20 { 1.5 } else { 4.0 }).collect());
        for y in 0..20 {
            for x in 15..26 {
                d.set(x, y, 0.0);
            }
        }
        let f = fill_depth_holes(&d);
        for (i, v) in f.values().iter().enumerate() {
            assert!((1.5..=4.0).contains(v), "pixel {i}: {v}");
            if d.is_valid(i) {
                assert_eq!(*v, d.values()[i]);
            }
        }
    }

    #[test]
    fn all_invalid_unchanged() {
        let d = DepthMap::new(4, 4);
        let f = fill_depth_holes(&d);
        assert_eq!(f.valid_count(), 0);
    }

    #[test]
    fn floor_fallback_examples() {
        let wall = |n: [f64; 3]| PlaneEq::new(0, Vec3::new(n[0], n[1], n[2]), 2.0, PlaneLabel::Wall);
        let f = floor_fallback(&[wall([1., 0., 0.])], 9, 1.5).unwrap();
        // cross((1,0,0),(0,0,1)) = (0,-1,0); same plane, oriented away from the camera
        assert!((f.normal - Vec3::new(0., 1., 0.)).norm() < 1e-12);
        assert_eq!(f.offset, 1.5);
        assert_eq!(f.label, PlaneLabel::Floor);
        let f = floor_fallback(&[wall([1., 0., 0.]), wall([0., 1., 0.])], 9, 1.5).unwrap();
        let expect = Vec3::new(1., -1., 0.) / 2f64.sqrt();
        assert!((f.normal.dot(&expect).abs() - 1.0).abs() < 1e-12);
        assert!(floor_fallback(&[wall([0., 0., 1.])], 9, 1.5).is_err());
        assert!(floor_fallback(&[], 9, 1.5).is_err());
        // opposite walls reinforce
        let f = floor_fallback(&[wall([1., 0., 0.]), wall([-1., 0., 0.])], 9, 1.5).unwrap();
        assert!((f.normal - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn ransac_recovers_vertical_line() {
        let mut pts: Vec<[f64; 2]> = (0..80).map(|v| [40.5, v as f64 + 0.5]).collect();
        pts.extend((0..20).map(|i| [(i * 7 % 30) as f64, (i * 13 % 80) as f64]));
        let (p, d) = ransac_line(&pts, &RansacConfig::default()).unwrap();
        assert!((p[0] - 40.5).abs() < 1e-9);
        assert!(d[0].abs() < 1e-9);
        assert!(ransac_line(&pts[..1], &RansacConfig::default()).is_none());
    }

    #[test]
    fn zero_discrepancy_detects_nothing() {
        let k = CameraIntrinsics::new(50., 50., 32., 24., 64, 48).unwrap();
        let fp = BitMask::full(64, 48);
        let disc = DiscrepancyMap::from_values(64, 48, vec![0.0; 64 * 48]);
        assert!(detect_missing_plane(5, &fp, &disc, &k, &RefineConfig::default(), &RansacConfig::default()).is_none());
    }

    #[test]
    fn step_discrepancy_yields_plane_through_center() {
        let k = CameraIntrinsics::new(50., 50., 32., 24., 64, 48).unwrap();
        let fp = BitMask::full(64, 48);
        let disc = DiscrepancyMap::from_values(64, 48, (0..64 * 48).map(|i| if i % 64 >= 40 { 3.0 } else { 0.0 }).collect());
        let p = detect_missing_plane(5, &fp, &disc, &k, &RefineConfig::default(), &RansacConfig::default()).unwrap();
        assert!(p.offset.abs() <= 1e-9);
        // the boundary between columns 39 and 40 sits at u = 40
        let on_line = k.ray(Pixel::new(40.0, 10.0));
        assert!(p.normal.dot(&on_line).abs() / on_line.norm() < 0.02);
        // high-discrepancy side is positive
        assert!(p.normal.dot(&k.ray(Pixel::new(60.0, 10.0))) > 0.0);
    }
}
