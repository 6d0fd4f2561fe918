//! Layout evaluation: greedy polygon matching, IoU, pixel error, edge error
//! and layout depth RMSE.

use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::geometry::{CameraIntrinsics, Pixel};
use crate::layout::Layout;
use crate::raster::{project_outline, rasterize_pixels, render_layout_depth, BitMask, DepthMap, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt: u32,
    pub pred: u32,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Correspondences {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

impl Correspondences {
    pub fn is_pair(&self, gt: u32, pred: u32) -> bool {
        self.pairs.iter().any(|p| p.gt == gt && p.pred == pred)
    }
}

/// Greedy one-to-one matching: ground-truth polygons by descending area
/// (ties: smaller id) each take the remaining prediction of highest IoU
/// (ties: smaller id); zero-IoU pairs are never formed.
pub fn match_polygons(gt: &[(u32, BitMask)], pred: &[(u32, BitMask)]) -> Correspondences {
    let mut order: Vec<usize> = (0..gt.len()).collect();
    order.sort_by(|&a, &b| gt[b].1.count().cmp(&gt[a].1.count()).then(gt[a].0.cmp(&gt[b].0)));
    let mut taken = vec![false; pred.len()];
    let mut out = Correspondences::default();
    for gi in order {
        let (gid, gmask) = (&gt[gi].0, &gt[gi].1);
        let mut best: Option<(f64, u32, usize)> = None;
        for (pi, (pid, pmask)) in pred.iter().enumerate() {
            if taken[pi] {
                continue;
            }
            let iou = gmask.iou(pmask);
            if iou <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, bid, _)) => iou > bi || (iou == bi && *pid < bid),
            };
            if better {
                best = Some((iou, *pid, pi));
            }
        }
        match best {
            Some((iou, pid, pi)) => {
                taken[pi] = true;
                out.pairs.push(MatchPair { gt: *gid, pred: pid, iou });
            }
            None => out.unmatched_gt.push(*gid),
        }
    }
    out.unmatched_pred = pred
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|((id, _), _)| *id)
        .collect();
    out.unmatched_gt.sort_unstable();
    out
}

/// `2 / (M + N) · Σ IoU` over matched pairs.
pub fn iou_metric(c: &Correspondences, m: usize, n: usize) -> Result<f64> {
    if m + n == 0 {
        return Err(LayoutError::Metric("IoU of two empty layouts".into()));
    }
    let sum: f64 = c.pairs.iter().map(|p| p.iou).sum();
    Ok(2.0 / (m + n) as f64 * sum)
}

/// Fraction of pixels whose ground-truth and predicted polygons are not a
/// matched pair. A pixel that is background in both maps is correct; one
/// that is background in exactly one map is an error.
pub fn pixel_error(c: &Correspondences, gt: &LabelMap, pred: &LabelMap) -> f64 {
    let n = gt.labels().len();
    if n == 0 {
        return 0.0;
    }
    let wrong = gt
        .labels()
        .iter()
        .zip(pred.labels())
        .filter(|(g, p)| match (g, p) {
            (None, None) => false,
            (Some(g), Some(p)) => !c.is_pair(*g, *p),
            _ => true,
        })
        .count();
    wrong as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeError {
    pub value: f64,
    /// One side had no boundary; `value` is the image diagonal.
    pub empty_side: bool,
}

fn boundary_segments(polys: &[Vec<Pixel>]) -> Vec<(Pixel, Pixel)> {
    polys
        .iter()
        .flat_map(|p| (0..p.len()).map(move |i| (p[i], p[(i + 1) % p.len()])))
        .collect()
}

/// Points every pixel (at most) along a boundary segment, starting at its
/// first endpoint.
fn sample_segment(a: &Pixel, b: &Pixel) -> impl Iterator<Item = Pixel> {
    let steps = a.dist(b).ceil().max(1.0) as usize;
    let (a, b) = (*a, *b);
    (0..steps).map(move |s| {
        let t = s as f64 / steps as f64;
        Pixel::new(a.u + (b.u - a.u) * t, a.v + (b.v - a.v) * t)
    })
}

fn point_segment(p: &Pixel, a: &Pixel, b: &Pixel) -> f64 {
    let (dx, dy) = (b.u - a.u, b.v - a.v);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.u - a.u) * dx + (p.v - a.v) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.u - (a.u + t * dx)).hypot(p.v - (a.v + t * dy))
}

fn directed_mean(from: &[(Pixel, Pixel)], to: &[(Pixel, Pixel)]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in from {
        // samples on a segment the other side shares lie at distance zero;
        // skipping the projection keeps that exact
        let shared = to.iter().any(|(c, d)| (a == c && b == d) || (a == d && b == c));
        for p in sample_segment(a, b) {
            count += 1;
            if !shared {
                total += to
                    .iter()
                    .map(|(c, d)| point_segment(&p, c, d))
                    .fold(f64::INFINITY, f64::min);
            }
        }
    }
    total / count as f64
}

/// Symmetric Chamfer distance between polygon boundaries in pixels: the
/// mean over 1-px boundary samples of each side of the distance to the
/// other side's boundary, averaged over both directions.
pub fn edge_error(gt: &[Vec<Pixel>], pred: &[Vec<Pixel>], diagonal: f64) -> EdgeError {
    let (g, p) = (boundary_segments(gt), boundary_segments(pred));
    if g.is_empty() || p.is_empty() {
        return EdgeError {
            value: diagonal,
            empty_side: true,
        };
    }
    EdgeError {
        value: 0.5 * (directed_mean(&g, &p) + directed_mean(&p, &g)),
        empty_side: false,
    }
}

fn lower_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

/// RMSE between layout depth maps over pixels valid in both and not
/// excluded, and the same after scaling the prediction by
/// `median(gt) / median(pred)` (lower median).
pub fn rmse_depth(pred: &DepthMap, gt: &DepthMap, exclude: Option<&BitMask>) -> Result<(f64, f64)> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(LayoutError::Metric("depth maps differ in size".into()));
    }
    let idx: Vec<usize> = (0..gt.len())
        .filter(|&i| gt.is_valid(i) && pred.is_valid(i) && !exclude.is_some_and(|m| m.get_index(i)))
        .collect();
    if idx.is_empty() {
        return Err(LayoutError::Metric("no pixel to compare depth on".into()));
    }
    let rmse_scaled = |s: f64| {
        let sse: f64 = idx
            .iter()
            .map(|&i| (s * pred.values()[i] - gt.values()[i]).powi(2))
            .sum();
        (sse / idx.len() as f64).sqrt()
    };
    let s = lower_median(idx.iter().map(|&i| gt.values()[i]).collect())
        / lower_median(idx.iter().map(|&i| pred.values()[i]).collect());
    Ok((rmse_scaled(1.0), rmse_scaled(s)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub pe: f64,
    pub ee: f64,
    pub ee_empty_side: bool,
    pub rmse: f64,
    pub rmse_uts: Option<f64>,
    pub gt_polygons: usize,
    pub pred_polygons: usize,
    pub matching: Correspondences,
}

fn masks_and_outlines(layout: &Layout, k: &CameraIntrinsics) -> (Vec<(u32, BitMask)>, Vec<Vec<Pixel>>) {
    let (w, h) = (k.width as usize, k.height as usize);
    layout
        .facets()
        .iter()
        .map(|f| {
            let outline = project_outline(f, k).unwrap_or_default();
            let mask = if outline.len() >= 3 {
                rasterize_pixels(&outline, w, h)
            } else {
                BitMask::new(w, h)
            };
            ((f.id, mask), outline)
        })
        .unzip()
}

/// All metrics of `pred` against `gt`; `uts` adds the scale-invariant RMSE.
pub fn evaluate(
    pred: &Layout,
    gt: &Layout,
    k: &CameraIntrinsics,
    uts: bool,
    exclude: Option<&BitMask>,
) -> Result<MetricsReport> {
    let (gt_masks, gt_outlines) = masks_and_outlines(gt, k);
    let (pred_masks, pred_outlines) = masks_and_outlines(pred, k);
    let matching = match_polygons(&gt_masks, &pred_masks);
    let iou = iou_metric(&matching, gt_masks.len(), pred_masks.len())?;
    let (gt_depth, gt_labels) = render_layout_depth(&gt.facets(), k);
    let (pred_depth, pred_labels) = render_layout_depth(&pred.facets(), k);
    let pe = pixel_error(&matching, &gt_labels, &pred_labels);
    let ee = edge_error(&gt_outlines, &pred_outlines, k.diagonal());
    let (rmse, rmse_uts) = rmse_depth(&pred_depth, &gt_depth, exclude)?;
    Ok(MetricsReport {
        iou,
        pe,
        ee: ee.value,
        ee_empty_side: ee.empty_side,
        rmse,
        rmse_uts: uts.then_some(rmse_uts),
        gt_polygons: gt_masks.len(),
        pred_polygons: pred_masks.len(),
        matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BitMask {
        BitMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
    }

    fn square(u: f64, v: f64, s: f64) -> Vec<Pixel> {
        vec![
            Pixel::new(u, v),
            Pixel::new(u + s, v),
            Pixel::new(u + s, v + s),
            Pixel::new(u, v + s),
        ]
    }

    #[test]
    fn identical_sets_match_perfectly() {
        let a = vec![(0, rect(10, 10, 0, 0, 5, 10)), (1, rect(10, 10, 5, 0, 10, 10))];
        let c = match_polygons(&a, &a);
        assert_eq!(c.pairs.len(), 2);
        assert!(c.pairs.iter().all(|p| p.iou == 1.0 && p.gt == p.pred));
        assert_eq!(iou_metric(&c, 2, 2).unwrap(), 1.0);
        let none = match_polygons(&a, &[]);
        assert_eq!(none.unmatched_gt, vec![0, 1]);
        assert_eq!(iou_metric(&none, 2, 0).unwrap(), 0.0);
        assert!(iou_metric(&Correspondences::default(), 0, 0).is_err());
    }

    #[test]
    fn iou_metric_arithmetic() {
        let c = Correspondences {
            pairs: vec![MatchPair { gt: 0, pred: 0, iou: 0.9 }],
            ..Default::default()
        };
        assert!((iou_metric(&c, 2, 1).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn pixel_error_background_rules() {
        let mut g = LabelMap::new(2, 2);
        let mut p = LabelMap::new(2, 2);
        g.set_index(0, Some(0));
        p.set_index(0, Some(5));
        g.set_index(1, Some(0));
        p.set_index(2, Some(5));
        let c = Correspondences {
            pairs: vec![MatchPair { gt: 0, pred: 5, iou: 0.5 }],
            ..Default::default()
        };
        // pixel 0 matched, 1 and 2 one-sided, 3 background in both
        assert_eq!(pixel_error(&c, &g, &p), 0.5);
    }

    #[test]
    fn edge_error_identity_and_empty() {
        let a = vec![square(10.0, 10.0, 20.0)];
        assert_eq!(edge_error(&a, &a, 100.0).value, 0.0);
        let e = edge_error(&a, &[], 100.0);
        assert!(e.empty_side && e.value == 100.0);
    }

    #[test]
    fn rmse_examples() {
        let gt = DepthMap::from_values(2, 2, vec![1., 1., 2., 2.]);
        let pred = DepthMap::from_values(2, 2, vec![1., 1., 2., 4.]);
        let (r, u) = rmse_depth(&pred, &gt, None).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        assert!((u - 1.0).abs() < 1e-15);
        let twice = DepthMap::from_values(2, 2, vec![2., 2., 4., 4.]);
        let (r, u) = rmse_depth(&twice, &gt, None).unwrap();
        assert!((r - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(u, 0.0);
        assert_eq!(rmse_depth(&gt, &gt, None).unwrap(), (0.0, 0.0));
        assert!(rmse_depth(&gt, &gt, Some(&BitMask::full(2, 2))).is_err());
    }
}
