//! Software rasterization of planar polygons into masks, z-buffered depth
//! and label maps, plus the pixel-level partition test.
//!
//! A pixel belongs to a polygon when its center lies inside the projected
//! outline. Centers exactly on an edge go to the polygon on their right
//! (left edges inclusive, right edges exclusive; rows half-open from the
//! top), so polygons sharing an exact edge tile without double coverage.

mod maps;

pub use maps::{BitMask, DepthMap, LabelMap};

use serde::{Deserialize, Serialize};

use crate::geometry::{project_point, CameraIntrinsics, Pixel, PlaneEq, Point3};

/// A planar polygon that can be rendered.
pub trait Facet {
    fn facet_id(&self) -> u32;
    fn plane(&self) -> &PlaneEq;
    /// Closed loop of 3D vertices, all in front of the camera.
    fn vertices(&self) -> &[Point3];
}

/// A free-standing [`Facet`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPolygon {
    pub id: u32,
    pub plane: PlaneEq,
    pub vertices: Vec<Point3>,
}

impl Facet for PlanarPolygon {
    fn facet_id(&self) -> u32 {
        self.id
    }
    fn plane(&self) -> &PlaneEq {
        &self.plane
    }
    fn vertices(&self) -> &[Point3] {
        &self.vertices
    }
}

impl<F: Facet + ?Sized> Facet for &F {
    fn facet_id(&self) -> u32 {
        (**self).facet_id()
    }
    fn plane(&self) -> &PlaneEq {
        (**self).plane()
    }
    fn vertices(&self) -> &[Point3] {
        (**self).vertices()
    }
}

/// Scanline fill of a 2D polygon given in continuous pixel coordinates.
pub fn rasterize_pixels(outline: &[Pixel], width: usize, height: usize) -> BitMask {
    let mut mask = BitMask::new(width, height);
    if outline.len() < 3 {
        return mask;
    }
    // Endpoints sorted by (v, u) so a shared edge yields bit-identical
    // crossings from either polygon.
    let edges: Vec<(Pixel, Pixel)> = (0..outline.len())
        .map(|i| {
            let (a, b) = (outline[i], outline[(i + 1) % outline.len()]);
            if (a.v, a.u) <= (b.v, b.u) {
                (a, b)
            } else {
                (b, a)
            }
        })
        .filter(|(a, b)| a.v != b.v)
        .collect();
    let vmin = outline.iter().map(|p| p.v).fold(f64::INFINITY, f64::min);
    let vmax = outline.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max);
    if !vmin.is_finite() || !vmax.is_finite() {
        return mask;
    }
    let y0 = ((vmin - 0.5).ceil().max(0.0)) as usize;
    let y1 = ((vmax - 0.5).ceil().clamp(0.0, height as f64)) as usize;
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for y in y0..y1 {
        let yc = y as f64 + 0.5;
        xs.clear();
        for (a, b) in &edges {
            if a.v <= yc && yc < b.v {
                xs.push(a.u + (yc - a.v) * (b.u - a.u) / (b.v - a.v));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let lo = (pair[0] - 0.5).ceil().clamp(0.0, width as f64) as usize;
            let hi = (pair[1] - 0.5).ceil().clamp(0.0, width as f64) as usize;
            if lo < hi {
                mask.set_span(y, lo, hi);
            }
        }
    }
    mask
}

/// Projected outline of a facet; `None` if a vertex does not project.
pub fn project_outline<F: Facet>(poly: &F, k: &CameraIntrinsics) -> Option<Vec<Pixel>> {
    poly.vertices().iter().map(|p| project_point(k, p)).collect()
}

/// Pixels whose centers fall inside the projection of `poly`.
pub fn rasterize_polygon<F: Facet>(poly: &F, k: &CameraIntrinsics) -> BitMask {
    match project_outline(poly, k) {
        Some(outline) => rasterize_pixels(&outline, k.width as usize, k.height as usize),
        None => BitMask::for_camera(k),
    }
}

/// z-depth of `plane` along the ray through the center of pixel index `i`.
#[inline]
pub fn plane_depth_at(plane: &PlaneEq, k: &CameraIntrinsics, i: usize) -> Option<f64> {
    let w = k.width as usize;
    plane.depth_along(k, CameraIntrinsics::pixel_center(i % w, i / w))
}

/// Renders the z-buffered depth and winning polygon per pixel. Equal depths
/// go to the smaller polygon id, so the result does not depend on the order
/// of `polys`.
pub fn render_layout_depth<F: Facet>(polys: &[F], k: &CameraIntrinsics) -> (DepthMap, LabelMap) {
    let (w, h) = (k.width as usize, k.height as usize);
    let mut depth = DepthMap::new(w, h);
    let mut labels = LabelMap::new(w, h);
    for poly in polys {
        let mask = rasterize_polygon(poly, k);
        render_into(poly.plane(), poly.facet_id(), &mask, k, &mut depth, &mut labels);
    }
    (depth, labels)
}

/// Z-buffers one already rasterized polygon into `depth` / `labels`.
pub fn render_into(
    plane: &PlaneEq,
    id: u32,
    mask: &BitMask,
    k: &CameraIntrinsics,
    depth: &mut DepthMap,
    labels: &mut LabelMap,
) {
    for i in mask.ones() {
        let Some(z) = plane_depth_at(plane, k, i) else {
            continue;
        };
        let cur = depth.values()[i];
        let wins = match labels.get_index(i) {
            None => true,
            Some(cur_id) => z < cur || (z == cur && id < cur_id),
        };
        if wins {
            depth.values_mut()[i] = z;
            labels.set_index(i, Some(id));
        }
    }
}

/// Pixel-level slack for the "projections partition the image" constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionTolerance {
    pub min_coverage: f64,
    pub max_overlap: f64,
}

impl Default for PartitionTolerance {
    fn default() -> Self {
        PartitionTolerance {
            min_coverage: 0.995,
            max_overlap: 0.005,
        }
    }
}

impl PartitionTolerance {
    pub fn accepts(&self, covered: usize, overlapped: usize, total: usize) -> bool {
        let t = total as f64;
        covered as f64 / t >= self.min_coverage && overlapped as f64 / t <= self.max_overlap
    }

    /// Largest overlap pixel count that [`Self::accepts`] tolerates.
    pub fn max_overlap_pixels(&self, total: usize) -> usize {
        let t = total as f64;
        let mut n = (self.max_overlap * t).floor().max(0.0) as usize;
        while n > 0 && n as f64 / t > self.max_overlap {
            n -= 1;
        }
        while (n + 1) as f64 / t <= self.max_overlap && n < total {
            n += 1;
        }
        n
    }

    /// Smallest covered pixel count that [`Self::accepts`] tolerates.
    pub fn min_covered_pixels(&self, total: usize) -> usize {
        let t = total as f64;
        let mut n = (self.min_coverage * t).ceil().clamp(0.0, t) as usize;
        while n < total && (n as f64 / t) < self.min_coverage {
            n += 1;
        }
        while n > 0 && (n - 1) as f64 / t >= self.min_coverage {
            n -= 1;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub is_partition: bool,
    pub coverage_fraction: f64,
    pub overlap_fraction: f64,
}

/// Partition test over precomputed masks.
pub fn partition_of_masks<'a>(
    masks: impl IntoIterator<Item = &'a BitMask>,
    width: usize,
    height: usize,
    tol: &PartitionTolerance,
) -> PartitionReport {
    let mut seen = BitMask::new(width, height);
    let mut twice = BitMask::new(width, height);
    for m in masks {
        let mut both = seen.clone();
        both.intersect_with(m);
        twice.union_with(&both);
        seen.union_with(m);
    }
    let total = width * height;
    let (covered, overlapped) = (seen.count(), twice.count());
    PartitionReport {
        is_partition: tol.accepts(covered, overlapped, total),
        coverage_fraction: covered as f64 / total as f64,
        overlap_fraction: overlapped as f64 / total as f64,
    }
}

pub fn partition_check<F: Facet>(
    polys: &[F],
    k: &CameraIntrinsics,
    tol: &PartitionTolerance,
) -> PartitionReport {
    let masks: Vec<BitMask> = polys.iter().map(|p| rasterize_polygon(p, k)).collect();
    partition_of_masks(&masks, k.width as usize, k.height as usize, tol)
}
