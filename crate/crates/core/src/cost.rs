//! Per-polygon cost terms and the additive layout cost.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{PolygonCandidate, PolygonId};
use crate::error::{LayoutError, Result};
use crate::geometry::{CameraIntrinsics, PlaneEq, PlaneId};
use crate::raster::{plane_depth_at, rasterize_polygon, BitMask, DepthMap};

/// Detected planar regions, keyed by plane id.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRegions {
    regions: BTreeMap<PlaneId, BitMask>,
    union: BitMask,
}

impl SegmentationRegions {
    pub fn new(width: usize, height: usize, regions: Vec<(PlaneId, BitMask)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut union = BitMask::new(width, height);
        for (id, mask) in regions {
            if mask.width() != width || mask.height() != height {
                return Err(LayoutError::InvalidScene(vec![format!(
                    "region of plane {id} is {}x{}, image is {width}x{height}",
                    mask.width(),
                    mask.height()
                )]));
            }
            union.union_with(&mask);
            if map.insert(id, mask).is_some() {
                return Err(LayoutError::InvalidScene(vec![format!(
                    "plane {id} has more than one region"
                )]));
            }
        }
        Ok(SegmentationRegions { regions: map, union })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        SegmentationRegions {
            regions: BTreeMap::new(),
            union: BitMask::new(width, height),
        }
    }

    pub fn get(&self, id: PlaneId) -> Option<&BitMask> {
        self.regions.get(&id)
    }

    pub fn union(&self) -> &BitMask {
        &self.union
    }

    pub fn iter(&self) -> impl Iterator<Item = (PlaneId, &BitMask)> {
        self.regions.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonCostTerms {
    pub polygon: PolygonId,
    pub k3d: f64,
    pub k2d: f64,
}

/// Image-normalized hinge penalty for layout in front of the observed depth.
///
/// Pixels where either depth is invalid contribute nothing; the normalizer is
/// always the full pixel count.
pub fn k3d_from_depths(footprint: &BitMask, observed: &DepthMap, layout: &DepthMap) -> f64 {
    let total = footprint.len();
    if total == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in footprint.ones() {
        if observed.is_valid(i) && layout.is_valid(i) {
            sum += (observed.values()[i] - layout.values()[i]).max(0.0);
        }
    }
    sum / total as f64
}

/// [`k3d_from_depths`] with the layout depth taken from the polygon's plane.
pub fn k3d_term(
    footprint: &BitMask,
    plane: &PlaneEq,
    observed: &DepthMap,
    k: &CameraIntrinsics,
) -> f64 {
    let total = footprint.len();
    if total == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in footprint.ones() {
        if !observed.is_valid(i) {
            continue;
        }
        if let Some(dp) = plane_depth_at(plane, k, i) {
            sum += (observed.values()[i] - dp).max(0.0);
        }
    }
    sum / total as f64
}

/// Disagreement between a footprint and the segmentation: one minus the IoU
/// with the plane's own region, plus the IoU with every other region.
/// A plane without a region scores a full penalty on the first term.
pub fn k2d_term(footprint: &BitMask, plane: PlaneId, regions: &SegmentationRegions) -> f64 {
    match regions.get(plane) {
        Some(own) => {
            let mut others = regions.union().clone();
            others.subtract(own);
            (1.0 - footprint.iou(own)) + footprint.iou(&others)
        }
        None => 1.0 + footprint.iou(regions.union()),
    }
}

/// A candidate's raster footprint and cost terms.
#[derive(Debug, Clone)]
pub struct EvaluatedCandidate {
    pub polygon: PolygonId,
    pub plane: PlaneId,
    pub footprint: BitMask,
    pub terms: PolygonCostTerms,
}

/// Rasterizes every candidate and computes its terms in parallel.
pub fn precompute_terms(
    polygons: &[PolygonCandidate],
    observed: &DepthMap,
    regions: &SegmentationRegions,
    k: &CameraIntrinsics,
) -> Vec<EvaluatedCandidate> {
    polygons
        .par_iter()
        .map(|p| {
            let footprint = rasterize_polygon(p, k);
            let terms = PolygonCostTerms {
                polygon: p.id,
                k3d: k3d_term(&footprint, &p.plane, observed, k),
                k2d: k2d_term(&footprint, p.plane.id, regions),
            };
            EvaluatedCandidate {
                polygon: p.id,
                plane: p.plane.id,
                footprint,
                terms,
            }
        })
        .collect()
}

/// Additive cost of a polygon subset, summed in ascending id order.
///
/// # Panics
/// When a polygon of `subset` has no precomputed terms.
pub fn total_cost(
    subset: &[PolygonId],
    terms: &BTreeMap<PolygonId, PolygonCostTerms>,
    lambda: f64,
) -> f64 {
    let mut ids = subset.to_vec();
    ids.sort_unstable();
    let (mut s3, mut s2) = (0.0, 0.0);
    for id in ids {
        let t = terms
            .get(&id)
            .unwrap_or_else(|| panic!("no precomputed cost terms for polygon {id}"));
        s3 += t.k3d;
        s2 += t.k2d;
    }
    s3 + lambda * s2
}
