//! The structured layout: polygons with explicitly shared corners and edges.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateSet, PolygonCandidate};
use crate::error::{LayoutError, Result};
use crate::geometry::{PlaneChart, PlaneEq, PlaneId, Point3};
use crate::raster::PlanarPolygon;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutCorner {
    pub id: u32,
    /// Generating planes, ascending; this triple is the corner's identity.
    pub planes: [PlaneId; 3],
    pub point: [f64; 3],
}

impl LayoutCorner {
    pub fn point(&self) -> Point3 {
        Point3::new(self.point[0], self.point[1], self.point[2])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEdge {
    pub id: u32,
    pub corners: [u32; 2],
    pub planes: [PlaneId; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutPolygon {
    pub id: u32,
    pub plane: PlaneId,
    pub corner_loop: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub planes: Vec<PlaneEq>,
    pub corners: Vec<LayoutCorner>,
    pub edges: Vec<LayoutEdge>,
    pub polygons: Vec<LayoutPolygon>,
    #[serde(default)]
    pub trace: serde_json::Value,
}

const POINT_TOL: f64 = 1e-6;

/// Assembles the layout graph from chosen candidates. Corners are merged by
/// plane triple and edges by corner pair, so polygons sharing a boundary
/// reference the same edge record. Polygons are renumbered in input order.
pub fn build_layout(
    chosen: &[PolygonCandidate],
    candidates: &CandidateSet,
    trace: serde_json::Value,
) -> Result<Layout> {
    let mut corners: Vec<LayoutCorner> = Vec::new();
    let mut by_triple: HashMap<[PlaneId; 3], u32> = HashMap::new();
    let mut edges: Vec<LayoutEdge> = Vec::new();
    let mut by_pair: HashMap<[u32; 2], u32> = HashMap::new();
    let mut polygons = Vec::new();
    for (pi, poly) in chosen.iter().enumerate() {
        let mut lp = Vec::with_capacity(poly.corner_loop.len());
        for &cid in &poly.corner_loop {
            let c = candidates.corner(cid);
            let id = match by_triple.get(&c.planes) {
                Some(&id) => {
                    let existing = corners[id as usize].point();
                    if (existing - c.point).norm() > POINT_TOL {
                        return Err(LayoutError::Topology(format!(
                            "corner {:?} has two positions",
                            c.planes
                        )));
                    }
                    id
                }
                None => {
                    let id = corners.len() as u32;
                    corners.push(LayoutCorner {
                        id,
                        planes: c.planes,
                        point: [c.point.x, c.point.y, c.point.z],
                    });
                    by_triple.insert(c.planes, id);
                    id
                }
            };
            lp.push(id);
        }
        let n = lp.len();
        for i in 0..n {
            let (a, b) = (lp[i], lp[(i + 1) % n]);
            let key = [a.min(b), a.max(b)];
            if by_pair.contains_key(&key) {
                continue;
            }
            let shared: Vec<PlaneId> = corners[a as usize]
                .planes
                .iter()
                .copied()
                .filter(|p| corners[b as usize].planes.contains(p))
                .collect();
            if shared.len() != 2 {
                return Err(LayoutError::Topology(format!(
                    "corners {a} and {b} share {} planes",
                    shared.len()
                )));
            }
            let id = edges.len() as u32;
            edges.push(LayoutEdge {
                id,
                corners: key,
                planes: [shared[0], shared[1]],
            });
            by_pair.insert(key, id);
        }
        polygons.push(LayoutPolygon {
            id: pi as u32,
            plane: poly.plane.id,
            corner_loop: lp,
        });
    }
    let mut used: Vec<PlaneId> = corners.iter().flat_map(|c| c.planes).collect();
    used.extend(polygons.iter().map(|p| p.plane));
    used.sort_unstable();
    used.dedup();
    let planes = used
        .iter()
        .map(|id| {
            candidates
                .plane(*id)
                .copied()
                .ok_or_else(|| LayoutError::Topology(format!("unknown plane {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Layout {
        planes,
        corners,
        edges,
        polygons,
        trace,
    })
}

impl Layout {
    pub fn plane(&self, id: PlaneId) -> Option<&PlaneEq> {
        self.planes.iter().find(|p| p.id == id)
    }

    pub fn polygon_vertices(&self, poly: &LayoutPolygon) -> Vec<Point3> {
        poly.corner_loop
            .iter()
            .map(|&c| self.corners[c as usize].point())
            .collect()
    }

    /// Polygons as rasterizable facets.
    pub fn facets(&self) -> Vec<PlanarPolygon> {
        self.polygons
            .iter()
            .map(|p| PlanarPolygon {
                id: p.id,
                plane: *self.plane(p.plane).expect("validated layout"),
                vertices: self.polygon_vertices(p),
            })
            .collect()
    }

    /// Number of polygons using each edge.
    pub fn edge_use_counts(&self) -> BTreeMap<u32, usize> {
        let index: HashMap<[u32; 2], u32> = self.edges.iter().map(|e| (e.corners, e.id)).collect();
        let mut counts: BTreeMap<u32, usize> = self.edges.iter().map(|e| (e.id, 0)).collect();
        for p in &self.polygons {
            let n = p.corner_loop.len();
            for i in 0..n {
                let (a, b) = (p.corner_loop[i], p.corner_loop[(i + 1) % n]);
                if let Some(id) = index.get(&[a.min(b), a.max(b)]) {
                    *counts.get_mut(id).expect("edge listed") += 1;
                }
            }
        }
        counts
    }

    /// Number of edges touching each corner.
    pub fn corner_degrees(&self) -> BTreeMap<u32, usize> {
        let mut deg: BTreeMap<u32, usize> = self.corners.iter().map(|c| (c.id, 0)).collect();
        for e in &self.edges {
            for c in e.corners {
                *deg.entry(c).or_default() += 1;
            }
        }
        deg
    }

    /// Checks the graph invariants; returns every violation.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let nc = self.corners.len() as u32;
        for (i, c) in self.corners.iter().enumerate() {
            if c.id != i as u32 {
                errs.push(format!("corner at index {i} has id {}", c.id));
            }
            for pid in c.planes {
                match self.plane(pid) {
                    None => errs.push(format!("corner {} uses unknown plane {pid}", c.id)),
                    Some(p) => {
                        let r = p.signed_distance(&c.point()).abs();
                        if !(r <= POINT_TOL) {
                            errs.push(format!("corner {} is {r} m off plane {pid}", c.id));
                        }
                    }
                }
            }
        }
        let mut pairs = HashMap::new();
        for e in &self.edges {
            if e.corners.iter().any(|&c| c >= nc) {
                errs.push(format!("edge {} references a missing corner", e.id));
                continue;
            }
            if pairs.insert(e.corners, e.id).is_some() {
                errs.push(format!("edge {} duplicates corner pair {:?}", e.id, e.corners));
            }
        }
        for p in &self.polygons {
            if self.plane(p.plane).is_none() {
                errs.push(format!("polygon {} uses unknown plane {}", p.id, p.plane));
            }
            let n = p.corner_loop.len();
            if n < 3 {
                errs.push(format!("polygon {} has {n} corners", p.id));
            }
            for i in 0..n {
                let (a, b) = (p.corner_loop[i], p.corner_loop[(i + 1) % n]);
                if a >= nc || b >= nc {
                    errs.push(format!("polygon {} references a missing corner", p.id));
                    break;
                }
                if !pairs.contains_key(&[a.min(b), a.max(b)]) {
                    errs.push(format!("polygon {}: corners {a}-{b} are not an edge", p.id));
                }
            }
        }
        errs
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("layout serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Layout> {
        let layout: Layout = serde_json::from_slice(bytes)?;
        let errs = layout.validate();
        if errs.is_empty() {
            Ok(layout)
        } else {
            Err(LayoutError::Topology(errs.join("; ")))
        }
    }

    /// Wavefront OBJ: every corner as a vertex, one group per polygon,
    /// polygons triangulated by ear clipping.
    pub fn to_obj(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.corners {
            writeln!(out, "v {} {} {}", c.point[0], c.point[1], c.point[2]).expect("string write");
        }
        for p in &self.polygons {
            let plane = self
                .plane(p.plane)
                .ok_or_else(|| LayoutError::Topology(format!("unknown plane {}", p.plane)))?;
            let chart = PlaneChart::new(plane);
            let pts: Vec<[f64; 2]> = self
                .polygon_vertices(p)
                .iter()
                .map(|v| chart.to_2d(v))
                .collect();
            let tris = ear_clip(&pts).ok_or(LayoutError::NonSimplePolygon(p.id))?;
            writeln!(out, "g polygon_{}", p.id).expect("string write");
            for [a, b, c] in tris {
                writeln!(
                    out,
                    "f {} {} {}",
                    p.corner_loop[a] + 1,
                    p.corner_loop[b] + 1,
                    p.corner_loop[c] + 1
                )
                .expect("string write");
            }
        }
        Ok(out)
    }
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Triangulates a simple polygon; `None` when it is not simple enough to
/// clip (no ear found). Triangles keep the input orientation.
pub fn ear_clip(pts: &[[f64; 2]]) -> Option<Vec<[usize; 3]>> {
    let n = pts.len();
    if n < 3 {
        return None;
    }
    let area2: f64 = (0..n).map(|i| cross2([0.0, 0.0], pts[i], pts[(i + 1) % n])).sum();
    if area2 == 0.0 || !area2.is_finite() {
        return None;
    }
    let sign = area2.signum();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut tris = Vec::with_capacity(n - 2);
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let (a, b, c) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            if sign * cross2(pts[a], pts[b], pts[c]) <= 0.0 {
                return false;
            }
            idx.iter().all(|&j| {
                if j == a || j == b || j == c {
                    return true;
                }
                let p = pts[j];
                // strictly outside or on the boundary of the candidate ear
                !(sign * cross2(pts[a], pts[b], p) > 0.0
                    && sign * cross2(pts[b], pts[c], p) > 0.0
                    && sign * cross2(pts[c], pts[a], p) > 0.0)
            })
        })?;
        let m = idx.len();
        tris.push([idx[(ear + m - 1) % m], idx[ear], idx[(ear + 1) % m]]);
        idx.remove(ear);
    }
    tris.push([idx[0], idx[1], idx[2]]);
    Some(tris)
}
