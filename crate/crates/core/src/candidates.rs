//! Candidate corners, edges and polygons from a set of planes.
//!
//! A corner is identified by the three planes that generate it, an edge by
//! two corners sharing exactly two planes, and a polygon by a simple closed
//! loop of edges lying on one plane.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    frustum_planes, intersect_three_planes, project_point, CameraIntrinsics, DegeneracyThresholds,
    Pixel, PlaneChart, PlaneEq, PlaneId, Point3, FRUSTUM_ID_BASE,
};
use crate::raster::Facet;

pub type CornerId = u32;
pub type EdgeId = u32;
pub type PolygonId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct CornerCandidate {
    pub id: CornerId,
    /// Generating planes, ascending.
    pub planes: [PlaneId; 3],
    pub point: Point3,
    pub pixel: Pixel,
}

impl CornerCandidate {
    pub fn has_plane(&self, p: PlaneId) -> bool {
        self.planes.contains(&p)
    }

    /// Planes shared with `other`, ascending.
    pub fn shared_planes(&self, other: &CornerCandidate) -> Vec<PlaneId> {
        self.planes
            .iter()
            .copied()
            .filter(|p| other.has_plane(*p))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeCandidate {
    pub id: EdgeId,
    /// Endpoint corners in ascending id order.
    pub corners: [CornerId; 2],
    /// The two planes whose intersection line carries the edge, ascending.
    pub shared_planes: [PlaneId; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonCandidate {
    pub id: PolygonId,
    pub plane: PlaneEq,
    pub corner_loop: Vec<CornerId>,
    /// `edges[i]` joins `corner_loop[i]` and `corner_loop[i + 1]` (cyclically).
    pub edges: Vec<EdgeId>,
    pub vertices: Vec<Point3>,
    /// Rasterized area in pixels, once computed.
    pub area_px: Option<usize>,
}

impl Facet for PolygonCandidate {
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub degeneracy: DegeneracyThresholds,
    /// Corners must lie deeper than this, meters.
    pub min_corner_depth: f64,
    /// Corners may reproject this far outside the image rectangle, pixels.
    pub image_slack: f64,
    /// Shorter edges (coincident corners) are dropped, meters.
    pub min_edge_length: f64,
    pub max_cycles_per_plane: usize,
    pub max_polygon_vertices: usize,
    /// DFS expansions allowed per plane before enumeration gives up.
    pub max_search_steps: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            degeneracy: DegeneracyThresholds::default(),
            min_corner_depth: 0.05,
            image_slack: 0.5,
            min_edge_length: 1e-4,
            max_cycles_per_plane: 512,
            max_polygon_vertices: 16,
            max_search_steps: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateWarning {
    CycleCapReached { plane: PlaneId, limit: usize },
    SearchBudgetExhausted { plane: PlaneId, steps: usize },
}

/// The candidate sets for one plane configuration.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    /// Layout planes followed by the four frustum planes, ascending id.
    pub planes: Vec<PlaneEq>,
    pub corners: Vec<CornerCandidate>,
    pub edges: Vec<EdgeCandidate>,
    pub polygons: Vec<PolygonCandidate>,
    pub warnings: Vec<CandidateWarning>,
}

impl CandidateSet {
    pub fn plane(&self, id: PlaneId) -> Option<&PlaneEq> {
        self.planes.iter().find(|p| p.id == id)
    }

    pub fn corner(&self, id: CornerId) -> &CornerCandidate {
        &self.corners[id as usize]
    }
}

fn frustum_pair_through_center(a: &PlaneEq, b: &PlaneEq) -> bool {
    // Slots 0..4 are left, top, right, bottom; opposite slots differ by 2 and
    // meet in a line through the camera center outside the image.
    a.is_frustum() && b.is_frustum() && (a.id.abs_diff(b.id)) == 2
}

/// All stable triplet intersections in front of the camera that reproject
/// into the image.
pub fn generate_corners(
    planes: &[PlaneEq],
    k: &CameraIntrinsics,
    cfg: &CandidateConfig,
) -> Vec<CornerCandidate> {
    let mut sorted: Vec<&PlaneEq> = planes.iter().collect();
    sorted.sort_by_key(|p| p.id);
    let (w, h) = (k.width as f64, k.height as f64);
    let s = cfg.image_slack;
    let mut out = Vec::new();
    let n = sorted.len();
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                let (a, b, c) = (sorted[i], sorted[j], sorted[l]);
                let frustum_count = [a, b, c].iter().filter(|p| p.is_frustum()).count();
                if frustum_count == 3 {
                    continue;
                }
                if frustum_count == 2
                    && (frustum_pair_through_center(a, b)
                        || frustum_pair_through_center(a, c)
                        || frustum_pair_through_center(b, c))
                {
                    continue;
                }
                let Some(point) = intersect_three_planes(a, b, c, &cfg.degeneracy) else {
                    continue;
                };
                if !(point.z > cfg.min_corner_depth) {
                    continue;
                }
                let Some(pixel) = project_point(k, &point) else {
                    continue;
                };
                if pixel.u < -s || pixel.u > w + s || pixel.v < -s || pixel.v > h + s {
                    continue;
                }
                out.push(CornerCandidate {
                    id: out.len() as CornerId,
                    planes: [a.id, b.id, c.id],
                    point,
                    pixel,
                });
            }
        }
    }
    out
}

/// One edge per corner pair sharing exactly two planes, excluding
/// zero-length pairs of coincident corners.
pub fn generate_edges(corners: &[CornerCandidate], cfg: &CandidateConfig) -> Vec<EdgeCandidate> {
    let mut by_line: BTreeMap<[PlaneId; 2], Vec<usize>> = BTreeMap::new();
    for (idx, c) in corners.iter().enumerate() {
        let [p, q, r] = c.planes;
        for key in [[p, q], [p, r], [q, r]] {
            by_line.entry(key).or_default().push(idx);
        }
    }
    let mut pairs = Vec::new();
    for (line, members) in &by_line {
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                let (ca, cb) = (&corners[a], &corners[b]);
                if ca.shared_planes(cb).len() != 2 {
                    continue;
                }
                if (ca.point - cb.point).norm() < cfg.min_edge_length {
                    continue;
                }
                let (lo, hi) = if ca.id < cb.id { (ca.id, cb.id) } else { (cb.id, ca.id) };
                pairs.push(([lo, hi], *line));
            }
        }
    }
    pairs.sort();
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, (corners, shared_planes))| EdgeCandidate {
            id: i as EdgeId,
            corners,
            shared_planes,
        })
        .collect()
}

type P2 = [f64; 2];

#[inline]
fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Closed segment intersection test (touching counts) with a relative
/// tolerance for collinearity.
pub(crate) fn segments_touch(a: P2, b: P2, c: P2, d: P2) -> bool {
    let scale = [a, b, c, d]
        .iter()
        .flat_map(|p| p.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-10 * scale * scale;
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    let sgn = |x: f64| if x > eps { 1 } else if x < -eps { -1 } else { 0 };
    let (s1, s2, s3, s4) = (sgn(d1), sgn(d2), sgn(d3), sgn(d4));
    if s1 * s2 < 0 && s3 * s4 < 0 {
        return true;
    }
    let on = |p: P2, q: P2, r: P2| {
        // r collinear with pq: is it within the bounding box?
        r[0] >= p[0].min(q[0]) - 1e-12 * scale
            && r[0] <= p[0].max(q[0]) + 1e-12 * scale
            && r[1] >= p[1].min(q[1]) - 1e-12 * scale
            && r[1] <= p[1].max(q[1]) + 1e-12 * scale
    };
    (s1 == 0 && on(c, d, a))
        || (s2 == 0 && on(c, d, b))
        || (s3 == 0 && on(a, b, c))
        || (s4 == 0 && on(a, b, d))
}

/// Whether a closed 2D loop is a simple polygon.
pub fn is_simple_loop(pts: &[P2]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let (c, d) = (pts[j], pts[(j + 1) % n]);
            if adjacent {
                // adjacent edges may only share their common vertex
                let shared = if j == i + 1 { b } else { a };
                let (p, q) = if j == i + 1 { (a, d) } else { (c, b) };
                if orient(p, shared, q).abs() <= 1e-12 {
                    // collinear adjacent edges: folded back or straight
                    let dot = (p[0] - shared[0]) * (q[0] - shared[0]) + (p[1] - shared[1]) * (q[1] - shared[1]);
                    if dot > 0.0 {
                        return false;
                    }
                }
            } else if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

struct PlaneGraph {
    /// Corner ids on this plane, ascending.
    verts: Vec<CornerId>,
    pos: Vec<P2>,
    /// Per local vertex: (neighbor local index, edge id, line plane).
    adj: Vec<Vec<(usize, EdgeId, PlaneId)>>,
}

fn plane_graph(plane: &PlaneEq, corners: &[CornerCandidate], edges: &[EdgeCandidate]) -> PlaneGraph {
    let chart = PlaneChart::new(plane);
    let verts: Vec<CornerId> = corners
        .iter()
        .filter(|c| c.has_plane(plane.id))
        .map(|c| c.id)
        .collect();
    let local: BTreeMap<CornerId, usize> = verts.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let pos = verts
        .iter()
        .map(|&c| chart.to_2d(&corners[c as usize].point))
        .collect();
    let mut adj = vec![Vec::new(); verts.len()];
    for e in edges {
        if !e.shared_planes.contains(&plane.id) {
            continue;
        }
        let line = if e.shared_planes[0] == plane.id {
            e.shared_planes[1]
        } else {
            e.shared_planes[0]
        };
        let (a, b) = (local[&e.corners[0]], local[&e.corners[1]]);
        adj[a].push((b, e.id, line));
        adj[b].push((a, e.id, line));
    }
    for list in &mut adj {
        list.sort();
    }
    PlaneGraph { verts, pos, adj }
}

struct CycleSearch<'a> {
    g: &'a PlaneGraph,
    cfg: &'a CandidateConfig,
    start: usize,
    path: Vec<usize>,
    path_edges: Vec<EdgeId>,
    path_lines: Vec<PlaneId>,
    on_path: Vec<bool>,
    found: Vec<(Vec<usize>, Vec<EdgeId>)>,
    steps: usize,
    capped: bool,
    exhausted: bool,
}

impl CycleSearch<'_> {
    fn crosses_path(&self, from: usize, to: usize, skip_first: bool) -> bool {
        let (a, b) = (self.g.pos[from], self.g.pos[to]);
        // path segment i joins path[i] and path[i+1]; the last one shares
        // `from` and is adjacent.
        let nseg = self.path.len() - 1;
        let lo = usize::from(skip_first);
        (lo..nseg.saturating_sub(1)).any(|i| {
            segments_touch(a, b, self.g.pos[self.path[i]], self.g.pos[self.path[i + 1]])
        })
    }

    fn dfs(&mut self, cur: usize) {
        for idx in 0..self.g.adj[cur].len() {
            if self.capped || self.exhausted {
                return;
            }
            self.steps += 1;
            if self.steps > self.cfg.max_search_steps {
                self.exhausted = true;
                return;
            }
            let (nb, eid, line) = self.g.adj[cur][idx];
            if self.path_lines.last() == Some(&line) {
                continue; // straight or folded vertex at `cur`
            }
            if nb == self.start {
                let n = self.path.len();
                if n < 3 || line == self.path_lines[0] {
                    continue;
                }
                if self.path[1] > self.path[n - 1] {
                    continue; // reflection of a cycle found in the other direction
                }
                if self.crosses_path(cur, nb, true) {
                    continue;
                }
                let mut edges = self.path_edges.clone();
                edges.push(eid);
                self.found.push((self.path.clone(), edges));
                if self.found.len() >= self.cfg.max_cycles_per_plane {
                    self.capped = true;
                }
                continue;
            }
            if nb < self.start || self.on_path[nb] || self.path.len() >= self.cfg.max_polygon_vertices {
                continue;
            }
            if self.path.len() >= 2 && self.crosses_path(cur, nb, false) {
                continue;
            }
            self.path.push(nb);
            self.path_edges.push(eid);
            self.path_lines.push(line);
            self.on_path[nb] = true;
            self.dfs(nb);
            self.on_path[nb] = false;
            self.path.pop();
            self.path_edges.pop();
            self.path_lines.pop();
        }
    }
}

/// A closed loop as its corners and the edges joining them.
type CornerLoop = (Vec<CornerId>, Vec<EdgeId>);

fn plane_cycles(
    plane: &PlaneEq,
    corners: &[CornerCandidate],
    edges: &[EdgeCandidate],
    cfg: &CandidateConfig,
) -> (Vec<CornerLoop>, Option<CandidateWarning>) {
    let g = plane_graph(plane, corners, edges);
    let n = g.verts.len();
    let mut search = CycleSearch {
        g: &g,
        cfg,
        start: 0,
        path: Vec::new(),
        path_edges: Vec::new(),
        path_lines: Vec::new(),
        on_path: vec![false; n],
        found: Vec::new(),
        steps: 0,
        capped: false,
        exhausted: false,
    };
    for s in 0..n {
        if search.capped || search.exhausted {
            break;
        }
        search.start = s;
        search.path = vec![s];
        search.on_path[s] = true;
        search.dfs(s);
        search.on_path[s] = false;
    }
    let warning = if search.capped {
        Some(CandidateWarning::CycleCapReached {
            plane: plane.id,
            limit: cfg.max_cycles_per_plane,
        })
    } else if search.exhausted {
        Some(CandidateWarning::SearchBudgetExhausted {
            plane: plane.id,
            steps: cfg.max_search_steps,
        })
    } else {
        None
    };
    let cycles = search
        .found
        .into_iter()
        .map(|(loop_, es)| (loop_.into_iter().map(|i| g.verts[i]).collect(), es))
        .collect();
    (cycles, warning)
}

/// Simple cycles of coplanar edges, per layout plane.
///
/// Frustum planes and planes through the camera center own no polygons.
/// Loops never continue straight through a vertex along the same line; the
/// straight-through variant describes the same region with the longer edge.
pub fn generate_polygons(
    corners: &[CornerCandidate],
    edges: &[EdgeCandidate],
    planes: &[PlaneEq],
    cfg: &CandidateConfig,
) -> (Vec<PolygonCandidate>, Vec<CandidateWarning>) {
    let mut layout: Vec<&PlaneEq> = planes.iter().filter(|p| p.is_layout()).collect();
    layout.sort_by_key(|p| p.id);
    let per_plane: Vec<_> = layout
        .par_iter()
        .map(|p| plane_cycles(p, corners, edges, cfg))
        .collect();
    let mut polygons = Vec::new();
    let mut warnings = Vec::new();
    for (plane, (cycles, warning)) in layout.iter().zip(per_plane) {
        if let Some(w) = warning {
            log::warn!("candidate enumeration truncated on plane {}: {:?}", plane.id, w);
            warnings.push(w);
        }
        for (corner_loop, edge_ids) in cycles {
            let vertices = corner_loop
                .iter()
                .map(|&c| corners[c as usize].point)
                .collect();
            polygons.push(PolygonCandidate {
                id: polygons.len() as PolygonId,
                plane: **plane,
                corner_loop,
                edges: edge_ids,
                vertices,
                area_px: None,
            });
        }
    }
    (polygons, warnings)
}

/// Runs the full candidate generation for a set of layout planes; the four
/// frustum planes are appended.
pub fn generate_candidates(
    layout_planes: &[PlaneEq],
    k: &CameraIntrinsics,
    cfg: &CandidateConfig,
) -> CandidateSet {
    debug_assert!(layout_planes.iter().all(|p| p.id < FRUSTUM_ID_BASE));
    let mut planes: Vec<PlaneEq> = layout_planes.to_vec();
    planes.extend(frustum_planes(k));
    planes.sort_by_key(|p| p.id);
    let corners = generate_corners(&planes, k, cfg);
    let edges = generate_edges(&corners, cfg);
    let (polygons, warnings) = generate_polygons(&corners, &edges, &planes, cfg);
    CandidateSet {
        planes,
        corners,
        edges,
        polygons,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PlaneLabel, Vec3};
    use std::collections::BTreeSet;

    fn plane(id: PlaneId, n: [f64; 3], d: f64) -> PlaneEq {
        PlaneEq::new(id, Vec3::new(n[0], n[1], n[2]), d, PlaneLabel::Wall)
    }

    fn corner(id: CornerId, planes: [PlaneId; 3], p: [f64; 3]) -> CornerCandidate {
        CornerCandidate {
            id,
            planes,
            point: Vec3::new(p[0], p[1], p[2]),
            pixel: Pixel::default(),
        }
    }

    #[test]
    fn single_orthogonal_triplet() {
        let k = CameraIntrinsics::new(50.0, 50.0, 50.0, 50.0, 100, 100).unwrap();
        let planes = vec![
            plane(0, [1., 0., 0.], 0.),
            plane(1, [0., 1., 0.], 0.),
            plane(2, [0., 0., 1.], 2.),
        ];
        let cs = generate_corners(&planes, &k, &CandidateConfig::default());
        assert_eq!(cs.len(), 1);
        assert!((cs[0].point - Vec3::new(0., 0., 2.)).norm() < 1e-12);
        assert_eq!(cs[0].planes, [0, 1, 2]);

        let behind = vec![planes[0], planes[1], plane(2, [0., 0., 1.], -2.)];
        assert!(generate_corners(&behind, &k, &CandidateConfig::default()).is_empty());
    }

    #[test]
    fn edge_requires_exactly_two_shared_planes() {
        let cs = vec![
            corner(0, [1, 2, 3], [0., 0., 1.]),
            corner(1, [1, 2, 4], [1., 0., 1.]),
            corner(2, [1, 5, 6], [0., 1., 1.]),
        ];
        let es = generate_edges(&cs, &CandidateConfig::default());
        assert_eq!(es.len(), 1);
        assert_eq!(es[0].corners, [0, 1]);
        assert_eq!(es[0].shared_planes, [1, 2]);
        assert!(generate_edges(&[], &CandidateConfig::default()).is_empty());
    }

    #[test]
    fn coincident_corners_get_no_edge() {
        let cs = vec![
            corner(0, [1, 2, 3], [0., 0., 1.]),
            corner(1, [1, 2, 4], [0., 0., 1.]),
        ];
        assert!(generate_edges(&cs, &CandidateConfig::default()).is_empty());
    }

    #[test]
    fn simple_loop_detection() {
        let square = [[0., 0.], [1., 0.], [1., 1.], [0., 1.]];
        assert!(is_simple_loop(&square));
        let bowtie = [[0., 0.], [1., 1.], [1., 0.], [0., 1.]];
        assert!(!is_simple_loop(&bowtie));
        let repeated = [[0., 0.], [1., 0.], [0., 0.], [0., 1.]];
        assert!(!is_simple_loop(&repeated));
    }

    /// A lone quadrilateral on one plane, bounded by four other planes.
    #[test]
    fn unique_quadrilateral() {
        // plane 0: z = 2; bounded by x = ±1 and y = ±1
        let p0 = plane(0, [0., 0., 1.], 2.);
        let cs = vec![
            corner(0, [0, 1, 3], [-1., -1., 2.]),
            corner(1, [0, 2, 3], [1., -1., 2.]),
            corner(2, [0, 2, 4], [1., 1., 2.]),
            corner(3, [0, 1, 4], [-1., 1., 2.]),
        ];
        let es = generate_edges(&cs, &CandidateConfig::default());
        assert_eq!(es.len(), 4);
        let (polys, warns) = generate_polygons(&cs, &es, &[p0], &CandidateConfig::default());
        assert!(warns.is_empty());
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].corner_loop.len(), 4);
    }

    /// Two quads sharing a chord: the two faces and their union are valid;
    /// the self-intersecting "bowtie" through the chord endpoints is not.
    #[test]
    fn self_intersecting_loop_is_excluded() {
        let p0 = plane(0, [0., 0., 1.], 2.);
        // vertical lines x = -1 (plane 1), x = 0 (plane 5), x = 1 (plane 2)
        // horizontal lines y = -1 (plane 3), y = 1 (plane 4)
        let cs = vec![
            corner(0, [0, 1, 3], [-1., -1., 2.]),
            corner(1, [0, 3, 5], [0., -1., 2.]),
            corner(2, [0, 2, 3], [1., -1., 2.]),
            corner(3, [0, 2, 4], [1., 1., 2.]),
            corner(4, [0, 4, 5], [0., 1., 2.]),
            corner(5, [0, 1, 4], [-1., 1., 2.]),
        ];
        let es = generate_edges(&cs, &CandidateConfig::default());
        let (polys, _) = generate_polygons(&cs, &es, &[p0], &CandidateConfig::default());
        let loops: BTreeSet<Vec<CornerId>> = polys.iter().map(|p| p.corner_loop.clone()).collect();
        // left face, right face, and the full rectangle (long edges 0-2, 5-3)
        assert_eq!(loops.len(), 3, "{loops:?}");
        let chart = PlaneChart::new(&p0);
        for p in &polys {
            let pts: Vec<P2> = p.vertices.iter().map(|v| chart.to_2d(v)).collect();
            assert!(is_simple_loop(&pts));
        }
        // the bowtie 0-4-1-5 crosses itself
        let crossed = [cs[0].point, cs[4].point, cs[1].point, cs[5].point]
            .iter()
            .map(|v| chart.to_2d(v))
            .collect::<Vec<_>>();
        assert!(!is_simple_loop(&crossed));
    }

    #[test]
    fn frustum_and_center_planes_own_no_polygons() {
        let k = CameraIntrinsics::new(50.0, 50.0, 50.0, 50.0, 100, 100).unwrap();
        let through_center = plane(7, [1., 0., 0.2], 0.0);
        let set = generate_candidates(&[through_center, plane(0, [0., 0., 1.], 3.)], &k, &CandidateConfig::default());
        assert!(set.polygons.iter().all(|p| p.plane.id == 0));
        assert!(!set.polygons.is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let k = CameraIntrinsics::new(50.0, 50.0, 50.0, 50.0, 100, 100).unwrap();
        let planes = vec![
            plane(0, [-1., 0., 0.], 1.),
            plane(1, [1., 0., 0.], 1.),
            plane(2, [0., -1., 0.], 1.),
            plane(3, [0., 1., 0.], 1.),
            plane(4, [0., 0., 1.], 3.),
        ];
        let a = generate_candidates(&planes, &k, &CandidateConfig::default());
        let b = generate_candidates(&planes, &k, &CandidateConfig::default());
        assert_eq!(a.corners, b.corners);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.polygons, b.polygons);
    }
}
