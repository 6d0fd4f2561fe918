//! Candidate generation against brute-force enumeration on random planes.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomlayout::candidates::{generate_candidates, CandidateConfig, CandidateSet, CandidateWarning, CornerId};
use roomlayout::geometry::{CameraIntrinsics, PlaneEq, PlaneId, PlaneLabel, Vec3};

fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(120.0, 120.0, 80.0, 60.0, 160, 120).unwrap()
}

/// Perturbed walls, floor, ceiling and back plane around the camera, plus
/// an occasional arbitrary plane.
fn random_planes(rng: &mut ChaCha8Rng) -> Vec<PlaneEq> {
    let base = [
        ([-1.0, 0.0, 0.0], 1.0..3.0),
        ([1.0, 0.0, 0.0], 1.0..3.0),
        ([0.0, 1.0, 0.0], 1.0..2.0),
        ([0.0, -1.0, 0.0], 0.8..1.5),
        ([0.0, 0.0, 1.0], 3.0..6.0),
    ];
    let mut planes = Vec::new();
    for (n, range) in base {
        if planes.len() >= 2 && rng.random_bool(0.2) {
            continue;
        }
        let jitter = Vec3::new(
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.25..0.25),
            rng.random_range(-0.25..0.25),
        );
        let normal = (Vec3::new(n[0], n[1], n[2]) + jitter).normalize();
        let id = planes.len() as PlaneId;
        planes.push(PlaneEq::new(id, normal, rng.random_range(range), PlaneLabel::Wall));
    }
    if rng.random_bool(0.5) {
        let normal = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let id = planes.len() as PlaneId;
        planes.push(PlaneEq::new(id, normal, rng.random_range(0.5..4.0), PlaneLabel::Wall));
    }
    planes
}

fn det3(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    a.x * (b.y * c.z - b.z * c.y) - a.y * (b.x * c.z - b.z * c.x) + a.z * (b.x * c.y - b.y * c.x)
}

enum Verdict {
    Corner([f64; 3]),
    Rejected,
    /// Within a hair of a threshold; the instance is not a fair test.
    Borderline,
}

/// Cramer's rule plus the acceptance rules, written out directly.
fn oracle_corner(a: &PlaneEq, b: &PlaneEq, c: &PlaneEq, k: &CameraIntrinsics) -> Verdict {
    let cfg = CandidateConfig::default();
    let frustum: Vec<&PlaneEq> = [a, b, c].into_iter().filter(|p| p.is_frustum()).collect();
    if frustum.len() == 3 {
        return Verdict::Rejected;
    }
    if frustum.len() == 2 && frustum[0].id.abs_diff(frustum[1].id) == 2 {
        return Verdict::Rejected;
    }
    let cos_limit = cfg.degeneracy.min_pair_angle_deg.to_radians().cos();
    let mut borderline = false;
    for (p, q) in [(a, b), (a, c), (b, c)] {
        let cos = p.normal.dot(&q.normal).abs();
        borderline |= (cos - cos_limit).abs() < 1e-9;
        if cos > cos_limit {
            return if borderline { Verdict::Borderline } else { Verdict::Rejected };
        }
    }
    let det = det3(a.normal, b.normal, c.normal);
    borderline |= (det.abs() - cfg.degeneracy.min_abs_det).abs() < 1e-9;
    if det.abs() < cfg.degeneracy.min_abs_det {
        return if borderline { Verdict::Borderline } else { Verdict::Rejected };
    }
    let d = Vec3::new(a.offset, b.offset, c.offset);
    let col = |i: usize| Vec3::new(a.normal[i], b.normal[i], c.normal[i]);
    let x = det3(d, col(1), col(2)) / det;
    let y = det3(col(0), d, col(2)) / det;
    let z = det3(col(0), col(1), d) / det;
    let (w, h, s) = (k.width as f64, k.height as f64, cfg.image_slack);
    let u = k.fx * x / z + k.cx;
    let v = k.fy * y / z + k.cy;
    let margins = [z - cfg.min_corner_depth, u + s, w + s - u, v + s, h + s - v];
    if margins.iter().any(|m| m.abs() < 1e-7) || borderline {
        return Verdict::Borderline;
    }
    if margins.iter().all(|m| *m > 0.0) {
        Verdict::Corner([x, y, z])
    } else {
        Verdict::Rejected
    }
}

/// Expected corners keyed by generating planes, or `None` for a borderline
/// instance.
fn oracle_corners(set: &CandidateSet, k: &CameraIntrinsics) -> Option<BTreeMap<[PlaneId; 3], [f64; 3]>> {
    let p = &set.planes;
    let mut out = BTreeMap::new();
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            for l in j + 1..p.len() {
                match oracle_corner(&p[i], &p[j], &p[l], k) {
                    Verdict::Corner(x) => {
                        out.insert([p[i].id, p[j].id, p[l].id], x);
                    }
                    Verdict::Rejected => {}
                    Verdict::Borderline => return None,
                }
            }
        }
    }
    Some(out)
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

struct Side {
    ends: [[f64; 2]; 2],
    /// The other plane carrying the side.
    line: PlaneId,
    /// Generating planes of the two end corners.
    planes: [[PlaneId; 3]; 2],
}

/// Parameter of `p` along `a -> b`.
fn along(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])
}

/// Closed sides meet. Corners sharing a line plane are collinear by
/// construction and are decided along that line; anything else is in
/// general position, where strict sign tests suffice.
fn sides_meet(s: &Side, t: &Side) -> bool {
    if s.line == t.line {
        let (lo, hi) = {
            let (u, v) = (along(s.ends[0], s.ends[1], t.ends[0]), along(s.ends[0], s.ends[1], t.ends[1]));
            (u.min(v), u.max(v))
        };
        return hi >= 0.0 && lo <= 1.0;
    }
    let mut structural = false;
    for (a, b) in [(s, t), (t, s)] {
        for e in 0..2 {
            if b.planes[e].contains(&a.line) {
                structural = true;
                let u = along(a.ends[0], a.ends[1], b.ends[e]);
                if (0.0..=1.0).contains(&u) {
                    return true;
                }
            }
        }
    }
    if structural {
        return false;
    }
    let (a, b, c, d) = (s.ends[0], s.ends[1], t.ends[0], t.ends[1]);
    cross2(c, d, a) * cross2(c, d, b) < 0.0 && cross2(a, b, c) * cross2(a, b, d) < 0.0
}

fn loop_is_simple(sides: &[Side]) -> bool {
    let n = sides.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if sides_meet(&sides[i], &sides[j]) {
                return false;
            }
        }
    }
    true
}

/// Every simple cycle on one plane's corners in which consecutive sides
/// lie on different lines, canonically ordered: smallest corner first, then
/// the direction with the smaller second corner.
fn oracle_cycles(set: &CandidateSet, plane: &PlaneEq, max_len: usize) -> BTreeSet<Vec<CornerId>> {
    let on: Vec<&_> = set.corners.iter().filter(|c| c.planes.contains(&plane.id)).collect();
    let n = on.len();
    // in-plane coordinates from an arbitrary orthonormal pair
    let helper = if plane.normal.x.abs() < 0.6 { Vec3::x() } else { Vec3::y() };
    let e1 = plane.normal.cross(&helper).normalize();
    let e2 = plane.normal.cross(&e1);
    let pos: Vec<[f64; 2]> = on.iter().map(|c| [c.point.dot(&e1), c.point.dot(&e2)]).collect();
    // line[a][b]: the other plane shared by corners a and b, when they share
    // exactly two
    let mut line = vec![vec![None; n]; n];
    for a in 0..n {
        for b in 0..n {
            let shared: Vec<PlaneId> = on[a].planes.iter().copied().filter(|p| on[b].planes.contains(p)).collect();
            if a != b && shared.len() == 2 && (on[a].point - on[b].point).norm() >= 1e-4 {
                line[a][b] = shared.into_iter().find(|&p| p != plane.id);
            }
        }
    }
    let mut found = BTreeSet::new();
    let mut path = Vec::new();
    fn walk(
        cur: usize,
        path: &mut Vec<usize>,
        line: &[Vec<Option<PlaneId>>],
        max_len: usize,
        closed: &mut Vec<Vec<usize>>,
    ) {
        let start = path[0];
        for nb in 0..line.len() {
            let Some(l) = line[cur][nb] else { continue };
            if path.len() >= 2 && line[path[path.len() - 2]][cur] == Some(l) {
                continue;
            }
            if nb == start && path.len() >= 3 {
                closed.push(path.clone());
            } else if nb > start && !path.contains(&nb) && path.len() < max_len {
                path.push(nb);
                walk(nb, path, line, max_len, closed);
                path.pop();
            }
        }
    }
    let mut closed = Vec::new();
    for s in 0..n {
        path.clear();
        path.push(s);
        walk(s, &mut path, &line, max_len, &mut closed);
    }
    for cyc in closed {
        let m = cyc.len();
        let first_line = line[cyc[0]][cyc[1]];
        let closing_line = line[cyc[m - 1]][cyc[0]];
        if first_line == closing_line {
            continue;
        }
        let sides: Vec<Side> = (0..m)
            .map(|i| {
                let (a, b) = (cyc[i], cyc[(i + 1) % m]);
                Side {
                    ends: [pos[a], pos[b]],
                    line: line[a][b].unwrap(),
                    planes: [on[a].planes, on[b].planes],
                }
            })
            .collect();
        if !loop_is_simple(&sides) {
            continue;
        }
        let mut ids: Vec<CornerId> = cyc.iter().map(|&i| on[i].id).collect();
        if ids[1] > ids[m - 1] {
            ids[1..].reverse();
        }
        found.insert(ids);
    }
    found
}

#[test]
fn corners_edges_and_cycles_match_enumeration() {
    let k = camera();
    // uncapped, so the enumeration is complete
    let cfg = CandidateConfig {
        max_cycles_per_plane: usize::MAX,
        ..CandidateConfig::default()
    };
    let mut checked = 0;
    let mut cycles_seen = 0;
    for seed in 0..400u64 {
        if checked >= 60 {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = random_planes(&mut rng);
        let set = generate_candidates(&planes, &k, &cfg);
        let Some(expected) = oracle_corners(&set, &k) else {
            continue;
        };
        assert!(set.warnings.is_empty(), "seed {seed}: {:?}", set.warnings);
        let got: BTreeMap<[PlaneId; 3], [f64; 3]> = set
            .corners
            .iter()
            .map(|c| (c.planes, [c.point.x, c.point.y, c.point.z]))
            .collect();
        assert_eq!(got.keys().collect::<Vec<_>>(), expected.keys().collect::<Vec<_>>(), "seed {seed}");
        for (key, x) in &expected {
            let y = got[key];
            let err = (0..3).map(|i| (x[i] - y[i]).abs()).fold(0.0, f64::max);
            assert!(err <= 1e-9 * (1.0 + x[2].abs()), "seed {seed} corner {key:?}: {err}");
        }

        let mut expected_edges = BTreeSet::new();
        for a in &set.corners {
            for b in &set.corners {
                let shared: Vec<PlaneId> = a.planes.iter().copied().filter(|p| b.planes.contains(p)).collect();
                if a.id < b.id && shared.len() == 2 && (a.point - b.point).norm() >= cfg.min_edge_length {
                    expected_edges.insert(([a.id, b.id], [shared[0], shared[1]]));
                }
            }
        }
        let got_edges: BTreeSet<_> = set.edges.iter().map(|e| (e.corners, e.shared_planes)).collect();
        assert_eq!(got_edges, expected_edges, "seed {seed}");

        for plane in set.planes.iter().filter(|p| p.is_layout()) {
            let expected = oracle_cycles(&set, plane, cfg.max_polygon_vertices);
            let got: BTreeSet<Vec<CornerId>> = set
                .polygons
                .iter()
                .filter(|p| p.plane.id == plane.id)
                .map(|p| p.corner_loop.clone())
                .collect();
            assert_eq!(got, expected, "seed {seed} plane {}", plane.id);
            cycles_seen += expected.len();
        }
        checked += 1;
    }
    assert!(checked >= 60, "only {checked} instances away from thresholds");
    assert!(cycles_seen > 200, "too few cycles exercised: {cycles_seen}");
}

#[test]
fn polygons_lie_on_their_plane_and_follow_their_edges() {
    let k = camera();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let planes = random_planes(&mut rng);
        let set = generate_candidates(&planes, &k, &CandidateConfig::default());
        for poly in &set.polygons {
            let n = poly.corner_loop.len();
            assert_eq!(poly.edges.len(), n);
            for (i, v) in poly.vertices.iter().enumerate() {
                assert!((poly.plane.signed_distance(v)).abs() < 1e-9);
                let e = &set.edges[poly.edges[i] as usize];
                let mut ends = [poly.corner_loop[i], poly.corner_loop[(i + 1) % n]];
                ends.sort_unstable();
                assert_eq!(e.corners, ends);
                assert!(e.shared_planes.contains(&poly.plane.id));
            }
        }
    }
}


#[test]
fn cycle_cap_truncates_to_a_subset_with_a_warning() {
    let k = camera();
    let capped_cfg = CandidateConfig {
        max_cycles_per_plane: 40,
        ..CandidateConfig::default()
    };
    let full_cfg = CandidateConfig {
        max_cycles_per_plane: usize::MAX,
        ..CandidateConfig::default()
    };
    let mut hit = 0;
    for seed in 0..30u64 {
        let planes = random_planes(&mut ChaCha8Rng::seed_from_u64(seed));
        let capped = generate_candidates(&planes, &k, &capped_cfg);
        let full = generate_candidates(&planes, &k, &full_cfg);
        for plane in full.planes.iter().filter(|p| p.is_layout()) {
            let loops = |set: &CandidateSet| -> BTreeSet<Vec<CornerId>> {
                set.polygons
                    .iter()
                    .filter(|p| p.plane.id == plane.id)
                    .map(|p| p.corner_loop.clone())
                    .collect()
            };
            let (c, f) = (loops(&capped), loops(&full));
            assert!(c.is_subset(&f));
            let warned = capped.warnings.iter().any(|w| {
                matches!(w, CandidateWarning::CycleCapReached { plane: p, limit: 40 } if *p == plane.id)
            });
            if f.len() >= 40 {
                assert_eq!(c.len(), 40);
                assert!(warned);
                hit += 1;
            } else {
                assert_eq!(c, f);
                assert!(!warned);
            }
        }
    }
    assert!(hit > 0);
}
