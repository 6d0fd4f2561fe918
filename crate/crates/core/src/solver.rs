//! Discrete search for the minimum-cost polygon subset whose projections
//! partition the image.
//!
//! Footprints are compressed into cells: maximal pixel sets covered by the
//! same candidates. Coverage and overlap of any subset follow exactly from
//! per-cell counters, so feasibility is decided without touching pixels.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidates::{PolygonCandidate, PolygonId};
use crate::cost::{total_cost, EvaluatedCandidate, PolygonCostTerms};
use crate::geometry::{PlaneId, Point3};
use crate::raster::PartitionTolerance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub lambda: f64,
    /// Non-adjacent polygon edges closer than this (meters) mark a sliver.
    pub plausibility_min_gap: f64,
    /// Polygons with a smaller 3D area (square meters) are dropped.
    pub min_area: f64,
    pub tolerance: PartitionTolerance,
    /// Up to this many plausible candidates, with a small enough per-plane
    /// product, the product is walked plane by plane instead of the cell
    /// search.
    pub exhaustive_fallback_limit: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            lambda: 1.0,
            plausibility_min_gap: 0.05,
            min_area: 1e-4,
            tolerance: PartitionTolerance::default(),
            exhaustive_fallback_limit: 20,
        }
    }
}

/// Search statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub candidates: usize,
    pub plausible_candidates: usize,
    /// Subsets with exactly one candidate on every plane that has any.
    pub one_per_plane_combinations: f64,
    /// The same product restricted to plausible candidates.
    pub plausible_combinations: f64,
    pub cells: usize,
    /// Search states visited.
    pub subsets_generated: u64,
    /// States that satisfied the partition constraint.
    pub subsets_feasible: u64,
    pub strategy: SearchStrategy,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStrategy {
    #[default]
    PlaneProduct,
    CellCover,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Chosen polygons, ascending id.
    pub polygons: Vec<PolygonCandidate>,
    pub cost: f64,
    pub report: SearchReport,
}

impl Solution {
    pub fn ids(&self) -> Vec<PolygonId> {
        self.polygons.iter().map(|p| p.id).collect()
    }
}

fn point_segment_distance(p: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Rejects slivers and near-degenerate polygons.
///
/// Two edges that share no vertex are too close when the midpoint of either
/// lies within the gap of the other; measuring from midpoints keeps a short
/// edge between two diverging edges from counting as a sliver.
pub fn plausibility_filter(poly: &PolygonCandidate, cfg: &SolveConfig) -> bool {
    let v = &poly.vertices;
    let n = v.len();
    if n < 3 {
        return false;
    }
    let mut normal = Point3::zeros();
    for i in 0..n {
        normal += v[i].cross(&v[(i + 1) % n]);
    }
    if 0.5 * normal.norm() < cfg.min_area {
        return false;
    }
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (a0, a1) = (&v[i], &v[(i + 1) % n]);
            let (b0, b1) = (&v[j], &v[(j + 1) % n]);
            let ma = (a0 + a1) * 0.5;
            let mb = (b0 + b1) * 0.5;
            let d = point_segment_distance(&ma, b0, b1).min(point_segment_distance(&mb, a0, a1));
            if d < cfg.plausibility_min_gap {
                return false;
            }
        }
    }
    true
}

/// Lazily yields subsets with at most one polygon per plane, planes in
/// ascending id order, the empty subset first.
pub struct SubsetProduct {
    groups: Vec<Vec<PolygonId>>,
    /// Per plane: 0 = no polygon, k = groups[p][k - 1].
    digits: Vec<usize>,
    done: bool,
}

impl Iterator for SubsetProduct {
    type Item = Vec<PolygonId>;

    fn next(&mut self) -> Option<Vec<PolygonId>> {
        if self.done {
            return None;
        }
        let item = self
            .digits
            .iter()
            .zip(&self.groups)
            .filter(|(d, _)| **d > 0)
            .map(|(d, g)| g[*d - 1])
            .collect();
        // advance the last plane fastest
        let mut p = self.digits.len();
        loop {
            if p == 0 {
                self.done = true;
                break;
            }
            p -= 1;
            self.digits[p] += 1;
            if self.digits[p] <= self.groups[p].len() {
                break;
            }
            self.digits[p] = 0;
        }
        Some(item)
    }
}

fn plane_groups<'a>(polys: impl Iterator<Item = &'a PolygonCandidate>) -> BTreeMap<PlaneId, Vec<PolygonId>> {
    let mut groups: BTreeMap<PlaneId, Vec<PolygonId>> = BTreeMap::new();
    for p in polys {
        if p.plane.is_layout() {
            groups.entry(p.plane.id).or_default().push(p.id);
        }
    }
    for g in groups.values_mut() {
        g.sort_unstable();
    }
    groups
}

/// The one-polygon-per-plane product over plausible candidates.
pub fn enumerate_feasible(polys: &[PolygonCandidate], cfg: &SolveConfig) -> SubsetProduct {
    let groups: Vec<Vec<PolygonId>> = plane_groups(polys.iter().filter(|p| plausibility_filter(p, cfg)))
        .into_values()
        .collect();
    SubsetProduct {
        digits: vec![0; groups.len()],
        groups,
        done: false,
    }
}

struct Cells {
    size: Vec<usize>,
    /// Candidate indices covering each cell.
    covers: Vec<Vec<usize>>,
    /// Cells of each candidate.
    of_candidate: Vec<Vec<usize>>,
}

fn build_cells(footprints: &[&crate::raster::BitMask], total: usize) -> Cells {
    let mut cell_of = vec![0usize; total];
    let mut size = vec![total];
    let mut covers: Vec<Vec<usize>> = vec![Vec::new()];
    for (ci, fp) in footprints.iter().enumerate() {
        let mut split: HashMap<usize, usize> = HashMap::new();
        for px in fp.ones() {
            let old = cell_of[px];
            let new = *split.entry(old).or_insert_with(|| {
                let mut sig = covers[old].clone();
                sig.push(ci);
                covers.push(sig);
                size.push(0);
                size.len() - 1
            });
            size[old] -= 1;
            size[new] += 1;
            cell_of[px] = new;
        }
    }
    // drop emptied cells
    let keep: Vec<usize> = (0..size.len()).filter(|&c| size[c] > 0).collect();
    let size: Vec<usize> = keep.iter().map(|&c| size[c]).collect();
    let covers: Vec<Vec<usize>> = keep.iter().map(|&c| std::mem::take(&mut covers[c])).collect();
    let mut of_candidate = vec![Vec::new(); footprints.len()];
    for (c, list) in covers.iter().enumerate() {
        for &ci in list {
            of_candidate[ci].push(c);
        }
    }
    Cells {
        size,
        covers,
        of_candidate,
    }
}

/// Candidate data the searches share.
struct Problem<'a> {
    cells: Cells,
    plane_idx: Vec<usize>,
    k3d: Vec<f64>,
    k2d: Vec<f64>,
    ids: Vec<PolygonId>,
    lambda: f64,
    min_covered: usize,
    max_overlap: usize,
    max_uncovered: usize,
    terms: &'a BTreeMap<PolygonId, PolygonCostTerms>,
}

struct State {
    cnt: Vec<u32>,
    covered: usize,
    overlapped: usize,
    plane_used: Vec<bool>,
    chosen: Vec<usize>,
    s3: f64,
    s2: f64,
}

#[derive(Debug, Clone)]
struct Best {
    cost: f64,
    ids: Vec<PolygonId>,
}

fn better(cost: f64, ids: &[PolygonId], best: &Option<Best>) -> bool {
    match best {
        None => true,
        Some(b) => match cost.partial_cmp(&b.cost).unwrap_or(Ordering::Equal) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => (ids.len(), ids) < (b.ids.len(), b.ids.as_slice()),
        },
    }
}

impl Problem<'_> {
    fn add(&self, st: &mut State, ci: usize) {
        for &c in &self.cells.of_candidate[ci] {
            match st.cnt[c] {
                0 => st.covered += self.cells.size[c],
                1 => st.overlapped += self.cells.size[c],
                _ => {}
            }
            st.cnt[c] += 1;
        }
        st.plane_used[self.plane_idx[ci]] = true;
        st.chosen.push(ci);
        st.s3 += self.k3d[ci];
        st.s2 += self.k2d[ci];
    }

    fn remove(&self, st: &mut State, ci: usize) {
        for &c in &self.cells.of_candidate[ci] {
            st.cnt[c] -= 1;
            match st.cnt[c] {
                0 => st.covered -= self.cells.size[c],
                1 => st.overlapped -= self.cells.size[c],
                _ => {}
            }
        }
        st.plane_used[self.plane_idx[ci]] = false;
        st.chosen.pop();
        st.s3 -= self.k3d[ci];
        st.s2 -= self.k2d[ci];
    }

    fn feasible(&self, st: &State) -> bool {
        !st.chosen.is_empty() && st.covered >= self.min_covered && st.overlapped <= self.max_overlap
    }

    fn bound_exceeded(&self, st: &State, best: &Option<Best>) -> bool {
        match best {
            // costs only grow as polygons are added
            Some(b) => st.s3 + self.lambda * st.s2 > b.cost + 1e-9 * b.cost.abs().max(1.0),
            None => false,
        }
    }

    fn record(&self, st: &State, best: &mut Option<Best>) {
        let mut ids: Vec<PolygonId> = st.chosen.iter().map(|&c| self.ids[c]).collect();
        ids.sort_unstable();
        let cost = total_cost(&ids, self.terms, self.lambda);
        if better(cost, &ids, best) {
            *best = Some(Best { cost, ids });
        }
    }
}

struct CellSearch<'p, 'a> {
    pb: &'p Problem<'a>,
    order: Vec<usize>,
    abandoned: Vec<bool>,
    abandoned_px: usize,
    blocked: Vec<u32>,
    visited: u64,
    feasible: u64,
    best: Option<Best>,
}

impl CellSearch<'_, '_> {
    fn run(&mut self, st: &mut State) {
        self.visited += 1;
        if self.pb.feasible(st) {
            self.feasible += 1;
            self.pb.record(st, &mut self.best);
            return;
        }
        if self.pb.bound_exceeded(st, &self.best) {
            return;
        }
        let Some(&cell) = self
            .order
            .iter()
            .find(|&&c| st.cnt[c] == 0 && !self.abandoned[c])
        else {
            return;
        };
        let size = self.pb.cells.size[cell];
        let covers = &self.pb.cells.covers[cell];
        for &ci in covers {
            if self.blocked[ci] > 0 || st.plane_used[self.pb.plane_idx[ci]] {
                continue;
            }
            self.pb.add(st, ci);
            if st.overlapped <= self.pb.max_overlap {
                self.run(st);
            }
            self.pb.remove(st, ci);
        }
        if self.abandoned_px + size <= self.pb.max_uncovered {
            self.abandoned[cell] = true;
            self.abandoned_px += size;
            for &ci in covers {
                self.blocked[ci] += 1;
            }
            self.run(st);
            for &ci in covers {
                self.blocked[ci] -= 1;
            }
            self.abandoned_px -= size;
            self.abandoned[cell] = false;
        }
    }
}

struct ProductSearch<'p, 'a> {
    pb: &'p Problem<'a>,
    /// Candidate indices per plane index.
    groups: Vec<Vec<usize>>,
    visited: u64,
    feasible: u64,
    best: Option<Best>,
}

impl ProductSearch<'_, '_> {
    fn run(&mut self, st: &mut State, plane: usize) {
        self.visited += 1;
        if plane == self.groups.len() {
            if self.pb.feasible(st) {
                self.feasible += 1;
                self.pb.record(st, &mut self.best);
            }
            return;
        }
        self.run(st, plane + 1);
        for k in 0..self.groups[plane].len() {
            let ci = self.groups[plane][k];
            self.pb.add(st, ci);
            if st.overlapped <= self.pb.max_overlap {
                self.run(st, plane + 1);
            }
            self.pb.remove(st, ci);
        }
    }
}

/// Finds the feasible subset of minimum cost, ties going to fewer polygons
/// and then to the lexicographically smaller id list. `evaluated` must hold
/// the footprint and terms of every polygon in `polys`.
pub fn solve(
    polys: &[PolygonCandidate],
    evaluated: &[EvaluatedCandidate],
    total_pixels: usize,
    cfg: &SolveConfig,
) -> Option<Solution> {
    solve_with(polys, evaluated, total_pixels, cfg, None)
}

/// [`solve`] with the strategy forced; `None` picks automatically.
pub fn solve_with(
    polys: &[PolygonCandidate],
    evaluated: &[EvaluatedCandidate],
    total_pixels: usize,
    cfg: &SolveConfig,
    strategy: Option<SearchStrategy>,
) -> Option<Solution> {
    let start = Instant::now();
    let by_id: HashMap<PolygonId, &EvaluatedCandidate> =
        evaluated.iter().map(|e| (e.polygon, e)).collect();
    let plausible: Vec<&PolygonCandidate> = polys
        .iter()
        .filter(|p| p.plane.is_layout() && plausibility_filter(p, cfg))
        .collect();

    let product = |groups: &BTreeMap<PlaneId, Vec<PolygonId>>, with_none: bool| {
        groups
            .values()
            .map(|g| (g.len() + usize::from(with_none)) as f64)
            .product::<f64>()
    };
    let all_groups = plane_groups(polys.iter());
    let plausible_groups = plane_groups(plausible.iter().copied());
    let mut report = SearchReport {
        candidates: polys.len(),
        plausible_candidates: plausible.len(),
        one_per_plane_combinations: product(&all_groups, false),
        plausible_combinations: product(&plausible_groups, false),
        ..SearchReport::default()
    };

    let plane_index: BTreeMap<PlaneId, usize> = plausible_groups
        .keys()
        .enumerate()
        .map(|(i, p)| (*p, i))
        .collect();
    // cheapest candidates first within each branch
    let mut order: Vec<&PolygonCandidate> = plausible.clone();
    let cost_of = |p: &PolygonCandidate| {
        let t = by_id
            .get(&p.id)
            .unwrap_or_else(|| panic!("polygon {} was not evaluated", p.id))
            .terms;
        t.k3d + cfg.lambda * t.k2d
    };
    order.sort_by(|a, b| cost_of(a).total_cmp(&cost_of(b)).then(a.id.cmp(&b.id)));

    let footprints: Vec<_> = order.iter().map(|p| &by_id[&p.id].footprint).collect();
    let cells = build_cells(&footprints, total_pixels);
    report.cells = cells.size.len();
    let terms: BTreeMap<PolygonId, PolygonCostTerms> =
        evaluated.iter().map(|e| (e.polygon, e.terms)).collect();
    let tol = &cfg.tolerance;
    let min_covered = tol.min_covered_pixels(total_pixels);
    let pb = Problem {
        cells,
        plane_idx: order.iter().map(|p| plane_index[&p.plane.id]).collect(),
        k3d: order.iter().map(|p| terms[&p.id].k3d).collect(),
        k2d: order.iter().map(|p| terms[&p.id].k2d).collect(),
        ids: order.iter().map(|p| p.id).collect(),
        lambda: cfg.lambda,
        min_covered,
        max_overlap: tol.max_overlap_pixels(total_pixels),
        max_uncovered: total_pixels - min_covered,
        terms: &terms,
    };
    let mut st = State {
        cnt: vec![0; pb.cells.size.len()],
        covered: 0,
        overlapped: 0,
        plane_used: vec![false; plane_index.len()],
        chosen: Vec::new(),
        s3: 0.0,
        s2: 0.0,
    };

    let small = plausible.len() <= cfg.exhaustive_fallback_limit
        && product(&plausible_groups, true) <= 4096.0;
    let strategy = strategy.unwrap_or(if small {
        SearchStrategy::PlaneProduct
    } else {
        SearchStrategy::CellCover
    });
    report.strategy = strategy;
    let best = match strategy {
        SearchStrategy::PlaneProduct => {
            let mut groups = vec![Vec::new(); plane_index.len()];
            for (ci, &pi) in pb.plane_idx.iter().enumerate() {
                groups[pi].push(ci);
            }
            let mut s = ProductSearch {
                pb: &pb,
                groups,
                visited: 0,
                feasible: 0,
                best: None,
            };
            s.run(&mut st, 0);
            report.subsets_generated = s.visited;
            report.subsets_feasible = s.feasible;
            s.best
        }
        SearchStrategy::CellCover => {
            let mut cell_order: Vec<usize> = (0..pb.cells.size.len()).collect();
            cell_order.sort_by(|a, b| pb.cells.size[*b].cmp(&pb.cells.size[*a]).then(a.cmp(b)));
            let mut s = CellSearch {
                pb: &pb,
                order: cell_order,
                abandoned: vec![false; pb.cells.size.len()],
                abandoned_px: 0,
                blocked: vec![0; pb.ids.len()],
                visited: 0,
                feasible: 0,
                best: None,
            };
            s.run(&mut st);
            report.subsets_generated = s.visited;
            report.subsets_feasible = s.feasible;
            s.best
        }
    };
    report.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    log::debug!("solver: {report:?}");
    let best = best?;
    let polygons = best
        .ids
        .iter()
        .map(|id| {
            polys
                .iter()
                .find(|p| p.id == *id)
                .expect("chosen polygon comes from the input")
                .clone()
        })
        .collect();
    Some(Solution {
        polygons,
        cost: best.cost,
        report,
    })
}
