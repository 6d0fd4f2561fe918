//! Random candidate sets and the exhaustive subset search they are
//! checked against.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomlayout::candidates::{PolygonCandidate, PolygonId};
use roomlayout::cost::{total_cost, EvaluatedCandidate, PolygonCostTerms};
use roomlayout::geometry::{PlaneEq, PlaneId, PlaneLabel, Vec3};
use roomlayout::raster::BitMask;
use roomlayout::solver::{solve_with, SearchStrategy, SolveConfig};

#[derive(Clone, Copy, PartialEq)]
pub enum Shape {
    Plausible,
    Degenerate,
    ThroughCamera,
}

pub struct Instance {
    pub width: usize,
    pub height: usize,
    pub polys: Vec<PolygonCandidate>,
    pub evals: Vec<EvaluatedCandidate>,
    pub shapes: Vec<Shape>,
}

fn candidate(id: PolygonId, plane: PlaneId, shape: Shape) -> PolygonCandidate {
    let d = 1.0 + plane as f64;
    let (plane_eq, vertices) = match shape {
        Shape::Plausible => (
            PlaneEq::new(plane, Vec3::z(), d, PlaneLabel::Wall),
            vec![[0., 0., d], [1., 0., d], [1., 1., d], [0., 1., d]],
        ),
        Shape::Degenerate => (
            PlaneEq::new(plane, Vec3::z(), d, PlaneLabel::Wall),
            vec![[0., 0., d], [1., 0., d], [2., 0., d]],
        ),
        Shape::ThroughCamera => (
            PlaneEq::new(plane, Vec3::x(), 0.0, PlaneLabel::Wall),
            vec![[0., 0., 1.], [0., 1., 1.], [0., 1., 2.], [0., 0., 2.]],
        ),
    };
    PolygonCandidate {
        id,
        plane: plane_eq,
        corner_loop: Vec::new(),
        edges: Vec::new(),
        vertices: vertices.into_iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect(),
        area_px: None,
    }
}

/// Random guillotine tiling of the image into `pieces` rectangles.
fn tiling(rng: &mut ChaCha8Rng, w: usize, h: usize, pieces: usize) -> Vec<BitMask> {
    let mut rects = vec![(0, 0, w, h)];
    while rects.len() < pieces {
        let i = rng.random_range(0..rects.len());
        let (x0, y0, x1, y1) = rects[i];
        if x1 - x0 < 2 && y1 - y0 < 2 {
            break;
        }
        let vertical = if x1 - x0 < 2 {
            false
        } else if y1 - y0 < 2 {
            true
        } else {
            rng.random_bool(0.5)
        };
        rects.swap_remove(i);
        if vertical {
            let s = rng.random_range(x0 + 1..x1);
            rects.push((x0, y0, s, y1));
            rects.push((s, y0, x1, y1));
        } else {
            let s = rng.random_range(y0 + 1..y1);
            rects.push((x0, y0, x1, s));
            rects.push((x0, s, x1, y1));
        }
    }
    rects
        .into_iter()
        .map(|(x0, y0, x1, y1)| BitMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1))
        .collect()
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (width, height) = if rng.random_bool(0.5) { (10, 8) } else { (20, 12) };
    let n_planes = rng.random_range(2..=6);
    let quantized = rng.random_bool(0.5);
    let mut masks: Vec<BitMask> = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let pieces = rng.random_range(1..=4);
        masks.extend(tiling(&mut rng, width, height, pieces));
    }
    while masks.len() < 12 && rng.random_bool(0.6) {
        // perturbed copy of an existing mask or a random rectangle
        let mut m = if rng.random_bool(0.5) && !masks.is_empty() {
            masks[rng.random_range(0..masks.len())].clone()
        } else {
            let pieces = rng.random_range(2..=4);
            tiling(&mut rng, width, height, pieces).swap_remove(0)
        };
        for _ in 0..rng.random_range(0..3) {
            let i = rng.random_range(0..width * height);
            if m.get_index(i) {
                m.clear_index(i);
            } else {
                m.set_index(i);
            }
        }
        masks.push(m);
    }
    masks.truncate(12);
    let mut polys = Vec::new();
    let mut evals = Vec::new();
    let mut shapes = Vec::new();
    for (i, footprint) in masks.into_iter().enumerate() {
        let id = i as PolygonId;
        let plane = rng.random_range(0..n_planes) as PlaneId;
        let shape = match rng.random_range(0..20) {
            0 => Shape::Degenerate,
            1 => Shape::ThroughCamera,
            _ => Shape::Plausible,
        };
        let (k3d, k2d) = if quantized {
            (rng.random_range(0..3) as f64 * 0.125, rng.random_range(0..4) as f64 * 0.25)
        } else {
            (rng.random_range(0.0..0.5), rng.random_range(0.0..2.0))
        };
        polys.push(candidate(id, plane, shape));
        evals.push(EvaluatedCandidate {
            polygon: id,
            plane,
            footprint,
            terms: PolygonCostTerms { polygon: id, k3d, k2d },
        });
        shapes.push(shape);
    }
    Instance {
        width,
        height,
        polys,
        evals,
        shapes,
    }
}

/// Minimum over all 2^N − 1 non-empty subsets, ties to fewer polygons and
/// then the lexicographically smaller sorted id list.
pub fn brute_force(inst: &Instance, cfg: &SolveConfig) -> Option<(f64, Vec<PolygonId>)> {
    let n = inst.polys.len();
    let total = inst.width * inst.height;
    let terms: BTreeMap<PolygonId, PolygonCostTerms> =
        inst.evals.iter().map(|e| (e.polygon, e.terms)).collect();
    let mut best: Option<(f64, Vec<PolygonId>)> = None;
    for bits in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| bits >> i & 1 == 1).collect();
        if members.iter().any(|&i| inst.shapes[i] != Shape::Plausible) {
            continue;
        }
        let mut planes: Vec<PlaneId> = members.iter().map(|&i| inst.evals[i].plane).collect();
        planes.sort_unstable();
        if planes.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        let mut count = vec![0u32; total];
        for &i in &members {
            for (p, c) in count.iter_mut().enumerate() {
                if inst.evals[i].footprint.get_index(p) {
                    *c += 1;
                }
            }
        }
        let covered = count.iter().filter(|&&c| c >= 1).count() as f64 / total as f64;
        let overlapped = count.iter().filter(|&&c| c >= 2).count() as f64 / total as f64;
        if covered < cfg.tolerance.min_coverage || overlapped > cfg.tolerance.max_overlap {
            continue;
        }
        let ids: Vec<PolygonId> = members.iter().map(|&i| inst.polys[i].id).collect();
        let cost = total_cost(&ids, &terms, cfg.lambda);
        let replace = match &best {
            None => true,
            Some((bc, bids)) => cost < *bc || (cost == *bc && (ids.len(), &ids) < (bids.len(), bids)),
        };
        if replace {
            best = Some((cost, ids));
        }
    }
    best
}

/// Runs both search strategies on instance `seed` and compares each with
/// the exhaustive search. `Ok` carries whether the instance is feasible.
pub fn compare_with_oracle(seed: u64, cfg: &SolveConfig) -> Result<bool, String> {
    let inst = instance(seed);
    assert!(inst.polys.len() <= 12);
    let expected = brute_force(&inst, cfg);
    for strategy in [SearchStrategy::PlaneProduct, SearchStrategy::CellCover] {
        let got = solve_with(&inst.polys, &inst.evals, inst.width * inst.height, cfg, Some(strategy));
        match (&expected, &got) {
            (None, None) => {}
            (Some((cost, ids)), Some(sol)) => {
                if (sol.cost - cost).abs() > 1e-9 {
                    return Err(format!("seed {seed} {strategy:?}: cost {} vs oracle {cost}", sol.cost));
                }
                if &sol.ids() != ids {
                    return Err(format!("seed {seed} {strategy:?}: {:?} vs oracle {ids:?}", sol.ids()));
                }
            }
            _ => {
                return Err(format!(
                    "seed {seed} {strategy:?}: solver {:?} vs oracle {:?}",
                    got.map(|s| s.ids()),
                    expected
                ))
            }
        }
    }
    Ok(expected.is_some())
}
