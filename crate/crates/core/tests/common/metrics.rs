//! Independent references for the evaluation metrics.

use roomlayout::geometry::Pixel;
use roomlayout::metrics::MatchPair;

pub fn square(u: f64, v: f64, s: f64) -> Vec<Pixel> {
    vec![
        Pixel::new(u, v),
        Pixel::new(u + s, v),
        Pixel::new(u + s, v + s),
        Pixel::new(u, v + s),
    ]
}

/// Mean distance from points sampled every `step` pixels along `from` to the
/// closest of points sampled just as densely along `to`.
pub fn dense_directed(from: &[Pixel], to: &[Pixel], step: f64) -> f64 {
    let sample = |poly: &[Pixel]| {
        let mut pts = Vec::new();
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let n = (a.dist(&b) / step).round() as usize;
            for s in 0..n {
                let t = s as f64 / n as f64;
                pts.push(Pixel::new(a.u + (b.u - a.u) * t, a.v + (b.v - a.v) * t));
            }
        }
        pts
    };
    let (f, t) = (sample(from), sample(to));
    f.iter()
        .map(|p| t.iter().map(|q| p.dist(q)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / f.len() as f64
}

/// The same greedy rule written directly over pixel vectors.
pub fn greedy_oracle(gt: &[(u32, Vec<bool>)], pred: &[(u32, Vec<bool>)]) -> Vec<MatchPair> {
    let iou = |a: &[bool], b: &[bool]| {
        let i = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
        let u = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
        if u == 0 {
            0.0
        } else {
            i as f64 / u as f64
        }
    };
    let area = |m: &[bool]| m.iter().filter(|x| **x).count();
    let mut remaining_gt: Vec<usize> = (0..gt.len()).collect();
    let mut free: Vec<bool> = vec![true; pred.len()];
    let mut pairs = Vec::new();
    while !remaining_gt.is_empty() {
        // largest remaining ground truth, smaller id on ties
        let pos = (0..remaining_gt.len())
            .max_by(|&a, &b| {
                let (ga, gb) = (&gt[remaining_gt[a]], &gt[remaining_gt[b]]);
                area(&ga.1).cmp(&area(&gb.1)).then(gb.0.cmp(&ga.0))
            })
            .unwrap();
        let g = remaining_gt.remove(pos);
        let mut best: Option<(f64, u32, usize)> = None;
        for (j, p) in pred.iter().enumerate() {
            if !free[j] {
                continue;
            }
            let v = iou(&gt[g].1, &p.1);
            if v > 0.0 && best.is_none_or(|(bv, bid, _)| v > bv || (v == bv && p.0 < bid)) {
                best = Some((v, p.0, j));
            }
        }
        if let Some((v, id, j)) = best {
            free[j] = false;
            pairs.push(MatchPair { gt: gt[g].0, pred: id, iou: v });
        }
    }
    pairs
}
