//! Independent references for rasterization.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roomlayout::geometry::{CameraIntrinsics, PlaneEq, Pixel, Vec3};

pub fn camera() -> CameraIntrinsics {
    CameraIntrinsics::new(260.0, 250.0, 161.0, 119.0, 320, 240).unwrap()
}

/// Ray–plane intersection from three points on the plane, solved as a
/// linear system in (t, u, v): t·r = A + u·(B − A) + v·(C − A).
pub fn oracle_depth(plane: &PlaneEq, k: &CameraIntrinsics, x: usize, y: usize) -> f64 {
    let n = plane.normal;
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);
    let a = n * plane.offset;
    let (b, c) = (a + e1 * 3.0, a + e2 * 5.0);
    let r = Vector3::new(
        (x as f64 + 0.5 - k.cx) / k.fx,
        (y as f64 + 0.5 - k.cy) / k.fy,
        1.0,
    );
    let m = Matrix3::from_columns(&[r, -(b - a), -(c - a)]);
    let sol = m.lu().solve(&a).expect("ray meets plane");
    sol[0] * r.z
}

/// Four vertices around a center with angular gaps below a half turn, so
/// the quad is star-shaped about the center.
pub fn random_star_quad(seed: u64) -> ([f64; 2], Vec<[f64; 2]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = [rng.random_range(20.0..44.0), rng.random_range(20.0..44.0)];
    let base = rng.random_range(0.0..std::f64::consts::TAU);
    let pts = (0..4)
        .map(|i| {
            let a = base + i as f64 * std::f64::consts::FRAC_PI_2 + rng.random_range(-0.6..0.6);
            let r = rng.random_range(8.0..20.0);
            [c[0] + r * a.cos(), c[1] + r * a.sin()]
        })
        .collect();
    (c, pts)
}

pub fn outline(pts: &[[f64; 2]]) -> Vec<Pixel> {
    pts.iter().map(|p| Pixel::new(p[0], p[1])).collect()
}
