//! Camera model, oriented planes and the low-level primitives the rest of the
//! pipeline builds on.
//!
//! Camera frame: x right, y down, z forward (optical axis). Depth is z-depth.
//! A plane is `normal · X = offset` with a unit normal. Layout planes are
//! oriented so that `offset > 0`, which puts the camera center on the
//! negative side; frustum planes contain the camera center and their normals
//! point into the visible volume.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{LayoutError, Result};
use crate::raster::{BitMask, DepthMap};

pub type Vec3 = Vector3<f64>;
/// A 3D point in the camera frame, meters.
pub type Point3 = Vector3<f64>;
pub type PlaneId = u32;

/// Ids at or above this value are reserved for the four frustum planes.
pub const FRUSTUM_ID_BASE: PlaneId = 1_000_000;

/// Points with `z <= PROJECTION_Z_MIN` do not project.
pub const PROJECTION_Z_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LayoutError::InvalidIntrinsics(m.to_string()));
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width < 2 || self.height < 2 {
            return bad("image must be at least 2x2");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Viewing ray through a continuous pixel position, scaled to `z = 1`.
    #[inline]
    pub fn ray(&self, px: Pixel) -> Vec3 {
        Vec3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0)
    }

    /// Continuous coordinates of the center of pixel `(x, y)`.
    #[inline]
    pub fn pixel_center(x: usize, y: usize) -> Pixel {
        Pixel {
            u: x as f64 + 0.5,
            v: y as f64 + 0.5,
        }
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneLabel {
    Wall,
    Floor,
    Ceiling,
    Frustum,
}

impl PlaneLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PlaneLabel::Wall => "wall",
            PlaneLabel::Floor => "floor",
            PlaneLabel::Ceiling => "ceiling",
            PlaneLabel::Frustum => "frustum",
        }
    }
}

/// An oriented plane `normal · X = offset`.
///
/// Serialized as `{"id", "normal": [x, y, z], "offset", "label"}`; fields are
/// read back verbatim, without renormalizing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PlaneRecord", from = "PlaneRecord")]
pub struct PlaneEq {
    pub id: PlaneId,
    pub normal: Vec3,
    pub offset: f64,
    pub label: PlaneLabel,
}

impl PlaneEq {
    /// Builds a plane from a possibly unnormalized normal; the equation is
    /// rescaled so the normal has unit length.
    pub fn new(id: PlaneId, normal: Vec3, offset: f64, label: PlaneLabel) -> Self {
        let n = normal.norm();
        PlaneEq {
            id,
            normal: normal / n,
            offset: offset / n,
            label,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    /// True for planes through the camera center, whose projection is a line.
    #[inline]
    pub fn contains_camera_center(&self) -> bool {
        self.offset.abs() < 1e-9
    }

    #[inline]
    pub fn is_frustum(&self) -> bool {
        self.label == PlaneLabel::Frustum
    }

    /// Whether this plane may own a layout polygon.
    #[inline]
    pub fn is_layout(&self) -> bool {
        !self.is_frustum() && !self.contains_camera_center()
    }

    /// z-depth where the ray through `px` meets the plane, if the ray is not
    /// near-parallel and the hit is in front of the camera.
    #[inline]
    pub fn depth_along(&self, k: &CameraIntrinsics, px: Pixel) -> Option<f64> {
        let ray = k.ray(px);
        let denom = self.normal.dot(&ray);
        if denom.abs() < 1e-8 {
            return None;
        }
        let z = self.offset / denom;
        (z > 0.0).then_some(z)
    }

    pub fn flipped(&self) -> Self {
        PlaneEq {
            normal: -self.normal,
            offset: -self.offset,
            ..*self
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PlaneRecord {
    id: PlaneId,
    normal: [f64; 3],
    offset: f64,
    label: PlaneLabel,
}

impl From<PlaneEq> for PlaneRecord {
    fn from(p: PlaneEq) -> Self {
        PlaneRecord {
            id: p.id,
            normal: [p.normal.x, p.normal.y, p.normal.z],
            offset: p.offset,
            label: p.label,
        }
    }
}

impl From<PlaneRecord> for PlaneEq {
    fn from(r: PlaneRecord) -> Self {
        PlaneEq {
            id: r.id,
            normal: Vec3::new(r.normal[0], r.normal[1], r.normal[2]),
            offset: r.offset,
            label: r.label,
        }
    }
}

/// Continuous image coordinates. Pixel `(x, y)` spans `[x, x+1) × [y, y+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Pixel { u, v }
    }

    pub fn dist(&self, o: &Pixel) -> f64 {
        (self.u - o.u).hypot(self.v - o.v)
    }
}

/// Thresholds under which a plane triplet has no stable intersection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyThresholds {
    /// Pairs of normals closer than this angle count as almost parallel.
    pub min_pair_angle_deg: f64,
    /// `|det[n1 n2 n3]|` below this counts as intersecting on a line.
    pub min_abs_det: f64,
}

impl Default for DegeneracyThresholds {
    fn default() -> Self {
        DegeneracyThresholds {
            min_pair_angle_deg: 2.0,
            min_abs_det: 1e-4,
        }
    }
}

/// The unique common point of three planes, or `None` when two of them are
/// almost parallel or all three almost share a line.
pub fn intersect_three_planes(
    p1: &PlaneEq,
    p2: &PlaneEq,
    p3: &PlaneEq,
    limits: &DegeneracyThresholds,
) -> Option<Point3> {
    let cos_limit = limits.min_pair_angle_deg.to_radians().cos();
    for (a, b) in [(p1, p2), (p1, p3), (p2, p3)] {
        if a.normal.dot(&b.normal).abs() > cos_limit {
            return None;
        }
    }
    let m = Matrix3::from_rows(&[
        p1.normal.transpose(),
        p2.normal.transpose(),
        p3.normal.transpose(),
    ]);
    if m.determinant().abs() < limits.min_abs_det {
        return None;
    }
    let rhs = Vec3::new(p1.offset, p2.offset, p3.offset);
    let x = m.lu().solve(&rhs)?;
    x.iter().all(|c| c.is_finite()).then_some(x)
}

/// Pinhole projection; `None` for points at or behind `z = PROJECTION_Z_MIN`.
pub fn project_point(k: &CameraIntrinsics, p: &Point3) -> Option<Pixel> {
    if !(p.z > PROJECTION_Z_MIN) {
        return None;
    }
    Some(Pixel {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
    })
}

/// Inverse of [`project_point`] for a given z-depth.
pub fn backproject(k: &CameraIntrinsics, px: Pixel, depth: f64) -> Result<Point3> {
    if !(depth > 0.0) {
        return Err(LayoutError::NonPositiveDepth(depth));
    }
    Ok(k.ray(px) * depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFitConfig {
    pub min_support: usize,
    /// Trim residuals farther than this many robust sigmas (1.4826 · MAD).
    pub trim_sigmas: f64,
    /// Reject fits whose post-trim RMS residual exceeds this, meters.
    pub max_rms: f64,
}

impl Default for PlaneFitConfig {
    fn default() -> Self {
        PlaneFitConfig {
            min_support: 50,
            trim_sigmas: 2.0,
            max_rms: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedPlane {
    pub normal: Vec3,
    pub offset: f64,
    pub rms: f64,
    pub support: usize,
}

impl FittedPlane {
    pub fn into_plane(self, id: PlaneId, label: PlaneLabel) -> PlaneEq {
        PlaneEq {
            id,
            normal: self.normal,
            offset: self.offset,
            label,
        }
    }
}

fn tls_plane(points: &[Point3]) -> Option<(Vec3, f64)> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov / n);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let mut normal: Vec3 = eig.eigenvectors.column(imin).into_owned();
    normal.normalize_mut();
    let mut offset = normal.dot(&centroid);
    if offset < 0.0 {
        normal = -normal;
        offset = -offset;
    }
    Some((normal, offset))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Total-least-squares plane through the backprojected valid-depth pixels of
/// `mask`, with one robust trimming pass. The result has `offset >= 0`.
pub fn fit_plane_to_region(
    k: &CameraIntrinsics,
    depth: &DepthMap,
    mask: &BitMask,
    cfg: &PlaneFitConfig,
) -> Option<FittedPlane> {
    let w = depth.width();
    let points: Vec<Point3> = mask
        .ones()
        .filter(|&i| depth.is_valid(i))
        .map(|i| {
            let d = depth.values()[i];
            k.ray(CameraIntrinsics::pixel_center(i % w, i / w)) * d
        })
        .collect();
    if points.len() < cfg.min_support {
        return None;
    }
    let (normal, offset) = tls_plane(&points)?;
    let mut residuals: Vec<f64> = points.iter().map(|p| normal.dot(p) - offset).collect();
    let med = median(&mut residuals.clone());
    let mut dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    let mad = median(&mut dev);
    let bound = cfg.trim_sigmas * 1.4826 * mad + 1e-12;
    let kept: Vec<Point3> = points
        .iter()
        .zip(residuals.iter_mut())
        .filter(|(_, r)| (**r - med).abs() <= bound)
        .map(|(p, _)| *p)
        .collect();
    if kept.len() < cfg.min_support {
        return None;
    }
    let (normal, offset) = tls_plane(&kept)?;
    let rms = (kept
        .iter()
        .map(|p| (normal.dot(p) - offset).powi(2))
        .sum::<f64>()
        / kept.len() as f64)
        .sqrt();
    if rms > cfg.max_rms {
        return None;
    }
    Some(FittedPlane {
        normal,
        offset,
        rms,
        support: kept.len(),
    })
}

/// The four planes through the camera center and neighbouring image corners,
/// in order left, top, right, bottom. Normals point into the visible volume.
pub fn frustum_planes(k: &CameraIntrinsics) -> [PlaneEq; 4] {
    let (w, h) = (k.width as f64, k.height as f64);
    let corners = [
        Pixel::new(0.0, 0.0),
        Pixel::new(w, 0.0),
        Pixel::new(w, h),
        Pixel::new(0.0, h),
    ];
    let inside = k.ray(Pixel::new(w / 2.0, h / 2.0));
    // left: (0,h)-(0,0); top: (0,0)-(w,0); right: (w,0)-(w,h); bottom: (w,h)-(0,h)
    let pairs = [(3, 0), (0, 1), (1, 2), (2, 3)];
    let mut out = [PlaneEq {
        id: 0,
        normal: Vec3::z(),
        offset: 0.0,
        label: PlaneLabel::Frustum,
    }; 4];
    for (slot, (a, b)) in pairs.into_iter().enumerate() {
        let mut n = k.ray(corners[a]).cross(&k.ray(corners[b])).normalize();
        if n.dot(&inside) < 0.0 {
            n = -n;
        }
        out[slot] = PlaneEq {
            id: FRUSTUM_ID_BASE + slot as PlaneId,
            normal: n,
            offset: 0.0,
            label: PlaneLabel::Frustum,
        };
    }
    out
}

/// Orthonormal 2D coordinates on a plane.
#[derive(Debug, Clone, Copy)]
pub struct PlaneChart {
    pub origin: Point3,
    pub u: Vec3,
    pub v: Vec3,
}

impl PlaneChart {
    pub fn new(plane: &PlaneEq) -> Self {
        let n = plane.normal;
        // Seed with the axis along n's smallest component.
        let (ax, ay, az) = (n.x.abs(), n.y.abs(), n.z.abs());
        let seed = if ax <= ay && ax <= az {
            Vec3::x()
        } else if ay <= az {
            Vec3::y()
        } else {
            Vec3::z()
        };
        let u = seed.cross(&n).normalize();
        let v = n.cross(&u);
        PlaneChart {
            origin: n * plane.offset,
            u,
            v,
        }
    }

    #[inline]
    pub fn to_2d(&self, p: &Point3) -> [f64; 2] {
        let d = p - self.origin;
        [d.dot(&self.u), d.dot(&self.v)]
    }
}
