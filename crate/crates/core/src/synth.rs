//! Synthetic rooms: a floorplan polygon extruded between floor and ceiling,
//! optional box-shaped furniture, and a pinhole camera inside.
//!
//! The world frame has y pointing down; the camera center sits at height 0,
//! the floor at `y = floor_depth` and the ceiling at `y = -ceiling_height`.

use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::candidates::{generate_candidates, CandidateConfig};
use crate::cost::SegmentationRegions;
use crate::error::{LayoutError, Result};
use crate::formats::{encode_label_png, write_file};
use crate::geometry::{CameraIntrinsics, PlaneEq, PlaneId, PlaneLabel, Vec3};
use crate::layout::{build_layout, Layout};
use crate::raster::{rasterize_polygon, BitMask, DepthMap, LabelMap};
use crate::scene::{save_scene, DepthMode, SceneInput};

pub const GT_FILE: &str = "gt.json";
pub const GT_LABELS_FILE: &str = "gt_labels.png";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Cuboid,
    Lshape,
    OccludedWall,
    NoFloor,
    Tshape,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Cuboid,
        Preset::Lshape,
        Preset::OccludedWall,
        Preset::NoFloor,
        Preset::Tshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Cuboid => "cuboid",
            Preset::Lshape => "lshape",
            Preset::OccludedWall => "occluded-wall",
            Preset::NoFloor => "no-floor",
            Preset::Tshape => "tshape",
        }
    }
}

impl FromStr for Preset {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| LayoutError::InvalidSynthSpec(format!("unknown preset {s:?}")))
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Furniture {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    /// Position on the floorplan, `(x, z)`.
    pub position: [f64; 2],
    /// Rotation about the vertical axis; positive turns toward +x, degrees.
    pub yaw_deg: f64,
    /// Positive looks down, degrees.
    pub pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Floorplan vertices `(x, z)` in order; walls join consecutive vertices.
    pub floorplan: Vec<[f64; 2]>,
    /// Camera height above the floor, meters.
    pub floor_depth: f64,
    /// Ceiling height above the camera, meters.
    pub ceiling_height: f64,
    pub furniture: Vec<Furniture>,
}

/// Degradations applied to the generated input (never to ground truth,
/// except for pose jitter, which moves the camera itself).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the plane normal rotation, degrees.
    pub angle_deg: f64,
    /// Standard deviation of the plane offset perturbation, meters.
    pub offset: f64,
    /// Standard deviation of additive depth noise, meters.
    pub depth: f64,
    /// Region masks are eroded by a disk of this radius, pixels.
    pub erode_px: usize,
    /// Depth is invalidated within this many pixels of label boundaries.
    pub edge_holes_px: usize,
    /// Standard deviation of yaw and pitch jitter, degrees.
    pub pose_jitter_deg: f64,
    /// Ground-truth planes withheld from the input (plane and region).
    pub dropout: Vec<PlaneId>,
}

impl NoiseModel {
    pub fn is_zero(&self) -> bool {
        *self == NoiseModel::default()
    }
}

/// Parses `key=value` pairs separated by commas, e.g.
/// `angle=2,depth=0.01,erode=3`. Dropout ids are separated by `+`.
impl FromStr for NoiseModel {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| LayoutError::InvalidSynthSpec(m);
        let mut n = NoiseModel::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| bad(format!("noise term {part:?} is not key=value")))?;
            let float = || {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| bad(format!("noise {key} must be a non-negative number")))
            };
            let int = || {
                value
                    .parse::<usize>()
                    .map_err(|_| bad(format!("noise {key} must be a non-negative integer")))
            };
            match key {
                "angle" => n.angle_deg = float()?,
                "offset" => n.offset = float()?,
                "depth" => n.depth = float()?,
                "erode" => n.erode_px = int()?,
                "holes" => n.edge_holes_px = int()?,
                "jitter" => n.pose_jitter_deg = float()?,
                "dropout" => {
                    n.dropout = value
                        .split('+')
                        .map(|v| v.parse().map_err(|_| bad(format!("bad dropout id {v:?}"))))
                        .collect::<Result<_>>()?
                }
                _ => return Err(bad(format!("unknown noise term {key:?}"))),
            }
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub preset: Preset,
    pub room: Room,
    pub camera: CameraPose,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Depth mode recorded in the scene; predicted mode gets the same depth
    /// pipeline, only flagged.
    pub mode: DepthMode,
}

impl SynthSpec {
    pub fn preset(preset: Preset) -> Self {
        let room = |floorplan: Vec<[f64; 2]>, furniture| Room {
            floorplan,
            floor_depth: 1.5,
            ceiling_height: 1.1,
            furniture,
        };
        let (room, camera) = match preset {
            Preset::Cuboid => (
                room(
                    vec![[-2.2, -1.0], [2.6, -1.0], [2.6, 5.2], [-2.2, 5.2]],
                    vec![Furniture {
                        min: [0.6, 0.7, 3.6],
                        max: [1.8, 1.5, 4.4],
                    }],
                ),
                CameraPose {
                    position: [0.0, 0.0],
                    yaw_deg: 7.0,
                    pitch_deg: 3.0,
                },
            ),
            Preset::Lshape => (
                room(
                    vec![[-3.0, -1.0], [3.0, -1.0], [3.0, 6.0], [0.0, 6.0], [0.0, 4.0], [-3.0, 4.0]],
                    Vec::new(),
                ),
                CameraPose {
                    position: [1.5, 0.0],
                    yaw_deg: -8.0,
                    pitch_deg: 2.0,
                },
            ),
            Preset::OccludedWall => (
                room(
                    vec![[-1.0, -1.0], [3.0, -1.0], [3.0, 6.0], [-4.0, 6.0], [-4.0, 4.0], [-1.0, 4.0]],
                    Vec::new(),
                ),
                CameraPose {
                    position: [1.0, 0.0],
                    yaw_deg: -20.0,
                    pitch_deg: 2.0,
                },
            ),
            Preset::NoFloor => (
                room(
                    vec![[-3.0, -1.0], [3.0, -1.0], [3.0, 12.0], [-3.0, 12.0]],
                    vec![Furniture {
                        min: [-0.8, 1.0, 3.0],
                        max: [0.6, 1.5, 4.0],
                    }],
                ),
                CameraPose {
                    position: [0.0, 0.0],
                    yaw_deg: 0.0,
                    pitch_deg: 0.0,
                },
            ),
            Preset::Tshape => (
                room(
                    vec![
                        [-5.0, -1.5],
                        [5.0, -1.5],
                        [5.0, 2.0],
                        [1.5, 2.0],
                        [1.5, 8.0],
                        [-1.5, 8.0],
                        [-1.5, 2.0],
                        [-5.0, 2.0],
                    ],
                    Vec::new(),
                ),
                CameraPose {
                    position: [0.0, 0.0],
                    yaw_deg: 25.0,
                    pitch_deg: 0.0,
                },
            ),
        };
        let noise = if preset == Preset::NoFloor {
            NoiseModel {
                dropout: vec![FLOOR_ID_HINT],
                ..NoiseModel::default()
            }
        } else {
            NoiseModel::default()
        };
        SynthSpec {
            preset,
            room,
            camera,
            width: 320,
            height: 240,
            focal: 260.0,
            noise,
            seed: 0,
            mode: DepthMode::Rgbd,
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            self.width as f64 / 2.0,
            self.height as f64 / 2.0,
            self.width,
            self.height,
        )
        .map_err(|e| LayoutError::InvalidSynthSpec(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LayoutError::InvalidSynthSpec(m.to_string()));
        let r = &self.room;
        if r.floorplan.len() < 3 {
            return bad("floorplan needs at least three vertices");
        }
        if !(r.floor_depth > 0.0 && r.ceiling_height > 0.0) {
            return bad("room height must be positive on both sides of the camera");
        }
        if !point_in_polygon(self.camera.position, &r.floorplan) {
            return bad("camera pose outside room");
        }
        for f in &r.furniture {
            if (0..3).any(|a| !(f.min[a] < f.max[a])) {
                return bad("furniture box has non-positive extent");
            }
        }
        self.intrinsics().map(|_| ())
    }
}

/// Id the floor plane receives when every wall group precedes it; used by
/// the no-floor preset's dropout list and rewritten once ids are known.
const FLOOR_ID_HINT: PlaneId = u32::MAX;

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// A wall line shared by one or more collinear floorplan segments.
#[derive(Debug, Clone)]
struct WallGroup {
    /// Horizontal unit normal `(x, z)` and offset of the line `n · p = d`.
    normal: [f64; 2],
    offset: f64,
    segments: Vec<([f64; 2], [f64; 2])>,
}

fn wall_groups(floorplan: &[[f64; 2]]) -> Vec<WallGroup> {
    let mut groups: Vec<WallGroup> = Vec::new();
    let n = floorplan.len();
    for i in 0..n {
        let (a, b) = (floorplan[i], floorplan[(i + 1) % n]);
        let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
        let len = dx.hypot(dz);
        let mut nrm = [-dz / len, dx / len];
        let mut off = nrm[0] * a[0] + nrm[1] * a[1];
        if off < 0.0 || (off == 0.0 && (nrm[0] < 0.0 || (nrm[0] == 0.0 && nrm[1] < 0.0))) {
            nrm = [-nrm[0], -nrm[1]];
            off = -off;
        }
        match groups.iter_mut().find(|g| {
            (g.normal[0] - nrm[0]).abs() < 1e-9
                && (g.normal[1] - nrm[1]).abs() < 1e-9
                && (g.offset - off).abs() < 1e-9
        }) {
            Some(g) => g.segments.push((a, b)),
            None => groups.push(WallGroup {
                normal: nrm,
                offset: off,
                segments: vec![(a, b)],
            }),
        }
    }
    groups
}

/// What a ray hits first.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    Layout(PlaneId),
    Furniture,
}

struct World {
    /// Camera center in world coordinates.
    center: Vec3,
    /// Rows are the camera axes (right, down, forward) in world coordinates.
    rot: Matrix3<f64>,
    groups: Vec<WallGroup>,
    floorplan: Vec<[f64; 2]>,
    floor_y: f64,
    ceiling_y: f64,
    floor_id: PlaneId,
    ceiling_id: PlaneId,
    furniture: Vec<Furniture>,
}

impl World {
    fn new(spec: &SynthSpec, yaw_deg: f64, pitch_deg: f64) -> Self {
        let (yaw, pitch) = (yaw_deg.to_radians(), pitch_deg.to_radians());
        let f = Vec3::new(yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos());
        let r = Vec3::new(yaw.cos(), 0.0, -yaw.sin());
        let d = f.cross(&r);
        let rot = Matrix3::from_rows(&[r.transpose(), d.transpose(), f.transpose()]);
        let groups = wall_groups(&spec.room.floorplan);
        let n = groups.len() as PlaneId;
        World {
            center: Vec3::new(spec.camera.position[0], 0.0, spec.camera.position[1]),
            rot,
            groups,
            floorplan: spec.room.floorplan.clone(),
            floor_y: spec.room.floor_depth,
            ceiling_y: -spec.room.ceiling_height,
            floor_id: n,
            ceiling_id: n + 1,
            furniture: spec.room.furniture.clone(),
        }
    }

    /// World plane `n · X = d` expressed in the camera frame, oriented with a
    /// non-negative offset.
    fn to_camera(&self, id: PlaneId, n_w: Vec3, d_w: f64, label: PlaneLabel) -> PlaneEq {
        let n_c = self.rot * n_w;
        let d_c = d_w - n_w.dot(&self.center);
        let p = PlaneEq::new(id, n_c, d_c, label);
        if p.offset < 0.0 {
            p.flipped()
        } else {
            p
        }
    }

    fn layout_planes(&self) -> Vec<PlaneEq> {
        let mut planes: Vec<PlaneEq> = self
            .groups
            .iter()
            .enumerate()
            .map(|(i, g)| {
                self.to_camera(
                    i as PlaneId,
                    Vec3::new(g.normal[0], 0.0, g.normal[1]),
                    g.offset,
                    PlaneLabel::Wall,
                )
            })
            .collect();
        planes.push(self.to_camera(self.floor_id, Vec3::y(), self.floor_y, PlaneLabel::Floor));
        planes.push(self.to_camera(self.ceiling_id, -Vec3::y(), -self.ceiling_y, PlaneLabel::Ceiling));
        planes
    }

    fn in_floorplan(&self, x: f64, z: f64) -> bool {
        point_in_polygon([x, z], &self.floorplan)
    }

    /// Nearest hit along `center + t · dir`; `t` is the camera z-depth when
    /// `dir` is a camera ray with unit z rotated into the world.
    fn cast(&self, dir: &Vec3, with_furniture: bool) -> Option<(f64, Surface)> {
        let c = &self.center;
        let mut best: Option<(f64, Surface)> = None;
        let mut offer = |t: f64, s: Surface| {
            if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, s));
            }
        };
        for (gi, g) in self.groups.iter().enumerate() {
            let denom = g.normal[0] * dir.x + g.normal[1] * dir.z;
            if denom.abs() < 1e-12 {
                continue;
            }
            let t = (g.offset - g.normal[0] * c.x - g.normal[1] * c.z) / denom;
            let p = c + dir * t;
            if p.y < self.ceiling_y - 1e-9 || p.y > self.floor_y + 1e-9 {
                continue;
            }
            let on_segment = g.segments.iter().any(|(a, b)| {
                let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
                let s = ((p.x - a[0]) * dx + (p.z - a[1]) * dz) / (dx * dx + dz * dz);
                (-1e-9..=1.0 + 1e-9).contains(&s)
            });
            if on_segment {
                offer(t, Surface::Layout(gi as PlaneId));
            }
        }
        for (y, id) in [(self.floor_y, self.floor_id), (self.ceiling_y, self.ceiling_id)] {
            if dir.y.abs() < 1e-12 {
                continue;
            }
            let t = (y - c.y) / dir.y;
            let p = c + dir * t;
            if t > 0.0 && self.in_floorplan(p.x, p.z) {
                offer(t, Surface::Layout(id));
            }
        }
        if with_furniture {
            for f in &self.furniture {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if c[a] < f.min[a] || c[a] > f.max[a] {
                            t0 = f64::INFINITY;
                        }
                        continue;
                    }
                    let (ta, tb) = ((f.min[a] - c[a]) / dir[a], (f.max[a] - c[a]) / dir[a]);
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if t0 <= t1 && t0 > 0.0 {
                    offer(t0, Surface::Furniture);
                }
            }
        }
        best
    }

    fn ray(&self, k: &CameraIntrinsics, x: usize, y: usize) -> Vec3 {
        self.rot.transpose() * k.ray(CameraIntrinsics::pixel_center(x, y))
    }

    /// Vertical edges at floorplan vertices where a visible wall ends in
    /// front of a farther surface: the plane through the camera center and
    /// that edge bounds the visible part of what lies behind it.
    fn occlusion_planes(&self, k: &CameraIntrinsics, first_id: PlaneId) -> Vec<PlaneEq> {
        let n = self.floorplan.len();
        let mut out = Vec::new();
        let facing = |a: [f64; 2], b: [f64; 2]| {
            // interior side is where a small step off the segment midpoint lands inside
            let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dz);
            let nrm = [-dz / len, dx / len];
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let inward = if point_in_polygon([mid[0] + nrm[0] * 1e-6, mid[1] + nrm[1] * 1e-6], &self.floorplan) {
                nrm
            } else {
                [-nrm[0], -nrm[1]]
            };
            let cam = [self.center.x - a[0], self.center.z - a[1]];
            cam[0] * inward[0] + cam[1] * inward[1] > 0.0
        };
        for i in 0..n {
            let v = self.floorplan[i];
            let prev = self.floorplan[(i + n - 1) % n];
            let next = self.floorplan[(i + 1) % n];
            if facing(prev, v) == facing(v, next) {
                continue;
            }
            // the vertex must be seen, not hidden behind another wall
            let vw = Vec3::new(v[0], 0.0, v[1]);
            let vc = self.rot * (vw - self.center);
            if vc.z <= 0.05 {
                continue;
            }
            let u = k.fx * vc.x / vc.z + k.cx;
            if u < 0.0 || u > k.width as f64 {
                continue;
            }
            let dir = self.rot.transpose() * (vc / vc.z);
            let hidden = self
                .cast(&dir, false)
                .is_some_and(|(t, _)| t < vc.z * (1.0 - 1e-6));
            if hidden {
                continue;
            }
            let top = self.rot * (Vec3::new(v[0], self.ceiling_y, v[1]) - self.center);
            let bottom = self.rot * (Vec3::new(v[0], self.floor_y, v[1]) - self.center);
            let id = first_id + out.len() as PlaneId;
            out.push(PlaneEq::new(id, top.cross(&bottom), 0.0, PlaneLabel::Wall));
        }
        out
    }
}

/// Everything the generator produces.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub input: SceneInput,
    pub gt: Layout,
    /// Ground-truth planes, including occlusion planes through the camera.
    pub gt_planes: Vec<PlaneEq>,
    /// Planes through the camera center that bound occluded components.
    pub hidden_planes: Vec<PlaneEq>,
    /// Ray-cast labels of the layout surfaces, furniture ignored.
    pub layout_labels: LabelMap,
    /// Ray-cast labels with furniture; `None` where furniture is seen.
    pub visible_labels: LabelMap,
    /// Noise-free z-depth of the scene, furniture included.
    pub clean_depth: DepthMap,
}

/// Renders a synthetic scene and its ground-truth layout.
pub fn generate_scene(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let k = spec.intrinsics()?;
    let (w, h) = (k.width as usize, k.height as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = |rng: &mut ChaCha8Rng, sigma: f64| {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
        } else {
            0.0
        }
    };
    let yaw = spec.camera.yaw_deg + gauss(&mut rng, spec.noise.pose_jitter_deg);
    let pitch = spec.camera.pitch_deg + gauss(&mut rng, spec.noise.pose_jitter_deg);
    let world = World::new(spec, yaw, pitch);
    if !(world.ceiling_y < 0.0 && world.floor_y > 0.0) {
        return Err(LayoutError::InvalidSynthSpec("camera pose outside room".into()));
    }

    let mut layout_labels = LabelMap::new(w, h);
    let mut visible_labels = LabelMap::new(w, h);
    let mut clean_depth = DepthMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dir = world.ray(&k, x, y);
            if let Some((_, Surface::Layout(id))) = world.cast(&dir, false) {
                layout_labels.set_index(i, Some(id));
            }
            if let Some((t, s)) = world.cast(&dir, true) {
                clean_depth.values_mut()[i] = t;
                if let Surface::Layout(id) = s {
                    visible_labels.set_index(i, Some(id));
                }
            }
        }
    }
    if clean_depth.valid_count() != w * h {
        return Err(LayoutError::InvalidSynthSpec(
            "some rays leave the room; is the floorplan closed around the camera?".into(),
        ));
    }

    let all_planes = world.layout_planes();
    let seen = layout_labels.ids();
    let mut gt_planes: Vec<PlaneEq> = all_planes
        .iter()
        .filter(|p| seen.contains(&p.id))
        .copied()
        .collect();
    let hidden = world.occlusion_planes(&k, all_planes.len() as PlaneId);
    gt_planes.extend(hidden.iter().copied());

    // ground truth: per visible plane, the candidate that best explains its
    // ray-cast region
    let candidates = generate_candidates(&gt_planes, &k, &CandidateConfig::default());
    let mut chosen = Vec::new();
    for p in gt_planes.iter().filter(|p| p.is_layout()) {
        let region = layout_labels.mask_of(p.id);
        let best = candidates
            .polygons
            .iter()
            .filter(|c| c.plane.id == p.id)
            .map(|c| (rasterize_polygon(c, &k).iou(&region), c))
            .fold(None::<(f64, &crate::candidates::PolygonCandidate)>, |acc, (iou, c)| match acc {
                Some((b, _)) if b >= iou => acc,
                _ => Some((iou, c)),
            });
        match best {
            Some((iou, c)) if iou > 0.5 => chosen.push(c.clone()),
            _ => {
                return Err(LayoutError::InvalidSynthSpec(format!(
                    "no candidate polygon reproduces visible plane {}",
                    p.id
                )))
            }
        }
    }
    let trace = serde_json::json!({
        "generator": {
            "preset": spec.preset,
            "seed": spec.seed,
            "yaw_deg": yaw,
            "pitch_deg": pitch,
        }
    });
    let gt = build_layout(&chosen, &candidates, trace)?;

    // degraded input
    let dropout: Vec<PlaneId> = spec
        .noise
        .dropout
        .iter()
        .map(|&id| if id == FLOOR_ID_HINT { world.floor_id } else { id })
        .collect();
    let mut planes = Vec::new();
    let mut regions = Vec::new();
    for p in gt_planes.iter().filter(|p| p.is_layout() && !dropout.contains(&p.id)) {
        let mut q = *p;
        if spec.noise.angle_deg > 0.0 {
            let helper = if q.normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let a = q.normal.cross(&helper).normalize();
            let b = q.normal.cross(&a);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let axis = Unit::new_normalize(a * phi.cos() + b * phi.sin());
            let angle = gauss(&mut rng, spec.noise.angle_deg).to_radians();
            q.normal = Rotation3::from_axis_angle(&axis, angle) * q.normal;
        }
        q.offset += gauss(&mut rng, spec.noise.offset);
        planes.push(q);
        let mut region = visible_labels.mask_of(p.id);
        if spec.noise.erode_px > 0 {
            region = region.eroded(spec.noise.erode_px);
        }
        if region.count() > 0 {
            regions.push((p.id, region));
        }
    }
    let mut depth = clean_depth.clone();
    if spec.noise.depth > 0.0 {
        for v in depth.values_mut() {
            *v += gauss(&mut rng, spec.noise.depth);
        }
    }
    if spec.noise.edge_holes_px > 0 {
        let boundary = BitMask::from_fn(w, h, |x, y| {
            let l = visible_labels.get(x, y);
            (x + 1 < w && visible_labels.get(x + 1, y) != l) || (y + 1 < h && visible_labels.get(x, y + 1) != l)
        });
        let r = spec.noise.edge_holes_px as isize;
        for i in boundary.ones() {
            let (bx, by) = ((i % w) as isize, (i / w) as isize);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (x, y) = (bx + dx, by + dy);
                    if dx * dx + dy * dy <= r * r && x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        depth.set(x as usize, y as usize, f64::NAN);
                    }
                }
            }
        }
    }
    depth.quantize_f32();
    let input = SceneInput {
        intrinsics: k,
        depth: Some(depth),
        planes,
        regions: SegmentationRegions::new(w, h, regions)?,
        mode: spec.mode,
    };
    Ok(SynthScene {
        input,
        gt,
        gt_planes,
        hidden_planes: hidden,
        layout_labels,
        visible_labels,
        clean_depth,
    })
}

/// Writes the scene directory plus `gt.json` and `gt_labels.png`.
pub fn save_synth(scene: &SynthScene, dir: &std::path::Path) -> Result<()> {
    save_scene(&scene.input, dir)?;
    write_file(&dir.join(GT_FILE), scene.gt.to_json().as_bytes())?;
    write_file(&dir.join(GT_LABELS_FILE), &encode_label_png(&scene.layout_labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_parsing() {
        let n: NoiseModel = "angle=2, depth=0.01,erode=3,dropout=1+4".parse().unwrap();
        assert_eq!(n.angle_deg, 2.0);
        assert_eq!(n.depth, 0.01);
        assert_eq!(n.erode_px, 3);
        assert_eq!(n.dropout, vec![1, 4]);
        assert!("angle".parse::<NoiseModel>().is_err());
        assert!("angle=-1".parse::<NoiseModel>().is_err());
        assert!("speed=1".parse::<NoiseModel>().is_err());
        assert!("".parse::<NoiseModel>().unwrap().is_zero());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("dome".parse::<Preset>().is_err());
    }

    #[test]
    fn collinear_segments_share_a_wall() {
        let spec = SynthSpec::preset(Preset::Tshape);
        let groups = wall_groups(&spec.room.floorplan);
        assert_eq!(groups.len(), 7);
        assert!(groups.iter().any(|g| g.segments.len() == 2));
    }

    #[test]
    fn camera_outside_rejected() {
        let mut spec = SynthSpec::preset(Preset::Cuboid);
        spec.camera.position = [10.0, 0.0];
        assert!(matches!(generate_scene(&spec), Err(LayoutError::InvalidSynthSpec(_))));
    }
}
