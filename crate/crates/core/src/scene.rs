//! Scene inputs and their on-disk directory layout.
//!
//! ```text
//! scene/
//!   scene.json      intrinsics, mode, planes, region list
//!   depth.pfm       optional z-depth in meters
//!   masks/*.png     one 8-bit mask per plane region
//! ```

use std::collections::BTreeSet;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::cost::SegmentationRegions;
use crate::error::{LayoutError, Result};
use crate::formats::{decode_mask_png, decode_pfm, encode_mask_png, encode_pfm, read_file, write_file};
use crate::geometry::{CameraIntrinsics, PlaneEq, PlaneId, PlaneLabel, FRUSTUM_ID_BASE};
use crate::raster::DepthMap;

pub const SCENE_FILE: &str = "scene.json";
pub const DEPTH_FILE: &str = "depth.pfm";

/// How the depth map was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthMode {
    /// Measured by a depth sensor; metric scale is trusted.
    Rgbd,
    /// Predicted from the color image; scale is unreliable.
    RgbPredicted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub intrinsics: CameraIntrinsics,
    pub depth: Option<DepthMap>,
    pub planes: Vec<PlaneEq>,
    pub regions: SegmentationRegions,
    pub mode: DepthMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRef {
    pub plane: PlaneId,
    /// Mask path relative to the scene directory.
    pub mask: String,
}

/// The parsed `scene.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub intrinsics: CameraIntrinsics,
    pub mode: DepthMode,
    pub depth: Option<String>,
    pub planes: Vec<PlaneEq>,
    pub regions: Vec<RegionRef>,
}

impl SceneDescriptor {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    /// Structural checks that need no other file. Near-unit normals are
    /// renormalized in place; every violation is collected.
    pub fn validate(&mut self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.intrinsics.validate() {
            errs.push(e.to_string());
        }
        if self.mode == DepthMode::Rgbd && self.depth.is_none() {
            errs.push("mode rgbd requires a depth map".into());
        }
        let mut ids = BTreeSet::new();
        for p in &mut self.planes {
            if !ids.insert(p.id) {
                errs.push(format!("duplicate plane id {}", p.id));
            }
            if p.id >= FRUSTUM_ID_BASE {
                errs.push(format!("plane id {} is reserved for frustum planes", p.id));
            }
            if p.label == PlaneLabel::Frustum {
                errs.push(format!("plane {} cannot be labeled frustum", p.id));
            }
            let norm = p.normal.norm();
            if !norm.is_finite() || !p.offset.is_finite() {
                errs.push(format!("plane {} has non-finite parameters", p.id));
            } else if (norm - 1.0).abs() > 1e-3 {
                errs.push(format!("plane {} normal has length {norm}", p.id));
            } else if (norm - 1.0).abs() > 1e-12 {
                // rounding-level deviations are left alone so that saved
                // scenes load back bit for bit
                log::warn!("plane {} normal had length {norm}; renormalized", p.id);
                *p = PlaneEq::new(p.id, p.normal, p.offset, p.label);
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.regions {
            if !ids.contains(&r.plane) {
                errs.push(format!("region {} refers to unknown plane {}", r.mask, r.plane));
            }
            if !seen.insert(r.plane) {
                errs.push(format!("plane {} has more than one region", r.plane));
            }
            if !is_relative_inside(&r.mask) {
                errs.push(format!("region path {} must be relative to the scene directory", r.mask));
            }
        }
        if let Some(d) = &self.depth {
            if !is_relative_inside(d) {
                errs.push(format!("depth path {d} must be relative to the scene directory"));
            }
        }
        errs
    }
}

fn is_relative_inside(p: &str) -> bool {
    Path::new(p)
        .components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
        && !p.is_empty()
}

/// Loads and validates a scene directory, reporting every inconsistency.
pub fn load_scene(dir: &Path) -> Result<SceneInput> {
    let json_path = dir.join(SCENE_FILE);
    let mut desc = SceneDescriptor::from_json(&read_file(&json_path)?)?;
    let mut errs = desc.validate();
    let k = desc.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let intrinsics_ok = k.validate().is_ok();

    let depth = match &desc.depth {
        Some(rel) if is_relative_inside(rel) => {
            let path = dir.join(rel);
            match read_file(&path).and_then(|b| decode_pfm(&b)) {
                Ok(d) if intrinsics_ok && !d.matches(&k) => {
                    errs.push(format!(
                        "{}: depth is {}x{}, image is {w}x{h}",
                        path.display(),
                        d.width(),
                        d.height()
                    ));
                    None
                }
                Ok(d) => Some(d),
                Err(e) => {
                    errs.push(format!("{}: {e}", path.display()));
                    None
                }
            }
        }
        _ => None,
    };

    let mut regions = Vec::new();
    for r in &desc.regions {
        if !is_relative_inside(&r.mask) {
            continue;
        }
        let path = dir.join(&r.mask);
        match read_file(&path).and_then(|b| decode_mask_png(&b, &path)) {
            Ok(m) if intrinsics_ok && (m.width() != w || m.height() != h) => errs.push(format!(
                "{}: mask is {}x{}, image is {w}x{h}",
                path.display(),
                m.width(),
                m.height()
            )),
            Ok(m) => regions.push((r.plane, m)),
            Err(e) => errs.push(e.to_string()),
        }
    }
    if !errs.is_empty() {
        return Err(LayoutError::InvalidScene(errs));
    }
    let regions = SegmentationRegions::new(w, h, regions)?;
    Ok(SceneInput {
        intrinsics: k,
        depth,
        planes: desc.planes,
        regions,
        mode: desc.mode,
    })
}

/// Writes `scene.json`, `depth.pfm` and one mask per region.
pub fn save_scene(scene: &SceneInput, dir: &Path) -> Result<()> {
    let mut regions = Vec::new();
    for (plane, mask) in scene.regions.iter() {
        let rel = format!("masks/plane_{plane}.png");
        write_file(&dir.join(&rel), &encode_mask_png(mask))?;
        regions.push(RegionRef { plane, mask: rel });
    }
    let depth = match &scene.depth {
        Some(d) => {
            write_file(&dir.join(DEPTH_FILE), &encode_pfm(d))?;
            Some(DEPTH_FILE.to_string())
        }
        None => None,
    };
    let desc = SceneDescriptor {
        intrinsics: scene.intrinsics,
        mode: scene.mode,
        depth,
        planes: scene.planes.clone(),
        regions,
    };
    write_file(&dir.join(SCENE_FILE), desc.to_json().as_bytes())
}
