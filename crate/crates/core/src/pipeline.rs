//! End-to-end layout estimation for one scene.

use serde::{Deserialize, Serialize};

use crate::candidates::{generate_candidates, CandidateConfig, CandidateSet, CandidateWarning};
use crate::cost::{precompute_terms, SegmentationRegions};
use crate::error::{LayoutError, Result};
use crate::geometry::{fit_plane_to_region, CameraIntrinsics, PlaneEq, PlaneFitConfig, PlaneLabel};
use crate::raster::DepthMap;
use crate::refine::{fill_depth_holes, floor_fallback, refine_loop, stage_discrepancy, RansacConfig, RefineConfig, RefineIteration};
use crate::scene::{DepthMode, SceneInput};
use crate::solver::{solve, SearchReport, SolveConfig, Solution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub candidates: CandidateConfig,
    pub solve: SolveConfig,
    pub refine: RefineConfig,
    pub ransac: RansacConfig,
    pub refine_enabled: bool,
    /// Re-estimate each plane from the depth inside its region.
    pub refit_planes: bool,
    pub fit: PlaneFitConfig,
    /// Assumed camera height above the floor for the floor fallback, meters.
    pub camera_height: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            candidates: CandidateConfig::default(),
            solve: SolveConfig::default(),
            refine: RefineConfig::default(),
            ransac: RansacConfig::default(),
            refine_enabled: true,
            refit_planes: true,
            fit: PlaneFitConfig::default(),
            camera_height: 1.5,
        }
    }
}

/// What every solve of a plane set shares.
pub struct SolveContext<'a> {
    pub k: &'a CameraIntrinsics,
    /// Hole-filled observed depth.
    pub depth: &'a DepthMap,
    pub regions: &'a SegmentationRegions,
    pub candidates: CandidateConfig,
    pub solve: SolveConfig,
}

/// A plane set with its candidates and best partition, if any.
#[derive(Debug, Clone)]
pub struct Stage {
    /// Layout planes, including refinement additions; frustum planes excluded.
    pub planes: Vec<PlaneEq>,
    pub candidates: CandidateSet,
    pub solution: Option<Solution>,
}

impl SolveContext<'_> {
    pub fn solve_planes(&self, planes: &[PlaneEq]) -> Stage {
        let candidates = generate_candidates(planes, self.k, &self.candidates);
        let evaluated = precompute_terms(&candidates.polygons, self.depth, self.regions, self.k);
        let solution = solve(&candidates.polygons, &evaluated, self.k.pixel_count(), &self.solve);
        log::info!(
            "{} planes, {} corners, {} edges, {} polygons -> {}",
            planes.len(),
            candidates.corners.len(),
            candidates.edges.len(),
            candidates.polygons.len(),
            solution
                .as_ref()
                .map_or("infeasible".to_string(), |s| format!("cost {:.6}", s.cost))
        );
        Stage {
            planes: planes.to_vec(),
            candidates,
            solution,
        }
    }
}

/// Machine-readable account of a solve, stored with the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub depth_mode: DepthMode,
    pub config: PipelineConfig,
    pub refitted_planes: Vec<u32>,
    pub floor_fallback: Option<PlaneEq>,
    pub initial_cost: Option<f64>,
    pub initial_discrepancy: Option<f64>,
    pub final_cost: f64,
    pub final_discrepancy: Option<f64>,
    pub iterations: Vec<RefineIteration>,
    pub search: SearchReport,
    pub warnings: Vec<CandidateWarning>,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub stage: Stage,
    pub trace: SolveTrace,
}

impl SolveOutput {
    pub fn solution(&self) -> &Solution {
        self.stage.solution.as_ref().expect("solve_scene returns solved stages")
    }
}

/// Refits planes to the observed depth inside their regions, keeping the
/// given orientation. Planes whose fit fails are kept unchanged.
pub fn refit_planes(
    planes: &[PlaneEq],
    depth: &DepthMap,
    regions: &SegmentationRegions,
    k: &CameraIntrinsics,
    cfg: &PlaneFitConfig,
) -> (Vec<PlaneEq>, Vec<u32>) {
    let mut refitted = Vec::new();
    let out = planes
        .iter()
        .map(|p| {
            let Some(mask) = regions.get(p.id) else {
                return *p;
            };
            match fit_plane_to_region(k, depth, mask, cfg) {
                Some(fit) => {
                    refitted.push(p.id);
                    let q = fit.into_plane(p.id, p.label);
                    if q.normal.dot(&p.normal) < 0.0 {
                        q.flipped()
                    } else {
                        q
                    }
                }
                None => *p,
            }
        })
        .collect();
    (out, refitted)
}

/// Runs hole filling, plane refitting, the floor fallback, the initial solve
/// and the refinement loop.
pub fn solve_scene(scene: &SceneInput, cfg: &PipelineConfig) -> Result<SolveOutput> {
    let k = &scene.intrinsics;
    k.validate()?;
    let (w, h) = (k.width as usize, k.height as usize);
    let raw = scene.depth.clone().unwrap_or_else(|| DepthMap::new(w, h));
    if !raw.matches(k) {
        return Err(LayoutError::InvalidScene(vec![format!(
            "depth is {}x{}, image is {w}x{h}",
            raw.width(),
            raw.height()
        )]));
    }
    let depth = fill_depth_holes(&raw);

    let (mut planes, refitted) = if cfg.refit_planes && raw.valid_count() > 0 {
        refit_planes(&scene.planes, &raw, &scene.regions, k, &cfg.fit)
    } else {
        (scene.planes.clone(), Vec::new())
    };
    let mut fallback = None;
    if !planes.iter().any(|p| p.label == PlaneLabel::Floor) {
        let walls: Vec<PlaneEq> = planes
            .iter()
            .filter(|p| p.label == PlaneLabel::Wall)
            .copied()
            .collect();
        let id = planes.iter().map(|p| p.id + 1).max().unwrap_or(0);
        match floor_fallback(&walls, id, cfg.camera_height) {
            Ok(f) => {
                log::info!("no floor plane; fallback {:?}", f);
                planes.push(f);
                fallback = Some(f);
            }
            Err(e) => log::warn!("{e}"),
        }
    }

    let ctx = SolveContext {
        k,
        depth: &depth,
        regions: &scene.regions,
        candidates: cfg.candidates,
        solve: cfg.solve,
    };
    let initial = ctx.solve_planes(&planes);
    let Some(initial_solution) = &initial.solution else {
        return Err(LayoutError::NoFeasiblePartition);
    };
    let initial_cost = Some(initial_solution.cost);
    let initial_discrepancy = stage_discrepancy(&ctx, &initial).map(|d| d.mean);
    let (stage, iterations) = if cfg.refine_enabled {
        refine_loop(&ctx, initial, &cfg.refine, &cfg.ransac)
    } else {
        (initial, Vec::new())
    };
    let final_discrepancy = stage_discrepancy(&ctx, &stage).map(|d| d.mean);
    let sol = stage.solution.as_ref().expect("accepted stages are solved");
    let trace = SolveTrace {
        depth_mode: scene.mode,
        config: *cfg,
        refitted_planes: refitted,
        floor_fallback: fallback,
        initial_cost,
        initial_discrepancy,
        final_cost: sol.cost,
        final_discrepancy,
        iterations,
        search: sol.report.clone(),
        warnings: stage.candidates.warnings.clone(),
    };
    Ok(SolveOutput { stage, trace })
}
