//! Confidence filtering, multi-view consistency fusion and point-cloud
//! metrics.

use crate::cascade::DepthMap;
use crate::confidence::ConfidenceMap;
use crate::geometry::{backproject, project, CameraModel, Pixel};
use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("dimension mismatch between depth, confidence and camera")]
    DimensionMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Max reprojection error in pixels for a source view to support a
    /// reference depth.
    pub tau_px: f64,
    /// Max relative depth disagreement.
    pub tau_depth: f64,
    /// Minimum number of supporting source views.
    pub min_support: usize,
    /// Confidence threshold applied before fusion.
    pub tau_conf: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_px: 1.0,
            tau_depth: 0.01,
            min_support: 2,
            tau_conf: 0.3,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

/// Zero out pixels whose confidence falls below the threshold; returns the
/// filtered map and the number of surviving pixels.
pub fn filter_by_confidence(
    depth: &DepthMap,
    confidence: &ConfidenceMap,
    tau_conf: f64,
) -> Result<(DepthMap, usize), FusionError> {
    if depth.width != confidence.width || depth.height != confidence.height {
        return Err(FusionError::DimensionMismatch);
    }
    let mut out = depth.clone();
    let mut kept = 0;
    for idx in 0..out.data.len() {
        if out.data[idx] > 0.0 && (confidence.data[idx] as f64) < tau_conf {
            out.data[idx] = 0.0;
        }
        if out.data[idx] > 0.0 {
            kept += 1;
        }
    }
    Ok((out, kept))
}

pub struct FusionView<'a> {
    pub depth: &'a DepthMap,
    pub confidence: &'a ConfidenceMap,
    pub camera: &'a CameraModel,
}

/// Geometric-consistency fusion. Each view acts as reference in input
/// order; a pixel consumed by an earlier reference never re-fuses, so the
/// first consistent reference wins. Emitted points average the reference
/// estimate with its consistent source correspondences. A single view
/// yields an empty cloud (consistency needs another view).
pub fn fuse(views: &[FusionView], cfg: &FusionConfig) -> Result<PointCloud, FusionError> {
    let mut filtered = Vec::with_capacity(views.len());
    for v in views {
        let (d, _) = filter_by_confidence(v.depth, v.confidence, cfg.tau_conf)?;
        if d.width != v.camera.width || d.height != v.camera.height {
            return Err(FusionError::DimensionMismatch);
        }
        filtered.push(d);
    }
    let mut consumed: Vec<Vec<bool>> = filtered
        .iter()
        .map(|d| vec![false; d.data.len()])
        .collect();
    let mut points = Vec::new();
    for r in 0..views.len() {
        let ref_depth = &filtered[r];
        let ref_cam = views[r].camera;
        let w = ref_depth.width;
        for i in 0..ref_depth.height {
            for j in 0..w {
                let idx = i * w + j;
                let d = ref_depth.data[idx];
                if d <= 0.0 || consumed[r][idx] {
                    continue;
                }
                let world = match backproject(&Pixel::new(i as f64, j as f64), d, ref_cam) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                // Supporting (source view index, consumed pixel index,
                // backprojected source estimate).
                let mut support = Vec::new();
                for (s, src) in filtered.iter().enumerate() {
                    if s == r {
                        continue;
                    }
                    let Ok((px, d_proj)) = project(&world, views[s].camera) else {
                        continue;
                    };
                    let (si, sj) = (px.row.round(), px.col.round());
                    if si < 0.0
                        || sj < 0.0
                        || si as usize >= src.height
                        || sj as usize >= src.width
                    {
                        continue;
                    }
                    let sidx = si as usize * src.width + sj as usize;
                    // Consumed pixels still count as support; consumption
                    // only stops a pixel from being emitted twice.
                    let d_src = src.data[sidx];
                    if d_src <= 0.0 {
                        continue;
                    }
                    // Reproject the source pixel's own estimate back into
                    // the reference view.
                    let back = match backproject(
                        &Pixel::new(si, sj),
                        d_src,
                        views[s].camera,
                    ) {
                        Ok(p) => p,
                        Err(_) => continue,
                    };
                    let Ok((px_ref, d_back)) = project(&back, ref_cam) else {
                        continue;
                    };
                    let px_err =
                        ((px_ref.row - i as f64).powi(2) + (px_ref.col - j as f64).powi(2)).sqrt();
                    let d_err = (d_back - d).abs() / d;
                    if px_err <= cfg.tau_px
                        && d_err <= cfg.tau_depth
                        && (d_proj - d_src).abs() / d_proj.max(1e-12) <= cfg.tau_depth
                    {
                        support.push((s, sidx, back));
                    }
                }
                if support.len() >= cfg.min_support {
                    let mut merged = world;
                    for &(_, _, p) in &support {
                        merged += p;
                    }
                    points.push(merged / (support.len() + 1) as f64);
                    consumed[r][idx] = true;
                    for (s, sidx, _) in support {
                        consumed[s][sidx] = true;
                    }
                }
            }
        }
    }
    Ok(PointCloud { points })
}

/// Accuracy / completeness / overall against a reference cloud, distances
/// capped at `dist_cap` mm before averaging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetrics {
    pub accuracy: f64,
    pub completeness: f64,
    pub overall: f64,
}

pub const DIST_CAP_MM: f64 = 20.0;

/// Uniform-grid spatial hash for nearest-neighbor queries.
pub struct GridIndex {
    cell: f64,
    origin: Vector3<f64>,
    dims: (usize, usize, usize),
    cells: Vec<Vec<u32>>,
    points: Vec<Vector3<f64>>,
}

impl GridIndex {
    pub fn build(points: &[Vector3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if points.is_empty() {
            lo = Vector3::zeros();
            hi = Vector3::zeros();
        }
        let dims = (
            ((hi.x - lo.x) / cell).floor() as usize + 1,
            ((hi.y - lo.y) / cell).floor() as usize + 1,
            ((hi.z - lo.z) / cell).floor() as usize + 1,
        );
        let mut cells = vec![Vec::new(); dims.0 * dims.1 * dims.2];
        for (i, p) in points.iter().enumerate() {
            let c = Self::cell_of(p, &lo, cell, dims);
            cells[c].push(i as u32);
        }
        Self {
            cell,
            origin: lo,
            dims,
            cells,
            points: points.to_vec(),
        }
    }

    fn cell_of(p: &Vector3<f64>, lo: &Vector3<f64>, cell: f64, dims: (usize, usize, usize)) -> usize {
        let cx = (((p.x - lo.x) / cell).floor() as usize).min(dims.0 - 1);
        let cy = (((p.y - lo.y) / cell).floor() as usize).min(dims.1 - 1);
        let cz = (((p.z - lo.z) / cell).floor() as usize).min(dims.2 - 1);
        (cz * dims.1 + cy) * dims.0 + cx
    }

    /// Exact nearest-neighbor distance, expanding ring by ring until the
    /// ring lower bound exceeds the best distance found.
    pub fn nearest_distance(&self, q: &Vector3<f64>) -> f64 {
        self.nearest_distance_within(q, f64::INFINITY)
    }

    /// Like [`Self::nearest_distance`] but gives up once every remaining
    /// point is provably at least `cap` away, returning `cap` then. The
    /// result equals `nearest_distance(q).min(cap)`.
    pub fn nearest_distance_within(&self, q: &Vector3<f64>, cap: f64) -> f64 {
        if self.points.is_empty() {
            return cap;
        }
        let cx = ((q.x - self.origin.x) / self.cell).floor() as isize;
        let cy = ((q.y - self.origin.y) / self.cell).floor() as isize;
        let cz = ((q.z - self.origin.z) / self.cell).floor() as isize;
        let max_ring = self.dims.0.max(self.dims.1).max(self.dims.2) as isize
            + (cx.abs().max(cy.abs()).max(cz.abs()))
            + 2;
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // Any point in a cell at Chebyshev ring r is at least
            // (r-1)*cell away from q.
            let bound = (ring - 1) as f64 * self.cell;
            if bound >= cap || (best.is_finite() && bound > best) {
                break;
            }
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let (x, y, z) = (cx + dx, cy + dy, cz + dz);
                        if x < 0
                            || y < 0
                            || z < 0
                            || x as usize >= self.dims.0
                            || y as usize >= self.dims.1
                            || z as usize >= self.dims.2
                        {
                            continue;
                        }
                        let c = (z as usize * self.dims.1 + y as usize) * self.dims.0 + x as usize;
                        for &pi in &self.cells[c] {
                            let d = (self.points[pi as usize] - q).norm();
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
            }
        }
        best.min(cap)
    }
}

/// Brute-force nearest-neighbor distance, used as an oracle for small
/// clouds.
pub fn nearest_distance_exhaustive(q: &Vector3<f64>, cloud: &[Vector3<f64>]) -> f64 {
    cloud
        .iter()
        .map(|p| (p - q).norm())
        .fold(f64::INFINITY, f64::min)
}

fn mean_capped_distance(from: &[Vector3<f64>], to_index: &GridIndex, cap: f64) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for p in from {
        sum += to_index.nearest_distance_within(p, cap);
    }
    sum / from.len() as f64
}

/// DTU-style metrics: accuracy = mean capped distance fused→reference,
/// completeness = reference→fused, overall = their mean.
pub fn accuracy_completeness(
    fused: &PointCloud,
    reference: &PointCloud,
    dist_cap: f64,
) -> CloudMetrics {
    let cell = (dist_cap / 2.0).max(1e-6);
    let ref_index = GridIndex::build(&reference.points, cell);
    let fused_index = GridIndex::build(&fused.points, cell);
    let accuracy = if reference.points.is_empty() {
        dist_cap
    } else {
        mean_capped_distance(&fused.points, &ref_index, dist_cap)
    };
    let completeness = if fused.points.is_empty() {
        dist_cap
    } else {
        mean_capped_distance(&reference.points, &fused_index, dist_cap)
    };
    CloudMetrics {
        accuracy,
        completeness,
        overall: (accuracy + completeness) / 2.0,
    }
}
