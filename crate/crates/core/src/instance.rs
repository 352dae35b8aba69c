//! Instance-guided refinement of the initial cascade stage: per-instance
//! depth-range extraction, percentile truncation with conservative
//! expansion, containment-ordered mask processing, and region replacement
//! into the prior depth map.

use crate::cascade::{regress_depth, DepthMap, Regression};
use crate::confidence::{ChainLink, ChainMap};
use crate::costvolume::{
    build_cost_volume_masked, cost_to_probability, CameraView, CostVolumeError, HypothesisSet,
};
use crate::raster::read_mask_png;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("mask {id} is empty")]
    EmptyMask { id: u32 },
    #[error("mask {id}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        id: u32,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("no valid depth pixels under mask {id}")]
    NoValidDepth { id: u32 },
    #[error("fewer than two depth samples")]
    TooFewSamples,
    #[error("bad keep fraction {0}, want 0 < keep <= 1")]
    BadKeepFraction(f64),
    #[error("truncated range is degenerate at {0}")]
    DegenerateRange(f64),
    #[error("mask file {path}: {msg}")]
    MaskFile { path: String, msg: String },
    #[error(transparent)]
    CostVolume(#[from] CostVolumeError),
}

/// A binary instance mask over the reference image.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub id: u32,
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub area: usize,
}

impl InstanceMask {
    pub fn new(id: u32, width: usize, height: usize, bits: Vec<bool>) -> Result<Self, InstanceError> {
        assert_eq!(bits.len(), width * height);
        let area = bits.iter().filter(|&&b| b).count();
        if area == 0 {
            return Err(InstanceError::EmptyMask { id });
        }
        Ok(Self {
            id,
            width,
            height,
            bits,
            area,
        })
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    fn overlap(&self, other: &InstanceMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }
}

/// Containment partial order over masks: ancestors first, ties by area then
/// id.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHierarchy {
    /// Indices into the mask list, processing order.
    pub order: Vec<usize>,
    /// (parent index, child index) containment edges.
    pub edges: Vec<(usize, usize)>,
}

/// The three range stages IF-ADS computes per instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceRange {
    pub id: u32,
    pub raw: (f64, f64),
    pub truncated: (f64, f64),
    pub expanded: (f64, f64),
}

/// Load instance masks from binary PNG files (nonzero = member). Masks not
/// matching the reference dimensions are rejected; duplicate rasters are
/// deduplicated by content. Ids come from trailing digits in the file stem
/// when present (e.g. `view0000_inst0003.png` -> 3), else the input index.
pub fn load_masks(
    paths: &[std::path::PathBuf],
    width: usize,
    height: usize,
) -> Result<Vec<InstanceMask>, InstanceError> {
    let mut masks: Vec<InstanceMask> = Vec::new();
    for (idx, path) in paths.iter().enumerate() {
        let (w, h, bits) = read_mask_png(path).map_err(|e| InstanceError::MaskFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        if (w, h) != (width, height) {
            return Err(InstanceError::DimensionMismatch {
                id: idx as u32,
                expected_w: width,
                expected_h: height,
                got_w: w,
                got_h: h,
            });
        }
        if masks.iter().any(|m| m.bits == bits) {
            continue; // duplicate raster
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let digits: String = stem
            .chars()
            .rev()
            .take_while(|c| c.is_ascii_digit())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let id = digits.parse::<u32>().unwrap_or(idx as u32);
        masks.push(InstanceMask::new(id, width, height, bits)?);
    }
    Ok(masks)
}

/// Build masks from in-memory rasters with validation and dedup.
pub fn masks_from_rasters(
    rasters: Vec<Vec<bool>>,
    width: usize,
    height: usize,
) -> Result<Vec<InstanceMask>, InstanceError> {
    let mut masks: Vec<InstanceMask> = Vec::new();
    let mut next_id = 0u32;
    for bits in rasters {
        if bits.len() != width * height {
            return Err(InstanceError::DimensionMismatch {
                id: next_id,
                expected_w: width,
                expected_h: height,
                got_w: bits.len(),
                got_h: 1,
            });
        }
        if masks.iter().any(|m| m.bits == bits) {
            continue; // duplicate raster
        }
        masks.push(InstanceMask::new(next_id, width, height, bits)?);
        next_id += 1;
    }
    Ok(masks)
}

/// Expand a 16-bit label raster (0 = background) into one mask per label.
pub fn masks_from_labels(
    labels: &[u16],
    width: usize,
    height: usize,
) -> Result<Vec<InstanceMask>, InstanceError> {
    let mut ids: Vec<u16> = labels.iter().copied().filter(|&l| l != 0).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut masks = Vec::with_capacity(ids.len());
    for label in ids {
        let bits: Vec<bool> = labels.iter().map(|&l| l == label).collect();
        masks.push(InstanceMask::new(label as u32, width, height, bits)?);
    }
    Ok(masks)
}

/// Default overlap ratio for declaring containment.
pub const CONTAINMENT_THRESHOLD: f64 = 0.9;

/// Order masks ancestors-first: an edge (A, B) exists when B lies almost
/// entirely inside A and A is strictly larger. Processing order is by
/// descending area with ascending id as the tie break, which places every
/// ancestor before its descendants.
pub fn order_by_containment(masks: &[InstanceMask], threshold: f64) -> MaskHierarchy {
    let mut edges = Vec::new();
    for (a, ma) in masks.iter().enumerate() {
        for (b, mb) in masks.iter().enumerate() {
            if a == b || ma.area <= mb.area {
                continue;
            }
            let overlap = ma.overlap(mb) as f64 / mb.area as f64;
            if overlap >= threshold {
                edges.push((a, b));
            }
        }
    }
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&x, &y| {
        masks[y]
            .area
            .cmp(&masks[x].area)
            .then(masks[x].id.cmp(&masks[y].id))
    });
    MaskHierarchy { order, edges }
}

/// Min/max of valid depths under the mask.
pub fn instance_depth_range(
    depth: &DepthMap,
    mask: &InstanceMask,
) -> Result<(f64, f64), InstanceError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (idx, &inside) in mask.bits.iter().enumerate() {
        if inside && depth.data[idx] > 0.0 {
            lo = lo.min(depth.data[idx]);
            hi = hi.max(depth.data[idx]);
        }
    }
    if lo.is_finite() {
        Ok((lo, hi))
    } else {
        Err(InstanceError::NoValidDepth { id: mask.id })
    }
}

/// Truncate a depth multiset to its central `keep` mass via order statistics.
/// Returns the percentile band `[q_{(1-keep)/2}, q_{1-(1-keep)/2}]`, widened
/// to the nearest order statistics where the interpolated band would hold
/// fewer than `keep * n` samples.
pub fn fiic_truncate(values: &[f64], keep: f64) -> Result<(f64, f64), InstanceError> {
    if values.len() < 2 {
        return Err(InstanceError::TooFewSamples);
    }
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(InstanceError::BadKeepFraction(keep));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let q = 0.5 * (1.0 - keep);
    let interp = |pos: f64| -> f64 {
        let lo_idx = pos.floor() as usize;
        let hi_idx = pos.ceil() as usize;
        let frac = pos - lo_idx as f64;
        sorted[lo_idx] * (1.0 - frac) + sorted[hi_idx.min(n - 1)] * frac
    };
    let span = (n - 1) as f64;
    let mut lo = interp(q * span);
    let mut hi = interp((1.0 - q) * span);
    // Guarantee the count bound: at most floor(q*n) samples may fall on
    // either side.
    let side = (q * n as f64).floor() as usize;
    lo = lo.min(sorted[side]);
    hi = hi.max(sorted[n - 1 - side]);
    if lo == hi {
        return Err(InstanceError::DegenerateRange(lo));
    }
    Ok((lo, hi))
}

/// Conservatively expand a truncated range: each side grows by
/// `max(margin_frac * width, min_margin)`, clipped to the scene prior.
pub fn expand_range(
    truncated: (f64, f64),
    margin_frac: f64,
    min_margin: f64,
    scene_prior: (f64, f64),
) -> (f64, f64) {
    let (lo, hi) = truncated;
    debug_assert!(lo <= hi);
    let margin = (margin_frac * (hi - lo)).max(min_margin);
    (
        (lo - margin).max(scene_prior.0),
        (hi + margin).min(scene_prior.1),
    )
}

/// Knobs for the iterative instance refinement pass.
#[derive(Debug, Clone)]
pub struct IfadsConfig {
    /// Refinement sweeps over the whole hierarchy.
    pub iterations: usize,
    /// Central mass kept by FIIC; 1.0 disables truncation.
    pub keep: f64,
    pub margin_frac: f64,
    /// Expansion floor, normally the coarse-stage spacing.
    pub min_margin: f64,
    pub containment_threshold: f64,
    /// Hypothesis count for instance sweeps (the stage-1 budget).
    pub hypothesis_count: usize,
    pub window: usize,
    pub temperature: f64,
    pub regression: Regression,
    pub scene_prior: (f64, f64),
    /// Process the hierarchy children-first instead; degrades results and
    /// exists to demonstrate why ancestors must go first.
    pub inverted_order: bool,
}

/// One processed instance step, for the line-oriented log.
#[derive(Debug, Clone)]
pub struct InstanceStep {
    pub iteration: usize,
    pub range: InstanceRange,
    pub pixels: usize,
    pub skipped: bool,
}

pub fn format_instance_log(steps: &[InstanceStep]) -> String {
    let mut out = String::new();
    for s in steps {
        if s.skipped {
            let _ = writeln!(out, "iter={} id={} skipped=no_valid_depth", s.iteration, s.range.id);
            continue;
        }
        let _ = writeln!(
            out,
            "iter={} id={} raw=[{:.4},{:.4}] truncated=[{:.4},{:.4}] expanded=[{:.4},{:.4}] pixels={}",
            s.iteration,
            s.range.id,
            s.range.raw.0,
            s.range.raw.1,
            s.range.truncated.0,
            s.range.truncated.1,
            s.range.expanded.0,
            s.range.expanded.1,
            s.pixels
        );
    }
    out
}

/// Re-sweep one instance over its narrowed range and splice the regressed
/// depths into the prior map. Only masked pixels change; each refined
/// pixel's chain gains a link whose realized range is set later, once the
/// successor range is known.
pub fn refine_instance(
    reference: &CameraView,
    sources: &[CameraView],
    mask: &InstanceMask,
    range: (f64, f64),
    hypothesis_count: usize,
    window: usize,
    temperature: f64,
    regression: Regression,
    prior_depth: &DepthMap,
    chains: &mut ChainMap,
) -> Result<DepthMap, InstanceError> {
    let (w, h) = (prior_depth.width, prior_depth.height);
    let hyps = HypothesisSet::uniform(w, h, hypothesis_count, range.0, range.1);
    let cv = build_cost_volume_masked(reference, sources, &hyps, window, Some(&mask.bits))?;
    let pv = cost_to_probability(&cv, temperature, 1)?;
    let regressed = regress_depth(&pv, regression);

    let mut out = prior_depth.clone();
    let spacing = hyps.spacing(0, 0);
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            if !mask.bits[idx] {
                continue;
            }
            let base = idx * hypothesis_count;
            if cv.validity[base..base + hypothesis_count].iter().all(|&v| v == 0) {
                continue; // no photometric evidence; keep the prior value
            }
            out.data[idx] = regressed.data[idx];
            chains.links[idx].push(ChainLink {
                d0: range.0,
                spacing,
                probs: pv.pixel(i, j).to_vec(),
                realized: None,
            });
        }
    }
    Ok(out)
}

/// Iterative instance-adaptive refinement of the initial-stage depth map.
/// Walks the containment hierarchy top-down `iterations` times; each
/// instance's observed depth range is truncated, expanded and re-swept, and
/// the refined region replaces the prior. Returns the refined depth map,
/// the per-pixel refinement chains, and the processing log.
pub fn ifads(
    reference: &CameraView,
    sources: &[CameraView],
    masks: &[InstanceMask],
    init_depth: &DepthMap,
    cfg: &IfadsConfig,
) -> Result<(DepthMap, ChainMap, Vec<InstanceStep>), InstanceError> {
    let (w, h) = (init_depth.width, init_depth.height);
    let mut chains = ChainMap::empty(w, h);
    let mut depth = init_depth.clone();
    let mut steps = Vec::new();
    if masks.is_empty() {
        return Ok((depth, chains, steps));
    }
    let hierarchy = order_by_containment(masks, cfg.containment_threshold);
    let mut order = hierarchy.order.clone();
    if cfg.inverted_order {
        order.reverse();
    }
    let eps1 = cfg.min_margin;
    for iteration in 1..=cfg.iterations {
        for &mi in &order {
            let mask = &masks[mi];
            let raw = match instance_depth_range(&depth, mask) {
                Ok(r) => r,
                Err(InstanceError::NoValidDepth { .. }) => {
                    steps.push(InstanceStep {
                        iteration,
                        range: InstanceRange {
                            id: mask.id,
                            raw: (0.0, 0.0),
                            truncated: (0.0, 0.0),
                            expanded: (0.0, 0.0),
                        },
                        pixels: mask.area,
                        skipped: true,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let depths_under: Vec<f64> = mask
                .bits
                .iter()
                .zip(&depth.data)
                .filter(|(&m, &d)| m && d > 0.0)
                .map(|(_, &d)| d)
                .collect();
            let truncated = if depths_under.len() < 2 {
                raw
            } else {
                match fiic_truncate(&depths_under, cfg.keep) {
                    Ok(t) => t,
                    Err(InstanceError::DegenerateRange(center)) => {
                        (center - 0.5 * eps1, center + 0.5 * eps1)
                    }
                    Err(e) => return Err(e),
                }
            };
            let expanded = expand_range(truncated, cfg.margin_frac, cfg.min_margin, cfg.scene_prior);
            depth = refine_instance(
                reference,
                sources,
                mask,
                expanded,
                cfg.hypothesis_count,
                cfg.window,
                cfg.temperature,
                cfg.regression,
                &depth,
                &mut chains,
            )?;
            steps.push(InstanceStep {
                iteration,
                range: InstanceRange {
                    id: mask.id,
                    raw,
                    truncated,
                    expanded,
                },
                pixels: mask.area,
                skipped: false,
            });
        }
    }
    // Realized ranges between consecutive refinement links of one pixel;
    // the last link's range is realized by the next cascade stage.
    for links in chains.links.iter_mut() {
        for k in 0..links.len().saturating_sub(1) {
            let lo = links[k + 1].d0;
            let hi = lo + links[k + 1].spacing * (links[k + 1].probs.len() - 1) as f64;
            links[k].set_realized(lo, hi);
        }
    }
    Ok((depth, chains, steps))
}

/// Convenience wrapper: read masks for a view directory layout
/// `masks/view{idx:04}_inst*.png`.
pub fn mask_paths_for_view(dir: &Path, view: usize) -> Vec<std::path::PathBuf> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map_or(false, |n| n.starts_with(&format!("view{view:04}_inst")) && n.ends_with(".png"))
        })
        .collect();
    paths.sort();
    paths
}
