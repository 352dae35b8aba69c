//! Coarse-to-fine depth estimation: uniform hypothesis sampling inside
//! per-pixel ranges, expectation-based depth regression, and the per-pixel
//! range-narrowing recurrence `delta_{k+1} = delta_k * w_k`.

use crate::costvolume::{
    build_cost_volume, cost_to_probability, CameraView, CostVolumeError, HypothesisSet,
    ProbabilityVolume,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("shrink factor {0} must lie in (0, 1)")]
    BadShrinkFactor(f64),
    #[error("stage config needs {stages} stages but {shrinks} shrink factors (want stages - 1)")]
    ShrinkCountMismatch { stages: usize, shrinks: usize },
    #[error("stage config must have at least one stage")]
    NoStages,
    #[error("hypothesis count {0} must be at least 2")]
    BadHypothesisCount(usize),
    #[error(transparent)]
    CostVolume(#[from] CostVolumeError),
}

/// Per-pixel closed depth intervals for one cascade stage.
///
/// The interval length is stored separately from the endpoints so the
/// narrowing recurrence stays bit-exact under the boundary clamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeMap {
    pub width: usize,
    pub height: usize,
    pub stage: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    delta: Vec<f64>,
}

impl RangeMap {
    /// Whole-image range map from a scene prior.
    pub fn from_prior(width: usize, height: usize, prior: (f64, f64)) -> Self {
        assert!(prior.0 < prior.1, "prior must be a nonempty interval");
        let n = width * height;
        Self {
            width,
            height,
            stage: 1,
            lo: vec![prior.0; n],
            hi: vec![prior.1; n],
            delta: vec![prior.1 - prior.0; n],
        }
    }

    #[inline]
    pub fn lo(&self, row: usize, col: usize) -> f64 {
        self.lo[row * self.width + col]
    }

    #[inline]
    pub fn hi(&self, row: usize, col: usize) -> f64 {
        self.hi[row * self.width + col]
    }

    /// Length of the pixel's hypothesis range (the recurrence value).
    #[inline]
    pub fn delta(&self, row: usize, col: usize) -> f64 {
        self.delta[row * self.width + col]
    }

    /// True when `self` is contained in `outer` at every pixel.
    pub fn nested_in(&self, outer: &RangeMap) -> bool {
        self.lo
            .iter()
            .zip(&outer.lo)
            .all(|(a, b)| a >= b)
            && self.hi.iter().zip(&outer.hi).all(|(a, b)| a <= b)
    }

    /// Override one pixel's interval; used by instance refinement.
    pub fn set(&mut self, row: usize, col: usize, lo: f64, hi: f64) {
        let idx = row * self.width + col;
        self.lo[idx] = lo;
        self.hi[idx] = hi;
        self.delta[idx] = hi - lo;
    }
}

/// Predicted depth per pixel, millimeters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn depth(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > 0.0).count()
    }
}

/// How the per-pixel distribution is reduced to a depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regression {
    /// Probability-weighted expectation (sub-interval precision).
    Expectation,
    /// Hypothesis with the largest probability.
    Argmax,
}

/// Cascade schedule: hypothesis counts per stage and the shrink factor
/// applied between consecutive stages.
#[derive(Debug, Clone, PartialEq)]
pub struct StageConfig {
    pub hypothesis_counts: Vec<usize>,
    pub shrink_factors: Vec<f64>,
    pub window: usize,
    pub temperature: f64,
    pub regression: Regression,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            hypothesis_counts: vec![64, 32, 16],
            shrink_factors: vec![0.25, 0.25],
            window: 7,
            temperature: 0.1,
            regression: Regression::Expectation,
        }
    }
}

impl StageConfig {
    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.hypothesis_counts.is_empty() {
            return Err(CascadeError::NoStages);
        }
        if self.shrink_factors.len() + 1 != self.hypothesis_counts.len() {
            return Err(CascadeError::ShrinkCountMismatch {
                stages: self.hypothesis_counts.len(),
                shrinks: self.shrink_factors.len(),
            });
        }
        for &l in &self.hypothesis_counts {
            if l < 2 {
                return Err(CascadeError::BadHypothesisCount(l));
            }
        }
        for &w in &self.shrink_factors {
            if !(w > 0.0 && w < 1.0) {
                return Err(CascadeError::BadShrinkFactor(w));
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.hypothesis_counts.len()
    }

    /// Spacing of the finest stage on a given prior width.
    pub fn finest_spacing(&self, prior: (f64, f64)) -> f64 {
        let mut delta = prior.1 - prior.0;
        for &w in &self.shrink_factors {
            delta *= w;
        }
        delta / (*self.hypothesis_counts.last().unwrap() - 1) as f64
    }
}

/// Everything one stage produced; the evidence trail for confidence.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: usize,
    pub ranges: RangeMap,
    pub volume: ProbabilityVolume,
    pub depth: DepthMap,
}

/// Uniform hypothesis grid over each pixel's current range.
pub fn sample_hypotheses(ranges: &RangeMap, count: usize) -> HypothesisSet {
    assert!(count >= 2);
    HypothesisSet::from_bounds(
        ranges.width,
        ranges.height,
        count,
        ranges.lo.clone(),
        ranges.hi.clone(),
    )
}

/// Probability-weighted depth expectation, clamped into the generating
/// range. Pixels with no valid view (validity handled upstream via uniform
/// distributions) still regress; callers invalidate them separately.
pub fn regress_depth(pv: &ProbabilityVolume, mode: Regression) -> DepthMap {
    let mut depth = DepthMap::invalid(pv.width, pv.height);
    for i in 0..pv.height {
        for j in 0..pv.width {
            let probs = pv.pixel(i, j);
            let d = match mode {
                Regression::Expectation => {
                    let mut acc = 0.0f64;
                    for (l, &p) in probs.iter().enumerate() {
                        acc += p as f64 * pv.hypotheses.sample(i, j, l);
                    }
                    acc
                }
                Regression::Argmax => {
                    let mut best = 0;
                    for (l, &p) in probs.iter().enumerate() {
                        if p > probs[best] {
                            best = l;
                        }
                    }
                    pv.hypotheses.sample(i, j, best)
                }
            };
            let lo = pv.hypotheses.lo(i, j);
            let hi = pv.hypotheses.hi(i, j);
            depth.data[i * pv.width + j] = d.clamp(lo, hi);
        }
    }
    depth
}

/// Narrow each pixel's range around the predicted depth: the new length is
/// exactly `delta * shrink`; the window is centered on the prediction and
/// shifted (never shrunk) to stay inside the parent range.
pub fn narrow_range(
    prev: &RangeMap,
    depth: &DepthMap,
    shrink: f64,
    scene_prior: (f64, f64),
) -> Result<RangeMap, CascadeError> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(CascadeError::BadShrinkFactor(shrink));
    }
    let n = prev.width * prev.height;
    let mut lo = vec![0.0f64; n];
    let mut hi = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    for idx in 0..n {
        let parent_lo = prev.lo[idx].max(scene_prior.0);
        let parent_hi = prev.hi[idx].min(scene_prior.1);
        let len = prev.delta[idx] * shrink;
        let center = if depth.data[idx] > 0.0 {
            depth.data[idx]
        } else {
            0.5 * (parent_lo + parent_hi)
        };
        let mut new_lo = center - 0.5 * len;
        let mut new_hi = new_lo + len;
        if new_lo < parent_lo {
            new_lo = parent_lo;
            new_hi = parent_lo + len;
        } else if new_hi > parent_hi {
            new_hi = parent_hi;
            new_lo = parent_hi - len;
        }
        // Final clamp guards the nesting invariant against rounding.
        lo[idx] = new_lo.max(parent_lo);
        hi[idx] = new_hi.min(parent_hi);
        delta[idx] = len;
    }
    Ok(RangeMap {
        width: prev.width,
        height: prev.height,
        stage: prev.stage + 1,
        lo,
        hi,
        delta,
    })
}

/// Run the plain cascade: stage 1 sweeps the scene prior, each later stage
/// sweeps ranges narrowed around the previous prediction.
pub fn run_cascade(
    reference: &CameraView,
    sources: &[CameraView],
    cfg: &StageConfig,
    scene_prior: (f64, f64),
) -> Result<Vec<StageRecord>, CascadeError> {
    cfg.validate()?;
    let (w, h) = (reference.image.width, reference.image.height);
    let mut ranges = RangeMap::from_prior(w, h, scene_prior);
    let mut records = Vec::with_capacity(cfg.stages());
    for (k, &count) in cfg.hypothesis_counts.iter().enumerate() {
        let record = run_stage(reference, sources, &ranges, count, cfg, k + 1)?;
        if k + 1 < cfg.stages() {
            ranges = narrow_range(&record.ranges, &record.depth, cfg.shrink_factors[k], scene_prior)?;
        }
        records.push(record);
    }
    Ok(records)
}

/// One plane-sweep stage over the given ranges.
pub fn run_stage(
    reference: &CameraView,
    sources: &[CameraView],
    ranges: &RangeMap,
    count: usize,
    cfg: &StageConfig,
    stage: usize,
) -> Result<StageRecord, CascadeError> {
    let hyps = sample_hypotheses(ranges, count);
    let cv = build_cost_volume(reference, sources, &hyps, cfg.window)?;
    let pv = cost_to_probability(&cv, cfg.temperature, stage)?;
    let mut depth = regress_depth(&pv, cfg.regression);
    // Pixels with no valid view at any hypothesis carry no evidence.
    for i in 0..pv.height {
        for j in 0..pv.width {
            let base = (i * pv.width + j) * count;
            if cv.validity[base..base + count].iter().all(|&v| v == 0) {
                depth.data[i * pv.width + j] = 0.0;
            }
        }
    }
    Ok(StageRecord {
        stage,
        ranges: ranges.clone(),
        volume: pv,
        depth,
    })
}
