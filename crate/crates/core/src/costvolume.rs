//! Plane-sweep photometric matching: per-pixel cost curves over depth
//! hypotheses (1 - ZNCC on grayscale windows, mean over valid source views)
//! and their conversion to normalized probability volumes.

use crate::geometry::{CameraModel, Pixel, WarpMap};
use crate::raster::GrayImage;
use thiserror::Error;

/// Worst possible matching cost (1 - ZNCC with score -1).
pub const WORST_COST: f32 = 2.0;

/// Patch variance below this counts as textureless; ZNCC is declared 0.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CostVolumeError {
    #[error("need at least one source view")]
    NoSourceViews,
    #[error("window size {0} must be odd and >= 3")]
    BadWindow(usize),
    #[error("temperature {0} must be positive")]
    BadTemperature(f64),
    #[error("hypothesis set {hyp_w}x{hyp_h} does not cover reference image {img_w}x{img_h}")]
    HypothesisMismatch {
        hyp_w: usize,
        hyp_h: usize,
        img_w: usize,
        img_h: usize,
    },
}

/// One posed input image.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub image: GrayImage,
    pub camera: CameraModel,
}

/// Per-pixel uniform depth hypothesis grids: `L` samples spanning a closed
/// per-pixel interval, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl HypothesisSet {
    pub fn from_bounds(width: usize, height: usize, count: usize, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert!(count >= 2, "need at least two hypotheses");
        assert_eq!(lo.len(), width * height);
        assert_eq!(hi.len(), width * height);
        Self {
            width,
            height,
            count,
            lo,
            hi,
        }
    }

    /// Same interval for every pixel.
    pub fn uniform(width: usize, height: usize, count: usize, lo: f64, hi: f64) -> Self {
        Self::from_bounds(
            width,
            height,
            count,
            vec![lo; width * height],
            vec![hi; width * height],
        )
    }

    #[inline]
    pub fn lo(&self, row: usize, col: usize) -> f64 {
        self.lo[row * self.width + col]
    }

    #[inline]
    pub fn hi(&self, row: usize, col: usize) -> f64 {
        self.hi[row * self.width + col]
    }

    /// Spacing between adjacent samples at a pixel.
    #[inline]
    pub fn spacing(&self, row: usize, col: usize) -> f64 {
        (self.hi(row, col) - self.lo(row, col)) / (self.count - 1) as f64
    }

    /// The l-th depth sample; the first and last are the interval endpoints.
    #[inline]
    pub fn sample(&self, row: usize, col: usize, l: usize) -> f64 {
        if l == self.count - 1 {
            return self.hi(row, col);
        }
        let lo = self.lo(row, col);
        lo + (self.hi(row, col) - lo) * l as f64 / (self.count - 1) as f64
    }
}

/// H x W x L matching costs (row-major, hypothesis index fastest) plus the
/// count of source views that contributed to each entry.
#[derive(Debug, Clone)]
pub struct CostVolume {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub costs: Vec<f32>,
    pub validity: Vec<u16>,
    pub hypotheses: HypothesisSet,
}

impl CostVolume {
    #[inline]
    pub fn cost(&self, row: usize, col: usize, l: usize) -> f32 {
        self.costs[(row * self.width + col) * self.count + l]
    }

    #[inline]
    pub fn valid_views(&self, row: usize, col: usize, l: usize) -> u16 {
        self.validity[(row * self.width + col) * self.count + l]
    }
}

/// H x W x L per-pixel probability distributions over depth hypotheses.
#[derive(Debug, Clone)]
pub struct ProbabilityVolume {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub probs: Vec<f32>,
    pub hypotheses: HypothesisSet,
    pub stage: usize,
}

impl ProbabilityVolume {
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let base = (row * self.width + col) * self.count;
        &self.probs[base..base + self.count]
    }

    pub fn max_prob(&self, row: usize, col: usize) -> f32 {
        self.pixel(row, col).iter().cloned().fold(0.0, f32::max)
    }

    /// Largest per-pixel deviation of the distribution sum from 1.
    pub fn max_normalization_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for px in 0..self.width * self.height {
            let base = px * self.count;
            let sum: f64 = self.probs[base..base + self.count]
                .iter()
                .map(|&p| p as f64)
                .sum();
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }
}

/// Zero-mean normalized cross-correlation of two equally sized patches.
/// Returns a score in [-1, 1]; constant patches score 0.
pub fn zncc(ref_patch: &[f32], src_patch: &[f32]) -> f64 {
    assert_eq!(ref_patch.len(), src_patch.len());
    let n = ref_patch.len() as f64;
    let mut sa = 0.0f64;
    let mut sb = 0.0f64;
    let mut saa = 0.0f64;
    let mut sbb = 0.0f64;
    let mut sab = 0.0f64;
    for (&a, &b) in ref_patch.iter().zip(src_patch) {
        let (a, b) = (a as f64, b as f64);
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    zncc_from_sums(n, sa, saa, sb, sbb, sab)
}

#[inline]
fn zncc_from_sums(n: f64, sa: f64, saa: f64, sb: f64, sbb: f64, sab: f64) -> f64 {
    let var_a = saa - sa * sa / n;
    let var_b = sbb - sb * sb / n;
    if var_a / n < DEGENERATE_VARIANCE || var_b / n < DEGENERATE_VARIANCE {
        return 0.0;
    }
    let cov = sab - sa * sb / n;
    (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
}

/// Matching cost of two patches: 1 - ZNCC, in [0, 2].
pub fn zncc_cost(ref_patch: &[f32], src_patch: &[f32]) -> f64 {
    1.0 - zncc(ref_patch, src_patch)
}

/// Build the plane-sweep cost volume for a reference view against its
/// sources. Entry (i, j, l) is the mean 1-ZNCC cost over source views whose
/// warped window lies fully inside the source image; entries with no valid
/// view get [`WORST_COST`] and validity 0.
pub fn build_cost_volume(
    reference: &CameraView,
    sources: &[CameraView],
    hypotheses: &HypothesisSet,
    window: usize,
) -> Result<CostVolume, CostVolumeError> {
    build_cost_volume_masked(reference, sources, hypotheses, window, None)
}

/// [`build_cost_volume`] restricted to pixels where `mask` is set; other
/// entries are worst-cost with validity 0. `None` means all pixels.
pub fn build_cost_volume_masked(
    reference: &CameraView,
    sources: &[CameraView],
    hypotheses: &HypothesisSet,
    window: usize,
    mask: Option<&[bool]>,
) -> Result<CostVolume, CostVolumeError> {
    if sources.is_empty() {
        return Err(CostVolumeError::NoSourceViews);
    }
    if window < 3 || window % 2 == 0 {
        return Err(CostVolumeError::BadWindow(window));
    }
    let (w, h) = (reference.image.width, reference.image.height);
    if hypotheses.width != w || hypotheses.height != h {
        return Err(CostVolumeError::HypothesisMismatch {
            hyp_w: hypotheses.width,
            hyp_h: hypotheses.height,
            img_w: w,
            img_h: h,
        });
    }
    if let Some(m) = mask {
        assert_eq!(m.len(), w * h, "mask length must match image");
    }
    let count = hypotheses.count;
    let hw = (window / 2) as isize;
    let n = (window * window) as f64;

    let warps: Vec<WarpMap> = sources
        .iter()
        .map(|s| WarpMap::new(&reference.camera, &s.camera))
        .collect();

    let mut costs = vec![WORST_COST; w * h * count];
    let mut validity = vec![0u16; w * h * count];

    // Reference patch values and statistics, gathered once per pixel.
    let mut patch = vec![0.0f32; window * window];
    for i in 0..h {
        for j in 0..w {
            if let Some(m) = mask {
                if !m[i * w + j] {
                    continue;
                }
            }
            let (i_s, j_s) = (i as isize, j as isize);
            if i_s - hw < 0 || i_s + hw >= h as isize || j_s - hw < 0 || j_s + hw >= w as isize {
                continue; // reference window straddles the border
            }
            let mut sa = 0.0f64;
            let mut saa = 0.0f64;
            {
                let mut idx = 0;
                for dy in -hw..=hw {
                    let r = (i_s + dy) as usize;
                    for dx in -hw..=hw {
                        let v = reference.image.at(r, (j_s + dx) as usize);
                        patch[idx] = v;
                        idx += 1;
                        sa += v as f64;
                        saa += (v as f64) * (v as f64);
                    }
                }
            }
            let px = Pixel::new(i as f64, j as f64);
            let base = (i * w + j) * count;
            for l in 0..count {
                let depth = hypotheses.sample(i, j, l);
                let mut cost_sum = 0.0f64;
                let mut views = 0u16;
                for (src, warpmap) in sources.iter().zip(&warps) {
                    let Some((wp, _)) = warpmap.apply(&px, depth) else {
                        continue;
                    };
                    let (sw, sh) = (src.image.width, src.image.height);
                    let hwf = hw as f64;
                    if wp.row - hwf < 0.0
                        || wp.row + hwf >= (sh - 1) as f64
                        || wp.col - hwf < 0.0
                        || wp.col + hwf >= (sw - 1) as f64
                    {
                        continue; // warped window leaves the source image
                    }
                    // All window samples share one fractional offset.
                    let r0 = wp.row.floor();
                    let c0 = wp.col.floor();
                    let fr = (wp.row - r0) as f32;
                    let fc = (wp.col - c0) as f32;
                    let w00 = (1.0 - fr) * (1.0 - fc);
                    let w01 = (1.0 - fr) * fc;
                    let w10 = fr * (1.0 - fc);
                    let w11 = fr * fc;
                    let r0 = r0 as isize;
                    let c0 = c0 as isize;
                    let mut sb = 0.0f64;
                    let mut sbb = 0.0f64;
                    let mut sab = 0.0f64;
                    let mut idx = 0;
                    for dy in -hw..=hw {
                        let row_base = ((r0 + dy) as usize) * sw + (c0 - hw) as usize;
                        let top = &src.image.data[row_base..row_base + window + 1];
                        let bot = &src.image.data[row_base + sw..row_base + sw + window + 1];
                        for dx in 0..window {
                            let s = w00 * top[dx] + w01 * top[dx + 1] + w10 * bot[dx] + w11 * bot[dx + 1];
                            let a = patch[idx] as f64;
                            let s = s as f64;
                            sb += s;
                            sbb += s * s;
                            sab += a * s;
                            idx += 1;
                        }
                    }
                    cost_sum += 1.0 - zncc_from_sums(n, sa, saa, sb, sbb, sab);
                    views += 1;
                }
                if views > 0 {
                    costs[base + l] = (cost_sum / views as f64) as f32;
                    validity[base + l] = views;
                }
            }
        }
    }

    Ok(CostVolume {
        width: w,
        height: h,
        count,
        costs,
        validity,
        hypotheses: hypotheses.clone(),
    })
}

/// Per-pixel softmax of -cost/temperature.
pub fn cost_to_probability(
    cv: &CostVolume,
    temperature: f64,
    stage: usize,
) -> Result<ProbabilityVolume, CostVolumeError> {
    if temperature <= 0.0 {
        return Err(CostVolumeError::BadTemperature(temperature));
    }
    let count = cv.count;
    let mut probs = vec![0.0f32; cv.costs.len()];
    let mut weights = vec![0.0f64; count];
    for pxi in 0..cv.width * cv.height {
        let base = pxi * count;
        let slice = &cv.costs[base..base + count];
        let min = slice.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let mut sum = 0.0f64;
        for (l, &c) in slice.iter().enumerate() {
            let e = (-(c as f64 - min) / temperature).exp();
            weights[l] = e;
            sum += e;
        }
        for l in 0..count {
            probs[base + l] = (weights[l] / sum) as f32;
        }
    }
    Ok(ProbabilityVolume {
        width: cv.width,
        height: cv.height,
        count,
        probs,
        hypotheses: cv.hypotheses.clone(),
        stage,
    })
}
