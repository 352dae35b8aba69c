//! Confidence estimation: the stage-average baseline over per-stage maxima,
//! and the conditional-probability model over each pixel's chain of nested
//! hypothesis ranges.
//!
//! Each chain link holds the discrete distribution one depth inference
//! produced and the sub-range the next inference was run on. Treating every
//! distribution as conditional on its own hypothesis range, the probability
//! that the true depth lands in the final interval is a product of interval
//! masses; the last link's own realized range cancels telescopically, so the
//! product runs over the first N-1 realized ranges and the final
//! `(d_pred - delta, d_pred + delta]` interval under link N's distribution.

use crate::cascade::{DepthMap, StageRecord};
use crate::costvolume::ProbabilityVolume;

/// Per-pixel confidence in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ConfidenceMap {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }
}

/// One depth inference at a pixel: a discrete distribution over `L` uniform
/// hypotheses (first sample `d0`, spacing `spacing`) and the realized
/// sub-range the next inference used. The last link of a chain leaves
/// `realized` as `None`.
#[derive(Debug, Clone)]
pub struct ChainLink {
    pub d0: f64,
    pub spacing: f64,
    pub probs: Vec<f32>,
    pub realized: Option<(f64, f64)>,
}

impl ChainLink {
    /// Support of the piecewise-constant density: half a bin beyond the
    /// first and last hypothesis.
    pub fn support(&self) -> (f64, f64) {
        let half = 0.5 * self.spacing;
        (
            self.d0 - half,
            self.d0 + self.spacing * (self.probs.len() - 1) as f64 + half,
        )
    }

    /// Set the realized range, clamped into this link's support.
    pub fn set_realized(&mut self, lo: f64, hi: f64) {
        let (s_lo, s_hi) = self.support();
        let lo = lo.max(s_lo);
        let hi = hi.min(s_hi).max(lo);
        self.realized = Some((lo, hi));
    }

    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        interval_mass(&self.probs, self.d0, self.spacing, lo, hi)
    }
}

/// A pixel's full evidence trail plus its final depth prediction.
#[derive(Debug, Clone, Default)]
pub struct ConfidenceChain {
    pub links: Vec<ChainLink>,
    pub d_pred: f64,
}

/// Per-pixel instance-refinement links gathered during IF-ADS.
#[derive(Debug, Clone)]
pub struct ChainMap {
    pub width: usize,
    pub height: usize,
    pub links: Vec<Vec<ChainLink>>,
}

impl ChainMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            links: vec![Vec::new(); width * height],
        }
    }
}

/// Eq.-style per-stage confidence: the per-pixel maximum probability.
pub fn stage_confidence_max(pv: &ProbabilityVolume) -> ConfidenceMap {
    let mut data = vec![0.0f32; pv.width * pv.height];
    for i in 0..pv.height {
        for j in 0..pv.width {
            data[i * pv.width + j] = pv.max_prob(i, j);
        }
    }
    ConfidenceMap {
        width: pv.width,
        height: pv.height,
        data,
    }
}

/// Baseline confidence: arithmetic mean of the per-stage maps.
pub fn average_confidence(stage_maps: &[ConfidenceMap]) -> ConfidenceMap {
    assert!(!stage_maps.is_empty());
    let (w, h) = (stage_maps[0].width, stage_maps[0].height);
    let mut data = vec![0.0f32; w * h];
    for m in stage_maps {
        assert_eq!((m.width, m.height), (w, h), "stage map dims must match");
        for (acc, &v) in data.iter_mut().zip(&m.data) {
            *acc += v;
        }
    }
    let inv = 1.0 / stage_maps.len() as f32;
    for v in data.iter_mut() {
        *v *= inv;
    }
    ConfidenceMap {
        width: w,
        height: h,
        data,
    }
}

/// Probability mass of `[a, b]` under a discrete distribution spread as a
/// piecewise-constant density: bin `l` covers
/// `[d0 + l*spacing - spacing/2, d0 + l*spacing + spacing/2)` with density
/// `p_l / spacing`. Portions of `[a, b]` outside the support contribute 0.
pub fn interval_mass(probs: &[f32], d0: f64, spacing: f64, a: f64, b: f64) -> f64 {
    if b <= a || probs.is_empty() {
        return 0.0;
    }
    let half = 0.5 * spacing;
    let mut mass = 0.0f64;
    // Only bins overlapping [a, b] contribute; index range computed directly.
    let first = ((a - (d0 - half)) / spacing).floor().max(0.0) as usize;
    let last = (((b - (d0 - half)) / spacing).ceil() as isize).min(probs.len() as isize) as usize;
    for (l, &p) in probs.iter().enumerate().take(last).skip(first.min(probs.len())) {
        let center = d0 + spacing * l as f64;
        let lo = (center - half).max(a);
        let hi = (center + half).min(b);
        if hi > lo {
            mass += p as f64 * (hi - lo) / spacing;
        }
    }
    mass
}

/// Conditional-probability confidence of one chain: the product of each
/// link's realized-range mass (links 1..N-1) and the mass of the final
/// `(d_pred - delta, d_pred + delta]` interval under link N's distribution.
/// Any zero factor collapses the product to 0.
pub fn conditional_confidence(chain: &ConfidenceChain, delta: f64) -> f64 {
    assert!(delta > 0.0, "delta must be positive");
    let n = chain.links.len();
    if n == 0 {
        return 0.0;
    }
    let mut sigma = 1.0f64;
    for link in &chain.links[..n - 1] {
        let (lo, hi) = link
            .realized
            .expect("non-final links must carry a realized range");
        sigma *= link.mass(lo, hi);
        if sigma == 0.0 {
            return 0.0;
        }
    }
    let last = &chain.links[n - 1];
    sigma *= last.mass(chain.d_pred - delta, chain.d_pred + delta);
    sigma.clamp(0.0, 1.0)
}

/// Assemble the per-pixel chain for the full pipeline: stage-1 distribution,
/// any instance-refinement links, then stages 2..N; realized ranges follow
/// the successor's hypothesis range.
pub fn build_pixel_chain(
    records: &[StageRecord],
    instance_links: &[ChainLink],
    final_depth: f64,
    row: usize,
    col: usize,
) -> ConfidenceChain {
    let mut links: Vec<ChainLink> = Vec::with_capacity(records.len() + instance_links.len());
    for record in records {
        let pv = &record.volume;
        links.push(ChainLink {
            d0: pv.hypotheses.lo(row, col),
            spacing: pv.hypotheses.spacing(row, col),
            probs: pv.pixel(row, col).to_vec(),
            realized: None,
        });
        if record.stage == 1 {
            for link in instance_links {
                links.push(link.clone());
            }
        }
    }
    // Chain the realized ranges: each link realizes its successor's range.
    for k in 0..links.len().saturating_sub(1) {
        let lo = links[k + 1].d0;
        let hi = lo + links[k + 1].spacing * (links[k + 1].probs.len() - 1) as f64;
        links[k].set_realized(lo, hi);
    }
    ConfidenceChain {
        links,
        d_pred: final_depth,
    }
}

/// Conditional confidence for every pixel. Invalid pixels get 0.
pub fn conditional_confidence_map(
    records: &[StageRecord],
    chains: &ChainMap,
    final_depth: &DepthMap,
    delta: f64,
) -> ConfidenceMap {
    assert!(!records.is_empty());
    let (w, h) = (final_depth.width, final_depth.height);
    let mut data = vec![0.0f32; w * h];
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            if !final_depth.is_valid(i, j) {
                continue;
            }
            let chain = build_pixel_chain(records, &chains.links[idx], final_depth.data[idx], i, j);
            data[idx] = conditional_confidence(&chain, delta) as f32;
        }
    }
    ConfidenceMap {
        width: w,
        height: h,
        data,
    }
}

/// Per-stage mean and median of the max-probability confidence; the
/// numbers behind the confidence-dynamics report.
pub fn stage_confidence_stats(records: &[StageRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .map(|r| {
            let map = stage_confidence_max(&r.volume);
            let mut vals: Vec<f32> = map.data.clone();
            let mean = vals.iter().map(|&v| v as f64).sum::<f64>() / vals.len() as f64;
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = vals[vals.len() / 2] as f64;
            (mean, median)
        })
        .collect()
}

/// Line-oriented confidence-dynamics report, one line per stage.
pub fn format_confidence_report(records: &[StageRecord]) -> String {
    let mut out = String::new();
    for (r, (mean, median)) in records.iter().zip(stage_confidence_stats(records)) {
        out.push_str(&format!(
            "stage={} mean_max_prob={:.6} median_max_prob={:.6}\n",
            r.stage, mean, median
        ));
    }
    out
}
