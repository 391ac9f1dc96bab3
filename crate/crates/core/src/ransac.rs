//! Robust two-step estimation: RANSAC over minimal sets of 4 pixel and
//! 4 3D correspondences for the combined transform, the `eta` scan on
//! reflection inliers, and a final refit on all inliers.

use nalgebra::{Matrix4x2, Matrix4x3};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::correspondences::{CenterOffsets, CorrespondenceSet, PixelCorr};
use crate::error::{Error, Result};
use crate::residuals::{model_f64, Objective, ParamVector, Selector};
use crate::seed::{derive_seed, rng_for};
use crate::solvers::{
    estimate_translation, fit_combined, is_converged, refine, step2_scan_eta, PairSolution, SolveOptions,
};

/// Pixel plus 3D correspondences in one minimal sample.
pub const MINIMAL_SET_SIZE: i32 = 8;
const MINIMAL_PIXELS: usize = 4;
const MINIMAL_NORMALS: usize = 4;
/// Resampling attempts per iteration before a degenerate sample is given up.
const DEGENERATE_RETRIES: usize = 100;
/// Singular-value ratio below which a sample counts as degenerate.
const DEGENERACY_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    pub pixel_inlier_threshold: f64,
    /// Radians.
    pub normal_inlier_threshold: f64,
    /// Radians.
    pub reflection_inlier_threshold: f64,
    pub confidence: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            pixel_inlier_threshold: 0.01,
            normal_inlier_threshold: 5f64.to_radians(),
            reflection_inlier_threshold: 5f64.to_radians(),
            confidence: 0.99,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        let t = [self.pixel_inlier_threshold, self.normal_inlier_threshold, self.reflection_inlier_threshold];
        if !t.iter().all(|&x| x > 0.0) {
            return Err(Error::InvalidConfig("inlier thresholds must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfig("confidence must be in (0, 1)".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InlierMasks {
    pub pixels: Vec<bool>,
    pub normals: Vec<bool>,
    pub reflections: Vec<bool>,
}

impl InlierMasks {
    pub fn pixel_normal_count(&self) -> usize {
        count(&self.pixels) + count(&self.normals)
    }

    pub fn total(&self) -> usize {
        self.pixel_normal_count() + count(&self.reflections)
    }
}

fn count(m: &[bool]) -> usize {
    m.iter().filter(|&&k| k).count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub solution: PairSolution,
    pub inliers: InlierMasks,
    /// Hypotheses evaluated.
    pub iterations: usize,
    /// Inlier count (pixel + 3D) of every evaluated hypothesis.
    pub hypothesis_scores: Vec<usize>,
}

/// A model together with the pixel offsets its pixel residuals refer to.
#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    params: ParamVector,
    offsets: CenterOffsets,
}

impl Hypothesis {
    fn shifted(&self, c: &PixelCorr) -> PixelCorr {
        let [a, b, c2, d] = self.offsets;
        PixelCorr::new(c.u1 - a, c.v1 - b, c.u2 - c2, c.v2 - d)
    }

    /// Pixel and 3D inlier masks and the squared-residual cost over them.
    fn score(&self, set: &CorrespondenceSet, cfg: &RansacConfig) -> (Vec<bool>, Vec<bool>, f64) {
        let m = model_f64(&self.params);
        let mut cost = 0.0;
        let pixels = set
            .pixels
            .iter()
            .map(|c| {
                let r = m.pixel(&self.shifted(c));
                let inlier = r.abs() < cfg.pixel_inlier_threshold;
                if inlier {
                    cost += r * r;
                }
                inlier
            })
            .collect();
        let normals = set
            .normals
            .iter()
            .map(|c| {
                let a = m.normal_angle(c);
                let inlier = a < cfg.normal_inlier_threshold;
                if inlier {
                    cost += a * a;
                }
                inlier
            })
            .collect();
        (pixels, normals, cost)
    }

    fn masks(&self, set: &CorrespondenceSet, cfg: &RansacConfig) -> InlierMasks {
        let (pixels, normals, _) = self.score(set, cfg);
        let m = model_f64(&self.params);
        let reflections =
            set.reflections.iter().map(|c| m.reflection_angle(c) < cfg.reflection_inlier_threshold).collect();
        InlierMasks { pixels, normals, reflections }
    }
}

fn is_degenerate(set: &CorrespondenceSet, px: &[usize], nm: &[usize]) -> bool {
    let ratio = |sv: &[f64]| {
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        !(max > 0.0) || min < DEGENERACY_RATIO * max
    };
    for view in 0..2 {
        let pts: Vec<[f64; 2]> = px
            .iter()
            .map(|&i| {
                let c = &set.pixels[i];
                if view == 0 { [c.u1, c.v1] } else { [c.u2, c.v2] }
            })
            .collect();
        let mean = [0, 1].map(|k| pts.iter().map(|p| p[k]).sum::<f64>() / pts.len() as f64);
        let m = Matrix4x2::from_fn(|i, k| pts[i][k] - mean[k]);
        if ratio(m.singular_values().as_slice()) {
            return true;
        }
        let n = Matrix4x3::from_fn(|i, k| {
            let c = &set.normals[nm[i]];
            if view == 0 { c.n1.as_vector()[k] } else { c.n2.as_vector()[k] }
        });
        if ratio(n.singular_values().as_slice()) {
            return true;
        }
    }
    false
}

/// Number of samples needed to draw one all-inlier minimal set with
/// probability `confidence` at inlier ratio `w`.
pub fn required_iterations(w: f64, confidence: f64, cap: usize) -> usize {
    let p = w.powi(MINIMAL_SET_SIZE);
    if p >= 1.0 {
        return 1;
    }
    if p <= 0.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - p).ln()).ceil();
    if n.is_finite() { (n as usize).clamp(1, cap) } else { cap }
}

fn subset(set: &CorrespondenceSet, px: &[bool], nm: &[bool], rf: &[bool]) -> Result<(CorrespondenceSet, CenterOffsets)> {
    let sub = set.filtered(px, nm, rf);
    let offsets = sub.pixel_means().ok_or(Error::EmptySet)?;
    let mut c = sub.shifted(&offsets);
    c.centered = true;
    Ok((c, offsets))
}

/// RANSAC estimate of a view pair. Deterministic for a given
/// `cfg.rng_seed`.
pub fn ransac_pair(set: &CorrespondenceSet, cfg: &RansacConfig, opts: &SolveOptions) -> Result<RansacResult> {
    cfg.validate()?;
    if set.pixels.len() < MINIMAL_PIXELS || set.normals.len() < MINIMAL_NORMALS || set.reflections.is_empty() {
        return Err(Error::InsufficientCorrespondences(format!(
            "need at least 4 pixel, 4 3D and 1 reflection correspondences, got {}, {} and {}",
            set.pixels.len(),
            set.normals.len(),
            set.reflections.len()
        )));
    }
    let total = set.pixels.len() + set.normals.len();

    // (score, cost, hypothesis, pixel mask, normal mask)
    let mut best: Option<(usize, f64, Hypothesis, Vec<bool>, Vec<bool>)> = None;
    let mut scores = Vec::new();
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    let mut drawn = false;
    while iter < needed {
        let mut rng = rng_for(cfg.rng_seed, iter as u64);
        let mut picked = None;
        for _ in 0..DEGENERATE_RETRIES {
            let px = sample(&mut rng, set.pixels.len(), MINIMAL_PIXELS).into_vec();
            let nm = sample(&mut rng, set.normals.len(), MINIMAL_NORMALS).into_vec();
            if !is_degenerate(set, &px, &nm) {
                picked = Some((px, nm));
                break;
            }
        }
        iter += 1;
        let Some((px, nm)) = picked else { continue };
        drawn = true;

        let mut pmask = vec![false; set.pixels.len()];
        let mut nmask = vec![false; set.normals.len()];
        px.iter().for_each(|&i| pmask[i] = true);
        nm.iter().for_each(|&i| nmask[i] = true);
        let (sample_set, offsets) = subset(set, &pmask, &nmask, &[])?;
        let sopts = SolveOptions { seed: derive_seed(opts.seed ^ cfg.rng_seed, iter as u64), ..*opts };
        let Ok(est) = fit_combined(&sample_set, &sopts) else { continue };
        let hyp = Hypothesis { params: est.params, offsets };
        let (pm, nmk, cost) = hyp.score(set, cfg);
        let score = count(&pm) + count(&nmk);
        scores.push(score);
        let better = match &best {
            None => true,
            Some((s, c, ..)) => score > *s || (score == *s && cost < *c),
        };
        if better {
            best = Some((score, cost, hyp, pm, nmk));
            needed = required_iterations(score as f64 / total as f64, cfg.confidence, cfg.max_iterations);
        }
    }
    if !drawn {
        return Err(Error::AllSamplesDegenerate);
    }
    let (score, _, hyp, pm, nmk) = best.ok_or(Error::NoHypothesis)?;

    // Refit the combined transform on all pixel and 3D inliers.
    let (in_set, offsets) = subset(set, &pm, &nmk, &[])?;
    let objective = Objective::new(&in_set, Selector::PixelNormal);
    let mut step1 = hyp;
    if let Ok((p, _)) = refine(&objective, &hyp.params, &opts.lm) {
        let cand = Hypothesis { params: p, offsets };
        let (a, b, _) = cand.score(set, cfg);
        if count(&a) + count(&b) >= score {
            step1 = cand;
        }
    }
    let (pm, nmk, _) = step1.score(set, cfg);
    let g21 = step1.params.combined();
    let angles = step1.params.angles();
    let scan = step2_scan_eta(&g21, angles.theta, angles.phi, &set.reflections, cfg.reflection_inlier_threshold)?;

    // Final refit of all parameters on every inlier.
    let pre = Hypothesis { params: scan.solution.params(), offsets: step1.offsets };
    let pre_masks = InlierMasks { pixels: pm, normals: nmk, reflections: scan.reflection_inliers.clone() };
    let (full, offsets) = subset(set, &pre_masks.pixels, &pre_masks.normals, &pre_masks.reflections)?;
    let objective = Objective::new(&full, Selector::All);
    let mut chosen = (pre, pre_masks);
    if let Ok((p, _)) = refine(&objective, &pre.params, &opts.lm) {
        let cand = Hypothesis { params: p, offsets };
        let masks = cand.masks(set, cfg);
        if p.is_finite() && masks.total() >= chosen.1.total() && masks.pixel_normal_count() >= score {
            chosen = (cand, masks);
        }
    }
    let (model, inliers) = chosen;

    let (final_set, _) = subset(set, &inliers.pixels, &inliers.normals, &inliers.reflections)?;
    let objective = Objective::new(&final_set, Selector::All);
    let cost = objective.cost(&model.params).unwrap_or(f64::INFINITY);
    let mut solution = PairSolution::from_params(&model.params, is_converged(cost, objective.num_residuals()), cost);
    let in_pixels: Vec<PixelCorr> =
        set.pixels.iter().zip(&inliers.pixels).filter(|(_, &k)| k).map(|(c, _)| *c).collect();
    if let Ok(t) = estimate_translation(&solution.r21, &in_pixels) {
        solution.t_xy = t.t;
    }
    solution.eta_candidates = scan.solution.eta_candidates;
    Ok(RansacResult { solution, inliers, iterations: iter, hypothesis_scores: scores })
}
