//! Pose estimation for one view pair: the two-step solver (combined
//! transform, then an `eta` scan against reflection correspondences), the
//! direct joint optimization, and their shared multi-start machinery.

pub mod decompose;
pub mod lm;
pub mod translation;

pub use decompose::{ambiguity_family, decompose_at_eta, Decomposition};
pub use lm::{minimize, LeastSquares, LmConfig, LmReport, Termination};
pub use translation::{estimate_translation, recover_depths, TranslationEstimate};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correspondences::{center, CorrespondenceSet, PixelCorr, ReflectionCorr};
use crate::error::{Error, Result};
use crate::geometry::{matrix_to_euler, CombinedTransform, EulerZXZ, GbrTransform, RotMat3};
use crate::residuals::{model_f64, Direction, Objective, ParamVector, Selector, NUM_PARAMS};
use crate::seed::rng_for;

/// Number of `eta` samples in the scan of the second step.
pub const ETA_GRID_SIZE: usize = 180;
/// Spacing of the `eta` grid.
pub const ETA_GRID_STEP: f64 = 2.0 * PI / ETA_GRID_SIZE as f64;
/// Per-residual-component cost below which a fit counts as exact.
pub const CONVERGENCE_PER_RESIDUAL: f64 = 1e-9;

/// Whether `cost` over `num_residuals` components counts as converged to zero.
pub fn is_converged(cost: f64, num_residuals: usize) -> bool {
    cost.is_finite() && cost < CONVERGENCE_PER_RESIDUAL * num_residuals.max(1) as f64
}

/// Diagnostics of one grid value of `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaCandidate {
    pub eta: f64,
    pub inliers: usize,
    pub residual: f64,
}

/// Estimated relative pose and GBR parameters of a view pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSolution {
    #[serde(rename = "R21")]
    pub r21: RotMat3,
    pub angles: EulerZXZ,
    pub g1: GbrTransform,
    pub g2: GbrTransform,
    pub g21: CombinedTransform,
    /// Minimum-norm in-plane translation.
    pub t_xy: [f64; 2],
    pub converged: bool,
    pub final_cost: f64,
    #[serde(default)]
    pub eta_candidates: Vec<EtaCandidate>,
}

impl PairSolution {
    pub fn from_params(p: &ParamVector, converged: bool, final_cost: f64) -> Self {
        let r21 = p.rotation();
        let (g1, g2) = (p.g1(), p.g2());
        Self {
            r21,
            angles: matrix_to_euler(&r21),
            g1,
            g2,
            g21: p.combined(),
            t_xy: [0.0, 0.0],
            converged,
            final_cost,
            eta_candidates: Vec::new(),
        }
    }

    /// Parameter vector reproducing this solution.
    pub fn params(&self) -> ParamVector {
        ParamVector::from_parts(&self.angles, &self.g1, &self.g2)
    }

    /// Sets `t_xy` from `pixels` (in the caller's coordinates).
    fn with_translation(mut self, pixels: &[PixelCorr]) -> Self {
        if let Ok(t) = estimate_translation(&self.r21, pixels) {
            self.t_xy = t.t;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub restarts: usize,
    pub seed: u64,
    pub lm: LmConfig,
    /// Skip the remaining restarts once one reaches zero cost.
    pub stop_at_converged: bool,
    /// Angular threshold (radians) for reflection inliers in the `eta` scan.
    pub reflection_threshold: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            lm: LmConfig::default(),
            stop_at_converged: true,
            reflection_threshold: 5f64.to_radians(),
        }
    }
}

/// [`Objective`] seen as a problem over raw parameter vectors.
struct ParamProblem<'a>(Objective<'a>);

fn params_of(x: &DVector<f64>) -> ParamVector {
    ParamVector::from_array(std::array::from_fn(|i| x[i]))
}

impl LeastSquares for ParamProblem<'_> {
    fn num_params(&self) -> usize {
        NUM_PARAMS
    }

    fn residuals(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.0.residuals(&params_of(x))?))
    }

    fn jacobian(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.0.jacobian(&params_of(x))
    }
}

/// Local least-squares fit of `objective` from `start`.
pub fn refine(objective: &Objective, start: &ParamVector, cfg: &LmConfig) -> Result<(ParamVector, f64)> {
    let x0 = DVector::from_row_slice(&start.to_array());
    let rep = minimize(&ParamProblem(*objective), x0, None, cfg)?;
    Ok((params_of(&rep.x), rep.cost))
}

fn random_start<R: Rng>(rng: &mut R) -> ParamVector {
    let (lo, hi) = (0.5f64.ln(), 2f64.ln());
    ParamVector {
        theta: rng.random_range(-PI..PI),
        phi: rng.random_range(-PI..PI),
        eta: rng.random_range(-PI..PI),
        mu1: rng.random_range(-0.5..0.5),
        nu1: rng.random_range(-0.5..0.5),
        mu2: rng.random_range(-0.5..0.5),
        nu2: rng.random_range(-0.5..0.5),
        log_lambda1: rng.random_range(lo..hi),
        log_lambda2: rng.random_range(lo..hi),
    }
}

/// Best of several LM runs from random starts. Returns the parameters, the
/// cost and whether it counts as converged.
pub fn multistart(objective: &Objective, opts: &SolveOptions) -> Result<(ParamVector, f64, bool)> {
    let m = objective.num_residuals();
    let mut best: Option<(ParamVector, f64)> = None;
    for i in 0..opts.restarts.max(1) {
        let start = random_start(&mut rng_for(opts.seed, i as u64));
        let Ok((p, cost)) = refine(objective, &start, &opts.lm) else {
            continue;
        };
        if !p.is_finite() || !cost.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((p, cost));
        }
        if opts.stop_at_converged && is_converged(cost, m) {
            break;
        }
    }
    let (p, cost) = best.ok_or(Error::NoHypothesis)?;
    Ok((p, cost, is_converged(cost, m)))
}

/// Output of the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedEstimate {
    pub theta: f64,
    pub phi: f64,
    pub g21: CombinedTransform,
    /// One (arbitrary-`eta`) factorization of `g21`.
    pub params: ParamVector,
    pub cost: f64,
    pub converged: bool,
}

fn centered(set: &CorrespondenceSet) -> Result<CorrespondenceSet> {
    if set.centered {
        Ok(set.clone())
    } else {
        Ok(center(set)?.0)
    }
}

/// First step: fits pixel and 3D correspondences over all nine parameters,
/// where only `theta`, `phi` and the product `G21` are determined.
pub fn step1_estimate_combined(set: &CorrespondenceSet, opts: &SolveOptions) -> Result<CombinedEstimate> {
    if set.pixels.len() < 4 || set.normals.len() < 4 {
        return Err(Error::InsufficientCorrespondences(format!(
            "need at least 4 pixel and 4 3D correspondences, got {} and {}",
            set.pixels.len(),
            set.normals.len()
        )));
    }
    let set = centered(set)?;
    fit_combined(&set, opts)
}

/// The first step without the minimum-count check; `set` must be centered.
pub(crate) fn fit_combined(set: &CorrespondenceSet, opts: &SolveOptions) -> Result<CombinedEstimate> {
    let objective = Objective::new(set, Selector::PixelNormal);
    let (params, cost, converged) = multistart(&objective, opts)?;
    let angles = params.angles();
    Ok(CombinedEstimate {
        theta: angles.theta,
        phi: angles.phi,
        g21: params.combined(),
        params,
        cost,
        converged,
    })
}

/// Reflection inlier flags of `reflections` under `p`.
pub fn reflection_inliers(p: &ParamVector, reflections: &[ReflectionCorr], threshold: f64) -> Vec<bool> {
    let m = model_f64(p);
    reflections.iter().map(|c| m.reflection_angle(c) < threshold).collect()
}

/// `f_RM` restricted to `mask`; infinite if any transfer is degenerate.
fn reflection_cost(p: &ParamVector, reflections: &[ReflectionCorr], mask: &[bool]) -> f64 {
    let m = model_f64(p);
    let mut cost = 0.0;
    for (c, _) in reflections.iter().zip(mask).filter(|(_, &k)| k) {
        for dir in [Direction::OneFromTwo, Direction::TwoFromOne] {
            match m.reflection(c, dir) {
                Ok(r) => cost += r.iter().map(|x| x * x).sum::<f64>(),
                Err(_) => return f64::INFINITY,
            }
        }
    }
    cost
}

/// Grid of the `eta` scan: `(k + 1/2)` steps above `-pi`, so `|eta| >= 1 deg`.
pub fn eta_grid() -> impl Iterator<Item = f64> {
    (0..ETA_GRID_SIZE).map(|k| -PI + (k as f64 + 0.5) * ETA_GRID_STEP)
}

fn params_at_eta(g21: &CombinedTransform, theta: f64, phi: f64, eta: f64) -> Result<(ParamVector, f64)> {
    let d = decompose_at_eta(g21, theta, phi, eta)?;
    Ok((ParamVector::from_parts(&EulerZXZ::new(theta, phi, eta), &d.g1, &d.g2), d.residual))
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Result of the `eta` scan together with the reflection inlier flags of the
/// selected value.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaScan {
    pub solution: PairSolution,
    pub reflection_inliers: Vec<bool>,
}

/// Second step: factorizes `g21` at each grid `eta`, keeps the value with the
/// most reflection inliers and refines it by minimizing `f_RM` over those
/// inliers within one grid step.
///
/// Ties on the inlier count go to the lower `f_RM` over the inliers, then to
/// the lower factorization residual.
pub fn step2_scan_eta(
    g21: &CombinedTransform,
    theta: f64,
    phi: f64,
    reflections: &[ReflectionCorr],
    threshold: f64,
) -> Result<EtaScan> {
    if reflections.is_empty() {
        return Err(Error::InsufficientCorrespondences("the eta scan needs reflection correspondences".into()));
    }
    let mut candidates = Vec::new();
    // (inliers, f_RM, residual, eta, mask)
    let mut best: Option<(usize, f64, f64, f64, Vec<bool>)> = None;
    for eta in eta_grid() {
        let Ok((p, residual)) = params_at_eta(g21, theta, phi, eta) else {
            continue;
        };
        let mask = reflection_inliers(&p, reflections, threshold);
        let inliers = mask.iter().filter(|&&k| k).count();
        let cost = reflection_cost(&p, reflections, &mask);
        candidates.push(EtaCandidate { eta, inliers, residual });
        let better = match &best {
            None => true,
            Some((bi, bc, br, _, _)) => {
                inliers > *bi || (inliers == *bi && (cost < *bc || (cost == *bc && residual < *br)))
            }
        };
        if better {
            best = Some((inliers, cost, residual, eta, mask));
        }
    }
    let Some((_, grid_cost, _, grid_eta, grid_mask)) = best else {
        return Err(Error::NoFeasibleEta { candidates: ETA_GRID_SIZE });
    };

    // Refinement keeps the sign of eta (the other sign is a different branch).
    let (lo, hi) = if grid_eta > 0.0 {
        ((grid_eta - ETA_GRID_STEP).max(1e-6), (grid_eta + ETA_GRID_STEP).min(PI - 1e-6))
    } else {
        ((grid_eta - ETA_GRID_STEP).max(-PI + 1e-6), (grid_eta + ETA_GRID_STEP).min(-1e-6))
    };
    let f = |eta: f64| match params_at_eta(g21, theta, phi, eta) {
        Ok((p, _)) => reflection_cost(&p, reflections, &grid_mask),
        Err(_) => f64::INFINITY,
    };
    let (mut eta, mut cost) = golden_section(f, lo, hi, 1e-10);
    if !(cost <= grid_cost) {
        (eta, cost) = (grid_eta, grid_cost);
    }
    let (p, _) = params_at_eta(g21, theta, phi, eta)?;
    let mask = reflection_inliers(&p, reflections, threshold);
    let n_in = mask.iter().filter(|&&k| k).count();
    let mut solution = PairSolution::from_params(&p, is_converged(cost, 6 * n_in), cost);
    solution.eta_candidates = candidates;
    Ok(EtaScan { solution, reflection_inliers: mask })
}

/// Two-step estimate followed by a joint refinement of all parameters on the
/// pixel and 3D correspondences plus the reflection inliers of the scan.
/// `t_xy` refers to the caller's (uncentered) pixel coordinates.
pub fn two_step_solve(set: &CorrespondenceSet, opts: &SolveOptions) -> Result<PairSolution> {
    let step1 = step1_estimate_combined(set, opts)?;
    let cset = centered(set)?;
    finish_two_step(&cset, &set.pixels, &step1, opts)
}

/// Steps two and three given a first-step estimate on the centered `cset`.
pub(crate) fn finish_two_step(
    cset: &CorrespondenceSet,
    pixels: &[PixelCorr],
    step1: &CombinedEstimate,
    opts: &SolveOptions,
) -> Result<PairSolution> {
    let scan = step2_scan_eta(&step1.g21, step1.theta, step1.phi, &cset.reflections, opts.reflection_threshold)?;
    let inlier_set = CorrespondenceSet {
        reflections: cset
            .reflections
            .iter()
            .zip(&scan.reflection_inliers)
            .filter(|(_, &k)| k)
            .map(|(c, _)| *c)
            .collect(),
        ..cset.clone()
    };
    let objective = Objective::new(&inlier_set, Selector::All);
    let start = scan.solution.params();
    let start_cost = objective.cost(&start).unwrap_or(f64::INFINITY);
    let (p, cost) = match refine(&objective, &start, &opts.lm) {
        Ok((p, c)) if c <= start_cost && p.is_finite() => (p, c),
        _ => (start, start_cost),
    };
    let converged = step1.converged && is_converged(cost, objective.num_residuals());
    let mut solution = PairSolution::from_params(&p, converged, cost).with_translation(pixels);
    solution.eta_candidates = scan.solution.eta_candidates;
    Ok(solution)
}

/// Joint multi-start minimization of the full objective over all nine
/// parameters.
pub fn direct_optimize_all(set: &CorrespondenceSet, opts: &SolveOptions) -> Result<PairSolution> {
    if set.pixels.is_empty() || set.normals.len() + set.reflections.len() == 0 {
        return Err(Error::InsufficientCorrespondences(
            "need pixel correspondences and at least one 3D or reflection correspondence".into(),
        ));
    }
    let cset = centered(set)?;
    let objective = Objective::new(&cset, Selector::All);
    let (p, cost, converged) = multistart(&objective, opts)?;
    Ok(PairSolution::from_params(&p, converged, cost).with_translation(&set.pixels))
}
