//! Monte Carlo failure rates of the direct solver against the number of
//! correspondences, on noiseless synthetic pairs.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondences::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::compose_combined;
use crate::seed::derive_seed;
use crate::solvers::{direct_optimize_all, SolveOptions};
use crate::synth::{generate, SynthConfig};

/// `|G21_hat - G21|_F` above this is a failure in [`Mode::G21`].
pub const G21_FAILURE_THRESHOLD: f64 = 0.01;
/// Rotation error (degrees) above this is a failure in [`Mode::Rotation`].
pub const ROTATION_FAILURE_DEG: f64 = 0.1;

pub const CSV_HEADER: &str = "count,trials,converged,failures,failure_rate";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `count` pixel and `count` 3D correspondences; judged on `G21`.
    G21,
    /// 4 pixel + 4 3D + `count` reflection correspondences; judged on `R21`.
    Rotation,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g21" => Ok(Mode::G21),
            "rotation" => Ok(Mode::Rotation),
            _ => Err(Error::InvalidConfig(format!("unknown mode '{s}' (expected g21 or rotation)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig6Row {
    pub count: usize,
    pub trials: usize,
    pub converged: usize,
    pub failures: usize,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialOutcome {
    NotConverged,
    Success,
    Failure,
}

fn trial_config(template: &SynthConfig, mode: Mode, count: usize, seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig {
        noise_normal_sigma: 0.0,
        noise_pixel_sigma: 0.0,
        outlier_fraction: 0.0,
        rng_seed: seed,
        ..*template
    };
    match mode {
        Mode::G21 => {
            cfg.n_pixel = count;
            cfg.n_normal = count;
            cfg.n_reflection = 0;
        }
        Mode::Rotation => {
            cfg.n_pixel = 4;
            cfg.n_normal = 4;
            cfg.n_reflection = count;
        }
    }
    cfg
}

/// One trial: fresh instance, direct solve, judged per `mode`.
pub fn run_trial(template: &SynthConfig, opts: &SolveOptions, mode: Mode, count: usize, seed: u64) -> Result<TrialOutcome> {
    let cfg = trial_config(template, mode, count, seed);
    let inst = generate(&cfg)?;
    let opts = SolveOptions { seed: derive_seed(seed, 1), ..*opts };
    let set = CorrespondenceSet { centered: false, ..inst.observed };
    let sol = match direct_optimize_all(&set, &opts) {
        Ok(s) => s,
        Err(Error::NoHypothesis) => return Ok(TrialOutcome::NotConverged),
        Err(e) => return Err(e),
    };
    if !sol.converged {
        return Ok(TrialOutcome::NotConverged);
    }
    let t = &inst.truth;
    let failed = match mode {
        Mode::G21 => {
            let truth = compose_combined(&t.g1, &t.rotation(), &t.g2);
            sol.g21.distance(&truth) > G21_FAILURE_THRESHOLD
        }
        Mode::Rotation => sol.r21.angle_to(&t.rotation()).to_degrees() > ROTATION_FAILURE_DEG,
    };
    Ok(if failed { TrialOutcome::Failure } else { TrialOutcome::Success })
}

/// Failure-rate table. Trial `k` of count `c` uses seed
/// `derive_seed(derive_seed(master, c), k)`, so rows do not depend on thread
/// count or on which other counts are requested.
pub fn run_fig6(
    trials: usize,
    counts: &[usize],
    mode: Mode,
    template: &SynthConfig,
    opts: &SolveOptions,
    master_seed: u64,
) -> Result<Vec<Fig6Row>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    counts
        .iter()
        .map(|&count| {
            let base = derive_seed(master_seed, count as u64);
            let outcomes: Vec<TrialOutcome> = (0..trials as u64)
                .into_par_iter()
                .map(|k| run_trial(template, opts, mode, count, derive_seed(base, k)))
                .collect::<Result<_>>()?;
            let converged = outcomes.iter().filter(|o| **o != TrialOutcome::NotConverged).count();
            let failures = outcomes.iter().filter(|o| **o == TrialOutcome::Failure).count();
            let failure_rate = if converged > 0 { failures as f64 / converged as f64 } else { f64::NAN };
            log::info!("count {count}: {failures}/{converged} failures ({trials} trials)");
            Ok(Fig6Row { count, trials, converged, failures, failure_rate })
        })
        .collect()
}

pub fn to_csv(rows: &[Fig6Row]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{:.6}", r.count, r.trials, r.converged, r.failures, r.failure_rate);
    }
    s
}
