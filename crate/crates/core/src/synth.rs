//! Synthetic view pairs with known ground truth.
//!
//! View 2 points `X2` live in the unit ball; view 1 sees `X1 = R21 X2 + t`.
//! Observed normals are the true ones distorted by each view's GBR
//! (`Norm(G^-T n)`), so every observation is exactly consistent with the
//! truth before noise and outliers are applied.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correspondences::{CorrespondenceSet, NormalCorr, PixelCorr, ReflectionCorr};
use crate::error::{Error, Result};
use crate::geometry::{
    euler_to_matrix, gbr_apply_normal, invert_reflect, matrix_to_euler, reflect, EulerZXZ, GbrTransform,
    RotMat3, UnitVec3,
};
use crate::residuals::{model_f64, Direction, ParamVector};
use crate::seed::rng_for;

/// Attempts allowed for any rejection-sampled quantity.
pub const MAX_ATTEMPTS: usize = 100_000;
/// Ground truths are redrawn at most this often when a view pair admits no
/// co-visible normals (e.g. `|eta|` close to `pi`).
pub const MAX_TRUTH_DRAWS: usize = 100;
/// Minimum `n_z` of every observed normal.
pub const MIN_VISIBLE_Z: f64 = 0.05;
/// Pixel outliers violate the true model by at least this much.
pub const PIXEL_OUTLIER_MARGIN: f64 = 0.05;
/// Normal and reflection outliers violate the true model by at least this
/// angle in both directions.
pub const ANGLE_OUTLIER_MARGIN: f64 = 10.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_pixel: usize,
    pub n_normal: usize,
    pub n_reflection: usize,
    /// Range of `|eta|` in radians.
    pub rotation_angle_range: [f64; 2],
    /// `mu, nu ~ U(-r, r)`.
    pub gbr_mu_nu_range: f64,
    /// `ln(lambda) ~ U(-r, r)`.
    pub gbr_log_lambda_range: f64,
    /// Per-axis standard deviation (radians) of tangent-plane normal noise.
    pub noise_normal_sigma: f64,
    pub noise_pixel_sigma: f64,
    pub outlier_fraction: f64,
    /// Translation components `~ U(-r, r)`.
    pub translation_range: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_pixel: 20,
            n_normal: 20,
            n_reflection: 20,
            rotation_angle_range: [5f64.to_radians(), 175f64.to_radians()],
            gbr_mu_nu_range: 1.0,
            gbr_log_lambda_range: 2f64.ln(),
            noise_normal_sigma: 0.0,
            noise_pixel_sigma: 0.0,
            outlier_fraction: 0.0,
            translation_range: 0.5,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.rotation_angle_range;
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0 < lo && lo <= hi && hi < PI) {
            return bad("rotation_angle_range must satisfy 0 < lo <= hi < pi");
        }
        if !(self.noise_normal_sigma >= 0.0 && self.noise_pixel_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must be in [0, 1)");
        }
        if !(self.gbr_mu_nu_range >= 0.0 && self.gbr_log_lambda_range >= 0.0 && self.translation_range >= 0.0) {
            return bad("ranges must be non-negative");
        }
        Ok(())
    }
}

/// Ground truth of one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
    pub g1: GbrTransform,
    pub g2: GbrTransform,
    pub t: [f64; 2],
}

impl PairTruth {
    pub fn angles(&self) -> EulerZXZ {
        EulerZXZ::new(self.theta, self.phi, self.eta)
    }

    pub fn rotation(&self) -> RotMat3 {
        euler_to_matrix(&self.angles())
    }

    pub fn params(&self) -> ParamVector {
        ParamVector::from_parts(&self.angles(), &self.g1, &self.g2)
    }
}

/// Which observations were replaced by outliers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutlierLabels {
    pub pixels: Vec<bool>,
    pub normals: Vec<bool>,
    pub reflections: Vec<bool>,
}

impl OutlierLabels {
    pub fn count(&self) -> usize {
        [&self.pixels, &self.normals, &self.reflections]
            .iter()
            .map(|v| v.iter().filter(|&&k| k).count())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthInstance {
    pub truth: PairTruth,
    /// View-2 depth of every pixel correspondence's surface point.
    pub depths: Vec<f64>,
    pub observed: CorrespondenceSet,
    pub outliers: OutlierLabels,
}

fn sample_gbr(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> GbrTransform {
    let sym = |rng: &mut ChaCha8Rng, r: f64| if r > 0.0 { rng.random_range(-r..r) } else { 0.0 };
    let mu = sym(rng, cfg.gbr_mu_nu_range);
    let nu = sym(rng, cfg.gbr_mu_nu_range);
    let ll = sym(rng, cfg.gbr_log_lambda_range);
    GbrTransform::new(mu, nu, ll.exp()).expect("positive lambda")
}

/// Haar-uniform rotation conditioned on `|eta|` in `range`, written with a
/// random sign of `eta`.
fn sample_rotation(rng: &mut ChaCha8Rng, range: [f64; 2]) -> EulerZXZ {
    let theta = rng.random_range(-PI..PI);
    let phi = rng.random_range(-PI..PI);
    // Haar measure has density sin(eta) in eta, i.e. cos(eta) is uniform.
    let (c_hi, c_lo) = (range[0].cos(), range[1].cos());
    let eta = if c_hi > c_lo { rng.random_range(c_lo..c_hi).acos() } else { range[0] };
    let a = EulerZXZ::new(theta, phi, eta);
    if rng.random_bool(0.5) {
        a.flipped()
    } else {
        a
    }
}

fn unit_ball(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

fn hemisphere(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            let v = v / n;
            return if v.z < 0.0 { -v } else { v };
        }
    }
}

/// Isotropic tangent-plane Gaussian perturbation with per-axis `sigma`.
pub fn perturb_normal(rng: &mut ChaCha8Rng, n: &UnitVec3, sigma: f64) -> Result<UnitVec3> {
    if sigma == 0.0 {
        return Ok(*n);
    }
    let v = n.as_vector();
    let helper = if v.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = v.cross(&helper).normalize();
    let e2 = v.cross(&e1);
    for _ in 0..MAX_ATTEMPTS {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let p = v + sigma * (a * e1 + b * e2);
        if let Ok(u) = UnitVec3::new(p) {
            if u.z() > 0.0 {
                return Ok(u);
            }
        }
    }
    Err(Error::RejectionExhausted(MAX_ATTEMPTS))
}

fn visible(n: &UnitVec3) -> bool {
    n.z() > MIN_VISIBLE_Z
}

fn noise2(rng: &mut ChaCha8Rng, sigma: f64) -> [f64; 4] {
    if sigma == 0.0 {
        return [0.0; 4];
    }
    std::array::from_fn(|_| sigma * rng.sample::<f64, _>(StandardNormal))
}

fn chord_angle(d: &Vector3<f64>) -> f64 {
    2.0 * (d.norm() / 2.0).min(1.0).asin()
}

struct PairGen<'a> {
    cfg: &'a SynthConfig,
    r: RotMat3,
    g1: GbrTransform,
    g2: GbrTransform,
    t: [f64; 2],
    params: ParamVector,
}

impl PairGen<'_> {
    fn project(&self, x2: &Vector3<f64>) -> PixelCorr {
        let x1 = self.r.matrix() * x2;
        PixelCorr::new(x1.x + self.t[0], x1.y + self.t[1], x2.x, x2.y)
    }

    fn pixel(&self, rng: &mut ChaCha8Rng) -> (PixelCorr, f64) {
        let x2 = unit_ball(rng);
        let mut c = self.project(&x2);
        let e = noise2(rng, self.cfg.noise_pixel_sigma);
        c = PixelCorr::new(c.u1 + e[0], c.v1 + e[1], c.u2 + e[2], c.v2 + e[3]);
        (c, x2.z)
    }

    fn pixel_residual(&self, c: &PixelCorr) -> f64 {
        let m = model_f64(&self.params);
        m.pixel(&PixelCorr::new(c.u1 - self.t[0], c.v1 - self.t[1], c.u2, c.v2))
    }

    fn pixel_outlier(&self, rng: &mut ChaCha8Rng) -> Result<PixelCorr> {
        for _ in 0..MAX_ATTEMPTS {
            let a = unit_ball(rng);
            let b = unit_ball(rng);
            let c = PixelCorr::new(a.x + self.t[0], a.y + self.t[1], b.x, b.y);
            if self.pixel_residual(&c).abs() > PIXEL_OUTLIER_MARGIN {
                return Ok(c);
            }
        }
        Err(Error::RejectionExhausted(MAX_ATTEMPTS))
    }

    fn normal(&self, rng: &mut ChaCha8Rng) -> Result<NormalCorr> {
        for _ in 0..MAX_ATTEMPTS {
            let n2 = hemisphere(rng);
            let n1 = self.r.matrix() * n2;
            let (Ok(o1), Ok(o2)) = (gbr_apply_normal(&self.g1, &n1), gbr_apply_normal(&self.g2, &n2)) else {
                continue;
            };
            if n1.z <= 0.0 || !visible(&o1) || !visible(&o2) {
                continue;
            }
            let o1 = perturb_normal(rng, &o1, self.cfg.noise_normal_sigma)?;
            let o2 = perturb_normal(rng, &o2, self.cfg.noise_normal_sigma)?;
            let x2 = unit_ball(rng);
            let p = self.project(&x2);
            return Ok(NormalCorr::new(o1, o2).with_pixels(p.u1, p.v1, p.u2, p.v2));
        }
        Err(Error::RejectionExhausted(MAX_ATTEMPTS))
    }

    /// Smallest of the two directional angular violations of the truth.
    fn normal_violation(&self, c: &NormalCorr) -> f64 {
        let m = model_f64(&self.params);
        [Direction::OneFromTwo, Direction::TwoFromOne]
            .iter()
            .map(|&d| match m.normal(c, d) {
                Ok(r) => chord_angle(&Vector3::from(r)),
                Err(_) => PI,
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn reflection_violation(&self, c: &ReflectionCorr) -> f64 {
        let m = model_f64(&self.params);
        [Direction::OneFromTwo, Direction::TwoFromOne]
            .iter()
            .map(|&d| match m.reflection(c, d) {
                Ok(r) => chord_angle(&Vector3::from(r)),
                Err(_) => PI,
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn random_visible(&self, rng: &mut ChaCha8Rng) -> UnitVec3 {
        loop {
            if let Ok(u) = UnitVec3::new(hemisphere(rng)) {
                if visible(&u) {
                    return u;
                }
            }
        }
    }

    fn normal_outlier(&self, rng: &mut ChaCha8Rng, base: &NormalCorr) -> Result<NormalCorr> {
        for _ in 0..MAX_ATTEMPTS {
            let mut c = *base;
            c.n1 = self.random_visible(rng);
            if self.normal_violation(&c) > ANGLE_OUTLIER_MARGIN {
                return Ok(c);
            }
        }
        Err(Error::RejectionExhausted(MAX_ATTEMPTS))
    }

    fn reflection(&self, rng: &mut ChaCha8Rng) -> Result<ReflectionCorr> {
        for _ in 0..MAX_ATTEMPTS {
            let n2 = hemisphere(rng);
            let Ok(w2) = reflect(&n2) else { continue };
            let w1 = self.r.matrix() * w2.as_vector();
            let Ok(n1) = invert_reflect(&w1) else { continue };
            if n1.z() <= 0.0 {
                continue;
            }
            let (Ok(o1), Ok(o2)) = (gbr_apply_normal(&self.g1, n1.as_vector()), gbr_apply_normal(&self.g2, &n2)) else {
                continue;
            };
            if !visible(&o1) || !visible(&o2) {
                continue;
            }
            let o1 = perturb_normal(rng, &o1, self.cfg.noise_normal_sigma)?;
            let o2 = perturb_normal(rng, &o2, self.cfg.noise_normal_sigma)?;
            return Ok(ReflectionCorr::new(o1, o2));
        }
        Err(Error::RejectionExhausted(MAX_ATTEMPTS))
    }

    fn reflection_outlier(&self, rng: &mut ChaCha8Rng, base: &ReflectionCorr) -> Result<ReflectionCorr> {
        for _ in 0..MAX_ATTEMPTS {
            let c = ReflectionCorr::new(self.random_visible(rng), base.n2);
            if self.reflection_violation(&c) > ANGLE_OUTLIER_MARGIN {
                return Ok(c);
            }
        }
        Err(Error::RejectionExhausted(MAX_ATTEMPTS))
    }

    fn generate(&self, rng: &mut ChaCha8Rng) -> Result<(CorrespondenceSet, Vec<f64>, OutlierLabels)> {
        let cfg = self.cfg;
        let mut set = CorrespondenceSet::default();
        let mut depths = Vec::with_capacity(cfg.n_pixel);
        let mut labels = OutlierLabels::default();
        for _ in 0..cfg.n_pixel {
            let (c, z) = self.pixel(rng);
            let out = rng.random_bool(cfg.outlier_fraction);
            set.pixels.push(if out { self.pixel_outlier(rng)? } else { c });
            depths.push(z);
            labels.pixels.push(out);
        }
        for _ in 0..cfg.n_normal {
            let c = self.normal(rng)?;
            let out = rng.random_bool(cfg.outlier_fraction);
            set.normals.push(if out { self.normal_outlier(rng, &c)? } else { c });
            labels.normals.push(out);
        }
        for _ in 0..cfg.n_reflection {
            let c = self.reflection(rng)?;
            let out = rng.random_bool(cfg.outlier_fraction);
            set.reflections.push(if out { self.reflection_outlier(rng, &c)? } else { c });
            labels.reflections.push(out);
        }
        Ok((set, depths, labels))
    }
}

fn pair_with(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    angles: EulerZXZ,
    g1: GbrTransform,
    g2: GbrTransform,
) -> Result<SynthInstance> {
    let tr = cfg.translation_range;
    let t = if tr > 0.0 { [rng.random_range(-tr..tr), rng.random_range(-tr..tr)] } else { [0.0; 2] };
    let gen = PairGen {
        cfg,
        r: euler_to_matrix(&angles),
        g1,
        g2,
        t,
        params: ParamVector::from_parts(&angles, &g1, &g2),
    };
    let (observed, depths, outliers) = gen.generate(rng)?;
    Ok(SynthInstance {
        truth: PairTruth { theta: angles.theta, phi: angles.phi, eta: angles.eta, g1, g2, t },
        depths,
        observed,
        outliers,
    })
}

/// One synthetic view pair, fully determined by `cfg` (including its seed).
pub fn generate(cfg: &SynthConfig) -> Result<SynthInstance> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.rng_seed, 0);
    for _ in 0..MAX_TRUTH_DRAWS {
        let angles = sample_rotation(&mut rng, cfg.rotation_angle_range);
        let g1 = sample_gbr(&mut rng, cfg);
        let g2 = sample_gbr(&mut rng, cfg);
        match pair_with(&mut rng, cfg, angles, g1, g2) {
            Err(Error::RejectionExhausted(_)) => continue,
            r => return r,
        }
    }
    Err(Error::RejectionExhausted(MAX_ATTEMPTS))
}

/// Views observing one object; `rotations[k]` maps object coordinates into
/// view `k` (`rotations[0]` is the identity).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiviewInstance {
    pub rotations: Vec<RotMat3>,
    pub gbrs: Vec<GbrTransform>,
    /// `(i, j, pair)` with view `i` playing view 1 and `j` view 2, so the
    /// pair's `R21` is `R_i R_j^T`.
    pub pairs: Vec<(usize, usize, SynthInstance)>,
}

/// `n_views` views, one normal map (and GBR) per view, and a synthetic
/// pair for every `i < j`. Every pair's `|eta|` lies in the configured range.
pub fn generate_multiview(cfg: &SynthConfig, n_views: usize) -> Result<MultiviewInstance> {
    cfg.validate()?;
    if n_views < 2 {
        return Err(Error::InvalidConfig("need at least two views".into()));
    }
    let mut rng = rng_for(cfg.rng_seed, 0);
    for draw in 0..MAX_TRUTH_DRAWS as u64 {
        match draw_multiview(&mut rng, cfg, n_views, draw) {
            Err(Error::RejectionExhausted(_)) => continue,
            r => return r,
        }
    }
    Err(Error::RejectionExhausted(MAX_ATTEMPTS))
}

fn draw_multiview(rng: &mut ChaCha8Rng, cfg: &SynthConfig, n_views: usize, draw: u64) -> Result<MultiviewInstance> {
    let rng = &mut *rng;
    let [lo, hi] = cfg.rotation_angle_range;
    let mut rotations = vec![RotMat3::identity()];
    for _ in 1..n_views {
        let mut found = None;
        for _ in 0..MAX_ATTEMPTS {
            let a = sample_rotation(rng, [1e-3, PI - 1e-3]);
            let r = euler_to_matrix(&a);
            let ok = rotations.iter().all(|q: &RotMat3| {
                let eta = matrix_to_euler(&q.compose(&r.transpose())).eta.abs();
                (lo..=hi).contains(&eta)
            });
            if ok {
                found = Some(r);
                break;
            }
        }
        rotations.push(found.ok_or(Error::RejectionExhausted(MAX_ATTEMPTS))?);
    }
    let gbrs: Vec<GbrTransform> = (0..n_views).map(|_| sample_gbr(rng, cfg)).collect();
    let mut pairs = Vec::new();
    for i in 0..n_views {
        for j in i + 1..n_views {
            let angles = matrix_to_euler(&rotations[i].compose(&rotations[j].transpose()));
            let mut prng = rng_for(cfg.rng_seed, 1 + draw * 1000 + pairs.len() as u64);
            pairs.push((i, j, pair_with(&mut prng, cfg, angles, gbrs[i], gbrs[j])?));
        }
    }
    Ok(MultiviewInstance { rotations, gbrs, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondences::center;
    use crate::residuals::{total_objective, Weights};

    fn cfg(seed: u64) -> SynthConfig {
        SynthConfig { rng_seed: seed, ..Default::default() }
    }

    #[test]
    fn noiseless_truth_has_zero_objective() {
        for seed in 0..50 {
            let inst = generate(&cfg(seed)).unwrap();
            let t = &inst.truth;
            // Translation enters only through the pixel offsets; remove it.
            let shifted = inst.observed.shifted(&[t.t[0], t.t[1], 0.0, 0.0]);
            let f = total_objective(&t.params(), &shifted, &Weights::default()).unwrap();
            assert!(f < 1e-10, "seed {seed}: {f}");
            // Centering both views removes it as well.
            let (c, _) = center(&inst.observed).unwrap();
            assert!(total_objective(&t.params(), &c, &Weights::default()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn eta_in_range() {
        for seed in 0..200 {
            let e = generate(&cfg(seed)).unwrap().truth.eta.abs().to_degrees();
            assert!((5.0 - 1e-9..=175.0 + 1e-9).contains(&e), "{e}");
        }
    }

    #[test]
    fn identity_truth_gives_equal_normals() {
        let c = SynthConfig {
            rotation_angle_range: [1e-9, 1e-9],
            gbr_mu_nu_range: 0.0,
            gbr_log_lambda_range: 0.0,
            translation_range: 0.0,
            ..cfg(3)
        };
        let mut rng = rng_for(3, 0);
        let inst = pair_with(&mut rng, &c, EulerZXZ::new(0.0, 0.0, 0.0), GbrTransform::identity(), GbrTransform::identity()).unwrap();
        for n in &inst.observed.normals {
            assert!(n.n1.angle_to(&n.n2) < 1e-12);
        }
        for r in &inst.observed.reflections {
            assert!(r.n1.angle_to(&r.n2) < 1e-7);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SynthConfig { noise_normal_sigma: 0.01, outlier_fraction: 0.2, ..cfg(9) }).unwrap();
        let b = generate(&SynthConfig { noise_normal_sigma: 0.01, outlier_fraction: 0.2, ..cfg(9) }).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observed.to_json_string(), b.observed.to_json_string());
        assert_ne!(a, generate(&cfg(10)).unwrap());
    }

    #[test]
    fn outlier_fraction_is_binomial() {
        let inst = generate(&SynthConfig {
            n_pixel: 100,
            n_normal: 100,
            n_reflection: 100,
            outlier_fraction: 0.3,
            ..cfg(4)
        })
        .unwrap();
        // 300 Bernoulli(0.3) draws: mean 90, sd ~7.9.
        let n = inst.outliers.count();
        assert!((90 - 32..=90 + 32).contains(&n), "{n}");
    }

    #[test]
    fn outliers_violate_truth() {
        let inst = generate(&SynthConfig { outlier_fraction: 0.5, ..cfg(5) }).unwrap();
        let t = &inst.truth;
        let p = t.params();
        let shifted = inst.observed.shifted(&[t.t[0], t.t[1], 0.0, 0.0]);
        for (c, &o) in shifted.pixels.iter().zip(&inst.outliers.pixels) {
            let r = crate::residuals::residual_pixel(&p, c).abs();
            assert_eq!(o, r > 1e-9, "{r}");
            if o {
                assert!(r > PIXEL_OUTLIER_MARGIN);
            }
        }
        for (c, &o) in inst.observed.normals.iter().zip(&inst.outliers.normals) {
            let e = crate::residuals::normal_angle_error(&p, c);
            assert_eq!(o, e > ANGLE_OUTLIER_MARGIN, "{e}");
        }
        for (c, &o) in inst.observed.reflections.iter().zip(&inst.outliers.reflections) {
            let e = crate::residuals::reflection_angle_error(&p, c);
            assert_eq!(o, e > ANGLE_OUTLIER_MARGIN, "{e}");
        }
    }

    #[test]
    fn noise_calibration() {
        let mut rng = rng_for(11, 0);
        let sigma = 1f64.to_radians();
        let mut angles: Vec<f64> = (0..10_000)
            .map(|_| {
                let n = UnitVec3::new(hemisphere(&mut rng)).unwrap();
                let n = if n.z() < 0.2 { UnitVec3::from_xyz(0.0, 0.0, 1.0).unwrap() } else { n };
                perturb_normal(&mut rng, &n, sigma).unwrap().angle_to(&n).to_degrees()
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let median = angles[angles.len() / 2];
        assert!((0.8..=1.2).contains(&median), "{median}");
    }

    #[test]
    fn depths_match_projection() {
        let inst = generate(&cfg(6)).unwrap();
        let r = inst.truth.rotation();
        let m = r.matrix();
        for (c, z) in inst.observed.pixels.iter().zip(&inst.depths) {
            let x1 = m * Vector3::new(c.u2, c.v2, *z);
            assert!((x1.x + inst.truth.t[0] - c.u1).abs() < 1e-12);
            assert!((x1.y + inst.truth.t[1] - c.v1).abs() < 1e-12);
        }
    }

    #[test]
    fn multiview_pairs_are_consistent() {
        let mv = generate_multiview(&SynthConfig { n_pixel: 6, n_normal: 6, n_reflection: 2, ..cfg(8) }, 3).unwrap();
        assert_eq!(mv.pairs.len(), 3);
        for (i, j, inst) in &mv.pairs {
            let expect = mv.rotations[*i].compose(&mv.rotations[*j].transpose());
            assert!(inst.truth.rotation().angle_to(&expect) < 1e-9);
            assert_eq!(inst.truth.g1, mv.gbrs[*i]);
            assert_eq!(inst.truth.g2, mv.gbrs[*j]);
            let t = &inst.truth;
            let shifted = inst.observed.shifted(&[t.t[0], t.t[1], 0.0, 0.0]);
            assert!(total_objective(&t.params(), &shifted, &Weights::default()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(generate(&SynthConfig { outlier_fraction: 1.0, ..cfg(0) }).is_err());
        assert!(generate(&SynthConfig { noise_pixel_sigma: -1.0, ..cfg(0) }).is_err());
        assert!(generate(&SynthConfig { rotation_angle_range: [0.0, 1.0], ..cfg(0) }).is_err());
    }
}
