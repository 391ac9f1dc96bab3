//! The two-view objective
//! `f = f_IM + f_NM(12) + f_NM(21) + f_RM(12) + f_RM(21)`
//! as per-correspondence residuals, a stacked residual vector, and an exact
//! forward-mode Jacobian.
//!
//! Residuals are written once against [`Scalar`] so the same code yields
//! costs (`f64`) and derivatives ([`Jet`]).

use nalgebra::{DMatrix, DVector, Vector3};

use crate::autodiff::{Jet, Scalar};
use crate::correspondences::{CorrespondenceSet, NormalCorr, PixelCorr, ReflectionCorr};
use crate::error::{Error, Result};
use crate::geometry::{
    compose_combined, euler_to_matrix, CombinedTransform, EulerZXZ, GbrTransform, RotMat3,
    MIN_HALF_VECTOR_NORM, MIN_NORM,
};

/// Number of free parameters of a view pair.
pub const NUM_PARAMS: usize = 9;

/// Unknowns of one view pair, with `lambda_k = exp(log_lambda_k)`.
///
/// Array order: `theta, phi, eta, mu1, nu1, mu2, nu2, log_lambda1, log_lambda2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVector {
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
    pub mu1: f64,
    pub nu1: f64,
    pub mu2: f64,
    pub nu2: f64,
    pub log_lambda1: f64,
    pub log_lambda2: f64,
}

impl ParamVector {
    pub fn identity() -> Self {
        Self::from_array([0.0; NUM_PARAMS])
    }

    pub fn from_parts(angles: &EulerZXZ, g1: &GbrTransform, g2: &GbrTransform) -> Self {
        Self {
            theta: angles.theta,
            phi: angles.phi,
            eta: angles.eta,
            mu1: g1.mu(),
            nu1: g1.nu(),
            mu2: g2.mu(),
            nu2: g2.nu(),
            log_lambda1: g1.lambda().ln(),
            log_lambda2: g2.lambda().ln(),
        }
    }

    pub fn from_array(a: [f64; NUM_PARAMS]) -> Self {
        Self {
            theta: a[0],
            phi: a[1],
            eta: a[2],
            mu1: a[3],
            nu1: a[4],
            mu2: a[5],
            nu2: a[6],
            log_lambda1: a[7],
            log_lambda2: a[8],
        }
    }

    pub fn to_array(&self) -> [f64; NUM_PARAMS] {
        [
            self.theta,
            self.phi,
            self.eta,
            self.mu1,
            self.nu1,
            self.mu2,
            self.nu2,
            self.log_lambda1,
            self.log_lambda2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    pub fn angles(&self) -> EulerZXZ {
        EulerZXZ::new(self.theta, self.phi, self.eta)
    }

    pub fn rotation(&self) -> RotMat3 {
        euler_to_matrix(&self.angles())
    }

    pub fn g1(&self) -> GbrTransform {
        GbrTransform::new(self.mu1, self.nu1, self.log_lambda1.exp())
            .expect("exp of a finite value is positive")
    }

    pub fn g2(&self) -> GbrTransform {
        GbrTransform::new(self.mu2, self.nu2, self.log_lambda2.exp())
            .expect("exp of a finite value is positive")
    }

    pub fn combined(&self) -> CombinedTransform {
        compose_combined(&self.g1(), &self.rotation(), &self.g2())
    }

    /// Parameters of the same physical pair with the views exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            theta: self.phi,
            phi: self.theta,
            eta: -self.eta,
            mu1: self.mu2,
            nu1: self.nu2,
            mu2: self.mu1,
            nu2: self.nu1,
            log_lambda1: self.log_lambda2,
            log_lambda2: self.log_lambda1,
        }
    }
}

/// Which correspondence maps a normal into which view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `N1 - map(N2)`: the (12) term.
    OneFromTwo,
    /// `N2 - map(N1)`: the (21) term.
    TwoFromOne,
}

/// Which correspondence kinds enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// Pixel and 3D correspondences (the first step).
    PixelNormal,
    /// All three kinds.
    All,
}

/// Per-kind weights on the squared residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub pixel: f64,
    pub normal: f64,
    pub reflection: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { pixel: 1.0, normal: 1.0, reflection: 1.0 }
    }
}

// ---------------------------------------------------------------------------
// Generic kernels

pub(crate) type V3<T> = [T; 3];
pub(crate) type M3<T> = [[T; 3]; 3];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Gbr<T> {
    pub mu: T,
    pub nu: T,
    pub lambda: T,
}

impl<T: Scalar> Gbr<T> {
    pub fn from_log(mu: T, nu: T, log_lambda: T) -> Self {
        Self { mu, nu, lambda: log_lambda.exp() }
    }

    /// `G^T v`
    #[inline]
    fn t_apply(&self, v: &V3<T>) -> V3<T> {
        [v[0] + self.mu * v[2], v[1] + self.nu * v[2], self.lambda * v[2]]
    }

    /// `G^-T v`
    #[inline]
    fn inv_t_apply(&self, v: &V3<T>) -> V3<T> {
        let z = v[2] / self.lambda;
        [v[0] - self.mu * z, v[1] - self.nu * z, z]
    }
}

#[inline]
pub(crate) fn mat_vec<T: Scalar>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    [0, 1, 2].map(|i| m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2])
}

#[inline]
pub(crate) fn mat_t_vec<T: Scalar>(m: &M3<T>, v: &V3<T>) -> V3<T> {
    [0, 1, 2].map(|i| m[0][i] * v[0] + m[1][i] * v[1] + m[2][i] * v[2])
}

#[inline]
fn dot<T: Scalar>(a: &V3<T>, b: &V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn normalize_k<T: Scalar>(v: &V3<T>, min: f64) -> Result<V3<T>> {
    let n = dot(v, v).sqrt();
    if !(n.value() >= min) {
        return Err(Error::DegenerateVector { norm: n.value(), min });
    }
    Ok(v.map(|x| x / n))
}

#[inline]
fn reflect_k<T: Scalar>(n: &V3<T>) -> Result<V3<T>> {
    let nn = dot(n, n);
    if !(nn.value() > MIN_NORM) {
        return Err(Error::DegenerateVector { norm: nn.value().sqrt(), min: MIN_NORM.sqrt() });
    }
    let k = T::cst(2.0) * n[2] / nn;
    Ok([k * n[0], k * n[1], k * n[2] - T::cst(1.0)])
}

#[inline]
fn invert_reflect_k<T: Scalar>(w: &V3<T>) -> Result<V3<T>> {
    normalize_k(&[w[0], w[1], w[2] + T::cst(1.0)], MIN_HALF_VECTOR_NORM)
}

pub(crate) fn euler_matrix_k<T: Scalar>(theta: T, phi: T, eta: T) -> M3<T> {
    let (st, ct) = (theta.sin(), theta.cos());
    let (sp, cp) = (phi.sin(), phi.cos());
    let (se, ce) = (eta.sin(), eta.cos());
    [
        [cp * ct + sp * st * ce, cp * st - sp * ct * ce, sp * se],
        [sp * ct - cp * st * ce, sp * st + cp * ct * ce, -(cp * se)],
        [-(st * se), ct * se, ce],
    ]
}

fn lift<T: Scalar>(v: &Vector3<f64>) -> V3<T> {
    [T::cst(v.x), T::cst(v.y), T::cst(v.z)]
}

/// Everything a view pair's residuals depend on.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairModel<T> {
    /// `R21`, mapping view-2 vectors into view 1.
    pub rot: M3<T>,
    pub g1: Gbr<T>,
    pub g2: Gbr<T>,
    /// `(cos phi, sin phi)` and `(cos theta, sin theta)` of the pixel constraint.
    pub axis1: [T; 2],
    pub axis2: [T; 2],
}

impl<T: Scalar> PairModel<T> {
    pub fn from_params(p: &[T; NUM_PARAMS]) -> Self {
        let [theta, phi, eta, mu1, nu1, mu2, nu2, ll1, ll2] = *p;
        Self {
            rot: euler_matrix_k(theta, phi, eta),
            g1: Gbr::from_log(mu1, nu1, ll1),
            g2: Gbr::from_log(mu2, nu2, ll2),
            axis1: [phi.cos(), phi.sin()],
            axis2: [theta.cos(), theta.sin()],
        }
    }

    /// Pixel-constraint axes recovered from the matrix: `(cos phi, sin phi)`
    /// is `(-r23, r13) / |.|` and `(cos theta, sin theta)` is
    /// `(r32, -r31) / |.|`, both carrying the sign of `sin(eta)`, which the
    /// squared residual ignores.
    pub fn from_matrix(rot: M3<T>, g1: Gbr<T>, g2: Gbr<T>) -> Result<Self> {
        let a1 = [-rot[1][2], rot[0][2]];
        let a2 = [rot[2][1], -rot[2][0]];
        let n1 = (a1[0] * a1[0] + a1[1] * a1[1]).sqrt();
        let n2 = (a2[0] * a2[0] + a2[1] * a2[1]).sqrt();
        if !(n1.value() > MIN_NORM && n2.value() > MIN_NORM) {
            return Err(Error::DegenerateEta("relative rotation about the viewing axis only".into()));
        }
        Ok(Self {
            rot,
            g1,
            g2,
            axis1: [a1[0] / n1, a1[1] / n1],
            axis2: [a2[0] / n2, a2[1] / n2],
        })
    }

    #[inline]
    pub fn pixel(&self, c: &PixelCorr) -> T {
        let t1 = self.axis1[0] * T::cst(c.u1) + self.axis1[1] * T::cst(c.v1);
        let t2 = self.axis2[0] * T::cst(c.u2) + self.axis2[1] * T::cst(c.v2);
        t1 - t2
    }

    /// `Norm(G21 n2)` or `Norm(G12 n1)`.
    pub fn map_normal(&self, n: &Vector3<f64>, dir: Direction) -> Result<V3<T>> {
        let n = lift::<T>(n);
        let v = match dir {
            Direction::OneFromTwo => self.g1.inv_t_apply(&mat_vec(&self.rot, &self.g2.t_apply(&n))),
            Direction::TwoFromOne => self.g2.inv_t_apply(&mat_t_vec(&self.rot, &self.g1.t_apply(&n))),
        };
        normalize_k(&v, MIN_NORM)
    }

    /// Reflection-map transfer of a normal from the other view into the
    /// target view of `dir`.
    pub fn map_reflection(&self, n: &Vector3<f64>, dir: Direction) -> Result<V3<T>> {
        let n = lift::<T>(n);
        let v = match dir {
            Direction::OneFromTwo => {
                let w = mat_vec(&self.rot, &reflect_k(&self.g2.t_apply(&n))?);
                self.g1.inv_t_apply(&invert_reflect_k(&w)?)
            }
            Direction::TwoFromOne => {
                let w = mat_t_vec(&self.rot, &reflect_k(&self.g1.t_apply(&n))?);
                self.g2.inv_t_apply(&invert_reflect_k(&w)?)
            }
        };
        normalize_k(&v, MIN_NORM)
    }

    pub fn normal(&self, c: &NormalCorr, dir: Direction) -> Result<V3<T>> {
        let (target, source) = oriented(c.n1.as_vector(), c.n2.as_vector(), dir);
        let m = self.map_normal(source, dir)?;
        Ok([0, 1, 2].map(|i| T::cst(target[i]) - m[i]))
    }

    pub fn reflection(&self, c: &ReflectionCorr, dir: Direction) -> Result<V3<T>> {
        let (target, source) = oriented(c.n1.as_vector(), c.n2.as_vector(), dir);
        let m = self.map_reflection(source, dir)?;
        Ok([0, 1, 2].map(|i| T::cst(target[i]) - m[i]))
    }

    /// Appends the weighted residuals in the canonical order: pixels, then
    /// normals (12), normals (21), reflections (12), reflections (21).
    pub fn push_residuals(
        &self,
        set: &CorrespondenceSet,
        selector: Selector,
        weights: &Weights,
        out: &mut Vec<T>,
    ) -> Result<()> {
        let wp = T::cst(weights.pixel.sqrt());
        for c in &set.pixels {
            out.push(wp * self.pixel(c));
        }
        let wn = T::cst(weights.normal.sqrt());
        for dir in [Direction::OneFromTwo, Direction::TwoFromOne] {
            for c in &set.normals {
                out.extend(self.normal(c, dir)?.map(|r| wn * r));
            }
        }
        if selector == Selector::All {
            let wr = T::cst(weights.reflection.sqrt());
            for dir in [Direction::OneFromTwo, Direction::TwoFromOne] {
                for c in &set.reflections {
                    out.extend(self.reflection(c, dir)?.map(|r| wr * r));
                }
            }
        }
        Ok(())
    }
}

fn oriented<'a>(
    n1: &'a Vector3<f64>,
    n2: &'a Vector3<f64>,
    dir: Direction,
) -> (&'a Vector3<f64>, &'a Vector3<f64>) {
    match dir {
        Direction::OneFromTwo => (n1, n2),
        Direction::TwoFromOne => (n2, n1),
    }
}

fn to_vec3<T: Scalar>(v: V3<T>) -> Vector3<f64> {
    Vector3::new(v[0].value(), v[1].value(), v[2].value())
}

pub(crate) fn model_f64(p: &ParamVector) -> PairModel<f64> {
    PairModel::from_params(&p.to_array())
}

// ---------------------------------------------------------------------------
// Public f64 API

/// Pixel residual `t_phi - t_theta` with `t_phi = u1 cos(phi) + v1 sin(phi)`
/// and `t_theta = u2 cos(theta) + v2 sin(theta)`.
pub fn residual_pixel(p: &ParamVector, c: &PixelCorr) -> f64 {
    model_f64(p).pixel(c)
}

/// 3D-correspondence residual, e.g. `N1 - Norm(G21 N2)` for
/// [`Direction::OneFromTwo`].
pub fn residual_normal(p: &ParamVector, c: &NormalCorr, dir: Direction) -> Result<Vector3<f64>> {
    model_f64(p).normal(c, dir).map(to_vec3)
}

/// Reflection residual, e.g.
/// `N1 - Norm(G1^-T w_r^-1(R21 w_r(G2^T N2)))` for [`Direction::OneFromTwo`].
pub fn residual_reflection(
    p: &ParamVector,
    c: &ReflectionCorr,
    dir: Direction,
) -> Result<Vector3<f64>> {
    model_f64(p).reflection(c, dir).map(to_vec3)
}

/// Angular error (radians) of a 3D correspondence, worst of both directions.
pub fn normal_angle_error(p: &ParamVector, c: &NormalCorr) -> f64 {
    model_f64(p).normal_angle(c)
}

/// Angular error (radians) of a reflection correspondence, worst of both
/// directions. Degenerate transfers count as `pi`.
pub fn reflection_angle_error(p: &ParamVector, c: &ReflectionCorr) -> f64 {
    model_f64(p).reflection_angle(c)
}

impl PairModel<f64> {
    pub fn normal_angle(&self, c: &NormalCorr) -> f64 {
        angle_error(self, c.n1.as_vector(), c.n2.as_vector(), PairModel::map_normal)
    }

    pub fn reflection_angle(&self, c: &ReflectionCorr) -> f64 {
        angle_error(self, c.n1.as_vector(), c.n2.as_vector(), PairModel::map_reflection)
    }
}

fn angle_error(
    p: &PairModel<f64>,
    n1: &Vector3<f64>,
    n2: &Vector3<f64>,
    map: fn(&PairModel<f64>, &Vector3<f64>, Direction) -> Result<V3<f64>>,
) -> f64 {
    let one = |target: &Vector3<f64>, source, dir| match map(p, source, dir) {
        Ok(m) => {
            let m = to_vec3(m);
            target.cross(&m).norm().atan2(target.dot(&m))
        }
        Err(_) => std::f64::consts::PI,
    };
    one(n1, n2, Direction::OneFromTwo).max(one(n2, n1, Direction::TwoFromOne))
}

/// Stacked residuals of the selected terms (unit weights).
pub fn residual_vector(p: &ParamVector, set: &CorrespondenceSet, selector: Selector) -> Result<Vec<f64>> {
    Objective::new(set, selector).residuals(p)
}

/// `f = f_IM + f_NM(12) + f_NM(21) + f_RM(12) + f_RM(21)`, weighted.
pub fn total_objective(p: &ParamVector, set: &CorrespondenceSet, weights: &Weights) -> Result<f64> {
    Objective::new(set, Selector::All).with_weights(*weights).cost(p)
}

/// The five terms of the objective, unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveTerms {
    pub pixel: f64,
    pub normal_12: f64,
    pub normal_21: f64,
    pub reflection_12: f64,
    pub reflection_21: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.pixel + self.normal_12 + self.normal_21 + self.reflection_12 + self.reflection_21
    }

    pub fn pixel_normal(&self) -> f64 {
        self.pixel + self.normal_12 + self.normal_21
    }

    pub fn reflection(&self) -> f64 {
        self.reflection_12 + self.reflection_21
    }
}

pub fn objective_terms(p: &ParamVector, set: &CorrespondenceSet) -> Result<ObjectiveTerms> {
    let m = model_f64(p);
    let sq = |v: V3<f64>| v.iter().map(|x| x * x).sum::<f64>();
    let mut t = ObjectiveTerms {
        pixel: set.pixels.iter().map(|c| m.pixel(c).powi(2)).sum(),
        ..Default::default()
    };
    for c in &set.normals {
        t.normal_12 += sq(m.normal(c, Direction::OneFromTwo)?);
        t.normal_21 += sq(m.normal(c, Direction::TwoFromOne)?);
    }
    for c in &set.reflections {
        t.reflection_12 += sq(m.reflection(c, Direction::OneFromTwo)?);
        t.reflection_21 += sq(m.reflection(c, Direction::TwoFromOne)?);
    }
    Ok(t)
}

/// Objective over a fixed correspondence set with exact derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub set: &'a CorrespondenceSet,
    pub selector: Selector,
    pub weights: Weights,
}

impl<'a> Objective<'a> {
    pub fn new(set: &'a CorrespondenceSet, selector: Selector) -> Self {
        Self { set, selector, weights: Weights::default() }
    }

    pub fn with_weights(mut self, weights: Weights) -> Self {
        self.weights = weights;
        self
    }

    pub fn num_residuals(&self) -> usize {
        let refl = match self.selector {
            Selector::All => 6 * self.set.reflections.len(),
            Selector::PixelNormal => 0,
        };
        self.set.pixels.len() + 6 * self.set.normals.len() + refl
    }

    pub fn residuals(&self, p: &ParamVector) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.num_residuals());
        model_f64(p).push_residuals(self.set, self.selector, &self.weights, &mut out)?;
        Ok(out)
    }

    pub fn cost(&self, p: &ParamVector) -> Result<f64> {
        Ok(self.residuals(p)?.iter().map(|r| r * r).sum())
    }

    /// Residuals and their Jacobian (rows: residuals, columns: the nine
    /// parameters in [`ParamVector`] array order).
    pub fn jacobian(&self, p: &ParamVector) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let a = p.to_array();
        let jets: [Jet<NUM_PARAMS>; NUM_PARAMS] = std::array::from_fn(|i| Jet::var(a[i], i));
        let mut out = Vec::with_capacity(self.num_residuals());
        PairModel::from_params(&jets).push_residuals(self.set, self.selector, &self.weights, &mut out)?;
        let r = DVector::from_iterator(out.len(), out.iter().map(|j| j.v));
        let jac = DMatrix::from_fn(out.len(), NUM_PARAMS, |i, k| out[i].d[k]);
        Ok((r, jac))
    }

    /// Exact gradient of the cost, `2 J^T r`.
    pub fn gradient(&self, p: &ParamVector) -> Result<[f64; NUM_PARAMS]> {
        let (r, j) = self.jacobian(p)?;
        let g = j.transpose() * r * 2.0;
        Ok(std::array::from_fn(|i| g[i]))
    }
}
