//! Exact 3x3 geometry: z-x-z Euler rotations, GBR transforms, the mirror
//! reflection of the viewing direction, and the combined transform
//! `G21 = G1^-T R21 G2^T`.
//!
//! Camera convention: orthographic, image plane `xy`, viewing direction
//! `omega_o = (0, 0, 1)` pointing from the surface towards the camera.
//! Visible normals therefore have a positive `z` component.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Vectors shorter than this are refused by [`normalize`].
pub const MIN_NORM: f64 = 1e-12;
/// `invert_reflect` refuses rays this close to `-omega_o`.
pub const MIN_HALF_VECTOR_NORM: f64 = 1e-9;

/// Direction from the surface towards the camera.
pub fn view_direction() -> Vector3<f64> {
    Vector3::z()
}

/// Euclidean normalization; errors instead of returning NaN or zero.
pub fn normalize(v: &Vector3<f64>) -> Result<Vector3<f64>> {
    let n = v.norm();
    if !(n >= MIN_NORM) {
        return Err(Error::DegenerateVector { norm: n, min: MIN_NORM });
    }
    Ok(v / n)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// A unit 3-vector (surface normal or ray direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVec3(Vector3<f64>);

impl UnitVec3 {
    /// Normalizes `v`; fails on near-zero input.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        normalize(&v).map(Self)
    }

    pub fn from_xyz(x: f64, y: f64, z: f64) -> Result<Self> {
        Self::new(Vector3::new(x, y, z))
    }

    /// Wraps a vector already known to be unit length.
    pub(crate) fn new_unchecked(v: Vector3<f64>) -> Self {
        Self(v)
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }
    pub fn y(&self) -> f64 {
        self.0.y
    }
    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    /// Angle between two unit vectors in radians, accurate near zero.
    pub fn angle_to(&self, other: &UnitVec3) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }
}

/// Relative rotation as z-x-z Euler angles: `R = Rz(phi) Rx(eta) Rz(-theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerZXZ {
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
}

impl EulerZXZ {
    /// Builds the angles with each one wrapped into `(-pi, pi]`.
    pub fn new(theta: f64, phi: f64, eta: f64) -> Self {
        Self {
            theta: wrap_angle(theta),
            phi: wrap_angle(phi),
            eta: wrap_angle(eta),
        }
    }

    /// The same rotation written with the opposite sign of `eta`:
    /// `(theta + pi, phi + pi, -eta)`.
    pub fn flipped(&self) -> Self {
        Self::new(self.theta + PI, self.phi + PI, -self.eta)
    }
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotMat3(Matrix3<f64>);

impl RotMat3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` if it is orthonormal with unit determinant within `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Option<Self> {
        let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        (orth <= tol && (det - 1.0).abs() <= tol).then_some(Self(m))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn rot_x(a: f64) -> Self {
        Self(rot_x(a))
    }

    pub fn rot_z(a: f64) -> Self {
        Self(rot_z(a))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &RotMat3) -> Self {
        Self(self.0 * other.0)
    }

    /// Row-major element `r_{row,col}` with 1-based indices, matching the
    /// usual `r11 .. r33` naming.
    pub fn r(&self, row: usize, col: usize) -> f64 {
        self.0[(row - 1, col - 1)]
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        matrix_rows(&self.0)
    }

    /// Geodesic angle between two rotations, in radians.
    pub fn angle_to(&self, other: &RotMat3) -> f64 {
        rotation_angle(&(self.0 * other.0.transpose()))
    }
}

/// Rotation angle of a (near) rotation matrix, robust near 0 and pi.
pub fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let trace = m.trace();
    axis.norm().atan2(trace - 1.0)
}

pub(crate) fn matrix_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

pub(crate) fn matrix_from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
    )
}

/// `R = Rz(phi) Rx(eta) Rz(-theta)` written out element by element.
pub fn euler_to_matrix(a: &EulerZXZ) -> RotMat3 {
    let (st, ct) = a.theta.sin_cos();
    let (sp, cp) = a.phi.sin_cos();
    let (se, ce) = a.eta.sin_cos();
    RotMat3(Matrix3::new(
        cp * ct + sp * st * ce,
        cp * st - sp * ct * ce,
        sp * se,
        sp * ct - cp * st * ce,
        sp * st + cp * ct * ce,
        -cp * se,
        -st * se,
        ct * se,
        ce,
    ))
}

/// Inverse of [`euler_to_matrix`] returning `eta` in `[0, pi]`.
///
/// When `|r33| = 1` only `phi - theta` (or `phi + theta`) is observable and
/// `theta` is set to zero.
pub fn matrix_to_euler(r: &RotMat3) -> EulerZXZ {
    let m = &r.0;
    let r33 = m[(2, 2)].clamp(-1.0, 1.0);
    let s = (m[(2, 0)].powi(2) + m[(2, 1)].powi(2)).sqrt();
    let eta = s.atan2(r33);
    if s < 1e-12 {
        // With theta = 0 both eta = 0 and eta = pi leave (cos phi, sin phi)
        // in the first column.
        let phi = m[(1, 0)].atan2(m[(0, 0)]);
        return EulerZXZ::new(0.0, phi, eta);
    }
    // r31 = -sin(theta) sin(eta), r32 = cos(theta) sin(eta)
    let theta = (-m[(2, 0)]).atan2(m[(2, 1)]);
    // r13 = sin(phi) sin(eta), r23 = -cos(phi) sin(eta)
    let phi = m[(0, 2)].atan2(-m[(1, 2)]);
    EulerZXZ::new(theta, phi, eta)
}

/// GBR transform `G = [[1,0,0],[0,1,0],[mu,nu,lambda]]` with `lambda > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbrTransform {
    mu: f64,
    nu: f64,
    lambda: f64,
}

impl GbrTransform {
    pub fn new(mu: f64, nu: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::NonPositiveLambda(lambda));
        }
        Ok(Self { mu, nu, lambda })
    }

    pub fn identity() -> Self {
        Self { mu: 0.0, nu: 0.0, lambda: 1.0 }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.mu, self.nu, self.lambda]
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        gbr_matrix(self)
    }

    /// `G^-1`, itself a GBR transform.
    pub fn inverse(&self) -> Self {
        Self {
            mu: -self.mu / self.lambda,
            nu: -self.nu / self.lambda,
            lambda: 1.0 / self.lambda,
        }
    }

    /// `self * other`; GBR transforms form a group.
    pub fn compose(&self, other: &GbrTransform) -> Self {
        Self {
            mu: self.mu + self.lambda * other.mu,
            nu: self.nu + self.lambda * other.nu,
            lambda: self.lambda * other.lambda,
        }
    }
}

impl Serialize for GbrTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GbrTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [mu, nu, lambda] = <[f64; 3]>::deserialize(d)?;
        GbrTransform::new(mu, nu, lambda).map_err(serde::de::Error::custom)
    }
}

pub fn gbr_matrix(g: &GbrTransform) -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, g.mu, g.nu, g.lambda)
}

/// Closed-form `G^-T = [[1,0,-mu/l],[0,1,-nu/l],[0,0,1/l]]`.
pub fn gbr_inv_transpose(g: &GbrTransform) -> Matrix3<f64> {
    let l = g.lambda;
    Matrix3::new(1.0, 0.0, -g.mu / l, 0.0, 1.0, -g.nu / l, 0.0, 0.0, 1.0 / l)
}

/// How a normal map transforms under `G`: `Norm(G^-T n)`.
pub fn gbr_apply_normal(g: &GbrTransform, n: &Vector3<f64>) -> Result<UnitVec3> {
    UnitVec3::new(gbr_inv_transpose(g) * n)
}

/// Mirror reflection of the viewing direction about a surface with normal
/// `n`: `-omega_o + 2 (omega_o . n / n . n) n`. Scale invariant in `n`.
pub fn reflect(n: &Vector3<f64>) -> Result<UnitVec3> {
    let nn = n.dot(n);
    if !(nn > MIN_NORM) {
        return Err(Error::DegenerateVector { norm: nn.sqrt(), min: MIN_NORM.sqrt() });
    }
    let wo = view_direction();
    let w = -wo + n * (2.0 * wo.dot(n) / nn);
    // |w| = 1 analytically; renormalize away rounding only.
    Ok(UnitVec3::new_unchecked(w / w.norm()))
}

/// The normal that reflects `omega_o` into `w`: `Norm(omega_o + w)`.
pub fn invert_reflect(w: &Vector3<f64>) -> Result<UnitVec3> {
    let h = view_direction() + w;
    let n = h.norm();
    if !(n >= MIN_HALF_VECTOR_NORM) {
        return Err(Error::DegenerateVector { norm: n, min: MIN_HALF_VECTOR_NORM });
    }
    Ok(UnitVec3::new_unchecked(h / n))
}

/// The combined transform `G21 = G1^-T R21 G2^T`, well defined from pixel and
/// 3D correspondences even though its factors are not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedTransform(Matrix3<f64>);

impl CombinedTransform {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let det = m.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularTransform(det.abs()));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major `gamma_{row,col}` with 1-based indices.
    pub fn gamma(&self, row: usize, col: usize) -> f64 {
        self.0[(row - 1, col - 1)]
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        matrix_rows(&self.0)
    }

    /// Frobenius distance to another combined transform.
    pub fn distance(&self, other: &CombinedTransform) -> f64 {
        (self.0 - other.0).norm()
    }
}

pub fn compose_combined(g1: &GbrTransform, r: &RotMat3, g2: &GbrTransform) -> CombinedTransform {
    // det = lambda2 / lambda1 > 0, never singular.
    CombinedTransform(gbr_inv_transpose(g1) * r.0 * gbr_matrix(g2).transpose())
}

macro_rules! rows_serde {
    ($t:ty, $ctor:expr) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(
                &self,
                s: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                self.to_rows().serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(
                d: D,
            ) -> std::result::Result<Self, D::Error> {
                let rows = <[[f64; 3]; 3]>::deserialize(d)?;
                $ctor(matrix_from_rows(&rows)).map_err(serde::de::Error::custom)
            }
        }
    };
}

rows_serde!(RotMat3, |m| RotMat3::from_matrix(m, 1e-6)
    .ok_or("matrix is not a rotation"));
rows_serde!(CombinedTransform, CombinedTransform::new);

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn angles() -> impl Strategy<Value = EulerZXZ> {
        (-PI..PI, -PI..PI, -PI..PI).prop_map(|(t, p, e)| EulerZXZ::new(t, p, e))
    }

    fn gbr() -> impl Strategy<Value = GbrTransform> {
        (-2.0..2.0f64, -2.0..2.0f64, -1.5..1.5f64)
            .prop_map(|(m, n, l)| GbrTransform::new(m, n, l.exp()).unwrap())
    }

    #[test]
    fn euler_zero_is_identity() {
        let r = euler_to_matrix(&EulerZXZ::new(0.0, 0.0, 0.0));
        assert_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn euler_eta_only_is_rot_x() {
        let r = euler_to_matrix(&EulerZXZ::new(0.0, 0.0, FRAC_PI_2));
        assert_relative_eq!(*r.matrix(), rot_x(FRAC_PI_2), epsilon = 1e-15);
        assert!(r.r(3, 3).abs() < 1e-15);
        assert_relative_eq!(r.r(2, 3), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn matrix_to_euler_trivial_cases() {
        assert_eq!(matrix_to_euler(&RotMat3::identity()), EulerZXZ::new(0.0, 0.0, 0.0));
        let a = matrix_to_euler(&RotMat3::rot_x(FRAC_PI_2));
        assert_relative_eq!(a.theta, 0.0, epsilon = 1e-15);
        assert_relative_eq!(a.phi, 0.0, epsilon = 1e-15);
        assert_relative_eq!(a.eta, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn matrix_to_euler_degenerate_pi() {
        let r = euler_to_matrix(&EulerZXZ::new(0.4, 1.1, PI));
        let a = matrix_to_euler(&r);
        assert_eq!(a.theta, 0.0);
        assert_relative_eq!(*euler_to_matrix(&a).matrix(), *r.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn gbr_identity_and_known_value() {
        let id = GbrTransform::identity();
        assert_eq!(gbr_matrix(&id), Matrix3::identity());
        assert_eq!(gbr_inv_transpose(&id), Matrix3::identity());

        let g = GbrTransform::new(0.5, 0.0, 2.0).unwrap();
        let v = gbr_inv_transpose(&g) * Vector3::z();
        assert_relative_eq!(v, Vector3::new(-0.25, 0.0, 0.5), epsilon = 1e-15);
        let n = gbr_apply_normal(&g, &Vector3::z()).unwrap();
        assert_relative_eq!(n.x(), -0.4472, epsilon = 1e-4);
        assert_relative_eq!(n.y(), 0.0);
        assert_relative_eq!(n.z(), 0.8944, epsilon = 1e-4);
    }

    #[test]
    fn gbr_rejects_non_positive_lambda() {
        assert!(matches!(GbrTransform::new(0.0, 0.0, 0.0), Err(Error::NonPositiveLambda(_))));
        assert!(GbrTransform::new(0.0, 0.0, -1.0).is_err());
        assert!(GbrTransform::new(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn reflect_known_cases() {
        let w = reflect(&Vector3::z()).unwrap();
        assert_relative_eq!(*w.as_vector(), Vector3::z(), epsilon = 1e-15);
        let w = reflect(&Vector3::new(1.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(*w.as_vector(), Vector3::x(), epsilon = 1e-15);
        assert!(reflect(&Vector3::zeros()).is_err());
    }

    #[test]
    fn invert_reflect_known_cases() {
        let n = invert_reflect(&Vector3::z()).unwrap();
        assert_relative_eq!(*n.as_vector(), Vector3::z());
        let n = invert_reflect(&Vector3::x()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(*n.as_vector(), Vector3::new(s, 0.0, s), epsilon = 1e-15);
        assert!(invert_reflect(&-Vector3::z()).is_err());
    }

    #[test]
    fn compose_identity_gives_rotation() {
        let r = euler_to_matrix(&EulerZXZ::new(0.3, -1.0, 0.7));
        let id = GbrTransform::identity();
        let g = compose_combined(&id, &r, &id);
        assert_relative_eq!(*g.matrix(), *r.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn normalize_refuses_zero() {
        assert!(normalize(&Vector3::new(1e-13, 0.0, 0.0)).is_err());
        assert!(UnitVec3::from_xyz(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn flipped_angles_same_rotation() {
        let a = EulerZXZ::new(0.3, -2.0, 1.1);
        let r1 = euler_to_matrix(&a);
        let r2 = euler_to_matrix(&a.flipped());
        assert_relative_eq!(*r1.matrix(), *r2.matrix(), epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn euler_matches_axis_product(a in angles()) {
            // Independent route: compose the three axis rotations.
            let oracle = rot_z(a.phi) * rot_x(a.eta) * rot_z(-a.theta);
            let r = euler_to_matrix(&a);
            prop_assert!((r.matrix() - oracle).abs().max() < 1e-14);
            prop_assert!((r.matrix().transpose() * r.matrix() - Matrix3::identity()).abs().max() < 1e-10);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn euler_round_trip(a in angles()) {
            let r = euler_to_matrix(&a);
            let back = euler_to_matrix(&matrix_to_euler(&r));
            prop_assert!((r.matrix() - back.matrix()).abs().max() < 1e-9);
        }

        #[test]
        fn gbr_inverse_transpose_matches_numeric(g in gbr()) {
            let numeric = gbr_matrix(&g).try_inverse().unwrap().transpose();
            prop_assert!((gbr_inv_transpose(&g) - numeric).abs().max() < 1e-12);
            let prod = gbr_inv_transpose(&g) * gbr_matrix(&g).transpose();
            prop_assert!((prod - Matrix3::identity()).abs().max() < 1e-12);
        }

        #[test]
        fn gbr_apply_then_inverse(g in gbr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let n = Vector3::new(x, y, 1.0).normalize();
            // G_b = G_a^-1 built numerically, so G_b^-T G_a^-T = I.
            let gb_m = gbr_matrix(&g).try_inverse().unwrap();
            let gb = GbrTransform::new(gb_m[(2, 0)], gb_m[(2, 1)], gb_m[(2, 2)]).unwrap();
            let once = gbr_apply_normal(&g, &n).unwrap();
            let back = gbr_apply_normal(&gb, once.as_vector()).unwrap();
            prop_assert!((back.as_vector() - n).norm() < 1e-12);
            // Scale invariance in n.
            let scaled = gbr_apply_normal(&g, &(n * 3.7)).unwrap();
            prop_assert!((scaled.as_vector() - once.as_vector()).norm() < 1e-14);
        }

        #[test]
        fn reflect_scale_invariant_and_unit(x in -1.0..1.0f64, y in -1.0..1.0f64, z in 0.05..1.0f64, s in 0.1..10.0f64) {
            let n = Vector3::new(x, y, z);
            let a = reflect(&n).unwrap();
            let b = reflect(&(n * s)).unwrap();
            prop_assert!((a.as_vector() - b.as_vector()).norm() < 1e-14);
            prop_assert!((a.as_vector().norm() - 1.0).abs() < 1e-14);
            // Round trip through the inverse recovers Norm(n) for front-facing n.
            let back = invert_reflect(a.as_vector()).unwrap();
            prop_assert!((back.as_vector() - n.normalize()).norm() < 1e-10);
        }

        #[test]
        fn invert_then_reflect(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -0.98..1.0f64) {
            let w = Vector3::new(x, y, z);
            prop_assume!(w.norm() > 1e-3);
            let w = w.normalize();
            prop_assume!(w.z > -0.99);
            let n = invert_reflect(&w).unwrap();
            let back = reflect(n.as_vector()).unwrap();
            prop_assert!((back.as_vector() - w).norm() < 1e-10);
        }

        #[test]
        fn combined_matches_closed_forms(a in angles(), g1 in gbr(), g2 in gbr()) {
            let r = euler_to_matrix(&a);
            let g = compose_combined(&g1, &r, &g2);
            let (m1, n1, l1) = (g1.mu(), g1.nu(), g1.lambda());
            let (m2, n2, l2) = (g2.mu(), g2.nu(), g2.lambda());
            let rr = |i, j| r.r(i, j);
            let g33 = (rr(3, 1) * m2 + rr(3, 2) * n2 + rr(3, 3) * l2) / l1;
            let closed = [
                [rr(1, 1) - rr(3, 1) * m1 / l1, rr(1, 2) - rr(3, 2) * m1 / l1,
                 rr(1, 1) * m2 + rr(1, 2) * n2 + rr(1, 3) * l2 - m1 * g33],
                [rr(2, 1) - rr(3, 1) * n1 / l1, rr(2, 2) - rr(3, 2) * n1 / l1,
                 rr(2, 1) * m2 + rr(2, 2) * n2 + rr(2, 3) * l2 - n1 * g33],
                [rr(3, 1) / l1, rr(3, 2) / l1, g33],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((g.gamma(i + 1, j + 1) - closed[i][j]).abs() < 1e-10);
                }
            }
            prop_assert!((g.determinant() * l1 - l2).abs() < 1e-9 * l2.max(1.0));
        }
    }

    #[test]
    fn determinant_identity_1000_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = EulerZXZ::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
            let g1 = GbrTransform::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.7f64..0.7).exp()).unwrap();
            let g2 = GbrTransform::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.7f64..0.7).exp()).unwrap();
            let g = compose_combined(&g1, &euler_to_matrix(&a), &g2);
            assert!((g.determinant() * g1.lambda() - g2.lambda()).abs() < 1e-9);
        }
    }

    #[test]
    fn gbr_group_ops() {
        let a = GbrTransform::new(0.3, -0.2, 1.7).unwrap();
        let b = GbrTransform::new(-0.5, 0.9, 0.6).unwrap();
        assert_relative_eq!(a.compose(&b).matrix(), a.matrix() * b.matrix(), epsilon = 1e-14);
        assert_relative_eq!(a.compose(&a.inverse()).matrix(), Matrix3::identity(), epsilon = 1e-14);
    }
}
