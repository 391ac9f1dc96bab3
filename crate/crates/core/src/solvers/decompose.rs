//! Analytic factorization of the combined transform at a given `eta`, and
//! the one-parameter family of `(eta, G1, G2)` that pixel and 3D
//! correspondences cannot tell apart.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{compose_combined, euler_to_matrix, CombinedTransform, EulerZXZ, GbrTransform};

const MIN_THIRD_ROW: f64 = 1e-12;
const RANK_TOL: f64 = 1e-10;

/// GBR parameters recovered from `G21` at one `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub g1: GbrTransform,
    pub g2: GbrTransform,
    /// RMS misfit of the nine elements of `G21` at the solution.
    pub residual: f64,
}

/// Splits `G21 = G1^-T R21 G2^T` into its GBR factors once `R21` is fixed by
/// `(theta, phi, eta)`.
///
/// `lambda1` follows from the third row, `lambda2 = det(G21) lambda1`, and
/// `(mu1, nu1, mu2, nu2)` solve the remaining seven linear element
/// equations in the least-squares sense.
pub fn decompose_at_eta(g21: &CombinedTransform, theta: f64, phi: f64, eta: f64) -> Result<Decomposition> {
    let r = euler_to_matrix(&EulerZXZ::new(theta, phi, eta));
    let rr = |i, j| r.r(i, j);
    let gg = |i, j| g21.gamma(i, j);

    let rot_third = rr(3, 1).powi(2) + rr(3, 2).powi(2);
    let g_third = gg(3, 1).powi(2) + gg(3, 2).powi(2);
    if rot_third <= MIN_THIRD_ROW {
        return Err(Error::DegenerateEta(format!("sin(eta)^2 = {rot_third:e}")));
    }
    if g_third <= MIN_THIRD_ROW {
        return Err(Error::DegenerateEta(format!("gamma31^2 + gamma32^2 = {g_third:e}")));
    }
    let l1 = (rot_third / g_third).sqrt();
    let l2 = g21.determinant() * l1;
    if !(l2 > 0.0) {
        return Err(Error::NegativeLambda(l2));
    }

    // Unknowns x = (mu1, nu1, mu2, nu2).
    let g33 = gg(3, 3);
    #[rustfmt::skip]
    let a = SMatrix::<f64, 7, 4>::from_row_slice(&[
        rr(3, 1) / l1, 0.0,           0.0,           0.0,
        rr(3, 2) / l1, 0.0,           0.0,           0.0,
        0.0,           rr(3, 1) / l1, 0.0,           0.0,
        0.0,           rr(3, 2) / l1, 0.0,           0.0,
        -g33,          0.0,           rr(1, 1),      rr(1, 2),
        0.0,           -g33,          rr(2, 1),      rr(2, 2),
        0.0,           0.0,           rr(3, 1) / l1, rr(3, 2) / l1,
    ]);
    let b = SVector::<f64, 7>::from_column_slice(&[
        rr(1, 1) - gg(1, 1),
        rr(1, 2) - gg(1, 2),
        rr(2, 1) - gg(2, 1),
        rr(2, 2) - gg(2, 2),
        gg(1, 3) - rr(1, 3) * l2,
        gg(2, 3) - rr(2, 3) * l2,
        g33 - rr(3, 3) * l2 / l1,
    ]);

    let sv = a.singular_values();
    if sv.min() <= RANK_TOL * sv.max() {
        return Err(Error::RankDeficient);
    }
    let ata: Matrix4<f64> = a.transpose() * a;
    let atb: Vector4<f64> = a.transpose() * b;
    let x = ata.full_piv_lu().solve(&atb).ok_or(Error::RankDeficient)?;

    let g1 = GbrTransform::new(x[0], x[1], l1)?;
    let g2 = GbrTransform::new(x[2], x[3], l2)?;
    let diff = compose_combined(&g1, &r, &g2).matrix() - g21.matrix();
    let residual = (diff.norm_squared() / 9.0).sqrt();
    Ok(Decomposition { g1, g2, residual })
}

/// Maps ground truth `(eta, G1, G2)` to the member of the ambiguity family at
/// `eta_hat`, keeping `theta` and `phi`. The returned pair `(G1_hat, G2_hat)`
/// satisfies `G1_hat^-T R(theta, phi, eta_hat) G2_hat^T = G21`, so pixel and
/// 3D residuals stay exactly zero.
///
/// Depths of view 2 change as `z_hat = l z + m u + n v + c` with
/// `l = sin(eta) / sin(eta_hat)` and, for height measured towards the camera,
/// `(m, n) = (sin(theta), -cos(theta)) (cos(eta) - cos(eta_hat)) / sin(eta_hat)`;
/// view 1 is the same with `theta -> phi` and the shear negated.
pub fn ambiguity_family(
    eta: f64,
    eta_hat: f64,
    theta: f64,
    phi: f64,
    g1: &GbrTransform,
    g2: &GbrTransform,
) -> Result<(GbrTransform, GbrTransform)> {
    if eta == 0.0 || eta_hat == 0.0 || eta.signum() != eta_hat.signum() {
        return Err(Error::SignMismatch { eta, eta_hat });
    }
    let (se, ce) = eta.sin_cos();
    let (sh, ch) = eta_hat.sin_cos();
    if se.abs() < 1e-12 || sh.abs() < 1e-12 {
        return Err(Error::DegenerateEta(format!("sin(eta) = {se:e}, sin(eta_hat) = {sh:e}")));
    }
    let lambda = se / sh;
    let shear = (ce - ch) / sh;
    let depth2 = GbrTransform::new(theta.sin() * shear, -theta.cos() * shear, lambda)?;
    let depth1 = GbrTransform::new(-phi.sin() * shear, phi.cos() * shear, lambda)?;
    Ok((g1.compose(&depth1.inverse()), g2.compose(&depth2.inverse())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RotMat3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_gbr(rng: &mut ChaCha8Rng) -> GbrTransform {
        GbrTransform::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5f64.ln()..2f64.ln()).exp(),
        )
        .unwrap()
    }

    #[test]
    fn identity_gbrs_recovered() {
        let a = EulerZXZ::new(0.3, 1.2, 0.8);
        let g21 = CombinedTransform::new(*euler_to_matrix(&a).matrix()).unwrap();
        let d = decompose_at_eta(&g21, a.theta, a.phi, a.eta).unwrap();
        assert_relative_eq!(d.g1.lambda(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(d.g2.lambda(), 1.0, epsilon = 1e-12);
        for v in [d.g1.mu(), d.g1.nu(), d.g2.mu(), d.g2.nu()] {
            assert!(v.abs() < 1e-12);
        }
        assert!(d.residual < 1e-14);
    }

    #[test]
    fn round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let a = EulerZXZ::new(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(0.1..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            );
            let (g1, g2) = (random_gbr(&mut rng), random_gbr(&mut rng));
            let g21 = compose_combined(&g1, &euler_to_matrix(&a), &g2);
            let d = decompose_at_eta(&g21, a.theta, a.phi, a.eta).unwrap();
            for (x, y) in d.g1.to_array().iter().chain(&d.g2.to_array()).zip(g1.to_array().iter().chain(&g2.to_array())) {
                assert!((x - y).abs() < 1e-8, "{x} vs {y}");
            }
            assert!(d.residual < 1e-10);
        }
    }

    #[test]
    fn wrong_sign_eta_is_rejected_or_misfits() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let a = EulerZXZ::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(0.3..2.8));
            let (g1, g2) = (random_gbr(&mut rng), random_gbr(&mut rng));
            let g21 = compose_combined(&g1, &euler_to_matrix(&a), &g2);
            match decompose_at_eta(&g21, a.theta, a.phi, -rng.random_range(0.3..2.8)) {
                Err(Error::NegativeLambda(_)) | Err(Error::RankDeficient) => {}
                Err(e) => panic!("unexpected error {e}"),
                Ok(d) => assert!(d.residual > 1e-3, "residual {}", d.residual),
            }
        }
    }

    #[test]
    fn degenerate_eta_is_error() {
        let g21 = CombinedTransform::new(*RotMat3::rot_x(0.5).matrix()).unwrap();
        assert!(matches!(decompose_at_eta(&g21, 0.0, 0.0, 0.0), Err(Error::DegenerateEta(_))));
        let g21 = CombinedTransform::new(*RotMat3::identity().matrix()).unwrap();
        assert!(matches!(decompose_at_eta(&g21, 0.0, 0.0, 0.5), Err(Error::DegenerateEta(_))));
    }

    #[test]
    fn family_identity_at_true_eta() {
        let g1 = GbrTransform::new(0.2, -0.3, 1.4).unwrap();
        let g2 = GbrTransform::new(-0.6, 0.1, 0.7).unwrap();
        let (h1, h2) = ambiguity_family(0.9, 0.9, 0.4, -1.0, &g1, &g2).unwrap();
        assert_relative_eq!(h1.matrix(), g1.matrix(), epsilon = 1e-15);
        assert_relative_eq!(h2.matrix(), g2.matrix(), epsilon = 1e-15);
    }

    #[test]
    fn family_preserves_combined_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let a = EulerZXZ::new(rng.random_range(-PI..PI), rng.random_range(-PI..PI), sign * rng.random_range(0.1..3.0));
            let eta_hat = sign * rng.random_range(0.1..3.0);
            let (g1, g2) = (random_gbr(&mut rng), random_gbr(&mut rng));
            let g21 = compose_combined(&g1, &euler_to_matrix(&a), &g2);
            let (h1, h2) = ambiguity_family(a.eta, eta_hat, a.theta, a.phi, &g1, &g2).unwrap();
            let rh = euler_to_matrix(&EulerZXZ::new(a.theta, a.phi, eta_hat));
            let g21h = compose_combined(&h1, &rh, &h2);
            assert!(g21.distance(&g21h) < 1e-10 * g21.matrix().norm());
            // The factorization at eta_hat therefore returns exactly this member.
            let d = decompose_at_eta(&g21, a.theta, a.phi, eta_hat).unwrap();
            assert_relative_eq!(d.g1.matrix(), h1.matrix(), epsilon = 1e-7, max_relative = 1e-7);
            assert_relative_eq!(d.g2.matrix(), h2.matrix(), epsilon = 1e-7, max_relative = 1e-7);
        }
    }

    #[test]
    fn family_sign_mismatch() {
        let g = GbrTransform::identity();
        assert!(matches!(ambiguity_family(0.5, -0.5, 0.0, 0.0, &g, &g), Err(Error::SignMismatch { .. })));
        assert!(ambiguity_family(0.0, 0.5, 0.0, 0.0, &g, &g).is_err());
    }
}
