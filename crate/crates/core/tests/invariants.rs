use proptest::prelude::*;

use reflpose::correspondences::{center, CorrespondenceSet};
use reflpose::geometry::{compose_combined, euler_to_matrix, matrix_to_euler, EulerZXZ, GbrTransform};
use reflpose::residuals::{objective_terms, ParamVector};
use reflpose::solvers::{ambiguity_family, decompose_at_eta};
use reflpose::synth::{generate, SynthConfig};

fn angle() -> impl Strategy<Value = f64> {
    -3.1f64..3.1
}

fn eta() -> impl Strategy<Value = f64> {
    (0.1f64..3.0, any::<bool>()).prop_map(|(e, s)| if s { e } else { -e })
}

fn gbr() -> impl Strategy<Value = GbrTransform> {
    (-1.0f64..1.0, -1.0f64..1.0, -0.7f64..0.7).prop_map(|(m, n, l)| GbrTransform::new(m, n, l.exp()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn euler_round_trip(t in angle(), p in angle(), e in eta()) {
        let r = euler_to_matrix(&EulerZXZ::new(t, p, e));
        let back = euler_to_matrix(&matrix_to_euler(&r));
        prop_assert!(r.angle_to(&back) < 1e-9);
    }

    #[test]
    fn decomposition_inverts_composition(t in angle(), p in angle(), e in eta(), g1 in gbr(), g2 in gbr()) {
        let g21 = compose_combined(&g1, &euler_to_matrix(&EulerZXZ::new(t, p, e)), &g2);
        let d = decompose_at_eta(&g21, t, p, e).unwrap();
        for (a, b) in d.g1.to_array().iter().chain(&d.g2.to_array()).zip(g1.to_array().iter().chain(&g2.to_array())) {
            prop_assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn family_preserves_combined_transform(t in angle(), p in angle(), e in eta(), frac in 0.05f64..0.95, g1 in gbr(), g2 in gbr()) {
        let eta_hat = e.signum() * frac * std::f64::consts::PI;
        let (h1, h2) = ambiguity_family(e, eta_hat, t, p, &g1, &g2).unwrap();
        let a = compose_combined(&g1, &euler_to_matrix(&EulerZXZ::new(t, p, e)), &g2);
        let b = compose_combined(&h1, &euler_to_matrix(&EulerZXZ::new(t, p, eta_hat)), &h2);
        prop_assert!(a.distance(&b) < 1e-9 * (1.0 + a.matrix().norm()));
    }

    #[test]
    fn truth_has_zero_objective_and_view_swap_is_symmetric(seed in 0u64..1000) {
        let inst = generate(&SynthConfig { n_pixel: 6, n_normal: 6, n_reflection: 6, rng_seed: seed, ..Default::default() }).unwrap();
        let (set, _): (CorrespondenceSet, _) = center(&inst.observed).unwrap();
        let p: ParamVector = inst.truth.params();
        prop_assert!(objective_terms(&p, &set).unwrap().total() < 1e-20);
        let swapped = objective_terms(&p.swapped(), &set.swapped()).unwrap().total();
        prop_assert!(swapped < 1e-20);
    }
}
