use proptest::prelude::*;

use crate::bbm::is_ultrametric;
use crate::cpp::{sample_cpp_distances, sample_h_matrix};
use crate::quadrature::integrate;
use crate::rng::{stream, tags};
use crate::spectral::{drift_for_length, length_for_drift};
use crate::spine::sample_topology;
use crate::{build_basis, ModelParams};
use rand::Rng as _;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drift_and_length_invert(beta in 0.0f64..0.995) {
        let l = length_for_drift(beta).unwrap();
        prop_assert!((drift_for_length(l).unwrap() - beta).abs() < 1e-10);
    }

    #[test]
    fn spine_kernel_is_conservative(beta in 0.0f64..0.95, tf in 0.01f64..3.0, xf in 0.0f64..0.999) {
        let b = build_basis(ModelParams::from_drift(beta).unwrap(), 64).unwrap();
        let l = b.length();
        let plan = b.kernel_plan(tf * l * l, 1e-10).unwrap();
        let x = xf * l;
        let mass = integrate(|y| plan.q(x, y).value, 0.0, l, 1e-12, 1e-12).value;
        prop_assert!((mass - 1.0).abs() < 1e-8, "mass {}", mass);
        let fixed = integrate(|y| plan.p(x, y).value * b.h(y), 0.0, l, 1e-12, 1e-12).value;
        prop_assert!((fixed / b.h(x) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn heat_kernel_is_nonnegative(beta in 0.0f64..0.95, tf in 0.01f64..3.0, xf in 0.0f64..0.999, yf in 0.0f64..0.999) {
        let b = build_basis(ModelParams::from_drift(beta).unwrap(), 64).unwrap();
        let l = b.length();
        let v = b.heat_kernel(tf * l * l, xf * l, yf * l, 1e-10).unwrap().value;
        prop_assert!(v >= -1e-10, "{}", v);
    }

    #[test]
    fn variance_profile_is_monotone(beta in 0.0f64..0.99, a in 0.0f64..1.0, d in 0.0f64..1.0) {
        let b = build_basis(ModelParams::from_drift(beta).unwrap(), 4).unwrap();
        let prof = b.variance_profile();
        let l = b.length();
        let lo = a * l;
        let hi = (lo + d * (l - lo)).min(l);
        prop_assert!(prof.sigma_sq(hi) >= prof.sigma_sq(lo) - 1e-12 * prof.sigma_sq_total);
    }

    #[test]
    fn cpp_and_limit_matrices_are_ultrametric(seed in any::<u64>(), k in 2usize..7, height in 0.1f64..10.0) {
        let mut rng = stream(seed, tags::CPP, 0);
        let s = sample_cpp_distances(k, height, &mut rng).unwrap();
        let d = s.distance_matrix();
        prop_assert!(is_ultrametric(&d, 0.0));
        prop_assert!(s.gaps.iter().all(|&g| g >= 0.0 && g <= height));
        let h = sample_h_matrix(k, 2.0 * height, 1.0, &mut rng).unwrap();
        prop_assert!(is_ultrametric(&h.entries, 0.0));
        prop_assert!(h.entries.iter().flatten().all(|&v| v >= 0.0 && v <= height));
    }

    #[test]
    fn spine_topologies_are_ultrametric(seed in any::<u64>(), k in 1usize..7, t in 0.1f64..50.0) {
        let topo = sample_topology(k, t, &mut stream(seed, tags::SPINE, 3)).unwrap();
        prop_assert_eq!(topo.depths.len(), k - 1);
        prop_assert!(topo.depths.iter().all(|&u| u > 0.0 && u < t));
        prop_assert!(is_ultrametric(&topo.matrix(), 0.0));
    }

    #[test]
    fn streams_are_keyed(seed in any::<u64>(), i in any::<u64>()) {
        let a: u64 = stream(seed, tags::BBM, i).random();
        let b: u64 = stream(seed, tags::BBM, i).random();
        let c: u64 = stream(seed, tags::SPINE, i).random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}
