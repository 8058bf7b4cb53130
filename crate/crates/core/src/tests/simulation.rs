use crate::verify::{simulate_survival, stats::mean_se, verify_genealogy, verify_many_to_few, McSpec, VerifyOutput};
use crate::spine::QuadratureGrid;
use crate::{build_basis, ModelParams, SpectralBasis};

fn reference() -> SpectralBasis {
    build_basis(ModelParams::from_drift(0.5).unwrap(), 64).unwrap()
}

fn survival_at_two(b: &SpectralBasis, dt: f64) -> (f64, f64) {
    let mc = McSpec { replicas: 100_000, seed: 1, threads: 1, dt };
    let alive: Vec<f64> = simulate_survival(b, 1.0, &[2.0], mc).unwrap().iter().map(|z| f64::from(u8::from(z[0] > 0))).collect();
    mean_se(&alive)
}

#[test]
fn halving_dt_moves_survival_less_than_one_se() {
    let b = reference();
    let (p1, se1) = survival_at_two(&b, 0.2);
    let (p2, se2) = survival_at_two(&b, 0.1);
    let se = (se1 * se1 + se2 * se2).sqrt();
    assert!((p1 - p2).abs() < se, "P(dt=0.2) = {p1}, P(dt=0.1) = {p2}, se = {se}");
}

fn json(o: &VerifyOutput) -> String {
    serde_json::to_string(&o.reports).unwrap()
}

#[test]
fn verify_runs_are_bit_exact_and_worker_invariant() {
    let b = reference();
    let grid = QuadratureGrid { time_nodes: 64, space_nodes: 128, modes: 64 };
    let run = |threads| {
        let mc = McSpec { replicas: 4000, seed: 5, threads, dt: 0.2 };
        json(&verify_many_to_few(&b, 1.0, 2.0, mc, 2000, grid).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(4));

    let gen = |threads| {
        let mc = McSpec { replicas: 3000, seed: 2, threads, dt: 0.2 };
        json(&verify_genealogy(&b, 1.0, 10.0, &[2, 3], mc, 2000, 10).unwrap())
    };
    let g = gen(1);
    assert_eq!(g, gen(3));
}
