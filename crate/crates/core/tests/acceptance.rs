//! Acceptance suite. Prints the individual reports indented, then one
//! `PASS`/`FAIL` line per criterion. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fwl_core::parallel::default_threads;
use fwl_core::spine::QuadratureGrid;
use fwl_core::verify::*;
use fwl_core::{build_basis, ModelParams, SpectralBasis};

struct Suite {
    results: Vec<(String, bool)>,
}

impl Suite {
    fn criterion(&mut self, name: &str, limit: Option<Duration>, run: impl FnOnce() -> fwl_core::Result<VerifyOutput>) {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let mut ok = match &outcome {
            Ok(out) => {
                for r in &out.reports {
                    println!("    {}", r.line());
                }
                out.reports.iter().all(McReport::passed)
            }
            Err(e) => {
                println!("    error: {e}");
                false
            }
        };
        let mut timing = format!("{:.1} s", elapsed.as_secs_f64());
        if let Some(limit) = limit {
            timing.push_str(&format!(", limit {} s", limit.as_secs()));
            ok &= elapsed <= limit;
        }
        println!("{} {name} ({timing})", if ok { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), ok));
    }
}

fn reference() -> SpectralBasis {
    build_basis(ModelParams::from_drift(0.5).unwrap(), 64).unwrap()
}

fn mc(replicas: usize, seed: u64, dt: f64) -> McSpec {
    McSpec { replicas, seed, threads: default_threads(), dt }
}

fn main() -> ExitCode {
    let b = reference();
    let mut suite = Suite { results: Vec::new() };
    println!("acceptance: {} workers", default_threads());

    suite.criterion("exact spectral suite", Some(Duration::from_secs(10)), || Ok(verify_spectral(&b)));

    suite.criterion("kernel suite", Some(Duration::from_secs(120)), || verify_kernels(&b, 20_000));

    suite.criterion("constant trend", None, || {
        let mut out = verify_trend_monotone(0.5, &[10_000, 100_000_000, 10_000_000_000_000_000])?;
        out.push(verify_trend_gate(0.5, 10_000_000_000_000_000, 0.25)?);
        Ok(out)
    });

    suite.criterion("many-to-few cross-checks", Some(Duration::from_secs(600)), || {
        verify_many_to_few(&b, 1.0, 2.0, mc(100_000, 1, 0.2), 100_000, QuadratureGrid::default())
    });

    suite.criterion("survival and Yaglom", Some(Duration::from_secs(3600)), || {
        let t_grid = [50.0, 100.0, 200.0];
        let zs = simulate_survival(&b, 1.0, &t_grid, mc(1_000_000, 11, 0.2))?;
        let stable = simulate_stable_survival(&b, &t_grid, mc(100_000, 11, 0.2))?;
        let mut out = survival_reports(&b, 1.0, &t_grid, &zs, &stable);
        out.extend(yaglom_reports(&b, &t_grid, &zs));
        Ok(out)
    });

    suite.criterion("Feller transform", None, || {
        let spec = FellerSpec { n: 10_000, c: 0.5, z0: 1.0, t: 1.0, lambdas: vec![0.5, 1.0, 2.0] };
        verify_feller(&spec, mc(1000, 3, 1.0))
    });

    suite.criterion("genealogy", None, || {
        let mut out = verify_genealogy(&b, 1.0, 100.0, &[2, 3], mc(600_000, 13, 0.2), 100_000, 10_000)?;
        let ladder = MergerSpec { lengths: vec![5.0, 10.0, 18.0], horizon_factor: 3.0, pairs: 50, rung_replicas: vec![4000, 3000, 40] };
        out.extend(verify_merger_ladder(&ladder, mc(40, 17, 0.5))?);
        Ok(out)
    });

    suite.criterion("CPP internal consistency", None, || verify_cpp(1.0, &[2, 3, 4], 100_000, 1_000_000, mc(0, 19, 0.0)));

    suite.criterion("reproducibility", None, || {
        let grid = QuadratureGrid { time_nodes: 64, space_nodes: 128, modes: 64 };
        let run = |threads| -> fwl_core::Result<String> {
            let spec = McSpec { replicas: 20_000, seed: 23, threads, dt: 0.2 };
            let mut out = verify_many_to_few(&b, 1.0, 2.0, spec, 5_000, grid)?;
            out.extend(verify_survival(&b, 1.0, &[5.0, 10.0], spec, 5_000)?);
            out.extend(verify_cpp(1.0, &[3], 5_000, 20_000, spec)?);
            Ok(serde_json::to_string(&out.reports).expect("reports serialize"))
        };
        let first = run(1)?;
        let again = run(1)?;
        let wide = run(8)?;
        let mut out = VerifyOutput::default();
        out.push(McReport::exact("reproducibility.same_seed_mismatch", f64::from(u8::from(first != again)), 0.0, 0.0));
        out.push(McReport::exact("reproducibility.worker_count_mismatch", f64::from(u8::from(first != wide)), 0.0, 0.0));
        Ok(out)
    });

    let failed: Vec<&str> = suite.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!("\n{} of {} criteria passed", suite.results.len() - failed.len(), suite.results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
