//! Replica fan-out over a rayon pool sized by `FWL_THREADS`.

use rayon::prelude::*;

pub const THREADS_ENV: &str = "FWL_THREADS";

/// Worker count from `FWL_THREADS`, else the machine's parallelism.
pub fn default_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f(0..n)` on `threads` workers and returns results in index order.
pub fn map_replicas<R, F>(n: usize, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let a = map_replicas(1000, 1, |i| (i * i) as u64);
        let b = map_replicas(1000, 4, |i| (i * i) as u64);
        assert_eq!(a, b);
    }
}
