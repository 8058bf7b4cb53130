use thiserror::Error;

/// Errors raised by the spectral, simulation and sampling layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: String,
    },

    #[error("population N = {n} is below the threshold N_0 = {n0} (c = {c}, loglog coefficient = {loglog})")]
    BelowThreshold { n: u64, n0: u64, c: f64, loglog: f64 },

    #[error("eigenvalue bracket for mode {mode} has no sign change ({lo}, {hi}); parameters are corrupt")]
    Bracket { mode: usize, lo: f64, hi: f64 },

    #[error("spectral sum cannot certify rel_tol {rel_tol:e} at t = {t} (t_floor = {t_floor}, K_max = {k_max}); use short-time simulation")]
    Uncertifiable {
        t: f64,
        t_floor: f64,
        k_max: usize,
        rel_tol: f64,
    },

    #[error("best-class boundary A_N = {a_n} is not below L = {length}; N is too small for the asymptotic regime")]
    BestClassOutside { a_n: f64, length: f64 },

    #[error("model parameters carry no population scale (N, c)")]
    MissingPopulation,

    #[error("live population {size} exceeds the cap {cap} at t = {time}")]
    PopulationCap { size: usize, cap: usize, time: f64 },

    #[error("unknown particle id {0}")]
    UnknownParticle(usize),

    #[error("particle {id} is not alive at t = {time}")]
    NotAlive { id: usize, time: f64 },

    #[error("exact quadrature supports k <= {max}, got k = {k}")]
    QuadratureDepth { k: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(name: &'static str, value: f64, domain: impl Into<String>) -> Error {
    Error::Domain {
        name,
        value,
        domain: domain.into(),
    }
}
