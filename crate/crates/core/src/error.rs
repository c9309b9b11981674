use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error(
        "margins not admissible: eps_a/eps_r + eps_a = {value} but the sample size \
         formula requires eps_a/eps_r + eps_a <= 1/2"
    )]
    Inadmissible { value: f64 },

    #[error("population size {population} exceeds the enumeration cap {cap}; use the closed-form sample size instead")]
    EnumerationCap { population: u64, cap: u64 },

    #[error("no certified plan down to zeta = {zeta}: worst (2D2) value {worst} at M = {worst_m} (delta = {delta})")]
    NotCertified {
        zeta: f64,
        worst: f64,
        worst_m: u64,
        delta: f64,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Checks `0 < x < 1` and returns a domain error naming `what` otherwise.
pub(crate) fn check_open_unit(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must lie in (0, 1), got {x}")))
    }
}
