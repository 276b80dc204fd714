use thiserror::Error;

use crate::velocity::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FtlError {
    #[error("negative density {0}")]
    NegativeDensity(f64),

    #[error("inverse density {0} below 1: vehicles overlap")]
    Overlap(f64),

    #[error("velocity law rejected: {}", format_violations(.0))]
    InvalidVelocity(Vec<Violation>),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("CFL condition violated: lambda * L_v = {0} > 1")]
    Cfl(f64),

    #[error("step rejected at t = {t}: gap {gap} fell below 1 at index {index}")]
    GapCollapse { t: f64, index: usize, gap: f64 },

    #[error("coordinate {0} outside the map domain [{1}, {2}]")]
    OutOfDomain(f64, f64, f64),

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid ladder: {0}")]
    InvalidLadder(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, FtlError>;
