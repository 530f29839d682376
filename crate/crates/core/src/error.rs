use thiserror::Error;

use crate::network::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid piecewise function: {0}")]
    InvalidFunction(String),

    #[error("invalid speed for component {component}: {reason}")]
    InvalidSpeed { component: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("time {time} outside [{lower}, {upper}]")]
    OutOfHorizon { time: f64, lower: f64, upper: f64 },

    #[error("control horizon {control} is shorter than the requested time {requested}")]
    HorizonMismatch { control: f64, requested: f64 },

    #[error("multi-index {index:?} is not eligible for row {row}")]
    IneligibleIndex { index: Vec<i64>, row: usize },

    #[error("dimension {n} exceeds the configured bound {bound}")]
    TooLarge { n: usize, bound: usize },

    #[error("|Re p| * tau_max = {0} exceeds the overflow guard")]
    FrequencyOutOfRange(f64),

    #[error("time {time} is outside the reduction window [{lower}, {upper}]")]
    OutOfReductionWindow { time: f64, lower: f64, upper: f64 },

    #[error("delays are not commensurable within tolerance {tol}")]
    NotCommensurable { tol: f64 },

    #[error("frequency ({re}, {im}) is not a spectral point of cycle {cycle}")]
    NotSpectral { cycle: usize, re: f64, im: f64 },

    #[error("invalid graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),

    #[error(
        "function has a non-zero exponential rate and cannot be represented as piecewise constant"
    )]
    NotPiecewiseConstant,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
