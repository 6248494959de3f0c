//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the gait, dynamics, planning, and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received an out-of-range parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Inputs are structurally inconsistent (dimension or weight-sum violations).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The support set is empty; the caller must branch to ballistic dynamics.
    #[error("support set is empty (flight phase)")]
    FlightPhase,

    /// The pendulum height dropped below the supported minimum while in stance.
    #[error("pendulum singularity: CoM height {height:.6} m below minimum {minimum:.6} m")]
    Singularity { height: f64, minimum: f64 },

    /// The motion queue has no frames to serve.
    #[error("motion queue is empty")]
    EmptyQueue,

    /// A terrain query fell outside the height-field extent.
    #[error("terrain query ({x:.3}, {y:.3}) outside the height-field bounds")]
    TerrainOutOfBounds { x: f64, y: f64 },

    /// Configuration failed validation; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// Observation assembly found a block/layout mismatch.
    #[error("observation layout error: {0}")]
    Layout(String),

    /// A serialized artifact could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
