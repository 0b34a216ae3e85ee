use thiserror::Error;

use crate::lattice::{BlockIndex, Edge, Vertex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertices {0} and {1} are not nearest neighbours")]
    NotAnEdge(Vertex, Vertex),

    #[error("invalid constraint distribution: {0}")]
    InvalidDistribution(String),

    #[error("edge {0} is not part of the clocked region")]
    EdgeOutsideRegion(Edge),

    #[error("vertex {0} lies outside the simulated region")]
    VertexOutsideRegion(Vertex),

    #[error("no constraint available for vertex {0}")]
    MissingConstraint(Vertex),

    #[error("time {0} is outside [0, 1]")]
    InvalidTime(f64),

    #[error("clock value {0} is outside (0, 1]")]
    InvalidClock(f64),

    #[error("clock field does not cover block {0}")]
    IncompleteBlock(BlockIndex),

    #[error("region too small: {0}")]
    RegionTooSmall(String),

    #[error("graph too large for exact enumeration: {0} edges (limit {1})")]
    GraphTooLarge(usize, usize),

    #[error("exploration read the clock of unrevealed edge {0}")]
    UnrevealedRead(Edge),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missing scale {0} in theta table")]
    MissingScale(usize),

    #[error("need at least 3 usable rows for a decay fit, found {0}")]
    InsufficientRows(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
