//! Crate-wide error type.

use crate::stage::StageId;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- ingestion / format errors ---
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse `{text}` as a number in column `{column}`")]
    BadNumber {
        row: usize,
        column: String,
        text: String,
    },
    #[error("unknown unit token `{token}`")]
    UnknownUnit { token: String },
    #[error("unit token `{token}` has the wrong dimension for this column")]
    UnitDimension { token: String },
    #[error("rows {a} and {b} carry the same load vector (within 1 uW per axis)")]
    DuplicateLoadVector { a: usize, b: usize },
    #[error("metadata document: {0}")]
    BadMetadata(String),
    #[error("record {row}: {reason}")]
    BadRecord { row: usize, reason: String },
    #[error("load value for {stage} ({value} W) does not match any declared axis value")]
    UndeclaredAxisValue { stage: StageId, value: f64 },
    #[error("archive: {0}")]
    BadArchive(String),
    #[error("archive content hash mismatch (expected {expected}, computed {computed})")]
    ArchiveHashMismatch { expected: String, computed: String },

    // --- dataset / grid errors ---
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("record {row} has no timestamp; drift correction requires timestamps on every record")]
    MissingTimestamp { row: usize },
    #[error("records {a} and {b} snap to the same grid node")]
    NodeCollision { a: usize, b: usize },
    #[error("grid would hold {nodes} nodes, above the supported limit")]
    GridTooLarge { nodes: usize },
    #[error("pressure/flow fields must be present on all records or on none (record {row} differs)")]
    NonUniformOptionalFields { row: usize },

    // --- map query errors ---
    #[error("query out of domain: {stage} load {value} W outside [{min}, {max}] W")]
    OutOfDomain {
        stage: StageId,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("query lands in an incomplete grid cell (cell {cell}); no extrapolation is performed")]
    InvalidCell { cell: usize },
    #[error("{stage} axis is collapsed at {axis_value} W but the query asks for {value} W")]
    CollapsedAxisMismatch {
        stage: StageId,
        axis_value: f64,
        value: f64,
    },
    #[error("maps share no grid node within snapping tolerance")]
    NoSharedNodes,

    // --- solver errors ---
    #[error("target temperature {target} K not bracketed on the {stage} axis")]
    NotBracketed { stage: StageId, target: f64 },
    #[error("{stage} temperature is not monotone along its axis; cannot solve for cooling power")]
    NonMonotoneProfile { stage: StageId },
    #[error("linear fit: {0}")]
    LinearFit(String),
    #[error("inverse solve: {0}")]
    Inverse(String),
    #[error(
        "equilibrium iteration {iteration}: loads left the map domain on {stage} \
         ({value} W outside [{min}, {max}] W); the payload is incompatible with the mapped range"
    )]
    EquilibriumDomainEscape {
        iteration: usize,
        stage: StageId,
        value: f64,
        min: f64,
        max: f64,
    },

    // --- payload / material errors ---
    #[error("material curve `{name}`: {reason}")]
    BadMaterialCurve { name: String, reason: String },
    #[error("temperature {t} K above the `{name}` table maximum {t_max} K (no high-side extrapolation)")]
    AboveTableRange { name: String, t: f64, t_max: f64 },
    #[error("temperature {t} K is not positive")]
    NonPositiveTemperature { t: f64 },
    #[error("conduction integral failed to converge after {refinements} refinements")]
    IntegralNotConverged { refinements: usize },
    #[error("conduction endpoints invalid: hot {hot} K must exceed cold {cold} K > 0")]
    BadEndpoints { hot: f64, cold: f64 },
    #[error("cable `{cable}` has no {side} data")]
    MissingCableData { cable: String, side: String },
    #[error("payload spec: {0}")]
    BadPayload(String),
    #[error("missing temperature for {stage}")]
    MissingTemperature { stage: StageId },

    // --- synthetic model ---
    #[error("synthetic model solve failed: {0}")]
    Synthetic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input files.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::BadNumber { .. }
                | Error::UnknownUnit { .. }
                | Error::UnitDimension { .. }
                | Error::DuplicateLoadVector { .. }
                | Error::BadMetadata(_)
                | Error::BadRecord { .. }
                | Error::UndeclaredAxisValue { .. }
                | Error::BadArchive(_)
                | Error::ArchiveHashMismatch { .. }
                | Error::EmptyDataset
                | Error::MissingTimestamp { .. }
                | Error::NodeCollision { .. }
                | Error::NonUniformOptionalFields { .. }
                | Error::BadMaterialCurve { .. }
                | Error::BadPayload(_)
                | Error::Io(_)
        )
    }
}
