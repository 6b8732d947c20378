//! Thermal capacity mapping toolkit for multi-stage cryogenic platforms.
//!
//! The crate builds queryable capacity maps of a dilution refrigerator from
//! measurement campaigns (heater power grids vs. recorded stage temperatures,
//! circulation pressures and flow), and couples them with first-principles
//! conduction modelling of an IO payload:
//!
//! * [`dataset`] — canonical data model, CSV/TOML ingestion, validation and
//!   drift correction for capacity-map campaigns.
//! * [`grid`] — rectilinear grid indexing of a campaign with per-cell validity.
//! * [`map`] — multilinear interpolation over the grid, 2-D slices, cooling
//!   power solves, map diffs.
//! * [`inverse`] — derivative-free inference of an applied load vector from
//!   observed stage temperatures.
//! * [`linear`] — the small-signal linear coupling-matrix approximation and
//!   its residual analysis.
//! * [`material`], [`conduction`], [`cable`], [`payload`] — conductivity
//!   curves, Fourier conduction integrals and per-stage payload aggregation.
//! * [`equilibrium`] — damped fixed-point coupling of payload and map.
//! * [`limits`] — operational limit checks and per-stage headroom.
//! * [`synthetic`] — a calibrated phenomenological platform model used to
//!   generate datasets for tests and demos.

pub mod archive;
pub mod cable;
pub mod conduction;
pub mod dataset;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod inverse;
pub mod limits;
pub mod linear;
pub mod map;
pub mod material;
pub mod payload;
pub mod shipped;
pub mod slice;
pub mod stage;
pub mod state;
pub mod svg;
pub mod synthetic;
pub mod units;
pub mod validate;

pub use cable::{CableModel, ConductivitySource, CouplingConfig};
pub use conduction::{conduction_load, ConductorLink};
pub use dataset::{Dataset, DatasetMeta, MeasurementRecord, RecordFlag};
pub use equilibrium::{solve_equilibrium, EquilibriumOptions, EquilibriumResult};
pub use error::{Error, Result};
pub use grid::GridIndex;
pub use inverse::{infer_load, InferOptions, Inference};
pub use limits::{check_limits, max_stage_power, HeadroomReport, OperationalLimits};
pub use linear::{fit_coupling, CouplingMatrix};
pub use map::{CapacityMap, Containment, QueryResult};
pub use material::MaterialCurve;
pub use payload::{aggregate_loads, PayloadSpec};
pub use slice::SliceSpec;
pub use stage::{Node, StageId};
pub use state::{LoadVector, PlatformState, StageVec};
pub use synthetic::{run_campaign, synth_state, CampaignSpec, SyntheticParams};
