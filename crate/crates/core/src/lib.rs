//! Weekly origin-destination estimation for a regional rail network.
//!
//! Ticket sales give a seed matrix, on-board counters give boarded and
//! alighted margins, and a gravity model fills cells no ticket can describe.
//! Iterative proportional fitting reconciles the seed with the margins.

pub mod analytics;
pub mod config;
pub mod counters;
pub mod error;
pub mod gravity;
pub mod io;
pub mod ipf;
pub mod linalg;
pub mod matrix;
pub mod network;
pub mod pipeline;
pub mod synthetic;
pub mod ticketing;
pub mod timetable;

pub use config::PipelineConfig;
pub use counters::{CounterTally, MarginVectors, RideCountRecord, RideStatus};
pub use error::{Error, Result};
pub use gravity::{GravityFit, GravityObservation};
pub use ipf::{IpfResult, ProbabilitySeed, WeeklyOD};
pub use matrix::{CellMask, SquareMatrix};
pub use network::{DirectPathSet, Line, Station, StationId, StationRegistry, WeekCalendar};
pub use pipeline::{run_pipeline, run_stage, Stage};
pub use synthetic::{generate_scenario, SyntheticData, SyntheticScenario};
pub use ticketing::{TicketKind, TicketRecord, WeeklySeedOD};
pub use timetable::{TransferTable, TravelTimeMatrix, TravelTimeSample};
