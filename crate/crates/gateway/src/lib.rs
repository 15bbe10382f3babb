//! Farm gateway service: wires the simulator, annotation, interop, broker
//! and reasoning stages into one process, persists everything to
//! append-only logs and serves the operator API.

pub mod api;
pub mod config;
pub mod log;
pub mod pipeline;
pub mod store;
pub mod tickets;

pub use config::{ConfigFileError, GatewayConfig};
pub use pipeline::{Gateway, GatewayState, Health, IngestError, SensorSummary, StartError};
pub use store::ReadingStore;
pub use tickets::{ActionTicket, Decision, TicketError, TicketStatus, TicketStore};
