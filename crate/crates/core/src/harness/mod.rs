//! Process-separated Bell experiment.
//!
//! A source draws λ once per trial and sends the same λ to two wings over a
//! line-delimited protocol. Each wing picks its own setting, computes its outcome and
//! replies. Neither wing ever receives anything but λ, so the models run here cannot
//! signal across the source; [`audit::audit_log`] checks that from the run log.
//!
//! The audit inspects message content only. Timing channels are not analysed, and a
//! clean audit shows only that the models need no cross-wing channel, not that nature
//! has none.

pub mod audit;
pub mod log;
pub mod merge;
pub mod net;
pub mod wire;

pub use audit::{audit_log, AuditReport, Violation, ViolationKind};
pub use log::{Direction, LogEntry, RunLog, RunStatus};
pub use merge::{merge_statistics, simulate_run, MergedCell, MergedTable};
pub use net::{
    source_run, source_run_streams, wing_handle, wing_serve, SettingPolicy, SourceConfig,
    WingConfig,
};
pub use wire::{Payload, WingId, WireMessage, PROTOCOL_VERSION};
