//! Live sessions: the state machine, stimulation backends, persistence, message
//! fan-out and the network endpoint.

mod backend;
mod broadcast;
mod engine;
mod server;
mod service;
mod state;
pub mod store;
pub mod wire;

pub use backend::{BackendCapabilities, BackendError, ScriptedBackend, ScriptedMuscle, SimulatorBackend, StimBackend, StubBackend};
pub use broadcast::{Hub, Subscription, DEFAULT_QUEUE_CAPACITY};
pub use engine::{Session, SessionNotice, SessionPlan, StepReport};
pub use server::Server;
pub use service::SessionService;
pub use state::{
    apply, replay, transition_allowed, CommandKind, LogEntry, ProtocolError, SessionEvent, SessionState, StateKind, StopReason,
};
