use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::RecruitmentCurve;
use crate::electrode::StimKind;
use crate::muscle::MuscleId;
use crate::protocol::{PulseSpec, RampSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    Aborted { reason: String },
    MaxReached,
    BackendError { message: String },
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Aborted { reason } => write!(f, "aborted ({reason})"),
            StopReason::MaxReached => f.write_str("max_reached"),
            StopReason::BackendError { message } => write!(f, "backend_error ({message})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    Configured {
        config: StimKind,
    },
    Ramping {
        config: StimKind,
        /// Index of the last completed step.
        step_index: usize,
        #[serde(rename = "amplitude_uA")]
        amplitude_ua: f64,
    },
    Saturated {
        config: StimKind,
        final_curves: Vec<RecruitmentCurve>,
    },
    Stopped {
        reason: StopReason,
    },
}

impl SessionState {
    pub fn kind(&self) -> StateKind {
        match self {
            SessionState::Idle => StateKind::Idle,
            SessionState::Configured { .. } => StateKind::Configured,
            SessionState::Ramping { .. } => StateKind::Ramping,
            SessionState::Saturated { .. } => StateKind::Saturated,
            SessionState::Stopped { .. } => StateKind::Stopped,
        }
    }

    pub fn config(&self) -> Option<StimKind> {
        match self {
            SessionState::Configured { config }
            | SessionState::Ramping { config, .. }
            | SessionState::Saturated { config, .. } => Some(*config),
            SessionState::Idle | SessionState::Stopped { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Idle,
    Configured,
    Ramping,
    Saturated,
    Stopped,
}

impl StateKind {
    pub const ALL: [StateKind; 5] =
        [StateKind::Idle, StateKind::Configured, StateKind::Ramping, StateKind::Saturated, StateKind::Stopped];
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Idle => "idle",
            StateKind::Configured => "configured",
            StateKind::Ramping => "ramping",
            StateKind::Saturated => "saturated",
            StateKind::Stopped => "stopped",
        })
    }
}

/// The declared transition graph. Abort may move any state to `Stopped`.
pub fn transition_allowed(from: StateKind, to: StateKind) -> bool {
    use StateKind::*;
    matches!(
        (from, to),
        (Idle, Configured)
            | (Configured, Ramping)
            | (Ramping, Ramping)
            | (Ramping, Saturated)
            | (Saturated, Configured)
            | (Stopped, Configured)
            | (_, Stopped)
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Configure,
    RunStep,
    RunToSaturation,
    Abort,
    MarkSaturated,
}

impl CommandKind {
    pub const ALL: [CommandKind; 5] =
        [CommandKind::Configure, CommandKind::RunStep, CommandKind::RunToSaturation, CommandKind::Abort, CommandKind::MarkSaturated];

    /// Whether the command is accepted in `state`; the operator UI gates its controls on this.
    pub fn allowed_in(self, state: StateKind) -> bool {
        use StateKind::*;
        match self {
            CommandKind::Configure => matches!(state, Idle | Saturated | Stopped),
            CommandKind::RunStep | CommandKind::RunToSaturation => matches!(state, Configured | Ramping),
            CommandKind::Abort => true,
            CommandKind::MarkSaturated => state == Ramping,
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::Configure => "configure",
            CommandKind::RunStep => "run_step",
            CommandKind::RunToSaturation => "run_to_saturation",
            CommandKind::Abort => "abort",
            CommandKind::MarkSaturated => "mark_saturated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("`{command}` is not allowed in state {state}")]
    NotAllowed { command: CommandKind, state: StateKind },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("another step is already running")]
    Busy,

    #[error("event log is inconsistent at entry {index}: {message}")]
    Replay { index: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Configured {
        config: StimKind,
        ramp: RampSpec,
        pulse: PulseSpec,
    },
    StepCompleted {
        step_index: usize,
        #[serde(rename = "amplitude_uA")]
        amplitude_ua: f64,
        #[serde(rename = "p2p_uV")]
        p2p_uv: BTreeMap<MuscleId, f64>,
    },
    SaturationReached {
        manual: bool,
        final_curves: Vec<RecruitmentCurve>,
    },
    Stopped {
        reason: StopReason,
        at_step: Option<usize>,
    },
}

/// One line of `session.log`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub from: StateKind,
    pub to: StateKind,
    #[serde(flatten)]
    pub event: SessionEvent,
}

/// The single transition function; live sessions and replay both go through it.
pub fn apply(state: &SessionState, event: &SessionEvent) -> Result<SessionState, ProtocolError> {
    let kind = state.kind();
    let refuse = |command| Err(ProtocolError::NotAllowed { command, state: kind });
    match event {
        SessionEvent::Configured { config, .. } => {
            if !CommandKind::Configure.allowed_in(kind) {
                return refuse(CommandKind::Configure);
            }
            Ok(SessionState::Configured { config: *config })
        }
        SessionEvent::StepCompleted { step_index, amplitude_ua, .. } => {
            let expected = match state {
                SessionState::Configured { .. } => 0,
                SessionState::Ramping { step_index, .. } => step_index + 1,
                _ => return refuse(CommandKind::RunStep),
            };
            if *step_index != expected {
                return Err(ProtocolError::Replay {
                    index: 0,
                    message: format!("step {step_index} recorded where step {expected} was due"),
                });
            }
            let config = state.config().expect("configured or ramping");
            Ok(SessionState::Ramping { config, step_index: *step_index, amplitude_ua: *amplitude_ua })
        }
        SessionEvent::SaturationReached { final_curves, .. } => match state {
            SessionState::Ramping { config, .. } => Ok(SessionState::Saturated { config: *config, final_curves: final_curves.clone() }),
            _ => refuse(CommandKind::MarkSaturated),
        },
        SessionEvent::Stopped { reason, .. } => Ok(SessionState::Stopped { reason: reason.clone() }),
    }
}

/// Fold a stored log from `Idle`, checking each entry's recorded endpoints.
pub fn replay(entries: &[LogEntry]) -> Result<SessionState, ProtocolError> {
    let mut state = SessionState::Idle;
    for (i, e) in entries.iter().enumerate() {
        if e.from != state.kind() {
            return Err(ProtocolError::Replay { index: i, message: format!("entry starts from {} but state is {}", e.from, state.kind()) });
        }
        state = apply(&state, &e.event).map_err(|err| match err {
            ProtocolError::Replay { message, .. } => ProtocolError::Replay { index: i, message },
            other => ProtocolError::Replay { index: i, message: other.to_string() },
        })?;
        if e.to != state.kind() {
            return Err(ProtocolError::Replay { index: i, message: format!("entry ends in {} but replay gives {}", e.to, state.kind()) });
        }
    }
    Ok(state)
}
