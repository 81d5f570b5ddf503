//! Client/server messages. Each frame is a 4-byte big-endian length followed by
//! that many bytes of UTF-8 JSON.

use std::io::{self, Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::engine::StepReport;
use super::state::{CommandKind, LogEntry, SessionState, StateKind};
use crate::dsp::RecruitmentCurve;
use crate::electrode::StimKind;
use crate::protocol::{PulseSpec, RampSpec};

pub const MAX_FRAME_BYTES: usize = 16 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum ClientCommand {
    Configure {
        config: StimKind,
        #[serde(default)]
        ramp: RampSpec,
        #[serde(default)]
        pulse: PulseSpec,
    },
    RunStep,
    RunToSaturation,
    Abort {
        #[serde(default)]
        reason: Option<String>,
    },
    MarkSaturated,
    Subscribe,
    Snapshot,
}

impl ClientCommand {
    /// The state-changing command this maps to, if any.
    pub fn kind(&self) -> Option<CommandKind> {
        match self {
            ClientCommand::Configure { .. } => Some(CommandKind::Configure),
            ClientCommand::RunStep => Some(CommandKind::RunStep),
            ClientCommand::RunToSaturation => Some(CommandKind::RunToSaturation),
            ClientCommand::Abort { .. } => Some(CommandKind::Abort),
            ClientCommand::MarkSaturated => Some(CommandKind::MarkSaturated),
            ClientCommand::Subscribe | ClientCommand::Snapshot => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClientCommand::Configure { .. } => "configure",
            ClientCommand::RunStep => "run_step",
            ClientCommand::RunToSaturation => "run_to_saturation",
            ClientCommand::Abort { .. } => "abort",
            ClientCommand::MarkSaturated => "mark_saturated",
            ClientCommand::Subscribe => "subscribe",
            ClientCommand::Snapshot => "snapshot",
        }
    }
}

/// A command with an optional client-chosen id, echoed in the direct reply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    #[serde(flatten)]
    pub command: ClientCommand,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_to: Option<u64>,
    pub state: SessionState,
    pub log_length: u64,
    /// Curves of the current configuration.
    pub curves: Vec<RecruitmentCurve>,
    pub completed_configs: Vec<StimKind>,
    pub allowed_commands: Vec<CommandKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Transition { entry: LogEntry },
    StepResult { result: StepReport },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reply_to: Option<u64>,
        command: String,
        state: StateKind,
        message: String,
    },
    /// Messages lost because this subscriber fell behind.
    Gap { missed: u64 },
}

pub fn write_frame<W: Write, T: Serialize>(sink: &mut W, value: &T) -> io::Result<()> {
    let body = serde_json::to_vec(value).map_err(io::Error::other)?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&(body.len() as u32).to_be_bytes());
    buf.extend_from_slice(&body);
    sink.write_all(&buf)?;
    sink.flush()
}

/// Read one frame body; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame<R: Read>(source: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match source.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes exceeds the limit")));
    }
    let mut body = vec![0u8; n];
    source.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn decode<T: DeserializeOwned>(body: &[u8]) -> Result<T, serde_json::Error> {
    serde_json::from_slice(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::state::{SessionEvent, StopReason};

    #[test]
    fn commands_parse_with_defaults() {
        let r: ClientRequest = decode(br#"{"id": 7, "command": "configure", "config": "STR2"}"#).unwrap();
        assert_eq!(r.id, Some(7));
        assert_eq!(r.command, ClientCommand::Configure { config: StimKind::Str(2), ramp: RampSpec::default(), pulse: PulseSpec::default() });
        let r: ClientRequest = decode(br#"{"command": "abort"}"#).unwrap();
        assert_eq!(r.command, ClientCommand::Abort { reason: None });
        let partial: ClientRequest = decode(br#"{"command": "configure", "config": "RING", "ramp": {"max_amplitude_uA": 200}}"#).unwrap();
        match partial.command {
            ClientCommand::Configure { ramp, .. } => {
                assert_eq!(ramp.max_amplitude_ua, 200.0);
                assert_eq!(ramp.step_ua, 9.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(decode::<ClientRequest>(br#"{"command": "launch"}"#).is_err());
    }

    #[test]
    fn frames_round_trip() {
        let messages = vec![
            ServerMessage::Gap { missed: 3 },
            ServerMessage::Transition {
                entry: LogEntry {
                    seq: 1,
                    timestamp_ms: 5,
                    from: StateKind::Ramping,
                    to: StateKind::Stopped,
                    event: SessionEvent::Stopped { reason: StopReason::MaxReached, at_step: Some(4) },
                },
            },
            ServerMessage::Error { reply_to: Some(2), command: "run_step".into(), state: StateKind::Idle, message: "no".into() },
        ];
        let mut buf = Vec::new();
        for m in &messages {
            write_frame(&mut buf, m).unwrap();
        }
        let mut cursor = buf.as_slice();
        let mut back = Vec::new();
        while let Some(body) = read_frame(&mut cursor).unwrap() {
            back.push(decode::<ServerMessage>(&body).unwrap());
        }
        assert_eq!(back, messages);
    }

    #[test]
    fn oversized_and_truncated_frames() {
        let mut huge = (MAX_FRAME_BYTES as u32 + 1).to_be_bytes().to_vec();
        huge.extend_from_slice(b"{}");
        assert!(read_frame(&mut huge.as_slice()).is_err());
        let cut = [0u8, 0, 0, 10, b'{'];
        assert!(read_frame(&mut &cut[..]).is_err());
    }
}
