mod common;

use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use common::{build_model, cuffbench, path_str, run};
use cuffbench::protocol::{PulseSpec, RampSpec};
use cuffbench::session::{replay, SessionState, StateKind, StopReason};
use cuffbench::session::store::read_log;
use cuffbench::session::wire::{decode, read_frame, write_frame, ClientCommand, ClientRequest, ServerMessage};
use cuffbench::StimKind;

struct Served {
    child: Child,
    addr: String,
}

impl Served {
    fn start(backend: &[&str], dir: &Path) -> Served {
        let mut child = cuffbench()
            .arg("serve")
            .args(backend)
            .args(["--bind", "127.0.0.1:0", "--out", path_str(dir)])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected banner {line:?}")).to_string();
        Served { child, addr }
    }

    fn connect(&self) -> Client {
        let stream = TcpStream::connect(&self.addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
        Client { stream, next_id: 1 }
    }

    fn terminate(mut self) -> std::process::ExitStatus {
        let pid = self.child.id().to_string();
        assert!(Command::new("kill").args(["-TERM", &pid]).status().unwrap().success());
        self.child.wait().unwrap()
    }
}

struct Client {
    stream: TcpStream,
    next_id: u64,
}

impl Client {
    fn send(&mut self, command: ClientCommand) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        write_frame(&mut self.stream, &ClientRequest { id: Some(id), command }).unwrap();
        id
    }

    fn recv(&mut self) -> ServerMessage {
        let body = read_frame(&mut self.stream).unwrap().expect("server closed the stream");
        decode(&body).unwrap()
    }

    /// Send and wait for the direct reply, skipping broadcast traffic.
    fn request(&mut self, command: ClientCommand) -> ServerMessage {
        let id = self.send(command);
        loop {
            match self.recv() {
                ServerMessage::Snapshot(s) if s.reply_to == Some(id) => return ServerMessage::Snapshot(s),
                e @ ServerMessage::Error { reply_to: Some(r), .. } if r == id => return e,
                _ => {}
            }
        }
    }
}

fn quick_ramp() -> (RampSpec, PulseSpec) {
    (RampSpec { step_duration_s: 0.6, ..RampSpec::default() }, PulseSpec::default())
}

#[test]
fn scripted_session_persists_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let model = build_model(tmp.path());
    let session = tmp.path().join("session");
    let served = Served::start(&["--model", path_str(&model)], &session);

    let mut client = served.connect();
    let id = client.send(ClientCommand::Subscribe);
    assert_eq!(id, 1);
    let (ramp, pulse) = quick_ramp();
    let reply = client.request(ClientCommand::Configure { config: StimKind::Str(2), ramp: ramp.clone(), pulse: pulse.clone() });
    assert!(matches!(reply, ServerMessage::Snapshot(ref s) if s.state.kind() == StateKind::Configured), "{reply:?}");

    // a second configure before the ramp is rejected by the state graph
    let rejected = client.request(ClientCommand::Configure { config: StimKind::Ring, ramp, pulse });
    assert!(matches!(rejected, ServerMessage::Error { state: StateKind::Configured, .. }), "{rejected:?}");

    client.send(ClientCommand::RunToSaturation);
    let mut steps = 0;
    let terminal = loop {
        match client.recv() {
            ServerMessage::StepResult { .. } => steps += 1,
            ServerMessage::Transition { entry } if matches!(entry.to, StateKind::Saturated | StateKind::Stopped) => {
                break entry.to;
            }
            _ => {}
        }
    };
    assert!(steps >= 3, "{steps} steps");

    let snapshot = client.request(ClientCommand::Snapshot);
    let ServerMessage::Snapshot(snapshot) = snapshot else { panic!("{snapshot:?}") };
    assert_eq!(snapshot.state.kind(), terminal);
    assert_eq!(snapshot.completed_configs, vec![StimKind::Str(2)]);

    let status = served.terminate();
    assert!(status.success(), "{status:?}");

    for file in ["session.log", "recording_STR2.cfrc", "curves_STR2.csv", "polar.csv"] {
        assert!(session.join(file).exists(), "{file} missing");
    }
    let log = read_log(&session.join("session.log")).unwrap();
    assert_eq!(log.len() as u64, snapshot.log_length);
    let replayed = replay(&log).unwrap();
    assert_eq!(replayed.kind(), terminal);
    assert_eq!(replayed, snapshot.state);
}

#[test]
fn termination_mid_ramp_is_persisted_as_stopped() {
    let tmp = tempfile::tempdir().unwrap();
    let session = tmp.path().join("session");
    let served = Served::start(&["--stub"], &session);
    let mut client = served.connect();
    let (ramp, pulse) = quick_ramp();
    client.request(ClientCommand::Configure { config: StimKind::Str(4), ramp, pulse });
    let reply = client.request(ClientCommand::RunStep);
    assert!(matches!(reply, ServerMessage::Snapshot(ref s) if s.state.kind() == StateKind::Ramping), "{reply:?}");

    assert!(served.terminate().success());
    let log = read_log(&session.join("session.log")).unwrap();
    let state = replay(&log).unwrap();
    assert!(
        matches!(&state, SessionState::Stopped { reason: StopReason::Aborted { reason }, .. } if reason == "shutdown"),
        "{state:?}"
    );
    assert!(session.join("recording_STR4.cfrc").exists());
}

#[test]
fn unusable_address_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["serve", "--stub", "--bind", "not-an-address", "--out", path_str(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));

    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let out = run(&["serve", "--stub", "--bind", &addr, "--out", path_str(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&addr));
}

#[test]
fn backend_choice_is_required() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["serve", "--out", path_str(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}
