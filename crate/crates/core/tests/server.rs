use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpStream;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use cuffbench::protocol::SaturationRule;
use cuffbench::session::wire::{decode, read_frame, write_frame, ClientCommand, ClientRequest, ServerMessage};
use cuffbench::session::{CommandKind, Hub, ScriptedBackend, ScriptedMuscle, Server, SessionService, StateKind};
use cuffbench::{MuscleId, PulseSpec, RampSpec, StimKind};

struct Running {
    addr: String,
    service: Arc<SessionService>,
    stop: Arc<std::sync::atomic::AtomicBool>,
    handle: thread::JoinHandle<std::io::Result<()>>,
}

fn start() -> Running {
    start_with(160.0, 4.0)
}

/// Server over a scripted FCR with a logistic response centred at `midpoint_ua`.
fn start_with(midpoint_ua: f64, width_ua: f64) -> Running {
    let m = ScriptedMuscle { muscle: MuscleId::Fcr, midpoint_ua, width_ua, config_gain: BTreeMap::new() };
    let backend = ScriptedBackend::new(vec![m], 2000.0);
    let service = Arc::new(SessionService::with_hub(Box::new(backend), None, Hub::new(1024)));
    let server = Server::bind("127.0.0.1:0", Arc::clone(&service)).unwrap();
    let addr = server.local_addr().unwrap().to_string();
    let stop = server.shutdown_flag();
    let handle = thread::spawn(move || server.run());
    Running { addr, service, stop, handle }
}

struct Client(TcpStream);

impl Client {
    fn connect(addr: &str) -> Client {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        Client(s)
    }

    fn send(&mut self, id: u64, command: ClientCommand) {
        write_frame(&mut self.0, &ClientRequest { id: Some(id), command }).unwrap();
    }

    fn recv(&mut self) -> Option<ServerMessage> {
        read_frame(&mut self.0).ok().flatten().map(|b| decode(&b).unwrap())
    }

    fn reply(&mut self, id: u64) -> ServerMessage {
        loop {
            match self.recv().expect("stream ended before the reply") {
                ServerMessage::Snapshot(s) if s.reply_to == Some(id) => return ServerMessage::Snapshot(s),
                m @ ServerMessage::Error { reply_to: Some(r), .. } if r == id => return m,
                _ => {}
            }
        }
    }
}

fn quick() -> RampSpec {
    RampSpec { pulses_per_step: 3, step_duration_s: 0.1, ..RampSpec::default() }
}

fn endless() -> RampSpec {
    RampSpec { max_amplitude_ua: 1e6, saturation: SaturationRule { window: 3, epsilon: 1e-15 }, ..quick() }
}

#[test]
fn replies_carry_ids_and_allowed_commands() {
    let run = start();
    let mut c = Client::connect(&run.addr);
    c.send(1, ClientCommand::Snapshot);
    match c.reply(1) {
        ServerMessage::Snapshot(s) => {
            assert_eq!(s.state.kind(), StateKind::Idle);
            assert_eq!(s.allowed_commands, vec![CommandKind::Configure, CommandKind::Abort]);
        }
        other => panic!("{other:?}"),
    }
    c.send(2, ClientCommand::Configure { config: StimKind::Str(3), ramp: quick(), pulse: PulseSpec::default() });
    match c.reply(2) {
        ServerMessage::Snapshot(s) => {
            assert_eq!(s.state.config(), Some(StimKind::Str(3)));
            assert!(s.allowed_commands.contains(&CommandKind::RunStep));
            assert_eq!(s.log_length, 1);
        }
        other => panic!("{other:?}"),
    }
    c.send(3, ClientCommand::MarkSaturated);
    match c.reply(3) {
        ServerMessage::Error { command, state, message, .. } => {
            assert_eq!(command, "mark_saturated");
            assert_eq!(state, StateKind::Configured);
            assert!(message.contains("not allowed"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    run.stop.store(true, Ordering::Release);
    run.handle.join().unwrap().unwrap();
}

#[test]
fn malformed_frames_get_structured_errors() {
    let run = start();
    let mut c = Client::connect(&run.addr);
    let body = br#"{"command": "launch"}"#;
    c.0.write_all(&(body.len() as u32).to_be_bytes()).unwrap();
    c.0.write_all(body).unwrap();
    match c.recv().unwrap() {
        ServerMessage::Error { reply_to, command, state, .. } => {
            assert_eq!(reply_to, None);
            assert_eq!(command, "unknown");
            assert_eq!(state, StateKind::Idle);
        }
        other => panic!("{other:?}"),
    }
    // the connection survives
    c.send(9, ClientCommand::Snapshot);
    assert!(matches!(c.reply(9), ServerMessage::Snapshot(_)));
    run.stop.store(true, Ordering::Release);
    run.handle.join().unwrap().unwrap();
}

#[test]
fn second_client_is_busy_while_ramping_and_abort_preempts() {
    // far below the midpoint the response keeps growing, so the ramp never flattens
    let run = start_with(1e5, 1e3);
    let mut operator = Client::connect(&run.addr);
    let mut watcher = Client::connect(&run.addr);
    watcher.send(1, ClientCommand::Subscribe);
    assert!(matches!(watcher.recv(), Some(ServerMessage::Snapshot(_))));

    operator.send(1, ClientCommand::Configure { config: StimKind::Str(2), ramp: endless(), pulse: PulseSpec::default() });
    operator.reply(1);
    operator.send(2, ClientCommand::RunToSaturation);
    operator.reply(2);
    // wait until steps are flowing
    while !matches!(watcher.recv(), Some(ServerMessage::StepResult { .. })) {}

    let mut other = Client::connect(&run.addr);
    other.send(5, ClientCommand::RunStep);
    match other.reply(5) {
        ServerMessage::Error { message, .. } => assert!(message.contains("already running"), "{message}"),
        other => panic!("{other:?}"),
    }

    other.send(6, ClientCommand::Abort { reason: Some("test".into()) });
    match other.reply(6) {
        ServerMessage::Snapshot(s) => assert_eq!(s.state.kind(), StateKind::Stopped),
        other => panic!("{other:?}"),
    }
    let stopped = loop {
        match watcher.recv().expect("watcher stream ended") {
            ServerMessage::Transition { entry } if entry.to == StateKind::Stopped => break entry,
            _ => {}
        }
    };
    assert_eq!(stopped.from, StateKind::Ramping);
    assert_eq!(run.service.state().kind(), StateKind::Stopped);

    run.stop.store(true, Ordering::Release);
    run.handle.join().unwrap().unwrap();
    // the subscription is closed on shutdown
    while watcher.recv().is_some() {}
}

#[test]
fn shutdown_stops_an_active_ramp() {
    let run = start();
    let mut c = Client::connect(&run.addr);
    c.send(1, ClientCommand::Configure { config: StimKind::Ring, ramp: quick(), pulse: PulseSpec::default() });
    c.reply(1);
    c.send(2, ClientCommand::RunStep);
    c.reply(2);
    run.stop.store(true, Ordering::Release);
    run.handle.join().unwrap().unwrap();
    assert_eq!(run.service.state().kind(), StateKind::Stopped);
}
