use std::io;
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::service::SessionService;
use super::state::{ProtocolError, StateKind};
use super::wire::{decode, read_frame, write_frame, ClientCommand, ClientRequest, ServerMessage};

const POLL_INTERVAL: Duration = Duration::from_millis(50);

/// TCP endpoint for one [`SessionService`]. Each connection gets a reader thread;
/// subscribed connections also get a forwarding thread.
pub struct Server {
    listener: TcpListener,
    service: Arc<SessionService>,
    shutdown: Arc<AtomicBool>,
}

impl Server {
    pub fn bind<A: ToSocketAddrs>(addr: A, service: Arc<SessionService>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Server { listener, service, shutdown: Arc::new(AtomicBool::new(false)) })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Setting this flag makes [`run`](Self::run) shut the session down and return.
    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.shutdown)
    }

    /// Serve until the shutdown flag is set. On shutdown the session is stopped,
    /// subscribers receive what was queued, and every connection is closed.
    pub fn run(self) -> io::Result<()> {
        let mut connections: Vec<(TcpStream, JoinHandle<()>)> = Vec::new();
        while !self.shutdown.load(Ordering::Acquire) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("client connected from {peer}");
                    let handle = stream.try_clone()?;
                    let service = Arc::clone(&self.service);
                    let worker = thread::spawn(move || {
                        if let Err(e) = serve_connection(stream, service) {
                            log::debug!("connection from {peer} ended: {e}");
                        }
                    });
                    connections.retain(|(_, w)| !w.is_finished());
                    connections.push((handle, worker));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL_INTERVAL),
                Err(e) => return Err(e),
            }
        }
        log::info!("shutting down session service");
        self.service.shutdown();
        // readers see end of stream; writers flush the closed subscriptions first
        for (stream, _) in &connections {
            let _ = stream.shutdown(Shutdown::Read);
        }
        for (_, worker) in connections {
            let _ = worker.join();
        }
        Ok(())
    }
}

fn error_message(reply_to: Option<u64>, command: &str, state: StateKind, message: String) -> ServerMessage {
    ServerMessage::Error { reply_to, command: command.to_string(), state, message }
}

fn serve_connection(stream: TcpStream, service: Arc<SessionService>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let writer = Arc::new(Mutex::new(stream));
    let connected = Arc::new(AtomicBool::new(true));
    let mut forwarder: Option<JoinHandle<()>> = None;
    let send = |msg: &ServerMessage| -> io::Result<()> {
        let mut w = writer.lock().unwrap_or_else(|p| p.into_inner());
        write_frame(&mut *w, msg)
    };

    let result = (|| -> io::Result<()> {
        while let Some(body) = read_frame(&mut reader)? {
            let request: ClientRequest = match decode(&body) {
                Ok(r) => r,
                Err(e) => {
                    send(&error_message(None, "unknown", service.state().kind(), format!("malformed command: {e}")))?;
                    continue;
                }
            };
            let id = request.id;
            let name = request.command.name();
            let outcome: Result<(), ProtocolError> = match request.command {
                ClientCommand::Configure { config, ramp, pulse } => service.configure(config, ramp, pulse).map(drop),
                ClientCommand::RunStep => service.run_step().map(drop),
                ClientCommand::RunToSaturation => service.spawn_run_to_saturation().map(drop),
                ClientCommand::Abort { reason } => {
                    service.abort(reason.as_deref().unwrap_or("operator"));
                    Ok(())
                }
                ClientCommand::MarkSaturated => service.mark_saturated().map(drop),
                ClientCommand::Snapshot => Ok(()),
                ClientCommand::Subscribe => {
                    let sub = service.subscribe();
                    let writer = Arc::clone(&writer);
                    let connected = Arc::clone(&connected);
                    // drains queued messages before noticing a disconnect
                    forwarder = Some(thread::spawn(move || loop {
                        match sub.recv_timeout(POLL_INTERVAL) {
                            Some(msg) => {
                                let mut w = writer.lock().unwrap_or_else(|p| p.into_inner());
                                if write_frame(&mut *w, &msg).is_err() {
                                    break;
                                }
                            }
                            None if sub.is_closed() || !connected.load(Ordering::Acquire) => break,
                            None => {}
                        }
                    }));
                    continue;
                }
            };
            match outcome {
                Ok(()) => send(&ServerMessage::Snapshot(service.snapshot(id)))?,
                Err(e) => send(&error_message(id, name, service.state().kind(), e.to_string()))?,
            }
        }
        Ok(())
    })();
    connected.store(false, Ordering::Release);
    if let Some(f) = forwarder {
        let _ = f.join();
    }
    let _ = writer.lock().unwrap_or_else(|p| p.into_inner()).shutdown(Shutdown::Both);
    result
}
