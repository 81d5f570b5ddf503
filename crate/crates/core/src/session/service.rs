use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use super::backend::StimBackend;
use super::broadcast::{Hub, Subscription};
use super::engine::{Session, SessionNotice};
use super::state::{CommandKind, ProtocolError, SessionState, StateKind};
use super::store::SessionStore;
use super::wire::{ServerMessage, Snapshot};
use crate::dsp::NormalizationScope;
use crate::electrode::StimKind;
use crate::protocol::{PulseSpec, RampSpec};

pub type DynBackend = Box<dyn StimBackend + Send>;

struct Inner {
    session: Session<DynBackend>,
    store: Option<SessionStore>,
    persisted: usize,
}

/// Releases the stepping slot when dropped.
struct StepGuard(Arc<AtomicBool>);

impl StepGuard {
    fn acquire(flag: &Arc<AtomicBool>) -> Result<Self, ProtocolError> {
        flag.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).map_err(|_| ProtocolError::Busy)?;
        Ok(StepGuard(Arc::clone(flag)))
    }
}

impl Drop for StepGuard {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

/// One session shared between connections. All mutations go through the inner
/// lock, only one stepping command runs at a time, and every transition is
/// persisted before it is broadcast.
pub struct SessionService {
    inner: Mutex<Inner>,
    hub: Hub,
    stepping: Arc<AtomicBool>,
    preempt: AtomicBool,
}

fn message(notice: SessionNotice) -> ServerMessage {
    match notice {
        SessionNotice::Transition(entry) => ServerMessage::Transition { entry },
        SessionNotice::Step(result) => ServerMessage::StepResult { result },
    }
}

impl SessionService {
    pub fn new(backend: DynBackend, store: Option<SessionStore>) -> Self {
        Self::with_hub(backend, store, Hub::default())
    }

    pub fn with_hub(backend: DynBackend, store: Option<SessionStore>, hub: Hub) -> Self {
        SessionService {
            inner: Mutex::new(Inner { session: Session::new(backend), store, persisted: 0 }),
            hub,
            stepping: Arc::new(AtomicBool::new(false)),
            preempt: AtomicBool::new(false),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn commit(&self, inner: &mut Inner, notices: Vec<SessionNotice>) {
        if let Some(store) = &mut inner.store {
            let new = &inner.session.log()[inner.persisted..];
            if let Err(e) = store.append_log(new) {
                log::error!("cannot append to session log: {e}");
            }
            let stepped = notices.iter().any(|n| matches!(n, SessionNotice::Step(_)));
            if let (true, Some(plan), Some(rec)) = (stepped, inner.session.plan(), inner.session.recording()) {
                let kind = plan.config.kind;
                if let Err(e) = store.write_recording(kind, rec).and_then(|_| store.write_curves(kind, &inner.session.current_curves())) {
                    log::error!("cannot persist step data: {e}");
                }
            }
            let terminal = matches!(inner.session.state().kind(), StateKind::Saturated | StateKind::Stopped);
            if terminal && notices.iter().any(|n| matches!(n, SessionNotice::Transition(_))) {
                if let Ok(map) = inner.session.polar_map(NormalizationScope::PerMuscle) {
                    if let Err(e) = store.write_polar(&map) {
                        log::error!("cannot write polar table: {e}");
                    }
                }
            }
        }
        inner.persisted = inner.session.log().len();
        for n in notices {
            self.hub.publish(&message(n));
        }
    }

    pub fn state(&self) -> SessionState {
        self.lock().session.state().clone()
    }

    pub fn snapshot(&self, reply_to: Option<u64>) -> Snapshot {
        let inner = self.lock();
        Self::snapshot_of(&inner.session, reply_to)
    }

    fn snapshot_of(session: &Session<DynBackend>, reply_to: Option<u64>) -> Snapshot {
        let kind = session.state().kind();
        Snapshot {
            reply_to,
            state: session.state().clone(),
            log_length: session.log().len() as u64,
            curves: session.current_curves(),
            completed_configs: session.configs_run(),
            allowed_commands: CommandKind::ALL.into_iter().filter(|c| c.allowed_in(kind)).collect(),
        }
    }

    /// Stream of messages starting with a snapshot taken atomically with registration.
    pub fn subscribe(&self) -> Subscription {
        let inner = self.lock();
        self.hub.subscribe(ServerMessage::Snapshot(Self::snapshot_of(&inner.session, None)))
    }

    pub fn configure(&self, kind: StimKind, ramp: RampSpec, pulse: PulseSpec) -> Result<SessionState, ProtocolError> {
        let mut inner = self.lock();
        let notices = inner.session.configure(kind, ramp, pulse)?;
        self.commit(&mut inner, notices);
        Ok(inner.session.state().clone())
    }

    pub fn run_step(&self) -> Result<SessionState, ProtocolError> {
        let _guard = StepGuard::acquire(&self.stepping)?;
        let mut inner = self.lock();
        let notices = inner.session.run_step()?;
        self.commit(&mut inner, notices);
        Ok(inner.session.state().clone())
    }

    /// Step until the ramp ends, releasing the session between steps so that
    /// abort and mark_saturated can interrupt it.
    pub fn run_to_saturation(&self) -> Result<SessionState, ProtocolError> {
        let guard = StepGuard::acquire(&self.stepping)?;
        self.check(CommandKind::RunToSaturation)?;
        self.ramp_loop(guard);
        Ok(self.state())
    }

    /// Like [`run_to_saturation`](Self::run_to_saturation) but on a worker thread.
    /// Returns once the command has been accepted.
    pub fn spawn_run_to_saturation(self: &Arc<Self>) -> Result<JoinHandle<()>, ProtocolError> {
        let guard = StepGuard::acquire(&self.stepping)?;
        self.check(CommandKind::RunToSaturation)?;
        let me = Arc::clone(self);
        Ok(std::thread::spawn(move || me.ramp_loop(guard)))
    }

    fn check(&self, command: CommandKind) -> Result<(), ProtocolError> {
        let state = self.lock().session.state().kind();
        if command.allowed_in(state) {
            Ok(())
        } else {
            Err(ProtocolError::NotAllowed { command, state })
        }
    }

    fn ramp_loop(&self, _guard: StepGuard) {
        loop {
            if self.preempt.load(Ordering::Acquire) {
                break;
            }
            let mut inner = self.lock();
            if !CommandKind::RunStep.allowed_in(inner.session.state().kind()) {
                break;
            }
            match inner.session.run_step() {
                Ok(notices) => self.commit(&mut inner, notices),
                Err(_) => break,
            }
        }
    }

    pub fn abort(&self, reason: &str) -> SessionState {
        self.preempt.store(true, Ordering::Release);
        let mut inner = self.lock();
        let notices = inner.session.abort(reason);
        self.commit(&mut inner, notices);
        self.preempt.store(false, Ordering::Release);
        inner.session.state().clone()
    }

    pub fn mark_saturated(&self) -> Result<SessionState, ProtocolError> {
        self.preempt.store(true, Ordering::Release);
        let mut inner = self.lock();
        let result = inner.session.mark_saturated();
        self.preempt.store(false, Ordering::Release);
        let notices = result?;
        self.commit(&mut inner, notices);
        Ok(inner.session.state().clone())
    }

    /// Stop any ramp in progress, persist, and end all subscriber streams.
    pub fn shutdown(&self) {
        if matches!(self.state().kind(), StateKind::Configured | StateKind::Ramping) {
            self.abort("shutdown");
        }
        self.hub.close();
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }
}
