use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::backend::StimBackend;
use super::state::{apply, CommandKind, LogEntry, ProtocolError, SessionEvent, SessionState, StateKind, StopReason};
use crate::dsp::{measure_steps, normalize_measurements, AnalysisOptions, NormalizationScope, RecruitmentCurve, StepMeasurement};
use crate::electrode::{StimConfig, StimKind};
use crate::muscle::MuscleId;
use crate::protocol::{build_pulse_train, saturation_reached_values, PulseSpec, RampSpec};
use crate::recording::Recording;
use crate::selectivity::{build_polar_map, PolarMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub config: StimConfig,
    pub ramp: RampSpec,
    pub pulse: PulseSpec,
}

/// Outcome of one delivered step, as streamed to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub config: StimKind,
    pub step_index: usize,
    #[serde(rename = "amplitude_uA")]
    pub amplitude_ua: f64,
    #[serde(rename = "p2p_uV")]
    pub p2p_uv: BTreeMap<MuscleId, f64>,
    pub curves: Vec<RecruitmentCurve>,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SessionNotice {
    Transition(LogEntry),
    Step(StepReport),
}

fn wall_clock_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// The session state machine with its accumulated data. Every mutation goes
/// through [`apply`] and is appended to the log.
#[derive(Clone)]
pub struct Session<B> {
    backend: B,
    state: SessionState,
    log: Vec<LogEntry>,
    plan: Option<SessionPlan>,
    analysis: AnalysisOptions,
    measurements: Vec<StepMeasurement>,
    recording: Option<Recording>,
    history: BTreeMap<StimKind, Vec<StepMeasurement>>,
    clock: fn() -> u64,
}

impl<B: StimBackend> Session<B> {
    pub fn new(backend: B) -> Self {
        Session {
            backend,
            state: SessionState::Idle,
            log: Vec::new(),
            plan: None,
            analysis: AnalysisOptions::live(),
            measurements: Vec::new(),
            recording: None,
            history: BTreeMap::new(),
            clock: wall_clock_ms,
        }
    }

    /// Replace the timestamp source (milliseconds).
    pub fn with_clock(mut self, clock: fn() -> u64) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_analysis(mut self, analysis: AnalysisOptions) -> Self {
        self.analysis = AnalysisOptions { mode: crate::dsp::FilterMode::Causal, ..analysis };
        self
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn plan(&self) -> Option<&SessionPlan> {
        self.plan.as_ref()
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    /// Everything recorded for the current configuration so far.
    pub fn recording(&self) -> Option<&Recording> {
        self.recording.as_ref()
    }

    /// Curves of the current configuration, normalized within it.
    pub fn current_curves(&self) -> Vec<RecruitmentCurve> {
        normalize_measurements(&self.measurements, NormalizationScope::PerMuscle)
    }

    /// Curves of every configuration that delivered at least one step, normalized together.
    pub fn all_curves(&self, scope: NormalizationScope) -> Vec<RecruitmentCurve> {
        let all: Vec<StepMeasurement> = self.history.values().flatten().cloned().collect();
        normalize_measurements(&all, scope)
    }

    /// Configurations that delivered at least one step, in index order.
    pub fn configs_run(&self) -> Vec<StimKind> {
        self.history.keys().copied().collect()
    }

    pub fn polar_map(&self, scope: NormalizationScope) -> crate::Result<PolarMap> {
        build_polar_map(&self.all_curves(scope))
    }

    fn record(&mut self, event: SessionEvent) -> Result<SessionNotice, ProtocolError> {
        let from = self.state.kind();
        let next = apply(&self.state, &event)?;
        let entry = LogEntry { seq: self.log.len() as u64, timestamp_ms: (self.clock)(), from, to: next.kind(), event };
        self.state = next;
        self.log.push(entry.clone());
        Ok(SessionNotice::Transition(entry))
    }

    fn require(&self, command: CommandKind) -> Result<(), ProtocolError> {
        let state = self.state.kind();
        if command.allowed_in(state) {
            Ok(())
        } else {
            Err(ProtocolError::NotAllowed { command, state })
        }
    }

    pub fn configure(&mut self, kind: StimKind, ramp: RampSpec, pulse: PulseSpec) -> Result<Vec<SessionNotice>, ProtocolError> {
        self.require(CommandKind::Configure)?;
        let invalid = |e: crate::Error| ProtocolError::InvalidSpec(e.to_string());
        let config = StimConfig::new(kind).map_err(invalid)?;
        ramp.validate(&pulse).map_err(invalid)?;
        let gap_ms = 1e3 / pulse.frequency_hz;
        if self.analysis.window.end_ms >= gap_ms {
            return Err(ProtocolError::InvalidSpec(format!(
                "analysis window ends at {} ms, after the next pulse ({gap_ms:.2} ms)",
                self.analysis.window.end_ms
            )));
        }
        let notice = self.record(SessionEvent::Configured { config: kind, ramp: ramp.clone(), pulse: pulse.clone() })?;
        self.plan = Some(SessionPlan { config, ramp, pulse });
        self.measurements.clear();
        self.recording = None;
        Ok(vec![notice])
    }

    pub fn run_step(&mut self) -> Result<Vec<SessionNotice>, ProtocolError> {
        self.require(CommandKind::RunStep)?;
        let plan = self.plan.clone().expect("a configured session has a plan");
        let index = match self.state {
            SessionState::Ramping { step_index, .. } => step_index + 1,
            _ => 0,
        };
        let amplitude = plan.ramp.amplitude_at(index).expect("ramp stops before passing the maximum");
        let mut notices = Vec::new();

        let measured = self.deliver_and_measure(&plan, amplitude);
        let (segment, step) = match measured {
            Ok(v) => v,
            Err(message) => {
                let reason = StopReason::BackendError { message };
                notices.push(self.record(SessionEvent::Stopped { reason, at_step: Some(index) })?);
                return Ok(notices);
            }
        };

        let p2p: BTreeMap<MuscleId, f64> = step.iter().map(|m| (m.muscle.clone(), m.p2p_uv)).collect();
        notices.push(self.record(SessionEvent::StepCompleted { step_index: index, amplitude_ua: amplitude, p2p_uv: p2p.clone() })?);
        self.measurements.extend(step);
        match &mut self.recording {
            Some(r) => r.append(&segment).expect("segments share channels and rate"),
            None => self.recording = Some(segment),
        }
        self.history.insert(plan.config.kind, self.measurements.clone());

        let curves = self.current_curves();
        let saturated = self.dominant_muscle_saturated(&plan.ramp);
        notices.push(SessionNotice::Step(StepReport {
            config: plan.config.kind,
            step_index: index,
            amplitude_ua: amplitude,
            p2p_uv: p2p,
            curves: curves.clone(),
            saturated,
        }));
        if saturated {
            notices.push(self.record(SessionEvent::SaturationReached { manual: false, final_curves: curves })?);
        } else if plan.ramp.amplitude_at(index + 1).is_none() {
            notices.push(self.record(SessionEvent::Stopped { reason: StopReason::MaxReached, at_step: Some(index) })?);
        }
        Ok(notices)
    }

    fn deliver_and_measure(&mut self, plan: &SessionPlan, amplitude: f64) -> Result<(Recording, Vec<StepMeasurement>), String> {
        let fs = self.backend.capabilities().sample_rate_hz;
        let n_samples = (plan.ramp.step_duration_s * fs).round() as usize;
        let train = build_pulse_train(&plan.pulse.with_amplitude(amplitude), plan.ramp.pulses_per_step, 0.0, fs, plan.config.kind)
            .map_err(|e| e.to_string())?;
        let segment = self.backend.deliver(&train, &plan.config, n_samples).map_err(|e| e.to_string())?;
        let step = measure_steps(&segment, &self.analysis).map_err(|e| format!("processing failed: {e}"))?;
        Ok((segment, step))
    }

    /// Saturation is judged on the muscle with the largest response so far.
    fn dominant_muscle_saturated(&self, ramp: &RampSpec) -> bool {
        let mut series: BTreeMap<&MuscleId, Vec<f64>> = BTreeMap::new();
        for m in &self.measurements {
            series.entry(&m.muscle).or_default().push(m.p2p_uv);
        }
        let peak = |v: &Vec<f64>| v.iter().copied().fold(0.0, f64::max);
        series
            .values()
            .max_by(|a, b| peak(a).total_cmp(&peak(b)))
            .is_some_and(|values| saturation_reached_values(values, ramp.saturation.window, ramp.saturation.epsilon))
    }

    /// Step until the session leaves the ramp (saturation, maximum or failure).
    pub fn run_to_saturation(&mut self) -> Result<Vec<SessionNotice>, ProtocolError> {
        self.require(CommandKind::RunToSaturation)?;
        let mut notices = Vec::new();
        while matches!(self.state.kind(), StateKind::Configured | StateKind::Ramping) {
            notices.extend(self.run_step()?);
        }
        Ok(notices)
    }

    pub fn mark_saturated(&mut self) -> Result<Vec<SessionNotice>, ProtocolError> {
        self.require(CommandKind::MarkSaturated)?;
        let final_curves = self.current_curves();
        Ok(vec![self.record(SessionEvent::SaturationReached { manual: true, final_curves })?])
    }

    /// Always succeeds; aborting a stopped session records the new reason.
    pub fn abort(&mut self, reason: &str) -> Vec<SessionNotice> {
        let at_step = match self.state {
            SessionState::Ramping { step_index, .. } => Some(step_index),
            _ => None,
        };
        let event = SessionEvent::Stopped { reason: StopReason::Aborted { reason: reason.to_string() }, at_step };
        vec![self.record(event).expect("abort is accepted in every state")]
    }
}
