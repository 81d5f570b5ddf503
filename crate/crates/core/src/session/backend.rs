use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::electrode::{StimConfig, StimKind};
use crate::muscle::MuscleId;
use crate::protocol::PulseTrain;
use crate::recording::{Channel, Recording, RecordingMetadata};
use crate::sim::synth::{finish_channels, render_mwaves};
use crate::sim::{MWaveTemplate, NerveModel, SynthOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendCapabilities {
    #[serde(rename = "max_current_uA")]
    pub max_current_ua: f64,
    pub channels: Vec<MuscleId>,
    pub sample_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("requested {requested_ua} µA exceeds the {max_ua} µA limit")]
    CurrentLimit { requested_ua: f64, max_ua: f64 },
    #[error("{0}")]
    Failed(String),
}

/// Anything that can deliver a pulse train and return the evoked, amplified signal.
pub trait StimBackend {
    fn capabilities(&self) -> BackendCapabilities;

    /// Deliver `train` (sample indices relative to the segment start) and record
    /// `n_samples` samples per channel.
    fn deliver(&mut self, train: &PulseTrain, config: &StimConfig, n_samples: usize) -> Result<Recording, BackendError>;
}

impl<B: StimBackend + ?Sized> StimBackend for Box<B> {
    fn capabilities(&self) -> BackendCapabilities {
        (**self).capabilities()
    }

    fn deliver(&mut self, train: &PulseTrain, config: &StimConfig, n_samples: usize) -> Result<Recording, BackendError> {
        (**self).deliver(train, config, n_samples)
    }
}

fn check_limit(train: &PulseTrain, max_ua: f64) -> Result<(), BackendError> {
    match train.events.iter().map(|e| e.amplitude_ua).find(|&a| a > max_ua) {
        Some(a) => Err(BackendError::CurrentLimit { requested_ua: a, max_ua }),
        None => Ok(()),
    }
}

/// Noise seed for one delivery, independent of what was delivered before.
fn delivery_seed(seed: u64, config: StimKind, train: &PulseTrain) -> u64 {
    // splitmix64 finalizer folded over the inputs; stable across builds
    let mix = |mut z: u64| {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    let mut h = mix(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = mix(h ^ u64::from(config.index()));
    for e in &train.events {
        h = mix(h ^ e.amplitude_ua.to_bits());
        h = mix(h ^ e.sample_index);
    }
    h
}

/// The nerve simulator standing in for the animal.
pub struct SimulatorBackend {
    nerve: NerveModel,
    options: SynthOptions,
    max_current_ua: f64,
    drives: BTreeMap<StimKind, Vec<Vec<f64>>>,
}

impl SimulatorBackend {
    pub fn new(nerve: NerveModel, options: SynthOptions, max_current_ua: f64) -> crate::Result<Self> {
        nerve.validate()?;
        Ok(SimulatorBackend { nerve, options, max_current_ua, drives: BTreeMap::new() })
    }

    pub fn nerve(&self) -> &NerveModel {
        &self.nerve
    }
}

impl StimBackend for SimulatorBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            max_current_ua: self.max_current_ua,
            channels: self.nerve.muscles(),
            sample_rate_hz: self.options.sample_rate_hz,
        }
    }

    fn deliver(&mut self, train: &PulseTrain, config: &StimConfig, n_samples: usize) -> Result<Recording, BackendError> {
        check_limit(train, self.max_current_ua)?;
        let failed = |e: crate::Error| BackendError::Failed(e.to_string());
        if !self.drives.contains_key(&config.kind) {
            let drive = self.nerve.unit_drive(&config.pattern).map_err(failed)?;
            self.drives.insert(config.kind, drive);
        }
        let drive = &self.drives[&config.kind];
        let mut rng = ChaCha8Rng::seed_from_u64(delivery_seed(self.options.seed, config.kind, train));
        let raw = render_mwaves(&self.nerve, drive, &train.events, n_samples, &self.options, &mut rng).map_err(failed)?;
        let channels = finish_channels(raw, &self.options).map_err(failed)?;
        Ok(Recording {
            sample_rate_hz: self.options.sample_rate_hz,
            channels,
            stim_events: train.events.clone(),
            metadata: RecordingMetadata {
                subject_id: self.options.subject_id.clone(),
                config: Some(config.kind),
                start_time_s: 0.0,
                acquisition_gain: self.options.acquisition.as_ref().map_or(1.0, |c| c.gain),
                extra: BTreeMap::from([("source".to_string(), "simulator".to_string())]),
            },
        })
    }
}

/// Placeholder for stimulator hardware: enforces the current limit and records silence.
pub struct StubBackend {
    pub max_current_ua: f64,
    pub channels: Vec<MuscleId>,
    pub sample_rate_hz: f64,
}

impl Default for StubBackend {
    fn default() -> Self {
        StubBackend {
            max_current_ua: 250.0,
            channels: MuscleId::standard().to_vec(),
            sample_rate_hz: crate::protocol::DEFAULT_SAMPLE_RATE_HZ,
        }
    }
}

impl StimBackend for StubBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities { max_current_ua: self.max_current_ua, channels: self.channels.clone(), sample_rate_hz: self.sample_rate_hz }
    }

    fn deliver(&mut self, train: &PulseTrain, config: &StimConfig, n_samples: usize) -> Result<Recording, BackendError> {
        check_limit(train, self.max_current_ua)?;
        Ok(Recording {
            sample_rate_hz: self.sample_rate_hz,
            channels: self.channels.iter().map(|m| Channel { muscle: m.clone(), samples: vec![0.0; n_samples] }).collect(),
            stim_events: train.events.clone(),
            metadata: RecordingMetadata { config: Some(config.kind), acquisition_gain: 1.0, ..Default::default() },
        })
    }
}

/// Logistic recruitment of one muscle: `1 / (1 + exp(-(I - midpoint) / width))`,
/// optionally scaled per configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptedMuscle {
    pub muscle: MuscleId,
    #[serde(rename = "midpoint_uA")]
    pub midpoint_ua: f64,
    #[serde(rename = "width_uA")]
    pub width_ua: f64,
    /// Per-configuration gain on the recruitment, 1 when absent.
    pub config_gain: BTreeMap<StimKind, f64>,
}

/// Cheap deterministic backend with closed-form recruitment and no acquisition
/// filtering, for protocol tests that do not need field computations.
#[derive(Clone, Debug, PartialEq)]
pub struct ScriptedBackend {
    pub muscles: Vec<ScriptedMuscle>,
    pub sample_rate_hz: f64,
    pub max_current_ua: f64,
    pub mwave_max_uv: f64,
    pub template: MWaveTemplate,
    /// Deliveries above this amplitude fail, to exercise error paths.
    pub fail_above_ua: Option<f64>,
}

impl ScriptedBackend {
    pub fn new(muscles: Vec<ScriptedMuscle>, sample_rate_hz: f64) -> Self {
        ScriptedBackend {
            muscles,
            sample_rate_hz,
            max_current_ua: f64::INFINITY,
            mwave_max_uv: 500.0,
            template: MWaveTemplate::default(),
            fail_above_ua: None,
        }
    }

    pub fn recruitment(&self, config: StimKind, amplitude_ua: f64) -> BTreeMap<MuscleId, f64> {
        self.muscles
            .iter()
            .map(|m| {
                let g = m.config_gain.get(&config).copied().unwrap_or(1.0);
                let r = 1.0 / (1.0 + (-(amplitude_ua - m.midpoint_ua) / m.width_ua).exp());
                (m.muscle.clone(), (g * r).clamp(0.0, 1.0))
            })
            .collect()
    }
}

impl StimBackend for ScriptedBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            max_current_ua: self.max_current_ua,
            channels: self.muscles.iter().map(|m| m.muscle.clone()).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    fn deliver(&mut self, train: &PulseTrain, config: &StimConfig, n_samples: usize) -> Result<Recording, BackendError> {
        check_limit(train, self.max_current_ua)?;
        if let Some(limit) = self.fail_above_ua {
            if let Some(e) = train.events.iter().find(|e| e.amplitude_ua > limit) {
                return Err(BackendError::Failed(format!("scripted failure at {} µA", e.amplitude_ua)));
            }
        }
        let wave = self.template.render(self.sample_rate_hz);
        let mut channels: Vec<Channel> =
            self.muscles.iter().map(|m| Channel { muscle: m.muscle.clone(), samples: vec![0.0; n_samples] }).collect();
        for e in &train.events {
            let r = self.recruitment(config.kind, e.amplitude_ua);
            for c in &mut channels {
                let scale = r[&c.muscle] * self.mwave_max_uv;
                for (dst, w) in c.samples.iter_mut().skip(e.sample_index as usize).zip(&wave) {
                    *dst += (scale * w) as f32;
                }
            }
        }
        Ok(Recording {
            sample_rate_hz: self.sample_rate_hz,
            channels,
            stim_events: train.events.clone(),
            metadata: RecordingMetadata { config: Some(config.kind), acquisition_gain: 1.0, ..Default::default() },
        })
    }
}
