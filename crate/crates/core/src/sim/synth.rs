use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{recruitment_from_drive, NerveModel};
use crate::dsp::AcquisitionChain;
use crate::electrode::StimConfig;
use crate::error::{Error, Result};
use crate::muscle::MuscleId;
use crate::protocol::{ramp_amplitudes, ramp_schedule, PulseSpec, RampSpec, StimEvent, DEFAULT_SAMPLE_RATE_HZ};
use crate::recording::{Channel, Recording, RecordingMetadata};

/// Unit-amplitude M-wave: one full sine cycle of `duration_ms`, starting `latency_ms`
/// after the pulse. Zero mean, peak 1, peak-to-peak 2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MWaveTemplate {
    pub latency_ms: f64,
    pub duration_ms: f64,
}

impl Default for MWaveTemplate {
    fn default() -> Self {
        MWaveTemplate { latency_ms: 4.0, duration_ms: 10.0 }
    }
}

impl MWaveTemplate {
    pub fn value_at(&self, t_ms: f64) -> f64 {
        let phase = (t_ms - self.latency_ms) / self.duration_ms;
        if (0.0..1.0).contains(&phase) {
            (2.0 * std::f64::consts::PI * phase).sin()
        } else {
            0.0
        }
    }

    /// Samples from the stimulus onward, through the end of the wave.
    pub fn render(&self, sample_rate_hz: f64) -> Vec<f64> {
        let n = ((self.latency_ms + self.duration_ms) * 1e-3 * sample_rate_hz).ceil() as usize;
        (0..n).map(|i| self.value_at(i as f64 * 1e3 / sample_rate_hz)).collect()
    }

    pub fn peak_to_peak(&self) -> f64 {
        2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub sample_rate_hz: f64,
    pub template: MWaveTemplate,
    /// M-wave peak amplitude at full recruitment, µV at the muscle.
    pub mwave_max_uv: f64,
    pub noise_rms_uv: f64,
    /// `None` stores the raw muscle signal.
    pub acquisition: Option<AcquisitionChain>,
    pub seed: u64,
    pub subject_id: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            template: MWaveTemplate::default(),
            mwave_max_uv: 1000.0,
            noise_rms_uv: 0.0,
            acquisition: Some(AcquisitionChain::default()),
            seed: 0,
            subject_id: "sim".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub amplitude_ua: f64,
    pub recruitment: BTreeMap<MuscleId, f64>,
}

/// Ground-truth recruitment at each ramp amplitude.
pub fn simulated_truth(nerve: &NerveModel, config: &StimConfig, amplitudes: &[f64]) -> Result<Vec<TruthRow>> {
    let drive = nerve.unit_drive(&config.pattern)?;
    amplitudes
        .iter()
        .map(|&a| {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::domain("stimulation current must be non-negative"));
            }
            Ok(TruthRow { amplitude_ua: a, recruitment: recruitment_from_drive(nerve, &drive, a) })
        })
        .collect()
}

/// Muscle signals (µV, before amplification) for a block of stimulation events.
/// Event sample indices are relative to the start of the block.
pub(crate) fn render_mwaves(
    nerve: &NerveModel,
    drive: &[Vec<f64>],
    events: &[StimEvent],
    n_samples: usize,
    options: &SynthOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(MuscleId, Vec<f64>)>> {
    let template = options.template.render(options.sample_rate_hz);
    let mut channels: Vec<(MuscleId, Vec<f64>)> = nerve.muscles().into_iter().map(|m| (m, vec![0.0; n_samples])).collect();
    let mut cache: Option<(u64, BTreeMap<MuscleId, f64>)> = None;
    for e in events {
        let recruitment = match &cache {
            Some((bits, r)) if *bits == e.amplitude_ua.to_bits() => r,
            _ => {
                cache = Some((e.amplitude_ua.to_bits(), recruitment_from_drive(nerve, drive, e.amplitude_ua)));
                &cache.as_ref().expect("just set").1
            }
        };
        let at = e.sample_index as usize;
        for (muscle, samples) in channels.iter_mut() {
            let scale = recruitment.get(muscle).copied().unwrap_or(0.0) * options.mwave_max_uv;
            if scale == 0.0 {
                continue;
            }
            for (dst, t) in samples.iter_mut().skip(at).zip(&template) {
                *dst += scale * t;
            }
        }
    }
    if options.noise_rms_uv > 0.0 {
        let normal = Normal::new(0.0, options.noise_rms_uv).map_err(|e| Error::domain(e.to_string()))?;
        for (_, samples) in channels.iter_mut() {
            samples.iter_mut().for_each(|v| *v += normal.sample(rng));
        }
    } else if options.noise_rms_uv < 0.0 {
        return Err(Error::domain("noise RMS must be non-negative"));
    }
    Ok(channels)
}

pub(crate) fn finish_channels(channels: Vec<(MuscleId, Vec<f64>)>, options: &SynthOptions) -> Result<Vec<Channel>> {
    channels
        .into_iter()
        .map(|(muscle, raw)| {
            let out = match (&options.acquisition, raw.is_empty()) {
                (Some(chain), false) => chain.apply(&raw, options.sample_rate_hz)?,
                _ => raw,
            };
            Ok(Channel { muscle, samples: out.into_iter().map(|v| v as f32).collect() })
        })
        .collect()
}

/// A full staircase session for one configuration: each step's train evokes M-waves
/// scaled by the simulated recruitment, then noise and the acquisition chain are applied.
pub fn synthesize_recording(
    nerve: &NerveModel,
    config: &StimConfig,
    ramp: &RampSpec,
    pulse: &PulseSpec,
    options: &SynthOptions,
) -> Result<Recording> {
    nerve.validate()?;
    let trains = ramp_schedule(ramp, pulse, options.sample_rate_hz, config.kind)?;
    let n_steps = ramp_amplitudes(ramp).len();
    let n_samples = (n_steps as f64 * ramp.step_duration_s * options.sample_rate_hz).round() as usize;
    let events: Vec<StimEvent> = trains.into_iter().flat_map(|t| t.events).collect();

    let drive = nerve.unit_drive(&config.pattern)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let raw = render_mwaves(nerve, &drive, &events, n_samples, options, &mut rng)?;
    let channels = finish_channels(raw, options)?;
    let gain = options.acquisition.as_ref().map_or(1.0, |c| c.gain);
    let mut extra = BTreeMap::new();
    extra.insert("source".into(), "simulator".into());
    extra.insert("noise_rms_uV".into(), format!("{}", options.noise_rms_uv));
    extra.insert("seed".into(), options.seed.to_string());
    let rec = Recording {
        sample_rate_hz: options.sample_rate_hz,
        channels,
        stim_events: events,
        metadata: RecordingMetadata {
            subject_id: options.subject_id.clone(),
            config: Some(config.kind),
            start_time_s: 0.0,
            acquisition_gain: gain,
            extra,
        },
    };
    rec.validate()?;
    Ok(rec)
}
