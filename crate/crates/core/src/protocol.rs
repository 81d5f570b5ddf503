//! Pulse trains and the staircase intensity ramp.

use serde::{Deserialize, Serialize};

use crate::dsp::RecruitmentCurve;
use crate::electrode::StimKind;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 20_000.0;

/// Asymmetric charge-balanced biphasic pulse: a short cathodic phase followed by a
/// longer, proportionally weaker anodic phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseSpec {
    pub cathodic_phase_width_us: f64,
    /// Anodic width over cathodic width.
    pub asymmetry_ratio: f64,
    pub frequency_hz: f64,
    #[serde(rename = "amplitude_uA")]
    pub amplitude_ua: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        PulseSpec {
            cathodic_phase_width_us: 150.0,
            asymmetry_ratio: 4.0,
            frequency_hz: 35.0,
            amplitude_ua: 0.0,
        }
    }
}

impl PulseSpec {
    pub fn with_amplitude(&self, amplitude_ua: f64) -> PulseSpec {
        PulseSpec { amplitude_ua, ..self.clone() }
    }

    pub fn anodic_phase_width_us(&self) -> f64 {
        self.cathodic_phase_width_us * self.asymmetry_ratio
    }

    pub fn anodic_amplitude_ua(&self) -> f64 {
        self.amplitude_ua / self.asymmetry_ratio
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.cathodic_phase_width_us) {
            return Err(Error::domain("cathodic phase width must be positive"));
        }
        if !positive(self.asymmetry_ratio) {
            return Err(Error::domain("asymmetry ratio must be positive"));
        }
        if !positive(self.frequency_hz) {
            return Err(Error::domain("pulse frequency must be positive"));
        }
        if !(self.amplitude_ua.is_finite() && self.amplitude_ua >= 0.0) {
            return Err(Error::domain("pulse amplitude must be non-negative"));
        }
        let pulse_us = self.cathodic_phase_width_us + self.anodic_phase_width_us();
        if pulse_us * 1e-6 >= self.period_s() {
            return Err(Error::domain(format!(
                "pulse of {pulse_us} µs does not fit in a {:.3} ms period",
                self.period_s() * 1e3
            )));
        }
        Ok(())
    }
}

/// Marker for one delivered pulse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimEvent {
    pub sample_index: u64,
    pub time_s: f64,
    #[serde(rename = "amplitude_uA")]
    pub amplitude_ua: f64,
    pub config: StimKind,
    pub pulse_index: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseTrain {
    pub events: Vec<StimEvent>,
    pub sample_rate_hz: f64,
    /// Sample index of `waveform[0]`.
    pub start_sample: u64,
    /// Delivered current in µA, cathodic phase negative.
    pub waveform: Vec<f64>,
}

impl PulseTrain {
    /// Net charge of the whole sampled waveform, in µA·s.
    pub fn net_charge(&self) -> f64 {
        self.waveform.iter().sum::<f64>() / self.sample_rate_hz
    }
}

/// Sampled pulse train of `n_pulses` pulses at `1/frequency` spacing starting at `t0_s`.
///
/// Phase widths are rounded to whole samples (at least one) and the anodic level is
/// set from the rounded widths, so each sampled pulse carries exactly zero net charge.
pub fn build_pulse_train(
    spec: &PulseSpec,
    n_pulses: u32,
    t0_s: f64,
    sample_rate_hz: f64,
    config: StimKind,
) -> Result<PulseTrain> {
    spec.validate()?;
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::domain("sample rate must be positive"));
    }
    if !(t0_s.is_finite() && t0_s >= 0.0) {
        return Err(Error::domain("train start time must be non-negative"));
    }
    let start_sample = (t0_s * sample_rate_hz).round() as u64;
    let cathodic_n = ((spec.cathodic_phase_width_us * 1e-6 * sample_rate_hz).round() as usize).max(1);
    let anodic_n = ((spec.anodic_phase_width_us() * 1e-6 * sample_rate_hz).round() as usize).max(1);
    let anodic_level = spec.amplitude_ua * cathodic_n as f64 / anodic_n as f64;

    let events: Vec<StimEvent> = (0..n_pulses)
        .map(|i| {
            let time_s = t0_s + f64::from(i) / spec.frequency_hz;
            StimEvent {
                sample_index: (time_s * sample_rate_hz).round() as u64,
                time_s,
                amplitude_ua: spec.amplitude_ua,
                config,
                pulse_index: i,
            }
        })
        .collect();

    let len = events
        .last()
        .map(|e| (e.sample_index - start_sample) as usize + cathodic_n + anodic_n)
        .unwrap_or(0);
    let mut waveform = vec![0.0; len];
    for e in &events {
        let at = (e.sample_index - start_sample) as usize;
        waveform[at..at + cathodic_n].fill(-spec.amplitude_ua);
        waveform[at + cathodic_n..at + cathodic_n + anodic_n].fill(anodic_level);
    }
    Ok(PulseTrain { events, sample_rate_hz, start_sample, waveform })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaturationRule {
    /// Number of trailing steps that must all be flat.
    pub window: usize,
    /// Flatness threshold as a fraction of the running maximum.
    pub epsilon: f64,
}

impl Default for SaturationRule {
    fn default() -> Self {
        SaturationRule { window: 3, epsilon: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RampSpec {
    #[serde(rename = "start_amplitude_uA")]
    pub start_amplitude_ua: f64,
    #[serde(rename = "step_uA")]
    pub step_ua: f64,
    pub step_duration_s: f64,
    pub pulses_per_step: u32,
    pub saturation: SaturationRule,
    #[serde(rename = "max_amplitude_uA")]
    pub max_amplitude_ua: f64,
}

impl Default for RampSpec {
    fn default() -> Self {
        RampSpec {
            start_amplitude_ua: 150.0,
            step_ua: 9.0,
            step_duration_s: 4.5,
            pulses_per_step: 19,
            saturation: SaturationRule::default(),
            max_amplitude_ua: 250.0,
        }
    }
}

impl RampSpec {
    pub fn validate(&self, pulse: &PulseSpec) -> Result<()> {
        pulse.validate()?;
        if !(self.step_ua.is_finite() && self.step_ua > 0.0) {
            return Err(Error::domain("ramp step must be positive"));
        }
        if self.pulses_per_step == 0 {
            return Err(Error::domain("at least one pulse per step is required"));
        }
        if !(self.start_amplitude_ua.is_finite() && self.start_amplitude_ua >= 0.0) {
            return Err(Error::domain("ramp start must be non-negative"));
        }
        if !(self.max_amplitude_ua >= self.start_amplitude_ua) {
            return Err(Error::domain("ramp start exceeds the hard maximum"));
        }
        if self.saturation.window == 0 || !(self.saturation.epsilon > 0.0) {
            return Err(Error::domain("saturation rule needs window >= 1 and epsilon > 0"));
        }
        let train_s = f64::from(self.pulses_per_step) / pulse.frequency_hz;
        if train_s > self.step_duration_s + 1e-12 {
            return Err(Error::domain(format!(
                "{} pulses at {} Hz take {train_s:.3} s, longer than the {} s step",
                self.pulses_per_step, pulse.frequency_hz, self.step_duration_s
            )));
        }
        Ok(())
    }

    /// Amplitude of step `index`, or `None` past the hard maximum.
    pub fn amplitude_at(&self, index: usize) -> Option<f64> {
        let a = self.start_amplitude_ua + index as f64 * self.step_ua;
        let slack = 1e-9 * self.max_amplitude_ua.abs().max(1.0);
        if a <= self.max_amplitude_ua + slack {
            Some(a.min(self.max_amplitude_ua))
        } else {
            None
        }
    }
}

/// `start, start + step, …` up to and including `max_amplitude_ua`.
pub fn ramp_amplitudes(spec: &RampSpec) -> Vec<f64> {
    if !(spec.step_ua > 0.0) {
        return Vec::new();
    }
    (0..).map_while(|i| spec.amplitude_at(i)).collect()
}

/// Pulse trains for every ramp step; step `i` starts at `i * step_duration_s`
/// and rests after its train until the next step.
pub fn ramp_schedule(
    ramp: &RampSpec,
    pulse: &PulseSpec,
    sample_rate_hz: f64,
    config: StimKind,
) -> Result<Vec<PulseTrain>> {
    ramp.validate(pulse)?;
    ramp_amplitudes(ramp)
        .into_iter()
        .enumerate()
        .map(|(i, a)| {
            build_pulse_train(
                &pulse.with_amplitude(a),
                ramp.pulses_per_step,
                i as f64 * ramp.step_duration_s,
                sample_rate_hz,
                config,
            )
        })
        .collect()
}

/// Saturation test on a recruitment curve's mean peak-to-peak values.
pub fn saturation_reached(curve: &RecruitmentCurve, window: usize, epsilon: f64) -> bool {
    let values: Vec<f64> = curve.points.iter().map(|p| p.mean_p2p_uv).collect();
    saturation_reached_values(&values, window, epsilon)
}

/// True when each of the last `window` increments of `values` stays below
/// `epsilon` times the running maximum. Needs at least `window + 1` values.
pub fn saturation_reached_values(values: &[f64], window: usize, epsilon: f64) -> bool {
    if window == 0 || values.len() < window + 1 {
        return false;
    }
    let start = values.len() - window;
    (start..values.len()).all(|i| {
        let running_max = values[..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let increment = values[i] - values[i - 1];
        running_max > 0.0 && increment < epsilon * running_max
    })
}
