//! eEMG processing: acquisition-chain emulation, stimulus-locked epoching,
//! M-wave averaging, peak-to-peak and recruitment-curve construction.

mod filter;

pub use filter::{apply_filter, design_butterworth, Biquad, Filter, FilterKind, FilterMode};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::electrode::StimKind;
use crate::error::{Error, Result};
use crate::muscle::MuscleId;
use crate::protocol::StimEvent;
use crate::recording::Recording;

pub const ACQUISITION_GAIN: f64 = 5000.0;

/// Amplifier front end: gain, 4th-order 1 Hz – 5 kHz band-pass, 50 Hz notch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionChain {
    pub gain: f64,
    pub band: FilterKind,
    pub band_order: usize,
    pub notch: FilterKind,
}

impl Default for AcquisitionChain {
    fn default() -> Self {
        AcquisitionChain {
            gain: ACQUISITION_GAIN,
            band: FilterKind::Bandpass { low_hz: 1.0, high_hz: 5000.0 },
            band_order: 4,
            notch: FilterKind::notch(50.0, 4.0),
        }
    }
}

impl AcquisitionChain {
    pub fn apply(&self, raw_uv: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
        let band = design_butterworth(self.band, self.band_order, sample_rate_hz)?;
        let notch = design_butterworth(self.notch, 2, sample_rate_hz)?;
        let amplified: Vec<f64> = raw_uv.iter().map(|v| v * self.gain).collect();
        let banded = apply_filter(&amplified, &band, FilterMode::Causal)?;
        apply_filter(&banded, &notch, FilterMode::Causal)
    }
}

/// Run a raw channel through the default amplifier chain (causal, as the hardware would).
pub fn emulate_acquisition(raw_uv: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    AcquisitionChain::default().apply(raw_uv, sample_rate_hz)
}

/// Post-stimulus analysis window in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub start_ms: f64,
    pub end_ms: f64,
}

impl Default for EpochWindow {
    fn default() -> Self {
        // the first 2 ms carry the stimulation artifact
        EpochWindow { start_ms: 2.0, end_ms: 25.0 }
    }
}

impl EpochWindow {
    pub fn offset_samples(&self, sample_rate_hz: f64) -> usize {
        (self.start_ms * 1e-3 * sample_rate_hz).round() as usize
    }

    pub fn len_samples(&self, sample_rate_hz: f64) -> usize {
        ((self.end_ms - self.start_ms) * 1e-3 * sample_rate_hz).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub muscle: MuscleId,
    /// Index into the source recording's `stim_events`.
    pub event_index: usize,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepEpochs {
    pub config: StimKind,
    pub amplitude_ua: f64,
    pub epochs: Vec<Epoch>,
}

impl StepEpochs {
    pub fn for_muscle<'a>(&'a self, muscle: &'a MuscleId) -> impl Iterator<Item = &'a Epoch> + 'a {
        self.epochs.iter().filter(move |e| &e.muscle == muscle)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochSet {
    pub window: EpochWindow,
    /// Steps ordered by configuration, then amplitude.
    pub steps: Vec<StepEpochs>,
    /// Events whose window ran past the end of the data.
    pub skipped_events: usize,
}

/// Cut one epoch per event per channel. `channels` are already-filtered signals.
pub fn extract_epochs_from(
    channels: &[(MuscleId, Vec<f64>)],
    events: &[StimEvent],
    sample_rate_hz: f64,
    window: EpochWindow,
) -> Result<EpochSet> {
    if !(window.start_ms >= 0.0 && window.end_ms > window.start_ms) {
        return Err(Error::domain(format!(
            "epoch window ({}, {}) ms is empty or starts before the stimulus",
            window.start_ms, window.end_ms
        )));
    }
    let end_samples = window.end_ms * 1e-3 * sample_rate_hz;
    if let Some(min_gap) = events.windows(2).map(|w| w[1].sample_index.saturating_sub(w[0].sample_index)).min() {
        if end_samples > min_gap as f64 {
            return Err(Error::domain(format!(
                "epoch window ends at {} ms, past the {:.2} ms inter-pulse interval",
                window.end_ms,
                min_gap as f64 / sample_rate_hz * 1e3
            )));
        }
    }
    let n = channels.first().map_or(0, |(_, s)| s.len());
    let offset = window.offset_samples(sample_rate_hz);
    let len = window.len_samples(sample_rate_hz);

    let mut steps: Vec<StepEpochs> = Vec::new();
    let mut skipped = 0;
    for (idx, e) in events.iter().enumerate() {
        let start = e.sample_index as usize + offset;
        if start + len > n {
            skipped += 1;
            continue;
        }
        let pos = match steps
            .iter()
            .position(|s| s.config == e.config && s.amplitude_ua.to_bits() == e.amplitude_ua.to_bits())
        {
            Some(p) => p,
            None => {
                steps.push(StepEpochs { config: e.config, amplitude_ua: e.amplitude_ua, epochs: Vec::new() });
                steps.len() - 1
            }
        };
        for (muscle, samples) in channels {
            steps[pos].epochs.push(Epoch {
                muscle: muscle.clone(),
                event_index: idx,
                samples: samples[start..start + len].to_vec(),
            });
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} stimulation events too close to the end of the recording; epochs skipped");
    }
    steps.sort_by(|a, b| a.config.cmp(&b.config).then(a.amplitude_ua.total_cmp(&b.amplitude_ua)));
    Ok(EpochSet { window, steps, skipped_events: skipped })
}

/// Epochs straight from the stored (unfiltered) samples.
pub fn extract_epochs(recording: &Recording, window: EpochWindow) -> Result<EpochSet> {
    recording.validate()?;
    let channels: Vec<(MuscleId, Vec<f64>)> = recording
        .channels
        .iter()
        .map(|c| (c.muscle.clone(), c.samples.iter().map(|&v| f64::from(v)).collect()))
        .collect();
    extract_epochs_from(&channels, &recording.stim_events, recording.sample_rate_hz, window)
}

/// Pointwise mean of equal-length epochs.
pub fn average_epochs<'a, I>(epochs: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = epochs.into_iter();
    let first = iter.next().ok_or_else(|| Error::domain("cannot average an empty epoch group"))?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for e in iter {
        if e.len() != sum.len() {
            return Err(Error::domain(format!("epoch length {} differs from {}", e.len(), sum.len())));
        }
        for (s, v) in sum.iter_mut().zip(e) {
            *s += v;
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

pub fn peak_to_peak(waveform: &[f64]) -> Result<f64> {
    if waveform.is_empty() {
        return Err(Error::domain("peak-to-peak of an empty waveform"));
    }
    let (lo, hi) = waveform
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    /// Each muscle divided by its own maximum over all recordings.
    #[default]
    PerMuscle,
    /// Every muscle divided by the single largest value over all recordings.
    Global,
}

impl std::str::FromStr for NormalizationScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-muscle" | "per_muscle" => Ok(NormalizationScope::PerMuscle),
            "global" => Ok(NormalizationScope::Global),
            _ => Err(Error::domain(format!("unknown normalization scope `{s}`"))),
        }
    }
}

impl std::fmt::Display for NormalizationScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormalizationScope::PerMuscle => "per_muscle",
            NormalizationScope::Global => "global",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecruitmentPoint {
    #[serde(rename = "amplitude_uA")]
    pub amplitude_ua: f64,
    #[serde(rename = "mean_p2p_uV")]
    pub mean_p2p_uv: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecruitmentCurve {
    pub muscle: MuscleId,
    pub config: StimKind,
    pub scope: NormalizationScope,
    /// False when every value in the normalization group was zero; `normalized` is then 0.
    pub normalizable: bool,
    pub points: Vec<RecruitmentPoint>,
}

impl RecruitmentCurve {
    pub fn max_normalized(&self) -> f64 {
        self.points.iter().map(|p| p.normalized).fold(0.0, f64::max)
    }
}

/// Offline (or live) measurement settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub window: EpochWindow,
    pub band: FilterKind,
    pub band_order: usize,
    pub mode: FilterMode,
    pub scope: NormalizationScope,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            window: EpochWindow::default(),
            band: FilterKind::Bandpass { low_hz: 10.0, high_hz: 500.0 },
            band_order: 4,
            mode: FilterMode::ZeroPhase,
            scope: NormalizationScope::PerMuscle,
        }
    }
}

impl AnalysisOptions {
    pub fn live() -> Self {
        AnalysisOptions { mode: FilterMode::Causal, ..AnalysisOptions::default() }
    }
}

/// Mean-M-wave peak-to-peak (µV, referred to the amplifier input) per muscle,
/// configuration and amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMeasurement {
    pub muscle: MuscleId,
    pub config: StimKind,
    pub amplitude_ua: f64,
    pub p2p_uv: f64,
    pub epochs: usize,
}

pub fn measure_steps(recording: &Recording, options: &AnalysisOptions) -> Result<Vec<StepMeasurement>> {
    recording.validate()?;
    let filter = design_butterworth(options.band, options.band_order, recording.sample_rate_hz)?;
    let gain = if recording.metadata.acquisition_gain > 0.0 { recording.metadata.acquisition_gain } else { 1.0 };
    let mut channels = Vec::with_capacity(recording.channels.len());
    for c in &recording.channels {
        let x: Vec<f64> = c.samples.iter().map(|&v| f64::from(v) / gain).collect();
        let y = if x.is_empty() { x } else { apply_filter(&x, &filter, options.mode)? };
        channels.push((c.muscle.clone(), y));
    }
    let set = extract_epochs_from(&channels, &recording.stim_events, recording.sample_rate_hz, options.window)?;
    let mut out = Vec::new();
    for step in &set.steps {
        for (muscle, _) in &channels {
            let group: Vec<&[f64]> = step.for_muscle(muscle).map(|e| e.samples.as_slice()).collect();
            let mean = average_epochs(group.iter().copied())?;
            out.push(StepMeasurement {
                muscle: muscle.clone(),
                config: step.config,
                amplitude_ua: step.amplitude_ua,
                p2p_uv: peak_to_peak(&mean)?,
                epochs: group.len(),
            });
        }
    }
    Ok(out)
}

/// Normalize raw measurements into curves, one per muscle × configuration.
pub fn normalize_measurements(measurements: &[StepMeasurement], scope: NormalizationScope) -> Vec<RecruitmentCurve> {
    let mut grouped: BTreeMap<(MuscleId, StimKind), Vec<(f64, f64)>> = BTreeMap::new();
    for m in measurements {
        grouped.entry((m.muscle.clone(), m.config)).or_default().push((m.amplitude_ua, m.p2p_uv));
    }
    let mut per_muscle_max: BTreeMap<&MuscleId, f64> = BTreeMap::new();
    for ((muscle, _), pts) in &grouped {
        let slot = per_muscle_max.entry(muscle).or_insert(0.0);
        *slot = pts.iter().map(|p| p.1).fold(*slot, f64::max);
    }
    let global_max = per_muscle_max.values().copied().fold(0.0, f64::max);

    grouped
        .iter()
        .map(|((muscle, config), pts)| {
            let norm = match scope {
                NormalizationScope::PerMuscle => per_muscle_max[muscle],
                NormalizationScope::Global => global_max,
            };
            let normalizable = norm > 0.0;
            let mut points: Vec<RecruitmentPoint> = pts
                .iter()
                .map(|&(amplitude_ua, p2p)| RecruitmentPoint {
                    amplitude_ua,
                    mean_p2p_uv: p2p,
                    normalized: if normalizable { p2p / norm } else { 0.0 },
                })
                .collect();
            points.sort_by(|a, b| a.amplitude_ua.total_cmp(&b.amplitude_ua));
            RecruitmentCurve { muscle: muscle.clone(), config: *config, scope, normalizable, points }
        })
        .collect()
}

/// Full offline chain over a set of recordings. All recordings must carry the same muscles.
pub fn build_recruitment_curves(recordings: &[Recording], options: &AnalysisOptions) -> Result<Vec<RecruitmentCurve>> {
    let Some(first) = recordings.first() else {
        return Ok(Vec::new());
    };
    let mut labels = first.muscles();
    labels.sort();
    let mut measurements = Vec::new();
    for (i, r) in recordings.iter().enumerate() {
        let mut m = r.muscles();
        m.sort();
        if m != labels {
            return Err(Error::domain(format!("recording {i} has different muscle labels")));
        }
        measurements.extend(measure_steps(r, options)?);
    }
    let curves = normalize_measurements(&measurements, options.scope);
    for c in curves.iter().filter(|c| !c.normalizable) {
        log::warn!("{} / {}: all peak-to-peak values are zero; curve left unnormalized", c.muscle, c.config);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::{Channel, RecordingMetadata};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn event(sample: u64, amp: f64, i: u32) -> StimEvent {
        StimEvent { sample_index: sample, time_s: sample as f64 / 20_000.0, amplitude_ua: amp, config: StimKind::Str(2), pulse_index: i }
    }

    #[test]
    fn epoch_sample_range() {
        let n = 120_000;
        let ramp: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let set = extract_epochs_from(
            &[(MuscleId::Fcr, ramp)],
            &[event(100_000, 150.0, 0)],
            20_000.0,
            EpochWindow { start_ms: 2.0, end_ms: 25.0 },
        )
        .unwrap();
        let e = &set.steps[0].epochs[0];
        assert_eq!(e.samples.len(), 460);
        assert_eq!(e.samples[0], 100_040.0);
        assert_eq!(*e.samples.last().unwrap(), 100_499.0);
    }

    #[test]
    fn nineteen_events_give_nineteen_epochs() {
        let events: Vec<_> = (0..19).map(|i| event(1000 + i * 571, 200.0, i as u32)).collect();
        let set = extract_epochs_from(&[(MuscleId::Fds, vec![0.0; 20_000])], &events, 20_000.0, EpochWindow::default()).unwrap();
        assert_eq!(set.steps.len(), 1);
        assert_eq!(set.steps[0].epochs.len(), 19);
        assert_eq!(set.skipped_events, 0);
    }

    #[test]
    fn window_longer_than_period_is_rejected() {
        let events: Vec<_> = (0..3).map(|i| event(1000 + i * 571, 200.0, i as u32)).collect();
        let r = extract_epochs_from(&[(MuscleId::Fds, vec![0.0; 5000])], &events, 20_000.0, EpochWindow { start_ms: 2.0, end_ms: 30.0 });
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn tail_events_are_skipped() {
        let events = vec![event(100, 10.0, 0), event(4_900, 10.0, 1)];
        let set = extract_epochs_from(&[(MuscleId::Pt, vec![0.0; 5000])], &events, 20_000.0, EpochWindow::default()).unwrap();
        assert_eq!(set.skipped_events, 1);
        assert_eq!(set.steps[0].epochs.len(), 1);
    }

    #[test]
    fn averaging_rules() {
        let w = vec![1.0, -2.0, 3.0];
        assert_eq!(average_epochs([w.as_slice(), w.as_slice()]).unwrap(), w);
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        assert_eq!(average_epochs([w.as_slice(), neg.as_slice()]).unwrap(), vec![0.0; 3]);
        assert!(average_epochs(std::iter::empty::<&[f64]>()).is_err());
        assert!(average_epochs([w.as_slice(), &[1.0][..]]).is_err());
    }

    #[test]
    fn averaging_shrinks_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let epochs: Vec<Vec<f64>> = (0..19).map(|_| (0..20_000).map(|_| normal.sample(&mut rng)).collect()).collect();
        let mean = average_epochs(epochs.iter().map(|e| e.as_slice())).unwrap();
        let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        let ratio = rms(&mean) / rms(&epochs[0]);
        let expected = 1.0 / 19f64.sqrt();
        assert!((ratio / expected - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn p2p_examples() {
        let s: Vec<f64> = (0..1000).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 1000.0 + 0.3).sin()).collect();
        assert!((peak_to_peak(&s).unwrap() - 2.0).abs() < 1e-4);
        assert_eq!(peak_to_peak(&[4.0; 8]).unwrap(), 0.0);
        assert!((peak_to_peak(&[0.2, -0.5, 0.3]).unwrap() - 0.8).abs() < 1e-15);
        assert!(peak_to_peak(&[]).is_err());
    }

    fn meas(muscle: MuscleId, amp: f64, p2p: f64) -> StepMeasurement {
        StepMeasurement { muscle, config: StimKind::Str(2), amplitude_ua: amp, p2p_uv: p2p, epochs: 19 }
    }

    #[test]
    fn normalization_single_muscle() {
        let m = vec![meas(MuscleId::Fcr, 150.0, 1.0), meas(MuscleId::Fcr, 159.0, 2.0), meas(MuscleId::Fcr, 168.0, 4.0)];
        let c = normalize_measurements(&m, NormalizationScope::PerMuscle);
        let n: Vec<f64> = c[0].points.iter().map(|p| p.normalized).collect();
        assert_eq!(n, vec![0.25, 0.5, 1.0]);
    }

    #[test]
    fn normalization_scopes() {
        let m = vec![
            meas(MuscleId::Fcr, 150.0, 10.0),
            meas(MuscleId::Fcr, 159.0, 20.0),
            meas(MuscleId::Fds, 150.0, 1.0),
            meas(MuscleId::Fds, 159.0, 5.0),
        ];
        let per = normalize_measurements(&m, NormalizationScope::PerMuscle);
        assert!(per.iter().all(|c| c.max_normalized() == 1.0));
        let global = normalize_measurements(&m, NormalizationScope::Global);
        let fds = global.iter().find(|c| c.muscle == MuscleId::Fds).unwrap();
        assert_eq!(fds.max_normalized(), 0.25);
        let fcr = global.iter().find(|c| c.muscle == MuscleId::Fcr).unwrap();
        assert_eq!(fcr.max_normalized(), 1.0);
    }

    #[test]
    fn all_zero_group_is_unnormalizable() {
        let m = vec![meas(MuscleId::Ecr, 150.0, 0.0), meas(MuscleId::Ecr, 159.0, 0.0)];
        let c = normalize_measurements(&m, NormalizationScope::PerMuscle);
        assert!(!c[0].normalizable);
        assert!(c[0].points.iter().all(|p| p.normalized == 0.0 && p.mean_p2p_uv == 0.0));
    }

    #[test]
    fn curves_require_matching_muscles() {
        let rec = |m: MuscleId| Recording {
            sample_rate_hz: 20_000.0,
            channels: vec![Channel { muscle: m, samples: vec![0.0; 100] }],
            stim_events: vec![],
            metadata: RecordingMetadata { acquisition_gain: 1.0, ..Default::default() },
        };
        let r = build_recruitment_curves(&[rec(MuscleId::Fcr), rec(MuscleId::Pt)], &AnalysisOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn acquisition_gain_and_notch() {
        let fs = 20_000.0;
        let n = 40_000;
        let tone = |f: f64| -> Vec<f64> { (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin()).collect() };
        let rms = |x: &[f64]| (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        let y = emulate_acquisition(&tone(100.0), fs).unwrap();
        let tail = &y[20_000..];
        let amp = rms(tail) * 2f64.sqrt();
        assert!((amp / 5000.0 - 1.0).abs() < 0.02, "{amp}");
        let hum = emulate_acquisition(&tone(50.0), fs).unwrap();
        assert!(rms(&hum[20_000..]) < 0.1 * 5000.0 / 2f64.sqrt());
        assert!(emulate_acquisition(&vec![0.0; 1000], fs).unwrap().iter().all(|&v| v == 0.0));
    }
}
