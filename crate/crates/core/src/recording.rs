use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::electrode::StimKind;
use crate::error::{Error, Result};
use crate::muscle::MuscleId;
use crate::protocol::StimEvent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub muscle: MuscleId,
    /// Samples in µV as stored (after any acquisition gain).
    pub samples: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordingMetadata {
    pub subject_id: String,
    pub config: Option<StimKind>,
    /// Session-relative time of sample 0.
    pub start_time_s: f64,
    /// Amplifier gain already applied to the samples; 1.0 for raw data.
    pub acquisition_gain: f64,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

/// Multichannel eEMG with stimulation markers.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub sample_rate_hz: f64,
    pub channels: Vec<Channel>,
    pub stim_events: Vec<StimEvent>,
    pub metadata: RecordingMetadata,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn muscles(&self) -> Vec<MuscleId> {
        self.channels.iter().map(|c| c.muscle.clone()).collect()
    }

    pub fn channel(&self, muscle: &MuscleId) -> Option<&Channel> {
        self.channels.iter().find(|c| &c.muscle == muscle)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::domain("sample rate must be positive"));
        }
        let n = self.len();
        let mut labels = HashSet::new();
        for c in &self.channels {
            if c.samples.len() != n {
                return Err(Error::domain(format!(
                    "channel {} has {} samples, expected {n}",
                    c.muscle,
                    c.samples.len()
                )));
            }
            if !labels.insert(&c.muscle) {
                return Err(Error::domain(format!("duplicate channel label {}", c.muscle)));
            }
        }
        for (i, e) in self.stim_events.iter().enumerate() {
            if e.sample_index as usize >= n {
                return Err(Error::domain(format!(
                    "stim event {i} at sample {} is past the end ({n} samples)",
                    e.sample_index
                )));
            }
            if i > 0 && e.sample_index <= self.stim_events[i - 1].sample_index {
                return Err(Error::domain(format!("stim event {i} is not after event {}", i - 1)));
            }
        }
        Ok(())
    }

    /// Append a later segment recorded with the same channels, shifting its markers.
    pub fn append(&mut self, segment: &Recording) -> Result<()> {
        if self.channels.is_empty() && self.stim_events.is_empty() {
            let metadata = self.metadata.clone();
            *self = segment.clone();
            if !metadata.subject_id.is_empty() {
                self.metadata.subject_id = metadata.subject_id;
            }
            return Ok(());
        }
        if segment.sample_rate_hz != self.sample_rate_hz || segment.muscles() != self.muscles() {
            return Err(Error::domain("segment does not match the recording's channels"));
        }
        let offset = self.len() as u64;
        for (dst, src) in self.channels.iter_mut().zip(&segment.channels) {
            dst.samples.extend_from_slice(&src.samples);
        }
        self.stim_events.extend(segment.stim_events.iter().map(|e| StimEvent {
            sample_index: e.sample_index + offset,
            time_s: e.time_s + offset as f64 / self.sample_rate_hz,
            ..e.clone()
        }));
        Ok(())
    }
}
