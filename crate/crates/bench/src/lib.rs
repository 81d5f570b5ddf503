//! Shared fixtures for the benchmarks.

use cuffbench::histology::{parse_section, section_to_nerve_model, FiberParams};
use cuffbench::sim::{synthesize_recording, MuscleAssignment, SynthOptions};
use cuffbench::{MuscleId, NerveModel, PulseSpec, RampSpec, Recording, StimConfig, StimKind};

const SECTION: &str = include_str!("../../core/tests/fixtures/model/section.json");

/// Four-fascicle nerve, one fascicle per muscle, named after the muscle it feeds.
pub fn fixture_nerve() -> NerveModel {
    let section = parse_section(SECTION, "section.json").expect("fixture section parses");
    let assignment = section
        .fascicles
        .iter()
        .map(|f| (f.id.clone(), MuscleAssignment { muscle: MuscleId::from(f.id.to_uppercase()), weight: 1.0 }))
        .collect();
    section_to_nerve_model(&section, &assignment, &FiberParams::default(), 7).expect("fixture model builds")
}

/// Shortened ramp: default amplitudes, 0.6 s steps.
pub fn short_ramp() -> RampSpec {
    RampSpec { step_duration_s: 0.6, ..RampSpec::default() }
}

/// A noisy synthetic STR2 session at the default sample rate.
pub fn fixture_recording(nerve: &NerveModel) -> Recording {
    let options = SynthOptions { noise_rms_uv: 5.0, seed: 3, ..SynthOptions::default() };
    let config = StimConfig::new(StimKind::Str(2)).expect("STR2 exists");
    synthesize_recording(nerve, &config, &short_ramp(), &PulseSpec::default(), &options).expect("synthesis succeeds")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let nerve = fixture_nerve();
        assert_eq!(nerve.muscles().len(), 4);
        let rec = fixture_recording(&nerve);
        assert_eq!(rec.channels.len(), 4);
        assert_eq!(rec.stim_events.len(), 12 * 19);
    }
}
