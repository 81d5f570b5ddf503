use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Cursor;

use proptest::prelude::*;

use cuffbench::formats::{read_recording, write_recording};
use cuffbench::histology::{match_fascicles, section_to_nerve_model, Fascicle, FiberParams, MatchParams};
use cuffbench::protocol::{ramp_amplitudes, SaturationRule};
use cuffbench::selectivity::{radius_from_recruitment, recruitment_from_radius, selectivity_index, Selectivity};
use cuffbench::session::wire::{decode, read_frame, write_frame, ClientCommand, ClientRequest};
use cuffbench::sim::MuscleAssignment;
use cuffbench::{
    Channel, FascicleSection, MuscleId, PulseSpec, RampSpec, Recording, RecordingMetadata, StimConfig, StimEvent,
    StimKind,
};

fn muscle() -> impl Strategy<Value = MuscleId> {
    prop_oneof![
        Just(MuscleId::Fcr),
        Just(MuscleId::Fds),
        Just(MuscleId::Pt),
        Just(MuscleId::Ecr),
        "[A-Z]{2,5}".prop_map(MuscleId::from),
    ]
}

fn stim_kind() -> impl Strategy<Value = StimKind> {
    prop_oneof![Just(StimKind::Ring), (1u8..=6).prop_map(StimKind::Str)]
}

/// Non-overlapping fascicles in a disc of radius 1150 µm.
fn section() -> impl Strategy<Value = FascicleSection> {
    prop::collection::vec((0.0..1150.0f64, 0.0..360.0f64, 40.0..180.0f64, 1u32..30), 1..10).prop_map(|raw| {
        let mut fascicles: Vec<Fascicle> = Vec::new();
        for (r, theta, radius, count) in raw {
            let c = [r * theta.to_radians().cos(), r * theta.to_radians().sin()];
            let clear = fascicles
                .iter()
                .all(|f| (f.centroid_um[0] - c[0]).hypot(f.centroid_um[1] - c[1]) >= f.equivalent_radius_um() + radius);
            if clear {
                fascicles.push(Fascicle {
                    id: format!("f{}", fascicles.len()),
                    centroid_um: c,
                    area_um2: PI * radius * radius,
                    motor_fiber_count: Some(f64::from(count)),
                    contour_um: None,
                });
            }
        }
        FascicleSection { z_um: 0.0, fascicles }
    })
}

fn recording() -> impl Strategy<Value = Recording> {
    (
        prop::sample::select(vec![1000.0, 2000.0, 4000.0, 20_000.0, 44_100.5]),
        prop::collection::btree_set(muscle(), 0..4),
        0usize..300,
        any::<u64>(),
        stim_kind(),
        "\\PC{0,16}",
        -1e3..1e3f64,
    )
        .prop_flat_map(|(fs, muscles, n, seed, kind, subject, start)| {
            let has_samples = n > 0 && !muscles.is_empty();
            let channels: Vec<BoxedStrategy<Channel>> = muscles
                .into_iter()
                .map(|m| {
                    prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n)
                        .prop_map(move |samples| Channel { muscle: m.clone(), samples })
                        .boxed()
                })
                .collect();
            let events = if !has_samples {
                Just(Vec::new()).boxed()
            } else {
                prop::collection::btree_set(0..n as u64, 0..n.min(20))
                    .prop_map(move |idx| {
                        idx.into_iter()
                            .enumerate()
                            .map(|(i, s)| StimEvent {
                                sample_index: s,
                                time_s: s as f64 / fs,
                                amplitude_ua: (seed % 400) as f64 + 0.5,
                                config: kind,
                                pulse_index: i as u32,
                            })
                            .collect()
                    })
                    .boxed()
            };
            (channels, events).prop_map(move |(channels, stim_events)| Recording {
                sample_rate_hz: fs,
                channels,
                stim_events,
                metadata: RecordingMetadata {
                    subject_id: subject.clone(),
                    config: Some(kind),
                    start_time_s: start,
                    acquisition_gain: 5000.0,
                    extra: BTreeMap::new(),
                },
            })
        })
}

fn command() -> impl Strategy<Value = ClientCommand> {
    prop_oneof![
        (stim_kind(), 0.0..300.0f64, 0.5..20.0f64, 1u32..40).prop_map(|(config, start, step, pulses)| {
            ClientCommand::Configure {
                config,
                ramp: RampSpec {
                    start_amplitude_ua: start,
                    step_ua: step,
                    pulses_per_step: pulses,
                    saturation: SaturationRule { window: 4, epsilon: 0.01 },
                    ..RampSpec::default()
                },
                pulse: PulseSpec::default(),
            }
        }),
        Just(ClientCommand::RunStep),
        Just(ClientCommand::RunToSaturation),
        prop::option::of("\\PC{0,20}").prop_map(|reason| ClientCommand::Abort { reason }),
        Just(ClientCommand::MarkSaturated),
        Just(ClientCommand::Subscribe),
        Just(ClientCommand::Snapshot),
    ]
}

proptest! {
    #[test]
    fn selectivity_is_a_share(values in prop::collection::vec(0.0..1.0f64, 1..6)) {
        let recruitments: BTreeMap<MuscleId, f64> =
            values.iter().enumerate().map(|(i, v)| (MuscleId::from(format!("M{i}")), *v)).collect();
        let mut sum = 0.0;
        let mut defined = false;
        for target in recruitments.keys() {
            match selectivity_index(&recruitments, target).unwrap() {
                Selectivity::Defined(si) => {
                    prop_assert!((0.0..=1.0).contains(&si));
                    sum += si;
                    defined = true;
                }
                Selectivity::NoActivation => prop_assert!(!defined),
            }
        }
        if defined {
            prop_assert!((sum - 1.0).abs() < 1e-12, "{sum}");
        }
    }

    #[test]
    fn polar_radius_round_trips(r in 0.0..=1.0f64) {
        let radius = radius_from_recruitment(r);
        prop_assert!((0.0..=1.0).contains(&radius));
        prop_assert!((recruitment_from_radius(radius) - r).abs() <= f64::EPSILON);
    }

    #[test]
    fn container_round_trips(rec in recording()) {
        let mut bytes = Vec::new();
        write_recording(&rec, &mut bytes).unwrap();
        let back = read_recording(Cursor::new(&bytes)).unwrap();
        prop_assert_eq!(&back, &rec);
        let mut again = Vec::new();
        write_recording(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn ramp_stays_on_its_lattice(start in 0.0..300.0f64, step in 0.1..50.0f64, span in 0.0..400.0f64) {
        let spec = RampSpec { start_amplitude_ua: start, step_ua: step, max_amplitude_ua: start + span, ..RampSpec::default() };
        let amps = ramp_amplitudes(&spec);
        prop_assert_eq!(amps[0], start);
        prop_assert!(amps.iter().all(|&a| a <= spec.max_amplitude_ua));
        for (i, w) in amps.windows(2).enumerate() {
            prop_assert!(w[1] > w[0]);
            prop_assert!((w[1] - w[0] - step).abs() < 1e-9 * (1.0 + w[1]), "step {i}");
        }
        // one more step would pass the maximum
        let next = amps.last().unwrap() + step;
        prop_assert!(next > spec.max_amplitude_ua - 1e-9 * spec.max_amplitude_ua.max(1.0));
    }

    #[test]
    fn a_section_matches_itself(s in section()) {
        let c = match_fascicles(&s, &s, MatchParams::default()).unwrap();
        prop_assert!(c.splits.is_empty() && c.unmatched_a.is_empty() && c.unmatched_b.is_empty());
        prop_assert_eq!(c.matches.len(), s.len());
        prop_assert!(c.matches.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn wire_frames_round_trip(id in prop::option::of(any::<u64>()), command in command()) {
        let request = ClientRequest { id, command };
        let mut bytes = Vec::new();
        write_frame(&mut bytes, &request).unwrap();
        let len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        prop_assert_eq!(len, bytes.len() - 4);
        let mut cursor = Cursor::new(bytes);
        let body = read_frame(&mut cursor).unwrap().unwrap();
        prop_assert_eq!(decode::<ClientRequest>(&body).unwrap(), request);
        prop_assert!(read_frame(&mut cursor).unwrap().is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Turning the nerve one contact pitch and moving the cathode with it leaves every fiber's drive unchanged.
    #[test]
    fn simulator_is_rotation_equivariant(s in section(), k in 1u8..=6, seed in any::<u64>()) {
        let assignment = s
            .fascicles
            .iter()
            .map(|f| (f.id.clone(), MuscleAssignment { muscle: MuscleId::Fcr, weight: 1.0 }))
            .collect();
        let nerve = section_to_nerve_model(&s, &assignment, &FiberParams::default(), seed).unwrap();
        let turned = nerve.rotated(60.0);
        let next = k % 6 + 1;
        for (here, there) in [(StimKind::Str(k), StimKind::Str(next)), (StimKind::Ring, StimKind::Ring)] {
            let a = nerve.unit_drive(&StimConfig::new(here).unwrap().pattern).unwrap();
            let b = turned.unit_drive(&StimConfig::new(there).unwrap().pattern).unwrap();
            for (ga, gb) in a.iter().zip(&b) {
                for (x, y) in ga.iter().zip(gb) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-6), "{here}: {x} vs {y}");
                }
            }
        }
    }
}
