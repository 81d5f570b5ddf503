//! Bench for multicontact cuff stimulation experiments.
//!
//! Builds the ring and steering (STR) current patterns of a six-contact cuff,
//! drives staircase intensity ramps, turns evoked EMG into normalized recruitment
//! curves and polar selectivity maps, and closes the loop with a point-source
//! nerve simulator and fascicle data from histology sections.

// negated float comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod electrode;
pub mod error;
pub mod formats;
pub mod histology;
pub mod muscle;
pub mod protocol;
pub mod recording;
pub mod selectivity;
pub mod session;
pub mod sim;

pub use dsp::{
    AnalysisOptions, EpochWindow, FilterKind, FilterMode, NormalizationScope, RecruitmentCurve, RecruitmentPoint,
};
pub use electrode::{ContactId, CuffLayout, CurrentPattern, StimConfig, StimKind};
pub use error::{Error, Result};
pub use histology::{FascicleSection, SectionCorrespondence};
pub use muscle::MuscleId;
pub use protocol::{PulseSpec, RampSpec, StimEvent};
pub use recording::{Channel, Recording, RecordingMetadata};
pub use selectivity::{PolarMap, SelectivityRecord};
pub use session::{SessionState, StimBackend};
pub use sim::{MWaveTemplate, NerveModel};
