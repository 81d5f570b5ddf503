use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use cuffbench::formats::tables::{pattern_rows, pattern_schema};
use cuffbench::formats::{load_json, save_json};
use cuffbench::histology::{load_section, section_to_nerve_model, FiberParams};
use cuffbench::sim::{MuscleAssignment, ThresholdDistribution};
use cuffbench::{CuffLayout, MuscleId, NerveModel, StimConfig};
use serde::Deserialize;

use crate::args::{write_table, OutArgs};
use crate::failure::{Classify, Failure};

pub fn load_model(path: &Path) -> Result<NerveModel, Failure> {
    let model: NerveModel = load_json(path).with_context(|| format!("cannot load nerve model {}", path.display())).input()?;
    model.validate().with_context(|| format!("invalid nerve model {}", path.display())).input()?;
    Ok(model)
}

/// Either a bare muscle label (weight 1) or a full assignment.
#[derive(Deserialize)]
#[serde(untagged)]
enum AssignmentEntry {
    Label(String),
    Full(MuscleAssignment),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Histology section the fascicles come from.
    #[arg(long, value_name = "FILE")]
    pub section: PathBuf,

    /// JSON object mapping fascicle id to a muscle label or `{"muscle", "weight"}`.
    #[arg(long, value_name = "FILE")]
    pub assign: PathBuf,

    #[arg(long, default_value_t = 1.0)]
    pub fibers_per_count: f64,

    /// Median fiber threshold.
    #[arg(long, default_value_t = 0.1, value_name = "V")]
    pub threshold_v: f64,

    /// Log-normal spread of the thresholds.
    #[arg(long, default_value_t = 0.25)]
    pub sigma_ln: f64,

    #[arg(long, default_value_t = 0.3, value_name = "S_PER_M")]
    pub conductivity: f64,

    #[arg(long, default_value_t = 3000.0, value_name = "UM")]
    pub cuff_diameter_um: f64,

    #[arg(long, default_value_t = 4000.0, value_name = "UM")]
    pub ring_offset_um: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// File name inside the output directory.
    #[arg(long, default_value = "nerve_model.json")]
    pub name: String,

    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(args: &ModelArgs) -> Result<(), Failure> {
    let section = load_section(&args.section).input()?;
    let raw: BTreeMap<String, AssignmentEntry> =
        load_json(&args.assign).with_context(|| format!("cannot load assignment {}", args.assign.display())).input()?;
    let assignment: BTreeMap<String, MuscleAssignment> = raw
        .into_iter()
        .map(|(id, e)| {
            let a = match e {
                AssignmentEntry::Label(label) => MuscleAssignment { muscle: MuscleId::from(label), weight: 1.0 },
                AssignmentEntry::Full(a) => a,
            };
            (id, a)
        })
        .collect();
    let layout = CuffLayout::new(args.cuff_diameter_um, args.ring_offset_um);
    layout.validate().map_err(|e| Failure::Usage(format!("invalid cuff layout: {e}")))?;
    let params = FiberParams {
        fibers_per_count: args.fibers_per_count,
        thresholds: ThresholdDistribution { median_v: args.threshold_v, sigma_ln: args.sigma_ln },
        conductivity_s_per_m: args.conductivity,
        layout,
        ..FiberParams::default()
    };
    let model = section_to_nerve_model(&section, &assignment, &params, args.seed).input()?;
    let dir = args.out.prepare()?;
    let path = dir.join(&args.name);
    save_json(&path, &model).with_context(|| format!("cannot write {}", path.display())).internal()?;
    println!("{}: {} fascicles, {} fibers, muscles {:?}", path.display(), model.cross_section.len(), model.fiber_count(), model.muscles().iter().map(|m| m.label()).collect::<Vec<_>>());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PatternsArgs {
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn patterns(args: &PatternsArgs) -> Result<(), Failure> {
    let dir = args.out.prepare()?;
    let path = write_table(dir, "patterns.csv", &pattern_rows(&StimConfig::all()), &pattern_schema())?;
    println!("{}", path.display());
    Ok(())
}
