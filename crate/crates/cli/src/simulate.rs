use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use cuffbench::formats::tables::{selectivity_rows, selectivity_schema, truth_rows, truth_schema};
use cuffbench::formats::write_recording_file;
use cuffbench::protocol::{ramp_amplitudes, RampSpec};
use cuffbench::selectivity::{find_selective_points, SelectivityConstraints, SimulatorGrid};
use cuffbench::sim::{simulated_truth, synthesize_recording, SynthOptions};
use cuffbench::{MuscleId, StimConfig, StimKind};

use crate::args::{parse_configs, write_table, OutArgs, RampArgs};
use crate::failure::{Classify, Failure};
use crate::model::load_model;

#[derive(Clone, Debug)]
pub struct ConfigList(pub Vec<StimKind>);

fn parse_config_list(s: &str) -> Result<ConfigList, String> {
    parse_configs(s).map(ConfigList)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Nerve model file (JSON).
    #[arg(value_name = "MODEL")]
    pub model: PathBuf,

    /// Comma-separated configurations (RING, STR1..STR6) or `all`.
    #[arg(long, value_parser = parse_config_list, default_value = "all")]
    pub configs: ConfigList,

    /// Noise seed; configuration k of the list uses seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// RMS of the additive noise at the muscle.
    #[arg(long, default_value_t = 0.0, value_name = "UV")]
    pub noise_uv: f64,

    /// M-wave peak at full recruitment.
    #[arg(long, default_value_t = 1000.0, value_name = "UV")]
    pub mwave_uv: f64,

    #[arg(long, default_value_t = 20_000.0, value_name = "HZ")]
    pub sample_rate_hz: f64,

    /// Store the muscle signal without the acquisition chain.
    #[arg(long)]
    pub raw: bool,

    #[command(flatten)]
    pub ramp: RampArgs,

    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(args: &SimulateArgs) -> Result<(), Failure> {
    if !(args.noise_uv >= 0.0 && args.mwave_uv > 0.0 && args.sample_rate_hz > 0.0) {
        return Err(Failure::Usage("noise must be non-negative, M-wave size and sample rate positive".into()));
    }
    let (ramp, pulse) = args.ramp.specs()?;
    let nerve = load_model(&args.model)?;
    let dir = args.out.prepare()?;
    let amplitudes = ramp_amplitudes(&ramp);
    let mut base = SynthOptions {
        sample_rate_hz: args.sample_rate_hz,
        mwave_max_uv: args.mwave_uv,
        noise_rms_uv: args.noise_uv,
        ..SynthOptions::default()
    };
    if args.raw {
        base.acquisition = None;
    }

    for (k, &kind) in args.configs.0.iter().enumerate() {
        let config = StimConfig::new(kind).internal()?;
        let options = SynthOptions { seed: args.seed.wrapping_add(k as u64), ..base.clone() };
        let recording = synthesize_recording(&nerve, &config, &ramp, &pulse, &options)
            .with_context(|| format!("simulating {kind}"))
            .input()?;
        let path = dir.join(format!("recording_{kind}.cfrc"));
        write_recording_file(&path, &recording).with_context(|| format!("cannot write {}", path.display())).internal()?;

        let truth = simulated_truth(&nerve, &config, &amplitudes).input()?;
        write_table(dir, &format!("truth_{kind}.csv"), &truth_rows(kind, &truth), &truth_schema())?;
        let peak = truth.last().map(|t| t.recruitment.values().copied().fold(0.0, f64::max)).unwrap_or(0.0);
        println!("{kind:<6} {} steps, {} samples, peak recruitment {peak:.3}", amplitudes.len(), recording.len());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Nerve model file (JSON).
    #[arg(value_name = "MODEL")]
    pub model: PathBuf,

    /// Muscle to favour.
    #[arg(long)]
    pub target: String,

    #[arg(long, value_parser = parse_config_list, default_value = "all")]
    pub configs: ConfigList,

    #[arg(long, default_value_t = 150.0, value_name = "UA")]
    pub start_ua: f64,
    #[arg(long, default_value_t = 9.0, value_name = "UA")]
    pub step_ua: f64,
    #[arg(long, default_value_t = 250.0, value_name = "UA")]
    pub max_ua: f64,

    #[arg(long, default_value_t = 0.0)]
    pub min_target: f64,
    #[arg(long, default_value_t = 1.0)]
    pub max_offtarget: f64,

    #[command(flatten)]
    pub out: OutArgs,
}

pub fn select(args: &SelectArgs) -> Result<(), Failure> {
    if !(args.step_ua > 0.0 && args.start_ua >= 0.0 && args.max_ua >= args.start_ua) {
        return Err(Failure::Usage("amplitude grid needs START >= 0, STEP > 0 and MAX >= START".into()));
    }
    let amplitudes =
        ramp_amplitudes(&RampSpec { start_amplitude_ua: args.start_ua, step_ua: args.step_ua, max_amplitude_ua: args.max_ua, ..RampSpec::default() });
    let nerve = load_model(&args.model)?;
    let target = MuscleId::from(args.target.as_str());
    if !nerve.muscles().contains(&target) {
        return Err(Failure::Input(anyhow::anyhow!("muscle {target} is not mapped in {}", args.model.display())));
    }
    let configs: Vec<StimConfig> = args.configs.0.iter().map(|&k| StimConfig::new(k)).collect::<Result<_, _>>().internal()?;
    let grid = SimulatorGrid::new(&nerve, &configs, &amplitudes).input()?;
    let constraints = SelectivityConstraints { min_target_recruitment: args.min_target, max_offtarget_recruitment: args.max_offtarget };
    let ranking = find_selective_points(&grid, &target, constraints).input()?;
    let dir = args.out.prepare()?;
    write_table(dir, &format!("selectivity_{}.csv", target.label()), &selectivity_rows(&ranking), &selectivity_schema())?;
    for (i, r) in ranking.iter().take(5).enumerate() {
        println!("{:>2}. {:<6} {:>7} uA  SI {:.3}  recruitment {:.3}", i + 1, r.config.to_string(), r.amplitude_ua, r.selectivity_index, r.target_recruitment);
    }
    if ranking.is_empty() {
        println!("no feasible point");
    }
    Ok(())
}
