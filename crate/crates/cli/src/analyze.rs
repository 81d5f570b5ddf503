use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use cuffbench::dsp::build_recruitment_curves;
use cuffbench::formats::read_recording_file;
use cuffbench::formats::tables::{curve_rows, curve_schema, polar_rows, polar_schema, selectivity_rows, selectivity_schema};
use cuffbench::selectivity::{build_polar_map, find_selective_points, CurveGrid, SelectivityConstraints};
use cuffbench::{AnalysisOptions, EpochWindow, FilterMode, MuscleId, NormalizationScope, Recording};
use serde_json::json;

use crate::args::{parse_window, write_table, write_text, OutArgs};
use crate::failure::{Classify, Failure};
use crate::svg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    ZeroPhase,
    Causal,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Recording containers, or directories searched for `*.cfrc`.
    #[arg(required = true, value_name = "RECORDING")]
    pub recordings: Vec<PathBuf>,

    /// Post-stimulus analysis window.
    #[arg(long, value_name = "A,B", value_parser = parse_window, default_value = "2,25")]
    pub window_ms: EpochWindow,

    /// Normalization scope: per-muscle or global.
    #[arg(long, default_value = "per-muscle")]
    pub norm: NormalizationScope,

    #[arg(long, value_enum, default_value_t = Mode::ZeroPhase)]
    pub filter_mode: Mode,

    /// Smallest target recruitment a selective point may have.
    #[arg(long, default_value_t = 0.0)]
    pub min_target: f64,

    /// Largest recruitment any other muscle may reach at a selective point.
    #[arg(long, default_value_t = 1.0)]
    pub max_offtarget: f64,

    /// Also draw the polar map at its highest intensity as `polar.svg`.
    #[arg(long)]
    pub svg: bool,

    #[command(flatten)]
    pub out: OutArgs,
}

/// Files named directly are taken as given; directories contribute their
/// `*.cfrc` files in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))
                .input()?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "cfrc"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Failure::Input(anyhow::anyhow!("no recordings in {}", p.display())));
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn file_label(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn run(args: &AnalyzeArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.min_target) || !(0.0..=1.0).contains(&args.max_offtarget) {
        return Err(Failure::Usage("selectivity constraints must lie in [0, 1]".into()));
    }
    let paths = expand_inputs(&args.recordings)?;
    let recordings: Vec<Recording> = paths
        .iter()
        .map(|p| read_recording_file(p).with_context(|| format!("cannot read {}", p.display())).input())
        .collect::<Result<_, _>>()?;

    let options = AnalysisOptions {
        window: args.window_ms,
        mode: match args.filter_mode {
            Mode::ZeroPhase => FilterMode::ZeroPhase,
            Mode::Causal => FilterMode::Causal,
        },
        scope: args.norm,
        ..AnalysisOptions::default()
    };
    let curves = build_recruitment_curves(&recordings, &options).context("analysis failed").input()?;
    let dir = args.out.prepare()?;
    write_table(dir, "curves.csv", &curve_rows(&curves), &curve_schema())?;

    let polar = match build_polar_map(&curves) {
        Ok(map) => {
            write_table(dir, "polar.csv", &polar_rows(&map), &polar_schema())?;
            if args.svg {
                if let Some(&top) = map.intensities_ua.last() {
                    write_text(&dir.join("polar.svg"), &svg::polar_plot(&map, top))?;
                }
            }
            Some(map)
        }
        Err(e) => {
            log::warn!("no polar map: {e}");
            None
        }
    };

    let constraints = SelectivityConstraints { min_target_recruitment: args.min_target, max_offtarget_recruitment: args.max_offtarget };
    let muscles: BTreeSet<MuscleId> = curves.iter().map(|c| c.muscle.clone()).collect();
    let grid = CurveGrid::new(&curves);
    let mut selectivity_files = Vec::new();
    for m in &muscles {
        let ranking = find_selective_points(&grid, m, constraints).context("selectivity scan failed").internal()?;
        let name = format!("selectivity_{}.csv", m.label());
        write_table(dir, &name, &selectivity_rows(&ranking), &selectivity_schema())?;
        selectivity_files.push(json!({ "target": m.label(), "table": name, "feasible_points": ranking.len() }));
    }

    let maxima: Vec<_> = curves
        .iter()
        .map(|c| {
            json!({
                "muscle": c.muscle.label(),
                "config": c.config.to_string(),
                "points": c.points.len(),
                "normalizable": c.normalizable,
                "max_normalized": c.max_normalized(),
            })
        })
        .collect();
    let bundle = json!({
        "format": "cuffbench-plot-bundle",
        "version": 1,
        "inputs": paths.iter().map(|p| file_label(p)).collect::<Vec<_>>(),
        "normalization": args.norm.to_string(),
        "window_ms": [args.window_ms.start_ms, args.window_ms.end_ms],
        "filter_mode": match args.filter_mode {
            Mode::ZeroPhase => "zero_phase",
            Mode::Causal => "causal",
        },
        "curves": { "table": "curves.csv", "series": maxima },
        "polar": polar.as_ref().map(|m| json!({
            "table": "polar.csv",
            "intensities_uA": m.intensities_ua,
            "image": if args.svg { Some("polar.svg") } else { None },
        })),
        "selectivity": selectivity_files,
    });
    let text = serde_json::to_string_pretty(&bundle).expect("bundle serializes") + "\n";
    write_text(&dir.join("bundle.json"), &text)?;

    for c in &curves {
        println!("{:<6} {:<5} points {:>3}  max {:.3}", c.config.to_string(), c.muscle.label(), c.points.len(), c.max_normalized());
    }
    Ok(())
}
