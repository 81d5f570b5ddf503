use std::path::PathBuf;

use clap::Args;
use cuffbench::formats::tables::{correspondence_rows, correspondence_schema, fiber_stats_rows, fiber_stats_schema};
use cuffbench::histology::{load_section, match_fascicles, motor_fiber_stats, FiberStats, MatchParams, DEFAULT_SPLIT_AREA_TOLERANCE};
use cuffbench::FascicleSection;
use serde_json::json;

use crate::args::{write_table, write_text, OutArgs};
use crate::failure::{Classify, Failure};

#[derive(Debug, Args)]
pub struct HistoArgs {
    /// Section files (JSON). Compared in order of their z position.
    #[arg(required = true, value_name = "SECTION")]
    pub sections: Vec<PathBuf>,

    /// Largest centroid distance for two fascicles to correspond.
    #[arg(long, default_value_t = 150.0, value_name = "UM")]
    pub radius_um: f64,

    /// Allowed relative deviation of a split's combined area.
    #[arg(long, default_value_t = DEFAULT_SPLIT_AREA_TOLERANCE)]
    pub split_tolerance: f64,

    #[command(flatten)]
    pub out: OutArgs,
}

fn stem(p: &std::path::Path) -> String {
    p.file_stem().map_or_else(|| "section".to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn run(args: &HistoArgs) -> Result<(), Failure> {
    if !(args.radius_um > 0.0 && args.radius_um.is_finite()) {
        return Err(Failure::Usage("--radius-um must be positive".into()));
    }
    if !(args.split_tolerance >= 0.0) {
        return Err(Failure::Usage("--split-tolerance must be non-negative".into()));
    }

    let mut loaded: Vec<(usize, String, FascicleSection)> = Vec::new();
    let mut failures = Vec::new();
    for (i, path) in args.sections.iter().enumerate() {
        match load_section(path) {
            Ok(s) => loaded.push((i, stem(path), s)),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failures.push(path.display().to_string());
            }
        }
    }
    if !failures.is_empty() {
        return Err(Failure::Input(anyhow::anyhow!("{} of {} section files failed to parse", failures.len(), args.sections.len())));
    }
    loaded.sort_by(|a, b| a.2.z_um.total_cmp(&b.2.z_um).then(a.0.cmp(&b.0)));

    let dir = args.out.prepare()?;
    let mut sections_json = Vec::new();
    for (i, name, section) in &loaded {
        let stats = motor_fiber_stats(section);
        let table = format!("stats_{i}_{name}.csv");
        write_table(dir, &table, &fiber_stats_rows(&stats), &fiber_stats_schema())?;
        let summary = match &stats {
            FiberStats::Available { total_fibers, max_density_per_mm2, concentration_index, .. } => json!({
                "available": true,
                "total_fibers": total_fibers,
                "max_density_per_mm2": max_density_per_mm2,
                "concentration_index": concentration_index,
            }),
            FiberStats::Unavailable { missing } => {
                log::warn!("{name}: motor fiber counts missing for {} fascicles", missing.len());
                json!({ "available": false, "missing": missing })
            }
        };
        println!("{name}: z {} um, {} fascicles", section.z_um, section.len());
        sections_json.push(json!({
            "input": i,
            "name": name,
            "z_um": section.z_um,
            "fascicles": section.len(),
            "stats_table": table,
            "stats": summary,
        }));
    }

    let params = MatchParams { radius_um: args.radius_um, split_area_tolerance: args.split_tolerance };
    let mut pairs_json = Vec::new();
    for pair in loaded.windows(2) {
        let (ia, na, a) = &pair[0];
        let (ib, nb, b) = &pair[1];
        let c = match_fascicles(a, b, params).input()?;
        let table = format!("correspondence_{ia}_{ib}.csv");
        write_table(dir, &table, &correspondence_rows(&c), &correspondence_schema())?;
        println!(
            "{na} -> {nb}: {} matched, {} split, {} unmatched in {na}, {} unmatched in {nb}",
            c.matches.len(),
            c.splits.len(),
            c.unmatched_a.len(),
            c.unmatched_b.len()
        );
        pairs_json.push(json!({
            "a": na,
            "b": nb,
            "table": table,
            "matches": c.matches.len(),
            "splits": c.splits,
            "unmatched_a": c.unmatched_a,
            "unmatched_b": c.unmatched_b,
        }));
    }

    let summary = json!({
        "radius_um": args.radius_um,
        "split_area_tolerance": args.split_tolerance,
        "sections": sections_json,
        "correspondences": pairs_json,
    });
    write_text(&dir.join("histology.json"), &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"))
}
