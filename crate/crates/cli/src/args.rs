use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use cuffbench::formats::tables::write_table_file;
use cuffbench::formats::{Schema, Value};
use cuffbench::{EpochWindow, PulseSpec, RampSpec, StimKind};

use crate::failure::{Classify, Failure};

/// Parse `A,B` (milliseconds after the stimulus).
pub fn parse_window(s: &str) -> Result<EpochWindow, String> {
    let (a, b) = s.split_once(',').ok_or("expected START,END in milliseconds")?;
    let start_ms: f64 = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let end_ms: f64 = b.trim().parse().map_err(|_| format!("bad window end `{b}`"))?;
    if !(start_ms >= 0.0 && end_ms > start_ms && end_ms.is_finite()) {
        return Err("window must satisfy 0 <= START < END".into());
    }
    Ok(EpochWindow { start_ms, end_ms })
}

pub fn parse_configs(s: &str) -> Result<Vec<StimKind>, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(StimKind::all());
    }
    let mut out: Vec<StimKind> = Vec::new();
    for part in s.split(',') {
        let kind: StimKind = part.parse().map_err(|e| format!("{e}"))?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, env = "CUFFBENCH_OUT", value_name = "DIR")]
    pub out: PathBuf,
}

impl OutArgs {
    pub fn prepare(&self) -> Result<&Path, Failure> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))
            .internal()?;
        Ok(&self.out)
    }
}

#[derive(Clone, Debug, Args)]
pub struct RampArgs {
    #[arg(long, default_value_t = 150.0, value_name = "UA")]
    pub start_ua: f64,
    #[arg(long, default_value_t = 9.0, value_name = "UA")]
    pub step_ua: f64,
    #[arg(long, default_value_t = 250.0, value_name = "UA")]
    pub max_ua: f64,
    /// Dwell per intensity step.
    #[arg(long, default_value_t = 4.5, value_name = "S")]
    pub step_s: f64,
    #[arg(long, default_value_t = 19)]
    pub pulses: u32,
    /// Cathodic phase width.
    #[arg(long, default_value_t = 150.0, value_name = "US")]
    pub phase_us: f64,
    #[arg(long, default_value_t = 35.0, value_name = "HZ")]
    pub frequency_hz: f64,
}

impl RampArgs {
    pub fn specs(&self) -> Result<(RampSpec, PulseSpec), Failure> {
        let ramp = RampSpec {
            start_amplitude_ua: self.start_ua,
            step_ua: self.step_ua,
            max_amplitude_ua: self.max_ua,
            step_duration_s: self.step_s,
            pulses_per_step: self.pulses,
            ..RampSpec::default()
        };
        let pulse = PulseSpec { cathodic_phase_width_us: self.phase_us, frequency_hz: self.frequency_hz, ..PulseSpec::default() };
        ramp.validate(&pulse).map_err(|e| Failure::Usage(format!("invalid ramp: {e}")))?;
        Ok((ramp, pulse))
    }
}

pub fn write_table(dir: &Path, name: &str, rows: &[Vec<Value>], schema: &Schema) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    write_table_file(&path, rows, schema).with_context(|| format!("cannot write {}", path.display())).internal()?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display())).internal()?;
    log::info!("wrote {}", path.display());
    Ok(())
}
