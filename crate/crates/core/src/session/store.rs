//! On-disk layout of one session directory:
//!
//! - `session.log`: one JSON log entry per line, appended as transitions happen
//! - `recording_<CONFIG>.cfrc`: everything delivered for that configuration
//! - `curves_<CONFIG>.csv`: its recruitment curves, normalized within the configuration
//! - `polar.csv`: polar table over all configurations run so far

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::state::LogEntry;
use crate::dsp::RecruitmentCurve;
use crate::electrode::StimKind;
use crate::formats::tables::{curve_rows, curve_schema, polar_rows, polar_schema, write_table_file};
use crate::formats::{write_recording_file, FormatError};
use crate::recording::Recording;
use crate::selectivity::PolarMap;

pub const LOG_FILE: &str = "session.log";
pub const POLAR_FILE: &str = "polar.csv";

pub struct SessionStore {
    dir: PathBuf,
    log: File,
}

impl SessionStore {
    /// Open (creating if needed) a session directory. An existing log is appended to.
    pub fn open(dir: &Path) -> Result<Self, FormatError> {
        std::fs::create_dir_all(dir)?;
        let log = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE))?;
        Ok(SessionStore { dir: dir.to_path_buf(), log })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn recording_path(&self, config: StimKind) -> PathBuf {
        self.dir.join(format!("recording_{config}.cfrc"))
    }

    pub fn curves_path(&self, config: StimKind) -> PathBuf {
        self.dir.join(format!("curves_{config}.csv"))
    }

    pub fn append_log(&mut self, entries: &[LogEntry]) -> Result<(), FormatError> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut text = String::new();
        for e in entries {
            text.push_str(&serde_json::to_string(e).expect("log entry serializes"));
            text.push('\n');
        }
        self.log.write_all(text.as_bytes())?;
        self.log.sync_data()?;
        Ok(())
    }

    pub fn write_recording(&self, config: StimKind, recording: &Recording) -> Result<(), FormatError> {
        write_recording_file(&self.recording_path(config), recording)
    }

    pub fn write_curves(&self, config: StimKind, curves: &[RecruitmentCurve]) -> Result<(), FormatError> {
        write_table_file(&self.curves_path(config), &curve_rows(curves), &curve_schema())
    }

    pub fn write_polar(&self, map: &PolarMap) -> Result<(), FormatError> {
        write_table_file(&self.dir.join(POLAR_FILE), &polar_rows(map), &polar_schema())
    }
}

/// Read a `session.log`, reporting the first bad line by number.
pub fn read_log(path: &Path) -> Result<Vec<LogEntry>, FormatError> {
    let reader = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            location: format!("{}:{}:{}", path.display(), i + 1, e.column()),
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}
