use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::muscle::MuscleId;
use crate::protocol::StimEvent;
use crate::recording::{Channel, Recording, RecordingMetadata};

pub const CONTAINER_MAGIC: [u8; 8] = *b"CUFFREC\0";
pub const CONTAINER_VERSION: u32 = 1;

const PREAMBLE_LEN: usize = 16;

/// JSON header stored between the fixed preamble and the sample payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub format_version: u32,
    pub sample_rate_hz: f64,
    pub channels: Vec<MuscleId>,
    pub sample_count: usize,
    pub stim_events: Vec<StimEvent>,
    pub metadata: RecordingMetadata,
}

/// Layout: magic (8) | version u32 LE | header length u32 LE | header JSON |
/// `sample_count × channels` f32 LE, interleaved by sample.
pub fn write_recording<W: Write>(recording: &Recording, mut sink: W) -> Result<(), FormatError> {
    recording.validate().map_err(|e| FormatError::Header { offset: 0, message: e.to_string() })?;
    let n = recording.len();
    let header = ContainerHeader {
        format_version: CONTAINER_VERSION,
        sample_rate_hz: recording.sample_rate_hz,
        channels: recording.muscles(),
        sample_count: n,
        stim_events: recording.stim_events.clone(),
        metadata: recording.metadata.clone(),
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    let header_len = u32::try_from(header_bytes.len())
        .map_err(|_| FormatError::Header { offset: 12, message: "header larger than 4 GiB".into() })?;

    let mut buf = Vec::with_capacity(PREAMBLE_LEN + header_bytes.len() + 4 * n * recording.channels.len());
    buf.extend_from_slice(&CONTAINER_MAGIC);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&header_len.to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    for i in 0..n {
        for c in &recording.channels {
            buf.extend_from_slice(&c.samples[i].to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    Ok(())
}

pub fn read_recording<R: Read>(mut source: R) -> Result<Recording, FormatError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_container(&bytes)
}

pub fn write_recording_file(path: &Path, recording: &Recording) -> Result<(), FormatError> {
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        let mut w = std::io::BufWriter::new(file);
        write_recording(recording, &mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_recording_file(path: &Path) -> Result<Recording, FormatError> {
    parse_container(&std::fs::read(path)?)
}

fn take(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], FormatError> {
    let available = bytes.len().saturating_sub(offset);
    if available < len {
        return Err(FormatError::Truncated { offset, needed: len, available });
    }
    Ok(&bytes[offset..offset + len])
}

fn u32_at(bytes: &[u8], offset: usize) -> Result<u32, FormatError> {
    let b = take(bytes, offset, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

fn parse_container(bytes: &[u8]) -> Result<Recording, FormatError> {
    if take(bytes, 0, CONTAINER_MAGIC.len())? != CONTAINER_MAGIC {
        return Err(FormatError::BadMagic { offset: 0 });
    }
    let version = u32_at(bytes, 8)?;
    if version != CONTAINER_VERSION {
        return Err(FormatError::UnsupportedVersion { found: version, supported: CONTAINER_VERSION, offset: 8 });
    }
    let header_len = u32_at(bytes, 12)? as usize;
    let header_bytes = take(bytes, PREAMBLE_LEN, header_len)?;
    let header: ContainerHeader = serde_json::from_slice(header_bytes).map_err(|e| FormatError::Header {
        offset: PREAMBLE_LEN,
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    if header.format_version != version {
        return Err(FormatError::Header {
            offset: PREAMBLE_LEN,
            message: format!("header version {} disagrees with preamble version {version}", header.format_version),
        });
    }

    let payload_offset = PREAMBLE_LEN + header_len;
    let payload = &bytes[payload_offset..];
    let width = header.channels.len();
    let expected = header
        .sample_count
        .checked_mul(width)
        .ok_or_else(|| FormatError::Header { offset: PREAMBLE_LEN, message: "sample count overflows".into() })?;
    if !payload.len().is_multiple_of(4) || payload.len() / 4 != expected {
        return Err(FormatError::CountMismatch { offset: payload_offset, expected, found: payload.len() / 4 });
    }

    let mut channels: Vec<Channel> = header
        .channels
        .iter()
        .map(|m| Channel { muscle: m.clone(), samples: Vec::with_capacity(header.sample_count) })
        .collect();
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        channels[i % width].samples.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
    }
    let recording = Recording {
        sample_rate_hz: header.sample_rate_hz,
        channels,
        stim_events: header.stim_events,
        metadata: header.metadata,
    };
    recording
        .validate()
        .map_err(|e| FormatError::Header { offset: PREAMBLE_LEN, message: e.to_string() })?;
    Ok(recording)
}
