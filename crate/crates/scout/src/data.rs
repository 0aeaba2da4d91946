//! Trajectory tables on disk and the prepared-dataset cache.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use scout_core::traj::{tracks_from_rows, AgentTrack, DatasetSplit, TrajRow, WindowConfig};
use scout_core::Error as CoreError;

use crate::error::{Error, Result};

/// Header names of the required columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub recording_id: String,
    pub frame: String,
    pub track_id: String,
    pub x: String,
    pub y: String,
    pub heading: String,
    pub agent_type: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            recording_id: "recording_id".into(),
            frame: "frame".into(),
            track_id: "track_id".into(),
            x: "x".into(),
            y: "y".into(),
            heading: "heading".into(),
            agent_type: "agent_type".into(),
        }
    }
}

impl ColumnMap {
    fn names(&self) -> [&str; 7] {
        [
            &self.recording_id,
            &self.frame,
            &self.track_id,
            &self.x,
            &self.y,
            &self.heading,
            &self.agent_type,
        ]
    }
}

/// Parses a UTF-8 CSV with a header row into per-agent tracks sorted by
/// frame. Row numbers in errors count data rows from zero.
pub fn load_trajectories(path: &Path, columns: &ColumnMap) -> Result<Vec<AgentTrack>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(BufReader::new(file));
    let csv_err = |row: u64, e: csv::Error| Error::Csv {
        path: path.into(),
        row,
        message: e.to_string(),
    };
    let headers = reader.headers().map_err(|e| csv_err(0, e))?.clone();
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(columns.names()) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn {
            path: path.into(),
            column: name.into(),
        })?;
    }
    let mut rows = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let row_no = row_no as u64;
        let record = record.map_err(|e| csv_err(row_no, e))?;
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let bad = |k: usize, what: &str| Error::Csv {
            path: path.into(),
            row: row_no,
            message: format!("column `{}`: cannot parse `{}` as {what}", columns.names()[k], field(k)),
        };
        let int = |k: usize| field(k).parse::<i64>().map_err(|_| bad(k, "an integer"));
        let real = |k: usize| {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(k, "a finite number"))
        };
        rows.push(TrajRow {
            recording_id: field(0).to_string(),
            frame: int(1)?,
            track_id: int(2)?,
            x: real(3)?,
            y: real(4)?,
            heading: real(5)?,
            agent_type: field(6).to_string(),
        });
    }
    if rows.is_empty() {
        return Err(CoreError::EmptyDataset(format!("{} has no data rows", path.display())).into());
    }
    Ok(tracks_from_rows(&rows)?)
}

/// Writes tracks in the default column layout, one row per pose.
pub fn write_trajectories(path: &Path, tracks: &[AgentTrack]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io = |e: csv::Error| Error::Csv {
        path: path.into(),
        row: 0,
        message: e.to_string(),
    };
    let cols = ColumnMap::default();
    w.write_record(cols.names()).map_err(io)?;
    for t in tracks {
        for p in &t.frames {
            w.write_record([
                t.recording_id.clone(),
                p.frame.to_string(),
                t.agent_id.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                p.heading.to_string(),
                t.agent_type.name().to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const CACHE_FORMAT_VERSION: u32 = 1;

/// Prepared samples plus the preprocessing that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCache {
    pub format_version: u32,
    pub source_hz: f64,
    pub target_hz: f64,
    pub window: WindowConfig,
    pub split: DatasetSplit,
}

impl DatasetCache {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cache: DatasetCache = read_json(path)?;
        if cache.format_version != CACHE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                path: path.into(),
                found: cache.format_version,
                expected: CACHE_FORMAT_VERSION,
            });
        }
        Ok(cache)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.into(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        path: path.into(),
        message: e.to_string(),
    })
}
