//! High-level event log: one case per cascade, one event per high-level event.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framing::TimeWindows;
use crate::propagation::{cascade_index, Cascade, NodeId, PropagationGraph};
use crate::time::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampMode {
    WindowStart,
    /// The exclusive end of the window.
    #[default]
    WindowEnd,
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlLogRecord {
    pub hle: NodeId,
    pub case: usize,
    pub activity: String,
    pub timestamp: Timestamp,
    pub value: f64,
    pub n_events: usize,
}

/// Records sorted by case, timestamp and activity label.
pub fn hl_records(
    graph: &PropagationGraph,
    cascades: &[Cascade],
    windows: &TimeWindows,
    mode: TimestampMode,
    log: &crate::event_log::EventLog,
) -> Vec<HlLogRecord> {
    let case_of = cascade_index(cascades, graph.len());
    let mut records: Vec<HlLogRecord> = graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let w = windows.window(h.window);
            HlLogRecord {
                hle: i,
                case: case_of[i],
                activity: h.activity().label(log),
                timestamp: match mode {
                    TimestampMode::WindowStart => w.start,
                    TimestampMode::WindowEnd => w.end,
                },
                value: h.value,
                n_events: h.event_set.len(),
            }
        })
        .collect();
    records.sort_by(|a, b| {
        (a.case, a.timestamp, &a.activity, a.hle).cmp(&(b.case, b.timestamp, &b.activity, b.hle))
    });
    records
}

pub fn write_hl_log<W: Write>(records: &[HlLogRecord], writer: W) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["case", "activity", "timestamp", "value", "n_events"])?;
    for r in records {
        w.write_record([
            r.case.to_string(),
            r.activity.clone(),
            r.timestamp.to_rfc3339(),
            r.value.to_string(),
            r.n_events.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the high-level log to `path` and returns the number of records.
pub fn export_hl_log(
    graph: &PropagationGraph,
    cascades: &[Cascade],
    windows: &TimeWindows,
    mode: TimestampMode,
    log: &crate::event_log::EventLog,
    path: impl AsRef<Path>,
) -> Result<usize, ExportError> {
    let records = hl_records(graph, cascades, windows, mode, log);
    let file = std::fs::File::create(path)?;
    write_hl_log(&records, std::io::BufWriter::new(file))?;
    Ok(records.len())
}
