use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventLog, LogError, RawEvent};
use crate::time::TimestampFormat;

/// Maps input columns onto the event attributes. Unmapped columns are kept as
/// extra attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub case: String,
    pub activity: String,
    pub timestamp: String,
    /// Optional; when the column is missing from the file every event has no resource.
    pub resource: Option<String>,
    pub timestamp_format: TimestampFormat,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            case: "case".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            resource: Some("resource".into()),
            timestamp_format: TimestampFormat::Iso8601,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<EventLog, LogError> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(std::io::BufReader::new(file), schema)
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<EventLog, LogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| column(name).ok_or_else(|| LogError::MissingColumn(name.into()));
    let case_col = required(&schema.case)?;
    let act_col = required(&schema.activity)?;
    let time_col = required(&schema.timestamp)?;
    let res_col = schema.resource.as_deref().and_then(column);
    let extra: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            ![Some(case_col), Some(act_col), Some(time_col), res_col].contains(&Some(*i))
        })
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let cell = |col: usize, name: &str| -> Result<String, LogError> {
            match row.get(col) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(LogError::EmptyCell {
                    row: line,
                    column: name.to_string(),
                }),
            }
        };
        let case = cell(case_col, &schema.case)?;
        let activity = cell(act_col, &schema.activity)?;
        let timestamp = schema
            .timestamp_format
            .parse(&cell(time_col, &schema.timestamp)?)
            .map_err(|source| LogError::Timestamp { row: line, source })?;
        let resource = res_col
            .and_then(|c| row.get(c))
            .filter(|v| !v.is_empty())
            .map(str::to_string);
        let attributes: BTreeMap<String, String> = extra
            .iter()
            .filter_map(|(c, name)| {
                row.get(*c)
                    .filter(|v| !v.is_empty())
                    .map(|v| (name.clone(), v.to_string()))
            })
            .collect();
        records.push(RawEvent {
            case,
            activity,
            timestamp,
            resource,
            attributes,
        });
    }
    if records.is_empty() {
        return Err(LogError::Empty);
    }
    EventLog::from_records(records)
}

/// Writes a log with columns `case, activity, timestamp[, resource], <extras>`;
/// timestamps as RFC 3339.
pub fn write_csv<W: Write>(log: &EventLog, writer: W) -> Result<(), LogError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["case", "activity", "timestamp"];
    if log.has_resources() {
        header.push("resource");
    }
    header.extend(log.attribute_names().iter().map(String::as_str));
    w.write_record(&header)?;
    for e in log.events() {
        let mut row = vec![
            log.case_name(e.case).to_string(),
            log.activity_name(e.activity).to_string(),
            e.timestamp.to_rfc3339(),
        ];
        if log.has_resources() {
            row.push(
                e.resource
                    .map(|r| log.resource_name(r).to_string())
                    .unwrap_or_default(),
            );
        }
        for name in log.attribute_names() {
            row.push(e.attributes.get(name).cloned().unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
