use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::{format_timestamp, parse_timestamp, Event, EventLog, LogError, AUTO_RESOURCE};

/// Maps the canonical event fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub case_id: String,
    pub activity: String,
    /// Missing column means every event gets the `AUTO` resource.
    pub resource: Option<String>,
    pub start: String,
    pub end: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            case_id: "case_id".into(),
            activity: "activity".into(),
            resource: Some("resource".into()),
            start: "start_time".into(),
            end: "end_time".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub columns: ColumnMap,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            delimiter: b',',
        }
    }
}

pub fn parse_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<EventLog, LogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv_reader(file, options)
}

pub fn parse_csv_reader<R: Read>(reader: R, options: &CsvOptions) -> Result<EventLog, LogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn(name.to_string()))
    };
    let cols = &options.columns;
    let case_col = column(&cols.case_id)?;
    let activity_col = column(&cols.activity)?;
    let start_col = column(&cols.start)?;
    let end_col = column(&cols.end)?;
    let resource_col = cols.resource.as_deref().map(column).transpose()?;

    let mut events = Vec::new();
    let mut reserved = 0usize;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        let field = |col: usize| record.get(col).unwrap_or("");
        let ts = |col: usize| {
            let value = field(col);
            parse_timestamp(value).ok_or_else(|| LogError::Timestamp {
                row,
                value: value.to_string(),
            })
        };
        let start = ts(start_col)?;
        let end = ts(end_col)?;
        if end < start {
            return Err(LogError::NegativeDuration { row });
        }
        let activity = field(activity_col);
        if activity.is_empty() {
            return Err(LogError::EmptyActivity { row });
        }
        let resource = match resource_col {
            Some(col) => {
                let r = field(col);
                if r == AUTO_RESOURCE {
                    reserved += 1;
                }
                r.to_string()
            }
            None => AUTO_RESOURCE.to_string(),
        };
        events.push(Event {
            case_id: field(case_col).to_string(),
            activity: activity.to_string(),
            resource,
            start,
            end,
        });
    }
    if reserved > 0 {
        warn!("{reserved} input events use the reserved resource name {AUTO_RESOURCE:?}");
    }
    if events.is_empty() {
        return Err(LogError::Empty);
    }
    EventLog::from_events(events)
}

/// Writes the log with the default [`ColumnMap`] header and RFC 3339 times.
pub fn write_csv<W: Write>(log: &EventLog, writer: W) -> Result<(), LogError> {
    let cols = ColumnMap::default();
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        cols.case_id.as_str(),
        cols.activity.as_str(),
        cols.resource.as_deref().unwrap_or("resource"),
        cols.start.as_str(),
        cols.end.as_str(),
    ])?;
    for event in log.events() {
        wtr.write_record([
            event.case_id.as_str(),
            event.activity.as_str(),
            event.resource.as_str(),
            &format_timestamp(event.start),
            &format_timestamp(event.end),
        ])?;
    }
    wtr.flush().map_err(|source| LogError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}
