//! Event logs: timestamped activity executions grouped by case.
//!
//! Timestamps are UTC epoch seconds. Every [`Trace`] keeps its events in
//! canonical order `(start, end, activity)` unless it was built by a log
//! repair step that must preserve alignment order.

mod csv_io;
mod stats;
mod timestamp;
mod xes;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{parse_csv, parse_csv_reader, write_csv, ColumnMap, CsvOptions};
pub use stats::{log_statistics, LogStatistics};
pub use timestamp::{format_timestamp, parse_timestamp};
pub use xes::{parse_xes, parse_xes_str, write_xes, XesParse};

/// Absolute time in seconds since the Unix epoch (UTC).
pub type Timestamp = i64;

/// Reserved resource name for synthetic events that consume no resource.
pub const AUTO_RESOURCE: &str = "AUTO";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("column {0:?} not found in the CSV header")]
    MissingColumn(String),
    #[error("row {row}: cannot parse timestamp {value:?}")]
    Timestamp { row: usize, value: String },
    #[error("row {row}: end timestamp precedes start timestamp")]
    NegativeDuration { row: usize },
    #[error("row {row}: empty activity label")]
    EmptyActivity { row: usize },
    #[error("malformed XES: {0}")]
    Xml(String),
    #[error("event log is empty")]
    Empty,
    #[error("trace {0:?} has no events")]
    EmptyTrace(String),
    #[error("case id {0:?} occurs in more than one trace")]
    DuplicateCase(String),
    #[error("event of activity {activity:?} belongs to case {found:?}, not {expected:?}")]
    ForeignEvent {
        activity: String,
        expected: String,
        found: String,
    },
    #[error("invalid event in case {case_id:?}: {reason}")]
    InvalidEvent { case_id: String, reason: String },
}

/// One activity execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub case_id: String,
    pub activity: String,
    pub resource: String,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Event {
    pub fn new(
        case_id: impl Into<String>,
        activity: impl Into<String>,
        resource: impl Into<String>,
        start: Timestamp,
        end: Timestamp,
    ) -> Result<Self, LogError> {
        let event = Self {
            case_id: case_id.into(),
            activity: activity.into(),
            resource: resource.into(),
            start,
            end,
        };
        event.validate()?;
        Ok(event)
    }

    fn validate(&self) -> Result<(), LogError> {
        if self.activity.is_empty() {
            return Err(LogError::InvalidEvent {
                case_id: self.case_id.clone(),
                reason: "empty activity label".into(),
            });
        }
        if self.end < self.start {
            return Err(LogError::InvalidEvent {
                case_id: self.case_id.clone(),
                reason: format!("activity {:?} ends before it starts", self.activity),
            });
        }
        Ok(())
    }

    /// Processing time `end - start` in seconds.
    pub fn processing_time(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_auto(&self) -> bool {
        self.resource == AUTO_RESOURCE
    }

    fn order_key(&self) -> (Timestamp, Timestamp, &str) {
        (self.start, self.end, self.activity.as_str())
    }
}

/// The execution history of one case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
}

impl Trace {
    /// Builds a trace and sorts its events canonically.
    pub fn new(case_id: impl Into<String>, mut events: Vec<Event>) -> Result<Self, LogError> {
        events.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
        Self::from_ordered(case_id, events)
    }

    /// Builds a trace keeping the given event order.
    pub fn from_ordered(case_id: impl Into<String>, events: Vec<Event>) -> Result<Self, LogError> {
        let case_id = case_id.into();
        if events.is_empty() {
            return Err(LogError::EmptyTrace(case_id));
        }
        for event in &events {
            event.validate()?;
            if event.case_id != case_id {
                return Err(LogError::ForeignEvent {
                    activity: event.activity.clone(),
                    expected: case_id,
                    found: event.case_id.clone(),
                });
            }
        }
        Ok(Self { case_id, events })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Start of the first event; also taken as the case creation time.
    pub fn start(&self) -> Timestamp {
        self.events.iter().map(|e| e.start).min().unwrap_or_default()
    }

    pub fn end(&self) -> Timestamp {
        self.events.iter().map(|e| e.end).max().unwrap_or_default()
    }

    /// Case duration: last end minus first start.
    pub fn cycle_time(&self) -> i64 {
        self.end() - self.start()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }

    /// Same events under a different case id.
    pub fn renamed(&self, case_id: &str) -> Trace {
        let events = self
            .events
            .iter()
            .map(|e| Event {
                case_id: case_id.to_string(),
                ..e.clone()
            })
            .collect();
        Trace {
            case_id: case_id.to_string(),
            events,
        }
    }
}

/// A non-empty set of traces with unique case ids.
///
/// Traces are kept ordered by `(first start, case id)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    traces: Vec<Trace>,
}

impl EventLog {
    pub fn new(mut traces: Vec<Trace>) -> Result<Self, LogError> {
        if traces.is_empty() {
            return Err(LogError::Empty);
        }
        let mut seen = HashSet::new();
        for trace in &traces {
            if !seen.insert(trace.case_id.as_str()) {
                return Err(LogError::DuplicateCase(trace.case_id.clone()));
            }
        }
        traces.sort_by(|a, b| (a.start(), &a.case_id).cmp(&(b.start(), &b.case_id)));
        Ok(Self { traces })
    }

    /// Groups loose events by case id.
    pub fn from_events(events: impl IntoIterator<Item = Event>) -> Result<Self, LogError> {
        let mut cases: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for event in events {
            cases.entry(event.case_id.clone()).or_default().push(event);
        }
        let traces = cases
            .into_iter()
            .map(|(case_id, events)| Trace::new(case_id, events))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(traces)
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<Trace> {
        self.traces
    }

    /// Number of traces (K).
    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.traces.iter().flat_map(|t| t.events.iter())
    }

    pub fn activities(&self) -> BTreeSet<&str> {
        self.events().map(|e| e.activity.as_str()).collect()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(case: &str, act: &str, start: i64, end: i64) -> Event {
        Event::new(case, act, "r", start, end).unwrap()
    }

    #[test]
    fn trace_sorts_by_start_then_end_then_label() {
        let t = Trace::new(
            "1",
            vec![
                ev("1", "c", 5, 9),
                ev("1", "b", 5, 7),
                ev("1", "a", 5, 7),
                ev("1", "z", 0, 1),
            ],
        )
        .unwrap();
        let labels: Vec<_> = t.labels().collect();
        assert_eq!(labels, ["z", "a", "b", "c"]);
    }

    #[test]
    fn rejects_negative_duration_and_empty_label() {
        assert!(Event::new("1", "a", "r", 10, 5).is_err());
        assert!(Event::new("1", "", "r", 0, 5).is_err());
    }

    #[test]
    fn rejects_empty_and_duplicate_logs() {
        assert!(matches!(EventLog::new(vec![]), Err(LogError::Empty)));
        let t = Trace::new("1", vec![ev("1", "a", 0, 1)]).unwrap();
        assert!(matches!(
            EventLog::new(vec![t.clone(), t]),
            Err(LogError::DuplicateCase(_))
        ));
        assert!(matches!(Trace::new("1", vec![]), Err(LogError::EmptyTrace(_))));
    }

    #[test]
    fn trace_rejects_events_of_other_cases() {
        let err = Trace::new("1", vec![ev("2", "a", 0, 1)]).unwrap_err();
        assert!(matches!(err, LogError::ForeignEvent { .. }));
    }

    #[test]
    fn groups_events_by_case() {
        let log = EventLog::from_events(vec![ev("2", "a", 10, 11), ev("1", "b", 5, 6), ev("1", "a", 0, 1)]).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.traces()[0].case_id(), "1");
        assert_eq!(log.traces()[0].labels().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(log.event_count(), 3);
    }
}
