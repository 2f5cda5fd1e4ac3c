use serde::Serialize;

use super::EventLog;

/// Summary figures of an event log. Durations are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogStatistics {
    pub traces: usize,
    pub events: usize,
    pub activities: usize,
    pub mean_events_per_trace: f64,
    pub max_events_per_trace: usize,
    pub mean_duration: f64,
    pub max_duration: i64,
}

pub fn log_statistics(log: &EventLog) -> LogStatistics {
    let traces = log.len();
    let events = log.event_count();
    let durations: Vec<i64> = log.traces().iter().map(|t| t.cycle_time()).collect();
    LogStatistics {
        traces,
        events,
        activities: log.activities().len(),
        mean_events_per_trace: events as f64 / traces as f64,
        max_events_per_trace: log.traces().iter().map(|t| t.len()).max().unwrap_or(0),
        mean_duration: durations.iter().sum::<i64>() as f64 / traces as f64,
        max_duration: durations.iter().copied().max().unwrap_or(0),
    }
}
