//! A small XES subset: `<trace>` elements holding `<event>` elements with
//! `concept:name`, `org:resource`, `time:timestamp` and
//! `lifecycle:transition` attributes.
//!
//! Start/complete pairs of the same activity are fused in document order.
//! An event may instead carry both times directly through a
//! `time:start` date attribute.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{format_timestamp, parse_timestamp, Event, EventLog, LogError, Timestamp, Trace, AUTO_RESOURCE};

const START_KEY: &str = "time:start";

/// Parsed log plus the number of events that had to be repaired to zero
/// duration (unpaired starts and completes).
#[derive(Debug, Clone)]
pub struct XesParse {
    pub log: EventLog,
    pub repaired_events: usize,
}

pub fn parse_xes(path: impl AsRef<Path>) -> Result<XesParse, LogError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_xes_str(&text)
}

#[derive(Default)]
struct RawEvent {
    activity: Option<String>,
    resource: Option<String>,
    timestamp: Option<Timestamp>,
    start: Option<Timestamp>,
    lifecycle: Option<String>,
}

#[derive(Default)]
struct RawTrace {
    case_id: Option<String>,
    events: Vec<RawEvent>,
}

pub fn parse_xes_str(text: &str) -> Result<XesParse, LogError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut traces: Vec<RawTrace> = Vec::new();
    let mut current_trace: Option<RawTrace> = None;
    let mut current_event: Option<RawEvent> = None;
    let mut depth_in_event = 0usize;

    loop {
        let event = reader
            .read_event()
            .map_err(|e| LogError::Xml(format!("at byte {}: {e}", reader.buffer_position())))?;
        match event {
            XmlEvent::Start(e) => match e.name().as_ref() {
                b"trace" => current_trace = Some(RawTrace::default()),
                b"event" => {
                    current_event = Some(RawEvent::default());
                    depth_in_event = 0;
                }
                _ => {
                    if current_event.is_some() {
                        depth_in_event += 1;
                    }
                    apply_attribute(&e, &mut current_trace, &mut current_event, depth_in_event)?;
                }
            },
            XmlEvent::Empty(e) => match e.name().as_ref() {
                b"trace" => traces.push(RawTrace::default()),
                b"event" => {
                    if let Some(trace) = current_trace.as_mut() {
                        trace.events.push(RawEvent::default());
                    }
                }
                _ => apply_attribute(&e, &mut current_trace, &mut current_event, depth_in_event + 1)?,
            },
            XmlEvent::End(e) => match e.name().as_ref() {
                b"trace" => {
                    let trace = current_trace
                        .take()
                        .ok_or_else(|| LogError::Xml("unbalanced </trace>".into()))?;
                    traces.push(trace);
                }
                b"event" => {
                    let event = current_event
                        .take()
                        .ok_or_else(|| LogError::Xml("unbalanced </event>".into()))?;
                    match current_trace.as_mut() {
                        Some(trace) => trace.events.push(event),
                        None => return Err(LogError::Xml("<event> outside of <trace>".into())),
                    }
                }
                _ => {
                    if current_event.is_some() && depth_in_event > 0 {
                        depth_in_event -= 1;
                    }
                }
            },
            XmlEvent::Eof => break,
            _ => {}
        }
    }
    if current_trace.is_some() || current_event.is_some() {
        return Err(LogError::Xml("unexpected end of document".into()));
    }

    let mut repaired = 0usize;
    let mut out = Vec::with_capacity(traces.len());
    for (idx, raw) in traces.into_iter().enumerate() {
        let case_id = raw.case_id.unwrap_or_else(|| format!("trace_{}", idx + 1));
        let events = fuse_lifecycle(&case_id, raw.events, &mut repaired)?;
        if events.is_empty() {
            continue;
        }
        out.push(Trace::new(case_id, events)?);
    }
    if repaired > 0 {
        warn!("{repaired} XES events had no lifecycle partner and were given zero duration");
    }
    Ok(XesParse {
        log: EventLog::new(out)?,
        repaired_events: repaired,
    })
}

fn attr(e: &BytesStart<'_>, name: &[u8]) -> Result<Option<String>, LogError> {
    for a in e.attributes() {
        let a = a.map_err(|err| LogError::Xml(err.to_string()))?;
        if a.key.as_ref() == name {
            let v = a.unescape_value().map_err(|err| LogError::Xml(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn apply_attribute(
    e: &BytesStart<'_>,
    trace: &mut Option<RawTrace>,
    event: &mut Option<RawEvent>,
    depth_in_event: usize,
) -> Result<(), LogError> {
    let kind = e.name().as_ref().to_vec();
    if !matches!(kind.as_slice(), b"string" | b"date") {
        return Ok(());
    }
    let (Some(key), Some(value)) = (attr(e, b"key")?, attr(e, b"value")?) else {
        return Ok(());
    };
    if let Some(ev) = event.as_mut() {
        // nested attribute lists belong to the parent attribute, not the event
        if depth_in_event > 1 {
            return Ok(());
        }
        match (kind.as_slice(), key.as_str()) {
            (b"string", "concept:name") => ev.activity = Some(value),
            (b"string", "org:resource") => ev.resource = Some(value),
            (b"string", "lifecycle:transition") => ev.lifecycle = Some(value.to_ascii_lowercase()),
            (b"date", "time:timestamp") => ev.timestamp = Some(parse_date(&value)?),
            (b"date", START_KEY) => ev.start = Some(parse_date(&value)?),
            _ => {}
        }
    } else if let Some(tr) = trace.as_mut() {
        if kind.as_slice() == b"string" && key == "concept:name" {
            tr.case_id = Some(value);
        }
    }
    Ok(())
}

fn parse_date(value: &str) -> Result<Timestamp, LogError> {
    parse_timestamp(value).ok_or_else(|| LogError::Xml(format!("bad timestamp {value:?}")))
}

fn fuse_lifecycle(case_id: &str, raw: Vec<RawEvent>, repaired: &mut usize) -> Result<Vec<Event>, LogError> {
    let mut open: HashMap<String, VecDeque<(Timestamp, Option<String>)>> = HashMap::new();
    let mut events = Vec::new();
    let make = |activity: &str, resource: Option<String>, start, end| Event {
        case_id: case_id.to_string(),
        activity: activity.to_string(),
        resource: resource.unwrap_or_else(|| AUTO_RESOURCE.to_string()),
        start,
        end,
    };
    for ev in raw {
        let activity = ev
            .activity
            .ok_or_else(|| LogError::Xml(format!("event without concept:name in trace {case_id:?}")))?;
        let ts = ev
            .timestamp
            .ok_or_else(|| LogError::Xml(format!("event {activity:?} without time:timestamp")))?;
        match ev.lifecycle.as_deref().unwrap_or("complete") {
            "start" => open.entry(activity).or_default().push_back((ts, ev.resource)),
            "complete" => {
                if let Some(start) = ev.start {
                    events.push(make(&activity, ev.resource, start.min(ts), ts));
                } else if let Some((start, start_res)) = open.get_mut(&activity).and_then(VecDeque::pop_front) {
                    events.push(make(&activity, ev.resource.or(start_res), start.min(ts), ts));
                } else {
                    *repaired += 1;
                    events.push(make(&activity, ev.resource, ts, ts));
                }
            }
            _ => {}
        }
    }
    let mut leftovers: Vec<_> = open
        .into_iter()
        .flat_map(|(activity, starts)| starts.into_iter().map(move |(ts, res)| (activity.clone(), ts, res)))
        .collect();
    leftovers.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    for (activity, ts, res) in leftovers {
        *repaired += 1;
        events.push(make(&activity, res, ts, ts));
    }
    Ok(events)
}

/// Serializes the log into the XES subset, one start/complete pair per event.
pub fn write_xes(log: &EventLog) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<log xes.version=\"1.0\">\n");
    for trace in log.traces() {
        out.push_str("  <trace>\n");
        let _ = writeln!(
            out,
            "    <string key=\"concept:name\" value=\"{}\"/>",
            escape(trace.case_id())
        );
        for event in trace.events() {
            for (transition, ts) in [("start", event.start), ("complete", event.end)] {
                out.push_str("    <event>\n");
                let _ = writeln!(
                    out,
                    "      <string key=\"concept:name\" value=\"{}\"/>",
                    escape(event.activity.as_str())
                );
                let _ = writeln!(
                    out,
                    "      <string key=\"org:resource\" value=\"{}\"/>",
                    escape(event.resource.as_str())
                );
                let _ = writeln!(
                    out,
                    "      <string key=\"lifecycle:transition\" value=\"{transition}\"/>"
                );
                let _ = writeln!(
                    out,
                    "      <date key=\"time:timestamp\" value=\"{}\"/>",
                    format_timestamp(ts)
                );
                out.push_str("    </event>\n");
            }
        }
        out.push_str("  </trace>\n");
    }
    out.push_str("</log>\n");
    out
}
