use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use super::{EngineEvent, Result, TaskError};

/// One line of the exported event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp_ns: i64,
    pub event: String,
    pub step_id: Option<String>,
    pub detail: serde_json::Value,
}

impl From<&EngineEvent> for EventRecord {
    fn from(e: &EngineEvent) -> Self {
        let mut detail = serde_json::to_value(&e.kind).expect("event serializes");
        if let Some(obj) = detail.as_object_mut() {
            obj.remove("event");
        }
        EventRecord {
            timestamp_ns: e.timestamp_ns,
            event: e.kind.name().to_string(),
            step_id: e.kind.step_id().map(str::to_string),
            detail,
        }
    }
}

pub fn event_log_line(e: &EngineEvent) -> String {
    serde_json::to_string(&EventRecord::from(e)).expect("record serializes")
}

pub fn write_event_log<W: Write>(mut w: W, events: &[EngineEvent]) -> std::io::Result<()> {
    for e in events {
        writeln!(w, "{}", event_log_line(e))?;
    }
    Ok(())
}

pub fn read_event_log<R: BufRead>(r: R) -> Result<Vec<EventRecord>> {
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| TaskError::SchemaError(e.to_string()))?;
            serde_json::from_str(&l).map_err(|e| TaskError::SchemaError(e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::EventKind;

    #[test]
    fn lines_carry_the_four_fields() {
        let ev = vec![
            EngineEvent { timestamp_ns: 1, kind: EventKind::SessionStarted },
            EngineEvent { timestamp_ns: 2, kind: EventKind::StepCompleted { procedure_id: "p".into(), step_id: "p.1".into() } },
        ];
        let mut buf = Vec::new();
        write_event_log(&mut buf, &ev).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            r#"{"timestamp_ns":2,"event":"StepCompleted","step_id":"p.1","detail":{"procedure_id":"p","step_id":"p.1"}}"#
        );
        let back = read_event_log(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].step_id, None);
        assert_eq!(back[1], EventRecord::from(&ev[1]));
    }
}
