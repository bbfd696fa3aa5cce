use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// One record of the session event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Simulated time since session start (s).
    pub time_s: f64,
    pub event: String,
    pub payload: Value,
}

/// Append-only, totally ordered event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, time_s: f64, event: &str, payload: Value) {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, time_s, event: event.to_string(), payload });
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

    /// Newline-delimited JSON, one `{"seq","time_s","event","payload"}` object per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
