//! Timestamped record of every observable action, and its canonical
//! JSON-lines form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Event kinds written by the simulator.
pub mod kinds {
    pub const ENV_SET: &str = "ENV_SET";
    pub const ALERT_BYTE: &str = "ALERT_BYTE";
    pub const THRESHOLD_SET: &str = "THRESHOLD_SET";
    pub const THRESHOLD_REJECTED: &str = "THRESHOLD_REJECTED";
    pub const SERIAL_IGNORED: &str = "SERIAL_IGNORED";
    pub const PW_MODE: &str = "PW_MODE";
    pub const PW_MODE_REJECTED: &str = "PW_MODE_REJECTED";
    pub const PW_COMMIT: &str = "PW_COMMIT";
    pub const AT_TX: &str = "AT_TX";
    pub const AT_RX: &str = "AT_RX";
    pub const AT_TIMEOUT: &str = "AT_TIMEOUT";
    pub const URC: &str = "URC";
    pub const GATEWAY_READY: &str = "GATEWAY_READY";
    pub const STARTUP_FAILED: &str = "STARTUP_FAILED";
    pub const LATCHED: &str = "LATCHED";
    pub const UNKNOWN_ALERT_BYTE: &str = "UNKNOWN_ALERT_BYTE";
    pub const DISPATCH_FAILED: &str = "DISPATCH_FAILED";
    pub const MCU_CMD_TX: &str = "MCU_CMD_TX";
    pub const REMOTE_CMD: &str = "REMOTE_CMD";
    pub const REMOTE_REJECTED: &str = "REMOTE_REJECTED";
    pub const RESET: &str = "RESET";
    pub const SMS_SUBMITTED: &str = "SMS_SUBMITTED";
    pub const SMS_INBOUND: &str = "SMS_INBOUND";
    pub const SIM_FULL: &str = "SIM_FULL";
    pub const SMS_DELIVERED: &str = "SMS_DELIVERED";
    pub const SMS_DROPPED: &str = "SMS_DROPPED";
    pub const RING: &str = "RING";
    pub const CALL_UNANSWERED: &str = "CALL_UNANSWERED";
    pub const CALL_END: &str = "CALL_END";
}

pub type Payload = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub t: u64,
    pub kind: String,
    pub payload: Payload,
}

impl TraceEvent {
    pub fn to_canonical(&self) -> String {
        serde_json::to_string(self).expect("trace events are plain JSON")
    }

    /// True if every key in `pattern` is present in the payload with an equal value.
    pub fn payload_matches(&self, pattern: &Payload) -> bool {
        pattern.iter().all(|(k, v)| self.payload.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event. `payload` should be a JSON object; anything else is
    /// stored under the key `"value"`.
    pub fn record(&mut self, t: u64, kind: &str, payload: Value) {
        let payload = match payload {
            Value::Object(map) => map.into_iter().collect(),
            Value::Null => Payload::new(),
            other => Payload::from([("value".to_string(), other)]),
        };
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent {
            seq,
            t,
            kind: kind.to_string(),
            payload,
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn since(&self, seq: u64) -> &[TraceEvent] {
        let start = (seq as usize).min(self.events.len());
        &self.events[start..]
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: &str, pattern: &Payload) -> usize {
        self.of_kind(kind)
            .filter(|e| e.payload_matches(pattern))
            .count()
    }

    /// One JSON object per line, keys in sorted order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_canonical());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<TraceEvent>, _>>()?;
        Ok(Trace { events })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceComparison {
    Equal,
    Diverged { seq: u64, field: String },
}

/// Finds the first event (and field within it) where two traces disagree.
pub fn compare_traces(a: &Trace, b: &Trace) -> TraceComparison {
    for (ea, eb) in a.events.iter().zip(&b.events) {
        let field = if ea.seq != eb.seq {
            Some("seq".to_string())
        } else if ea.t != eb.t {
            Some("t".to_string())
        } else if ea.kind != eb.kind {
            Some("kind".to_string())
        } else {
            ea.payload
                .keys()
                .chain(eb.payload.keys())
                .find(|k| ea.payload.get(*k) != eb.payload.get(*k))
                .map(|k| format!("payload.{k}"))
        };
        if let Some(field) = field {
            return TraceComparison::Diverged { seq: ea.seq, field };
        }
    }
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Equal => TraceComparison::Equal,
        _ => TraceComparison::Diverged {
            seq: a.len().min(b.len()) as u64,
            field: "<missing>".to_string(),
        },
    }
}
