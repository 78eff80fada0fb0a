//! JSON scenario files: timed stimuli and expectations.
//!
//! ```json
//! {
//!   "name": "temp1_alert",
//!   "duration_ms": 60000,
//!   "config": { "gateway": { "destinations": ["01711111111"] } },
//!   "events": [
//!     { "t": 0, "op": "set_temp", "sensor": 1, "celsius": 65.0 },
//!     { "t": 30000, "op": "expect", "kind": "SMS_DELIVERED", "count": 1 }
//!   ]
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{read_file, LoadError, SimConfig};
use crate::envmodel::{TEMP_MAX_C, TEMP_MIN_C};
use crate::firmware::{PasswordLatch, RangeButton};
use crate::gsm::{validate_number, MAX_TEXT_LEN};
use crate::trace::Payload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScenarioOp {
    SetTemp {
        sensor: u8,
        celsius: f64,
    },
    SetSmoke {
        sensor: u8,
        density: f64,
    },
    PressPwMode {
        latch: PasswordLatch,
    },
    CommitPassword {
        latch: PasswordLatch,
    },
    SetThresholdLocal {
        latch: PasswordLatch,
        select: u8,
        range: RangeButton,
    },
    SendSms {
        from: String,
        text: String,
    },
    /// Checks the trace recorded so far. With `count`, the number of matching
    /// events must equal it; otherwise at least one must exist.
    Expect {
        kind: String,
        #[serde(default, skip_serializing_if = "Payload::is_empty")]
        payload: Payload,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        count: Option<usize>,
    },
}

impl ScenarioOp {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            ScenarioOp::SetTemp { sensor, celsius } => {
                check_sensor(*sensor)?;
                if !(TEMP_MIN_C..=TEMP_MAX_C).contains(celsius) {
                    return Err(format!("temperature {celsius} outside model range"));
                }
            }
            ScenarioOp::SetSmoke { sensor, density } => {
                check_sensor(*sensor)?;
                if !(0.0..=1.0).contains(density) {
                    return Err(format!("smoke density {density} outside [0, 1]"));
                }
            }
            ScenarioOp::SetThresholdLocal { select, .. } if *select > 3 => {
                return Err(format!("sensor select code {select} is not 0-3"));
            }
            ScenarioOp::SendSms { from, text } => {
                validate_number(from).map_err(|e| e.to_string())?;
                if text.chars().count() > MAX_TEXT_LEN {
                    return Err("SMS text longer than 160 characters".into());
                }
            }
            ScenarioOp::Expect { kind, .. } if kind.is_empty() => {
                return Err("expect needs a kind".into());
            }
            _ => {}
        }
        Ok(())
    }
}

fn check_sensor(sensor: u8) -> Result<(), String> {
    if sensor == 1 || sensor == 2 {
        Ok(())
    } else {
        Err(format!("sensor index {sensor} is not 1 or 2"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t: u64,
    #[serde(flatten)]
    pub op: ScenarioOp,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SimConfig>,
    pub events: Vec<ScenarioEvent>,
}

/// Wire shape before validation; `t` may be negative here.
#[derive(Deserialize)]
struct RawEvent {
    t: i64,
    #[serde(flatten)]
    op: ScenarioOp,
}

#[derive(Deserialize)]
struct RawScenario {
    #[serde(default)]
    name: String,
    #[serde(default)]
    duration_ms: Option<u64>,
    #[serde(default)]
    config: Option<SimConfig>,
    events: Vec<RawEvent>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        Self::parse(text, "<scenario>")
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        Self::parse(&read_file(path)?, &path.display().to_string())
    }

    fn parse(text: &str, origin: &str) -> Result<Self, LoadError> {
        let raw: RawScenario =
            serde_json::from_str(text).map_err(|e| LoadError::parse(origin, e))?;
        if let Some(config) = &raw.config {
            config
                .validate()
                .map_err(|e| LoadError::Invalid(format!("{origin}: config: {e}")))?;
        }
        let mut events = Vec::with_capacity(raw.events.len());
        for (i, ev) in raw.events.into_iter().enumerate() {
            if ev.t < 0 {
                return Err(LoadError::Invalid(format!(
                    "{origin}: event {i} has negative time {}",
                    ev.t
                )));
            }
            ev.op
                .validate()
                .map_err(|e| LoadError::Invalid(format!("{origin}: event {i}: {e}")))?;
            events.push(ScenarioEvent {
                t: ev.t as u64,
                op: ev.op,
            });
        }
        // Stable: events sharing a time keep file order.
        events.sort_by_key(|e| e.t);
        Ok(Scenario {
            name: raw.name,
            duration_ms: raw.duration_ms,
            config: raw.config,
            events,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}
