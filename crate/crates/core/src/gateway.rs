//! The server program: an MCU poller, an SMS poller, alert latching with
//! SMS-then-call fan-out, and password-checked remote commands.
//!
//! Both pollers feed a single modem channel. The channel sends one AT line,
//! waits for its complete response block (and, after a dial, for the call to
//! end), then waits `at_gap_ms` before the next line. Response blocks can
//! therefore never interleave.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::firmware::{remote_threshold_command, SensorId};
use crate::gsm::{self, validate_number};
use crate::serialnet::{DuplexLink, LinkError, MCU_LINK, MODEM_LINK};
use crate::trace::{kinds, Trace};

pub const MAX_PASSWORD_LEN: usize = 10;
pub const MAX_DESTINATIONS: usize = 8;
const SIM_SWEEP_SLOTS: u32 = gsm::SIM_SLOTS as u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("between 1 and {MAX_DESTINATIONS} destinations are required, got {0}")]
    DestinationCount(usize),
    #[error("destination {0:?} is not a valid phone number")]
    BadDestination(String),
    #[error("server password must be 1-{MAX_PASSWORD_LEN} characters without spaces")]
    BadPassword,
    #[error("{0} must be positive")]
    ZeroInterval(&'static str),
    #[error("outbox slot {0} for {1} is outside 1-8")]
    BadSlot(u32, SensorId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub destinations: Vec<String>,
    pub server_password: String,
    pub mcu_poll_ms: u64,
    pub sms_poll_ms: u64,
    pub at_gap_ms: u64,
    pub sensor_outbox_slot: BTreeMap<SensorId, u32>,
    pub mcu_port: String,
    pub modem_port: String,
    /// Give up on a command that has not been answered in this long.
    pub response_timeout_ms: u64,
    /// Give up waiting for a dialed call to end after this long.
    pub call_timeout_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            destinations: vec!["01711111111".to_string()],
            server_password: "mypass".to_string(),
            mcu_poll_ms: 50,
            sms_poll_ms: 2_000,
            at_gap_ms: 100,
            sensor_outbox_slot: SensorId::ALL.into_iter().zip(1..).collect(),
            mcu_port: MCU_LINK.to_string(),
            modem_port: MODEM_LINK.to_string(),
            response_timeout_ms: 5_000,
            call_timeout_ms: 20_000,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.destinations.len();
        if n == 0 || n > MAX_DESTINATIONS {
            return Err(ConfigError::DestinationCount(n));
        }
        if let Some(bad) = self
            .destinations
            .iter()
            .find(|d| validate_number(d).is_err())
        {
            return Err(ConfigError::BadDestination(bad.clone()));
        }
        let pw = &self.server_password;
        if pw.is_empty() || pw.chars().count() > MAX_PASSWORD_LEN || pw.contains(' ') {
            return Err(ConfigError::BadPassword);
        }
        for (name, v) in [
            ("mcu_poll_ms", self.mcu_poll_ms),
            ("sms_poll_ms", self.sms_poll_ms),
            ("response_timeout_ms", self.response_timeout_ms),
            ("call_timeout_ms", self.call_timeout_ms),
        ] {
            if v == 0 {
                return Err(ConfigError::ZeroInterval(name));
            }
        }
        for s in SensorId::ALL {
            let slot = self.sensor_outbox_slot.get(&s).copied().unwrap_or(0);
            if slot == 0 || slot as usize > gsm::OUTBOX_SLOTS {
                return Err(ConfigError::BadSlot(slot, s));
            }
        }
        Ok(())
    }

    pub fn slot(&self, sensor: SensorId) -> u32 {
        self.sensor_outbox_slot[&sensor]
    }
}

/// A remote control SMS: `<password> <command>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteCommand {
    pub password: String,
    pub cmd: char,
}

impl RemoteCommand {
    pub fn is_reset(&self) -> bool {
        self.cmd == 'R'
    }
}

/// Parses `<password> <command>` where the password is 1-10 characters and
/// the command is one of `A`..=`P` or `R`.
pub fn parse_remote_command(text: &str) -> Option<RemoteCommand> {
    let mut tokens = text.split(' ');
    let (password, cmd) = (tokens.next()?, tokens.next()?);
    if tokens.next().is_some() {
        return None;
    }
    let pw_len = password.chars().count();
    if pw_len == 0 || pw_len > MAX_PASSWORD_LEN {
        return None;
    }
    let mut chars = cmd.chars();
    let c = chars.next()?;
    if chars.next().is_some() || !matches!(c, 'A'..='P' | 'R') {
        return None;
    }
    Some(RemoteCommand {
        password: password.to_string(),
        cmd: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayPhase {
    Starting,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum JobKind {
    Init,
    Sms { sensor: SensorId, to: String },
    Call { sensor: SensorId, to: String },
    Read(u32),
    Delete(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AtJob {
    line: String,
    kind: JobKind,
}

#[derive(Debug, Clone)]
enum Channel {
    Idle { next_tx_at: u64 },
    Awaiting { job: AtJob, sent_at: u64 },
    InCall { job: AtJob, since: u64 },
}

/// Snapshot of gateway state for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewayState {
    pub phase: GatewayPhase,
    pub latched: Vec<SensorId>,
    pub queued_commands: usize,
    pub busy: bool,
}

#[derive(Debug, Clone)]
pub struct Gateway {
    config: GatewayConfig,
    phase: GatewayPhase,
    latched: BTreeSet<SensorId>,
    queue: VecDeque<AtJob>,
    channel: Channel,
    rx_buf: Vec<u8>,
    sweep_pending: bool,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            phase: GatewayPhase::Starting,
            latched: BTreeSet::new(),
            queue: VecDeque::new(),
            channel: Channel::Idle { next_tx_at: 0 },
            rx_buf: Vec::new(),
            sweep_pending: false,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn phase(&self) -> GatewayPhase {
        self.phase
    }

    pub fn latched(&self) -> &BTreeSet<SensorId> {
        &self.latched
    }

    pub fn state(&self) -> GatewayState {
        GatewayState {
            phase: self.phase,
            latched: self.latched.iter().copied().collect(),
            queued_commands: self.queue.len(),
            busy: !matches!(self.channel, Channel::Idle { .. }),
        }
    }

    /// Queues the modem initialization: text mode, then SIM storage.
    pub fn start(&mut self) {
        self.phase = GatewayPhase::Starting;
        for line in ["AT+CMGF=1", "AT+CPMS=\"SM\""] {
            self.queue.push_back(AtJob {
                line: line.to_string(),
                kind: JobKind::Init,
            });
        }
    }

    /// MCU poller: latch each newly alerting sensor and queue its fan-out.
    pub fn poll_mcu(
        &mut self,
        now: u64,
        mcu: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<(), LinkError> {
        let bytes = mcu.to_host.read(now)?;
        for b in bytes {
            let Some(sensor) = SensorId::from_alert_byte(b) else {
                trace.record(now, kinds::UNKNOWN_ALERT_BYTE, json!({"byte": b}));
                continue;
            };
            if !self.latched.insert(sensor) {
                continue;
            }
            trace.record(now, kinds::LATCHED, json!({"sensor": sensor}));
            self.enqueue_dispatch(sensor);
        }
        Ok(())
    }

    /// All SMS to every destination, then one call to each.
    fn enqueue_dispatch(&mut self, sensor: SensorId) {
        let slot = self.config.slot(sensor);
        for to in &self.config.destinations {
            self.queue.push_back(AtJob {
                line: format!("AT+CMSS={slot},\"{to}\""),
                kind: JobKind::Sms {
                    sensor,
                    to: to.clone(),
                },
            });
        }
        for to in &self.config.destinations {
            self.queue.push_back(AtJob {
                line: format!("ATD{to};"),
                kind: JobKind::Call {
                    sensor,
                    to: to.clone(),
                },
            });
        }
    }

    /// SMS poller: queue a read sweep over every SIM slot unless one is
    /// still in progress.
    pub fn poll_sms(&mut self) {
        if self.sweep_pending {
            return;
        }
        self.sweep_pending = true;
        for slot in 1..=SIM_SWEEP_SLOTS {
            self.queue.push_back(AtJob {
                line: format!("AT+CMGR={slot}"),
                kind: JobKind::Read(slot),
            });
        }
    }

    /// Consumes modem output and advances the channel: completes the pending
    /// command, notices a finished call, or times out.
    pub fn receive(
        &mut self,
        now: u64,
        modem: &mut DuplexLink,
        mcu: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<(), LinkError> {
        self.rx_buf.extend(modem.to_host.read(now)?);
        self.service_channel(now, mcu, trace)
    }

    /// Sends the next queued line if the channel is idle and the inter-command
    /// gap has elapsed.
    pub fn pump(
        &mut self,
        now: u64,
        modem: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<(), LinkError> {
        let Channel::Idle { next_tx_at } = self.channel else {
            return Ok(());
        };
        if now < next_tx_at || self.phase == GatewayPhase::Failed {
            return Ok(());
        }
        if let Some(job) = self.queue.pop_front() {
            let mut bytes = job.line.clone().into_bytes();
            bytes.push(b'\r');
            modem.to_device.write(&bytes, now)?;
            trace.record(now, kinds::AT_TX, json!({"line": job.line}));
            self.channel = Channel::Awaiting { job, sent_at: now };
        }
        Ok(())
    }

    fn service_channel(
        &mut self,
        now: u64,
        mcu: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<(), LinkError> {
        let gap = self.config.at_gap_ms;
        match std::mem::replace(&mut self.channel, Channel::Idle { next_tx_at: 0 }) {
            Channel::Idle { next_tx_at } => {
                if !self.rx_buf.is_empty() {
                    let text = String::from_utf8_lossy(&self.rx_buf).into_owned();
                    trace.record(now, kinds::URC, json!({"text": text}));
                    self.rx_buf.clear();
                }
                self.channel = Channel::Idle { next_tx_at };
            }
            Channel::Awaiting { job, sent_at } => {
                let outcome = if self.rx_buf.ends_with(gsm::OK) {
                    Some(true)
                } else if self.rx_buf.ends_with(gsm::ERROR) {
                    Some(false)
                } else {
                    None
                };
                match outcome {
                    Some(ok) => {
                        let response = String::from_utf8_lossy(&self.rx_buf).into_owned();
                        self.rx_buf.clear();
                        trace.record(
                            now,
                            kinds::AT_RX,
                            json!({"line": job.line, "response": response}),
                        );
                        self.channel = self.complete(job, ok, &response, now, mcu, trace)?;
                    }
                    None if now >= sent_at + self.config.response_timeout_ms => {
                        trace.record(now, kinds::AT_TIMEOUT, json!({"line": job.line}));
                        self.rx_buf.clear();
                        self.channel = self.complete(job, false, "", now, mcu, trace)?;
                    }
                    None => self.channel = Channel::Awaiting { job, sent_at },
                }
            }
            Channel::InCall { job, since } => {
                let ended = self
                    .rx_buf
                    .windows(gsm::NO_CARRIER.len())
                    .any(|w| w == gsm::NO_CARRIER);
                if ended {
                    let text = String::from_utf8_lossy(&self.rx_buf).into_owned();
                    self.rx_buf.clear();
                    trace.record(now, kinds::URC, json!({"text": text}));
                    self.channel = Channel::Idle {
                        next_tx_at: now + gap,
                    };
                } else if now >= since + self.config.call_timeout_ms {
                    trace.record(now, kinds::AT_TIMEOUT, json!({"line": job.line}));
                    self.channel = Channel::Idle {
                        next_tx_at: now + gap,
                    };
                } else {
                    self.channel = Channel::InCall { job, since };
                }
            }
        }
        Ok(())
    }

    /// Handles a finished command and returns the next channel state.
    fn complete(
        &mut self,
        job: AtJob,
        ok: bool,
        response: &str,
        now: u64,
        mcu: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<Channel, LinkError> {
        let idle = Channel::Idle {
            next_tx_at: now + self.config.at_gap_ms,
        };
        match &job.kind {
            JobKind::Init if !ok => {
                self.phase = GatewayPhase::Failed;
                self.queue.clear();
                trace.record(now, kinds::STARTUP_FAILED, json!({"line": job.line}));
            }
            JobKind::Init => {
                let more_init = self.queue.iter().any(|j| j.kind == JobKind::Init);
                if !more_init {
                    self.phase = GatewayPhase::Ready;
                    trace.record(now, kinds::GATEWAY_READY, json!({}));
                }
            }
            JobKind::Sms { sensor, to } | JobKind::Call { sensor, to } if !ok => {
                trace.record(
                    now,
                    kinds::DISPATCH_FAILED,
                    json!({"sensor": sensor, "to": to, "line": job.line}),
                );
            }
            JobKind::Sms { .. } => {}
            JobKind::Call { .. } => return Ok(Channel::InCall { job, since: now }),
            JobKind::Read(slot) => {
                let slot = *slot;
                if slot == SIM_SWEEP_SLOTS {
                    self.sweep_pending = false;
                }
                if let Some((from, text)) = ok.then(|| parse_cmgr(response)).flatten() {
                    self.handle_remote_text(&from, &text, now, mcu, trace)?;
                    self.queue.push_front(AtJob {
                        line: format!("AT+CMGD={slot}"),
                        kind: JobKind::Delete(slot),
                    });
                }
            }
            JobKind::Delete(_) => {}
        }
        Ok(idle)
    }

    fn handle_remote_text(
        &mut self,
        from: &str,
        text: &str,
        now: u64,
        mcu: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<(), LinkError> {
        let Some(rc) = parse_remote_command(text) else {
            trace.record(
                now,
                kinds::REMOTE_REJECTED,
                json!({"from": from, "reason": "malformed"}),
            );
            return Ok(());
        };
        if rc.password != self.config.server_password {
            trace.record(
                now,
                kinds::REMOTE_REJECTED,
                json!({"from": from, "reason": "password"}),
            );
            return Ok(());
        }
        trace.record(
            now,
            kinds::REMOTE_CMD,
            json!({"from": from, "cmd": rc.cmd.to_string()}),
        );
        self.execute_command(&rc, now, mcu, trace)
    }

    /// Runs an authenticated command: `R` clears the latches, `A`..=`P` are
    /// forwarded to the microcontroller as a single byte.
    pub fn execute_command(
        &mut self,
        rc: &RemoteCommand,
        now: u64,
        mcu: &mut DuplexLink,
        trace: &mut Trace,
    ) -> Result<(), LinkError> {
        if rc.is_reset() {
            let cleared: Vec<SensorId> = std::mem::take(&mut self.latched).into_iter().collect();
            trace.record(now, kinds::RESET, json!({"cleared": cleared}));
            return Ok(());
        }
        let byte = rc.cmd as u8;
        if remote_threshold_command(byte).is_some() {
            mcu.to_device.write(&[byte], now)?;
            trace.record(now, kinds::MCU_CMD_TX, json!({"byte": rc.cmd.to_string()}));
        }
        Ok(())
    }
}

/// Extracts (originator, text) from a `+CMGR` response block.
fn parse_cmgr(response: &str) -> Option<(String, String)> {
    let mut lines = response.split("\r\n");
    let header = lines.find(|l| l.starts_with("+CMGR:"))?;
    let text = lines.next()?.to_string();
    let from = header.split(',').nth(1)?.trim_matches('"').to_string();
    Some((from, text))
}
