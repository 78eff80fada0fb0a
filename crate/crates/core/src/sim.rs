//! The deterministic scheduler that binds every component to one logical
//! clock.
//!
//! Each 1 ms tick runs, in order:
//!
//! 1. scenario events due at this time, in file order;
//! 2. link deliveries: command bytes into the firmware, AT bytes into the
//!    modem, modem output into the gateway;
//! 3. the firmware sampling pass (every 10th ms);
//! 4. the gateway pollers that are due, then the modem channel send;
//! 5. network deliveries and modem call timers.

use std::collections::VecDeque;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::SimConfig;
use crate::envmodel::{EnvState, SmokeChainParams};
use crate::error::DomainError;
use crate::firmware::{Firmware, FirmwareState, LocalThresholdOutcome, SensorId, SAMPLE_PERIOD_MS};
use crate::gateway::{ConfigError, Gateway, GatewayPhase, GatewayState};
use crate::gsm::{Handset, Modem, ModemState, Network, SmsError, SmsMessage, NETWORK_DELAY_MS};
use crate::scenario::{Scenario, ScenarioEvent, ScenarioOp};
use crate::serialnet::{LinkError, SerialBus};
use crate::trace::{kinds, Payload, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Sms(#[from] SmsError),
    #[error("invalid operation: {0}")]
    Invalid(String),
}

/// An `expect` event whose condition did not hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectationFailure {
    pub t: u64,
    pub kind: String,
    pub payload: Payload,
    pub expected: Option<usize>,
    pub found: usize,
}

impl std::fmt::Display for ExpectationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let want = match self.expected {
            Some(n) => format!("exactly {n}"),
            None => "at least 1".to_string(),
        };
        write!(
            f,
            "at t={} ms: expected {want} {} event(s) matching {}, found {}",
            self.t,
            self.kind,
            serde_json::to_string(&self.payload).unwrap_or_default(),
            self.found
        )
    }
}

/// Full observable state, as served by the inspection API.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub now: u64,
    pub env: EnvState,
    pub voltages: [f64; 4],
    pub firmware: FirmwareState,
    pub gateway: GatewayState,
    pub modem: ModemState,
    pub handsets: Vec<Handset>,
    pub trace_len: usize,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    now: u64,
    chain: SmokeChainParams,
    env: EnvState,
    firmware: Firmware,
    bus: SerialBus,
    modem: Modem,
    network: Network,
    gateway: Gateway,
    trace: Trace,
    pending: VecDeque<ScenarioEvent>,
    failure: Option<ExpectationFailure>,
}

impl Simulator {
    pub fn new(config: &SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        config.env.validate()?;
        let mut gateway = Gateway::new(config.gateway.clone())?;
        let bus = SerialBus::default();
        bus.link(&config.gateway.mcu_port)?;
        bus.link(&config.gateway.modem_port)?;
        let mut network = Network::default();
        for d in &config.gateway.destinations {
            network.add_handset(d);
        }
        gateway.start();
        Ok(Self {
            now: 0,
            chain: config.smoke_chain,
            env: config.env,
            firmware: Firmware::new(),
            bus,
            modem: Modem::new(&config.modem),
            network,
            gateway,
            trace: Trace::new(),
            pending: VecDeque::new(),
            failure: None,
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn firmware(&self) -> &Firmware {
        &self.firmware
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    /// Records the wire traffic of a link from now on; read it back through
    /// [`Simulator::bus`].
    pub fn tap_link(&mut self, name: &str) -> Result<(), SimError> {
        self.bus.link_mut(name)?.enable_tap();
        Ok(())
    }

    pub fn bus(&self) -> &SerialBus {
        &self.bus
    }

    pub fn failure(&self) -> Option<&ExpectationFailure> {
        self.failure.as_ref()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            now: self.now,
            env: self.env,
            voltages: self.env.channel_voltages(&self.chain).unwrap_or([0.0; 4]),
            firmware: self.firmware.state().clone(),
            gateway: self.gateway.state(),
            modem: self.modem.state().clone(),
            handsets: self.network.handsets().cloned().collect(),
            trace_len: self.trace.len(),
        }
    }

    /// Queues scenario events. Events already in the past fire on the next tick.
    pub fn schedule(&mut self, events: impl IntoIterator<Item = ScenarioEvent>) {
        self.pending.extend(events);
        self.pending.make_contiguous().sort_by_key(|e| e.t);
    }

    /// Applies an operation at the current time, outside the scenario queue.
    pub fn apply(&mut self, op: &ScenarioOp) -> Result<(), SimError> {
        op.validate().map_err(SimError::Invalid)?;
        let t = self.now;
        match op {
            ScenarioOp::SetTemp { sensor, celsius } => {
                self.env.set_temp(*sensor as usize - 1, *celsius)?;
                let name = if *sensor == 1 {
                    SensorId::Temp1
                } else {
                    SensorId::Temp2
                };
                self.trace
                    .record(t, kinds::ENV_SET, json!({"sensor": name, "value": celsius}));
            }
            ScenarioOp::SetSmoke { sensor, density } => {
                self.env.set_smoke(*sensor as usize - 1, *density)?;
                let name = if *sensor == 1 {
                    SensorId::Smoke1
                } else {
                    SensorId::Smoke2
                };
                self.trace
                    .record(t, kinds::ENV_SET, json!({"sensor": name, "value": density}));
            }
            ScenarioOp::PressPwMode { latch } => {
                if self.firmware.press_password_mode(t, *latch) {
                    let until = self.firmware.state().pw_mode_until;
                    self.trace
                        .record(t, kinds::PW_MODE, json!({"latch": latch, "until": until}));
                } else {
                    self.trace
                        .record(t, kinds::PW_MODE_REJECTED, json!({"latch": latch}));
                }
            }
            ScenarioOp::CommitPassword { latch } => {
                let ok = self.firmware.commit_new_password(t, *latch);
                self.trace
                    .record(t, kinds::PW_COMMIT, json!({"latch": latch, "ok": ok}));
            }
            ScenarioOp::SetThresholdLocal {
                latch,
                select,
                range,
            } => match self.firmware.set_threshold_local(*latch, *select, *range) {
                LocalThresholdOutcome::Applied { sensor, value } => self.trace.record(
                    t,
                    kinds::THRESHOLD_SET,
                    json!({"sensor": sensor, "value": value.to_json(), "source": "local"}),
                ),
                other => {
                    let reason = match other {
                        LocalThresholdOutcome::WrongPassword => "password",
                        LocalThresholdOutcome::KindMismatch { .. } => "kind_mismatch",
                        _ => "select",
                    };
                    self.trace.record(
                        t,
                        kinds::THRESHOLD_REJECTED,
                        json!({"select": select, "range": range, "reason": reason}),
                    );
                }
            },
            ScenarioOp::SendSms { from, text } => {
                let msg = SmsMessage::new(from, self.modem.number(), text)?;
                self.trace
                    .record(t, kinds::SMS_SUBMITTED, json!({"from": from, "text": text}));
                self.network.send_to_modem(msg, t + NETWORK_DELAY_MS);
            }
            ScenarioOp::Expect {
                kind,
                payload,
                count,
            } => {
                let found = self.trace.count(kind, payload);
                let met = match count {
                    Some(n) => found == *n,
                    None => found > 0,
                };
                if !met && self.failure.is_none() {
                    self.failure = Some(ExpectationFailure {
                        t,
                        kind: kind.clone(),
                        payload: payload.clone(),
                        expected: *count,
                        found,
                    });
                }
            }
        }
        Ok(())
    }

    /// Processes the current millisecond and advances the clock by one.
    pub fn tick(&mut self) -> Result<(), SimError> {
        let t = self.now;
        let mcu_port = self.gateway.config().mcu_port.clone();
        let modem_port = self.gateway.config().modem_port.clone();

        // 1. scenario events
        while self.pending.front().is_some_and(|e| e.t <= t) {
            let ev = self.pending.pop_front().expect("checked non-empty");
            self.apply(&ev.op)?;
        }

        let (mcu, modem_link) = self.bus.pair_mut(&mcu_port, &modem_port)?;

        // 2. link deliveries
        for b in mcu.to_device.read(t)? {
            match self.firmware.handle_serial_byte(b) {
                Some((sensor, value)) => self.trace.record(
                    t,
                    kinds::THRESHOLD_SET,
                    json!({"sensor": sensor, "value": value.to_json(), "source": "serial"}),
                ),
                None => self
                    .trace
                    .record(t, kinds::SERIAL_IGNORED, json!({"byte": b})),
            }
        }
        let at_bytes = modem_link.to_device.read(t)?;
        if !at_bytes.is_empty() {
            let response = self.modem.feed(&at_bytes, t, &mut self.network);
            modem_link.to_host.write(&response, t)?;
        }
        self.gateway.receive(t, modem_link, mcu, &mut self.trace)?;

        // 3. firmware sampling
        if t.is_multiple_of(SAMPLE_PERIOD_MS) {
            let inputs = self.env.channel_voltages(&self.chain)?;
            let alerts = self.firmware.tick(t, inputs)?;
            for &b in &alerts {
                let sensor = SensorId::from_alert_byte(b).expect("firmware emits alert bytes");
                self.trace.record(
                    t,
                    kinds::ALERT_BYTE,
                    json!({"sensor": sensor, "byte": (b as char).to_string()}),
                );
            }
            mcu.to_host.write(&alerts, t)?;
        }

        // 4. gateway pollers, then the modem channel
        if self.gateway.phase() == GatewayPhase::Ready {
            let cfg = self.gateway.config();
            let (mcu_due, sms_due) = (
                t.is_multiple_of(cfg.mcu_poll_ms),
                t.is_multiple_of(cfg.sms_poll_ms),
            );
            if mcu_due {
                self.gateway.poll_mcu(t, mcu, &mut self.trace)?;
            }
            if sms_due {
                self.gateway.poll_sms();
            }
        }
        self.gateway.pump(t, modem_link, &mut self.trace)?;

        // 5. network and modem timers
        self.network.advance(t, &mut self.modem, &mut self.trace);
        if let Some(urc) = self.modem.advance(t, &mut self.trace) {
            modem_link.to_host.write(&urc, t)?;
        }

        self.now += 1;
        Ok(())
    }

    /// Advances exactly `ticks` milliseconds. Returns the new time.
    pub fn step(&mut self, ticks: u64) -> Result<u64, SimError> {
        for _ in 0..ticks {
            self.tick()?;
        }
        Ok(self.now)
    }

    /// Runs until `until` (exclusive) or the first unmet expectation.
    pub fn run_until(&mut self, until: u64) -> Result<(), SimError> {
        while self.now < until && self.failure.is_none() {
            self.tick()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub failure: Option<ExpectationFailure>,
    pub snapshot: Snapshot,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs a scenario from a fresh system. The scenario's embedded config is
/// used unless `config` overrides it.
pub fn run(
    scenario: &Scenario,
    config: Option<&SimConfig>,
    duration_ms: u64,
) -> Result<RunOutcome, SimError> {
    let default_config = SimConfig::default();
    let config = config
        .or(scenario.config.as_ref())
        .unwrap_or(&default_config);
    let mut sim = Simulator::new(config)?;
    sim.schedule(scenario.events.iter().cloned());
    sim.run_until(duration_ms)?;
    Ok(RunOutcome {
        failure: sim.failure.clone(),
        snapshot: sim.snapshot(),
        trace: sim.trace,
    })
}
