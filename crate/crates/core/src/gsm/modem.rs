use serde::{Deserialize, Serialize};
use serde_json::json;

use super::at::{parse_line, AtCommand};
use super::network::Network;
use super::{
    network_timestamp, validate_number, MessageStatus, SmsMessage, ERROR, NETWORK_DELAY_MS,
    NO_CARRIER, OK, RING_DURATION_MS,
};
use crate::trace::{kinds, Trace};

pub const SIM_SLOTS: usize = 10;
pub const OUTBOX_SLOTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModemConfig {
    /// The server mobile's own number.
    pub number: String,
    /// Texts pre-stored in outbox slots 1.., in order.
    pub outbox: Vec<String>,
    /// Rejects `AT+CMGF=1`, like a handset without text-mode support.
    pub pdu_only: bool,
}

impl Default for ModemConfig {
    fn default() -> Self {
        Self {
            number: "01700000000".to_string(),
            outbox: vec![
                "FIRE ALERT: Temperature sensor 1 (Zone A) threshold surpassed.".to_string(),
                "FIRE ALERT: Temperature sensor 2 (Zone B) threshold surpassed.".to_string(),
                "FIRE ALERT: Smoke sensor 1 (Zone A) threshold surpassed.".to_string(),
                "FIRE ALERT: Smoke sensor 2 (Zone B) threshold surpassed.".to_string(),
            ],
            pdu_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum CallState {
    Idle,
    Dialing { number: String, ends_at: u64 },
}

/// Externally visible modem state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModemState {
    pub number: String,
    pub text_mode: bool,
    pub preferred_store: Option<String>,
    pub sim_inbox: Vec<Option<SmsMessage>>,
    pub phone_outbox: Vec<Option<String>>,
    pub call_state: CallState,
}

#[derive(Debug, Clone)]
pub struct Modem {
    state: ModemState,
    pdu_only: bool,
    line_buf: Vec<u8>,
}

impl Modem {
    pub fn new(config: &ModemConfig) -> Self {
        let mut outbox = vec![None; OUTBOX_SLOTS];
        for (slot, text) in outbox.iter_mut().zip(&config.outbox) {
            *slot = Some(text.clone());
        }
        Self {
            state: ModemState {
                number: config.number.clone(),
                text_mode: false,
                preferred_store: None,
                sim_inbox: vec![None; SIM_SLOTS],
                phone_outbox: outbox,
                call_state: CallState::Idle,
            },
            pdu_only: config.pdu_only,
            line_buf: Vec::new(),
        }
    }

    pub fn state(&self) -> &ModemState {
        &self.state
    }

    pub fn number(&self) -> &str {
        &self.state.number
    }

    /// Consumes bytes from the server. Each complete CR-terminated line is
    /// executed in order; the concatenated responses are returned.
    pub fn feed(&mut self, bytes: &[u8], now: u64, network: &mut Network) -> Vec<u8> {
        let mut out = Vec::new();
        for &b in bytes {
            match b {
                b'\r' => {
                    let line = String::from_utf8_lossy(&self.line_buf).into_owned();
                    self.line_buf.clear();
                    if !line.trim().is_empty() {
                        out.extend(self.execute(&line, now, network));
                    }
                }
                b'\n' => {}
                _ => self.line_buf.push(b),
            }
        }
        out
    }

    fn execute(&mut self, line: &str, now: u64, network: &mut Network) -> Vec<u8> {
        let Some(cmd) = parse_line(line) else {
            return ERROR.to_vec();
        };
        match cmd {
            AtCommand::Attention => OK.to_vec(),
            AtCommand::MessageFormat(1) if !self.pdu_only => {
                self.state.text_mode = true;
                OK.to_vec()
            }
            // PDU mode itself is not emulated.
            AtCommand::MessageFormat(_) => ERROR.to_vec(),
            AtCommand::PreferredStorage(stores) => self.cpms(&stores),
            AtCommand::ReadMessage(index) => self.cmgr(index),
            AtCommand::SendFromStorage { index, number } => self.cmss(index, &number, now, network),
            AtCommand::DeleteMessage(index) => self.cmgd(index),
            AtCommand::Dial(number) => self.dial(&number, now, network),
        }
    }

    fn cpms(&mut self, stores: &[String]) -> Vec<u8> {
        if !stores.is_empty() && stores.iter().all(|s| s == "SM") {
            self.state.preferred_store = Some("SM".to_string());
            OK.to_vec()
        } else {
            ERROR.to_vec()
        }
    }

    fn sim_slot(&mut self, index: u32) -> Option<&mut Option<SmsMessage>> {
        let i = (index as usize).checked_sub(1)?;
        self.state.sim_inbox.get_mut(i)
    }

    fn cmgr(&mut self, index: u32) -> Vec<u8> {
        let Some(slot) = self.sim_slot(index) else {
            return ERROR.to_vec();
        };
        let Some(msg) = slot.as_mut() else {
            return OK.to_vec();
        };
        let status = match msg.status {
            MessageStatus::Unread => "REC UNREAD",
            MessageStatus::Read => "REC READ",
        };
        msg.status = MessageStatus::Read;
        format!(
            "\r\n+CMGR: \"{status}\",\"{}\",,\"{}\"\r\n{}\r\n\r\nOK\r\n",
            msg.from,
            network_timestamp(msg.received_at),
            msg.text
        )
        .into_bytes()
    }

    fn cmss(&mut self, index: u32, number: &str, now: u64, network: &mut Network) -> Vec<u8> {
        if !self.state.text_mode || validate_number(number).is_err() {
            return ERROR.to_vec();
        }
        let text = (index as usize)
            .checked_sub(1)
            .and_then(|i| self.state.phone_outbox.get(i))
            .and_then(|slot| slot.clone());
        let Some(text) = text else {
            return ERROR.to_vec();
        };
        let msg = SmsMessage {
            from: self.state.number.clone(),
            to: number.to_string(),
            text,
            status: MessageStatus::Unread,
            received_at: 0,
        };
        network.send_to_handset(msg, now + NETWORK_DELAY_MS);
        OK.to_vec()
    }

    fn cmgd(&mut self, index: u32) -> Vec<u8> {
        match self.sim_slot(index) {
            Some(slot) => {
                *slot = None;
                OK.to_vec()
            }
            None => ERROR.to_vec(),
        }
    }

    fn dial(&mut self, number: &str, now: u64, network: &mut Network) -> Vec<u8> {
        if self.state.call_state != CallState::Idle || validate_number(number).is_err() {
            return ERROR.to_vec();
        }
        let ring_at = now + NETWORK_DELAY_MS;
        network.ring(number, &self.state.number, ring_at);
        self.state.call_state = CallState::Dialing {
            number: number.to_string(),
            ends_at: ring_at + RING_DURATION_MS,
        };
        OK.to_vec()
    }

    /// Stores an arriving SMS in the lowest free SIM slot. Returns the slot
    /// (1-based), or `None` when the SIM is full and the message is dropped.
    pub fn store_inbound(
        &mut self,
        mut msg: SmsMessage,
        now: u64,
        trace: &mut Trace,
    ) -> Option<usize> {
        let Some(i) = self.state.sim_inbox.iter().position(Option::is_none) else {
            trace.record(
                now,
                kinds::SIM_FULL,
                json!({"from": msg.from, "text": msg.text}),
            );
            return None;
        };
        msg.status = MessageStatus::Unread;
        msg.received_at = now;
        trace.record(
            now,
            kinds::SMS_INBOUND,
            json!({"slot": i + 1, "from": msg.from, "text": msg.text}),
        );
        self.state.sim_inbox[i] = Some(msg);
        Some(i + 1)
    }

    /// Ends a call whose ring time is over. Returns the unsolicited result
    /// code to send to the server, if a call ended.
    pub fn advance(&mut self, now: u64, trace: &mut Trace) -> Option<Vec<u8>> {
        match &self.state.call_state {
            CallState::Dialing { number, ends_at } if *ends_at <= now => {
                trace.record(now, kinds::CALL_END, json!({"to": number}));
                self.state.call_state = CallState::Idle;
                Some(NO_CARRIER.to_vec())
            }
            _ => None,
        }
    }
}
