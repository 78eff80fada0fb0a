//! Virtual server mobile: text-mode AT command set, SIM inbox and phone
//! outbox, plus a virtual network of handsets.

pub mod at;
mod modem;
mod network;

use chrono::{NaiveDate, TimeDelta};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use modem::{CallState, Modem, ModemConfig, ModemState, OUTBOX_SLOTS, SIM_SLOTS};
pub use network::{Handset, Network};

pub const MAX_TEXT_LEN: usize = 160;
/// One-way network latency for SMS delivery and call setup.
pub const NETWORK_DELAY_MS: u64 = 500;
/// How long a call rings before the modem drops it.
pub const RING_DURATION_MS: u64 = 10_000;

pub const OK: &[u8] = b"\r\nOK\r\n";
pub const ERROR: &[u8] = b"\r\nERROR\r\n";
pub const NO_CARRIER: &[u8] = b"\r\nNO CARRIER\r\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmsError {
    #[error("{0:?} is not a phone number (8-13 digits, optional leading '+')")]
    BadNumber(String),
    #[error("text is {0} characters, limit is 160")]
    TooLong(usize),
}

/// Checks the 8-13 digit form used for every number in the system.
pub fn validate_number(number: &str) -> Result<(), SmsError> {
    let digits = number.strip_prefix('+').unwrap_or(number);
    if (8..=13).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err(SmsError::BadNumber(number.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageStatus {
    Unread,
    Read,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub from: String,
    pub to: String,
    pub text: String,
    pub status: MessageStatus,
    /// Logical time the message reached its destination store.
    pub received_at: u64,
}

impl SmsMessage {
    pub fn new(from: &str, to: &str, text: &str) -> Result<Self, SmsError> {
        validate_number(from)?;
        validate_number(to)?;
        let len = text.chars().count();
        if len > MAX_TEXT_LEN {
            return Err(SmsError::TooLong(len));
        }
        Ok(Self {
            from: from.to_string(),
            to: to.to_string(),
            text: text.to_string(),
            status: MessageStatus::Unread,
            received_at: 0,
        })
    }
}

/// Service-centre style timestamp `yy/MM/dd,hh:mm:ss+00`, counted from
/// 2024-01-01 00:00:00 at logical time zero.
pub fn network_timestamp(t_ms: u64) -> String {
    let epoch = NaiveDate::from_ymd_opt(2024, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid epoch");
    let at = epoch + TimeDelta::milliseconds(t_ms as i64);
    format!("{}+00", at.format("%y/%m/%d,%H:%M:%S"))
}
