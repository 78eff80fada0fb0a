use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use super::modem::Modem;
use super::SmsMessage;
use crate::trace::{kinds, Trace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Handset {
    pub number: String,
    pub inbox: Vec<SmsMessage>,
    /// (ring time, caller number)
    pub ring_log: Vec<(u64, String)>,
}

#[derive(Debug, Clone)]
enum Scheduled {
    ToHandset(SmsMessage),
    ToModem(SmsMessage),
    Ring { to: String, from: String },
}

/// Destination handsets plus the in-flight SMS and call setups between them
/// and the server mobile.
#[derive(Debug, Clone, Default)]
pub struct Network {
    handsets: BTreeMap<String, Handset>,
    scheduled: BTreeMap<(u64, u64), Scheduled>,
    next_id: u64,
}

impl Network {
    pub fn add_handset(&mut self, number: &str) {
        self.handsets
            .entry(number.to_string())
            .or_insert_with(|| Handset {
                number: number.to_string(),
                inbox: Vec::new(),
                ring_log: Vec::new(),
            });
    }

    pub fn handset(&self, number: &str) -> Option<&Handset> {
        self.handsets.get(number)
    }

    pub fn handsets(&self) -> impl Iterator<Item = &Handset> {
        self.handsets.values()
    }

    fn schedule(&mut self, at: u64, item: Scheduled) {
        self.scheduled.insert((at, self.next_id), item);
        self.next_id += 1;
    }

    pub fn send_to_handset(&mut self, msg: SmsMessage, at: u64) {
        self.schedule(at, Scheduled::ToHandset(msg));
    }

    /// An SMS sent by some phone to the server mobile.
    pub fn send_to_modem(&mut self, msg: SmsMessage, at: u64) {
        self.schedule(at, Scheduled::ToModem(msg));
    }

    pub fn ring(&mut self, to: &str, from: &str, at: u64) {
        self.schedule(
            at,
            Scheduled::Ring {
                to: to.to_string(),
                from: from.to_string(),
            },
        );
    }

    /// Time of the next scheduled delivery, if any.
    pub fn next_due(&self) -> Option<u64> {
        self.scheduled.keys().next().map(|&(at, _)| at)
    }

    /// Performs every delivery due at or before `now`, in schedule order.
    pub fn advance(&mut self, now: u64, modem: &mut Modem, trace: &mut Trace) {
        while let Some(entry) = self.scheduled.first_entry() {
            if entry.key().0 > now {
                break;
            }
            let item = entry.remove();
            match item {
                Scheduled::ToHandset(mut msg) => match self.handsets.get_mut(&msg.to) {
                    Some(handset) => {
                        msg.received_at = now;
                        trace.record(
                            now,
                            kinds::SMS_DELIVERED,
                            json!({"from": msg.from, "to": msg.to, "text": msg.text}),
                        );
                        handset.inbox.push(msg);
                    }
                    None => trace.record(
                        now,
                        kinds::SMS_DROPPED,
                        json!({"to": msg.to, "text": msg.text}),
                    ),
                },
                Scheduled::ToModem(msg) => {
                    modem.store_inbound(msg, now, trace);
                }
                Scheduled::Ring { to, from } => match self.handsets.get_mut(&to) {
                    Some(handset) => {
                        trace.record(now, kinds::RING, json!({"to": to, "from": from}));
                        handset.ring_log.push((now, from));
                    }
                    None => trace.record(now, kinds::CALL_UNANSWERED, json!({"to": to})),
                },
            }
        }
    }
}
