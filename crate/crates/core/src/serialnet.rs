//! Byte-stream links with frame-time delivery latency.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MCU_LINK: &str = "COM1";
pub const MODEM_LINK: &str = "COM15";
pub const MCU_BAUD: u32 = 115_200;
pub const MODEM_BAUD: u32 = 9_600;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("link {0} is closed")]
    Closed(String),
    #[error("no link named {0}")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub data_bits: u8,
    pub stop_bits: u8,
    pub parity: Parity,
}

impl Frame {
    pub const EIGHT_N_ONE: Frame = Frame {
        data_bits: 8,
        stop_bits: 1,
        parity: Parity::None,
    };

    /// Bits on the wire per byte, start bit included.
    pub fn bits(&self) -> u64 {
        1 + self.data_bits as u64 + self.stop_bits as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub name: String,
    pub baud: u32,
    pub frame: Frame,
}

impl LinkConfig {
    pub fn new(name: impl Into<String>, baud: u32) -> Self {
        Self {
            name: name.into(),
            baud,
            frame: Frame::EIGHT_N_ONE,
        }
    }

    /// Milliseconds (rounded up) until the `n`-th byte of a burst has fully
    /// arrived, counting from the start of the burst.
    pub fn burst_latency_ms(&self, n: u64) -> u64 {
        (n * self.frame.bits() * 1000).div_ceil(self.baud as u64)
    }
}

/// One direction of a link: a FIFO of bytes stamped with their ready time.
#[derive(Debug, Clone)]
pub struct LinkEndpoint {
    config: LinkConfig,
    queue: VecDeque<(u64, u8)>,
    open: bool,
    written: u64,
    read: u64,
    tap: Option<Vec<(u64, u8)>>,
}

impl LinkEndpoint {
    pub fn new(config: LinkConfig) -> Self {
        Self {
            config,
            queue: VecDeque::new(),
            open: true,
            written: 0,
            read: 0,
            tap: None,
        }
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn close(&mut self) {
        self.open = false;
    }

    fn check_open(&self) -> Result<(), LinkError> {
        if self.open {
            Ok(())
        } else {
            Err(LinkError::Closed(self.config.name.clone()))
        }
    }

    /// Queues a burst. A burst starts when the line goes idle, so bytes
    /// written while earlier ones are still in flight queue behind them.
    pub fn write(&mut self, bytes: &[u8], now: u64) -> Result<(), LinkError> {
        self.check_open()?;
        let start = self.queue.back().map_or(now, |&(ready, _)| ready.max(now));
        for (k, &b) in bytes.iter().enumerate() {
            let ready = start + self.config.burst_latency_ms(k as u64 + 1);
            self.queue.push_back((ready, b));
        }
        self.written += bytes.len() as u64;
        Ok(())
    }

    /// Drains every byte whose ready time has passed.
    pub fn read(&mut self, now: u64) -> Result<Vec<u8>, LinkError> {
        self.check_open()?;
        let mut out = Vec::new();
        while let Some(&(ready, b)) = self.queue.front() {
            if ready > now {
                break;
            }
            self.queue.pop_front();
            out.push(b);
            if let Some(tap) = &mut self.tap {
                tap.push((ready, b));
            }
        }
        self.read += out.len() as u64;
        Ok(out)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn bytes_written(&self) -> u64 {
        self.written
    }

    pub fn bytes_read(&self) -> u64 {
        self.read
    }

    /// Starts recording every byte read, with its ready time.
    pub fn enable_tap(&mut self) {
        self.tap.get_or_insert_with(Vec::new);
    }

    /// Bytes read since the tap was enabled; empty if it never was.
    pub fn tapped(&self) -> &[(u64, u8)] {
        self.tap.as_deref().unwrap_or(&[])
    }

    /// Ready time of the last queued byte, if any.
    pub fn last_ready_at(&self) -> Option<u64> {
        self.queue.back().map(|&(t, _)| t)
    }
}

/// Full-duplex link between a host (the server computer) and a device.
#[derive(Debug, Clone)]
pub struct DuplexLink {
    pub to_device: LinkEndpoint,
    pub to_host: LinkEndpoint,
}

impl DuplexLink {
    pub fn new(config: LinkConfig) -> Self {
        Self {
            to_device: LinkEndpoint::new(config.clone()),
            to_host: LinkEndpoint::new(config),
        }
    }

    pub fn close(&mut self) {
        self.to_device.close();
        self.to_host.close();
    }

    pub fn enable_tap(&mut self) {
        self.to_device.enable_tap();
        self.to_host.enable_tap();
    }
}

/// Named links the gateway resolves its ports from.
#[derive(Debug, Clone)]
pub struct SerialBus {
    links: BTreeMap<String, DuplexLink>,
}

impl Default for SerialBus {
    fn default() -> Self {
        let mut bus = SerialBus {
            links: BTreeMap::new(),
        };
        bus.add(LinkConfig::new(MCU_LINK, MCU_BAUD));
        bus.add(LinkConfig::new(MODEM_LINK, MODEM_BAUD));
        bus
    }
}

impl SerialBus {
    pub fn empty() -> Self {
        SerialBus {
            links: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, config: LinkConfig) {
        self.links
            .insert(config.name.clone(), DuplexLink::new(config));
    }

    pub fn link(&self, name: &str) -> Result<&DuplexLink, LinkError> {
        self.links
            .get(name)
            .ok_or_else(|| LinkError::Unknown(name.to_string()))
    }

    pub fn link_mut(&mut self, name: &str) -> Result<&mut DuplexLink, LinkError> {
        self.links
            .get_mut(name)
            .ok_or_else(|| LinkError::Unknown(name.to_string()))
    }
    /// Mutable access to two distinct links at once.
    pub fn pair_mut(
        &mut self,
        a: &str,
        b: &str,
    ) -> Result<(&mut DuplexLink, &mut DuplexLink), LinkError> {
        let (mut first, mut second) = (None, None);
        for (name, link) in self.links.iter_mut() {
            if name == a {
                first = Some(link);
            } else if name == b {
                second = Some(link);
            }
        }
        match (first, second) {
            (Some(x), Some(y)) => Ok((x, y)),
            (None, _) => Err(LinkError::Unknown(a.to_string())),
            (_, None) => Err(LinkError::Unknown(b.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_bytes_at_9600() {
        let mut ep = LinkEndpoint::new(LinkConfig::new("COM15", 9600));
        ep.write(b"0123456789", 100).unwrap();
        assert_eq!(ep.last_ready_at(), Some(111));
        assert_eq!(ep.read(110).unwrap().len(), 9);
        assert_eq!(ep.read(111).unwrap(), b"9".to_vec());
    }

    #[test]
    fn one_byte_at_115200() {
        let mut ep = LinkEndpoint::new(LinkConfig::new("COM1", 115_200));
        ep.write(b"X", 0).unwrap();
        assert!(ep.read(0).unwrap().is_empty());
        assert_eq!(ep.read(1).unwrap(), b"X".to_vec());
    }

    #[test]
    fn two_bytes_arrive_together() {
        let mut ep = LinkEndpoint::new(LinkConfig::new("COM1", 115_200));
        assert!(ep.read(0).unwrap().is_empty());
        ep.write(b"AB", 0).unwrap();
        assert!(ep.read(0).unwrap().is_empty());
        assert_eq!(ep.read(1).unwrap(), b"AB".to_vec());
    }

    #[test]
    fn empty_write_is_noop() {
        let mut ep = LinkEndpoint::new(LinkConfig::new("COM1", 115_200));
        ep.write(b"", 5).unwrap();
        assert_eq!(ep.pending(), 0);
    }

    #[test]
    fn closed_link_errors() {
        let mut bus = SerialBus::default();
        let link = bus.link_mut(MCU_LINK).unwrap();
        link.close();
        assert_eq!(
            link.to_host.write(b"1", 0),
            Err(LinkError::Closed("COM1".into()))
        );
        assert!(link.to_device.read(0).is_err());
        assert!(matches!(bus.link("COM3"), Err(LinkError::Unknown(_))));
    }

    #[test]
    fn back_to_back_bursts_queue_behind() {
        let mut ep = LinkEndpoint::new(LinkConfig::new("COM15", 9600));
        ep.write(b"0123456789", 0).unwrap();
        ep.write(b"a", 5).unwrap();
        // Starts after the first burst clears at 11 ms.
        assert_eq!(ep.last_ready_at(), Some(13));
        assert_eq!(ep.read(20).unwrap(), b"0123456789a".to_vec());
    }

    proptest! {
        #[test]
        fn fifo_lossless(
            bursts in proptest::collection::vec(
                (0u64..30, proptest::collection::vec(any::<u8>(), 0..20)), 0..10),
            fast in any::<bool>(),
        ) {
            let baud = if fast { 115_200 } else { 9_600 };
            let mut ep = LinkEndpoint::new(LinkConfig::new("L", baud));
            let mut now = 0;
            let mut sent = Vec::new();
            let mut got = Vec::new();
            for (gap, bytes) in bursts {
                now += gap;
                got.extend(ep.read(now).unwrap());
                prop_assert!(ep.bytes_read() <= ep.bytes_written());
                ep.write(&bytes, now).unwrap();
                sent.extend(bytes);
            }
            let end = ep.last_ready_at().unwrap_or(now);
            got.extend(ep.read(end).unwrap());
            prop_assert_eq!(got, sent);
            prop_assert_eq!(ep.bytes_read(), ep.bytes_written());
        }

        #[test]
        fn idle_burst_latency_exact(n in 1u64..200, fast in any::<bool>()) {
            let baud = if fast { 115_200 } else { 9_600 };
            let mut ep = LinkEndpoint::new(LinkConfig::new("L", baud));
            ep.write(&vec![0u8; n as usize], 7).unwrap();
            prop_assert_eq!(ep.last_ready_at(), Some(7 + (n * 10_000).div_ceil(baud as u64)));
        }
    }
}
