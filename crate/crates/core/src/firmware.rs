//! Microcontroller program: ADC sampling, threshold comparison, alert byte
//! emission, and the local password/threshold button logic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// ADC reference voltage (AVCC).
pub const ADC_VREF: f64 = 5.0;
pub const ADC_MAX: u16 = 1023;
/// External crystal. Recorded for reference; the emulation is not cycle-based.
pub const CRYSTAL_HZ: u32 = 11_059_200;
/// Logical interval between firmware sampling passes.
pub const SAMPLE_PERIOD_MS: u64 = 10;
/// How long the password change window stays open.
pub const PASSWORD_WINDOW_MS: u64 = 600_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorId {
    Temp1,
    Temp2,
    Smoke1,
    Smoke2,
}

impl SensorId {
    pub const ALL: [SensorId; 4] = [
        SensorId::Temp1,
        SensorId::Temp2,
        SensorId::Smoke1,
        SensorId::Smoke2,
    ];

    /// ADC channel number, which is also the index into per-channel arrays.
    pub fn channel(self) -> usize {
        match self {
            SensorId::Temp1 => 0,
            SensorId::Temp2 => 1,
            SensorId::Smoke1 => 2,
            SensorId::Smoke2 => 3,
        }
    }

    /// ATmega32 package pin of the ADC input.
    pub fn pin(self) -> u8 {
        40 - self.channel() as u8
    }

    pub fn is_temp(self) -> bool {
        matches!(self, SensorId::Temp1 | SensorId::Temp2)
    }

    pub fn alert_byte(self) -> u8 {
        b'1' + self.channel() as u8
    }

    pub fn from_alert_byte(b: u8) -> Option<SensorId> {
        match b {
            b'1'..=b'4' => Some(SensorId::ALL[(b - b'1') as usize]),
            _ => None,
        }
    }

    /// Sensor chosen by the two select buttons (bit 1 = button 2, bit 0 = button 1).
    pub fn from_select_code(code: u8) -> Option<SensorId> {
        SensorId::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorId::Temp1 => "temp1",
            SensorId::Temp2 => "temp2",
            SensorId::Smoke1 => "smoke1",
            SensorId::Smoke2 => "smoke2",
        }
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SensorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SensorId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown sensor {s:?}"))
    }
}

/// 10-bit conversion result.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AdcCode(u16);

impl AdcCode {
    pub fn value(self) -> u16 {
        self.0
    }
}

/// Converts an input voltage the way the 10-bit ADC does with a 5 V reference.
pub fn adc_sample(v: f64) -> Result<AdcCode, DomainError> {
    if v.is_nan() || v < 0.0 {
        return Err(DomainError::Negative {
            quantity: "ADC input",
            value: v,
        });
    }
    let code = (v * 1024.0 / ADC_VREF).floor();
    Ok(AdcCode(code.min(ADC_MAX as f64) as u16))
}

/// Temperature threshold, one of the five selectable levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TempThreshold(u8);

impl TempThreshold {
    pub const LEVELS: [u8; 5] = [35, 45, 55, 65, 75];
    pub const DEFAULT: TempThreshold = TempThreshold(55);

    pub fn new(celsius: u8) -> Option<Self> {
        Self::LEVELS
            .contains(&celsius)
            .then_some(TempThreshold(celsius))
    }

    pub fn celsius(self) -> u8 {
        self.0
    }

    pub fn volts(self) -> f64 {
        crate::envmodel::LM35_VOLTS_PER_C * self.0 as f64
    }
}

impl TryFrom<u8> for TempThreshold {
    type Error = String;

    fn try_from(c: u8) -> Result<Self, Self::Error> {
        TempThreshold::new(c).ok_or_else(|| format!("{c} °C is not a selectable threshold"))
    }
}

impl From<TempThreshold> for u8 {
    fn from(t: TempThreshold) -> u8 {
        t.0
    }
}

/// Smoke density class; the alert fires when the chain output drops below
/// the class voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SmokeClass {
    High,
    Medium,
    Low,
}

impl SmokeClass {
    pub fn volts(self) -> f64 {
        match self {
            SmokeClass::High => 3.0,
            SmokeClass::Medium => 3.5,
            SmokeClass::Low => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThresholdValue {
    Temp(TempThreshold),
    Smoke(SmokeClass),
}

impl ThresholdValue {
    pub fn to_json(self) -> serde_json::Value {
        match self {
            ThresholdValue::Temp(t) => serde_json::json!(t.celsius()),
            ThresholdValue::Smoke(s) => serde_json::json!(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdSetting {
    pub temp1: TempThreshold,
    pub temp2: TempThreshold,
    pub smoke1: SmokeClass,
    pub smoke2: SmokeClass,
}

impl Default for ThresholdSetting {
    fn default() -> Self {
        Self {
            temp1: TempThreshold::DEFAULT,
            temp2: TempThreshold::DEFAULT,
            smoke1: SmokeClass::High,
            smoke2: SmokeClass::High,
        }
    }
}

impl ThresholdSetting {
    pub fn get(&self, sensor: SensorId) -> ThresholdValue {
        match sensor {
            SensorId::Temp1 => ThresholdValue::Temp(self.temp1),
            SensorId::Temp2 => ThresholdValue::Temp(self.temp2),
            SensorId::Smoke1 => ThresholdValue::Smoke(self.smoke1),
            SensorId::Smoke2 => ThresholdValue::Smoke(self.smoke2),
        }
    }

    /// Sets a threshold; fails when the value kind does not match the sensor kind.
    pub fn set(&mut self, sensor: SensorId, value: ThresholdValue) -> Result<(), KindMismatch> {
        match (sensor, value) {
            (SensorId::Temp1, ThresholdValue::Temp(t)) => self.temp1 = t,
            (SensorId::Temp2, ThresholdValue::Temp(t)) => self.temp2 = t,
            (SensorId::Smoke1, ThresholdValue::Smoke(s)) => self.smoke1 = s,
            (SensorId::Smoke2, ThresholdValue::Smoke(s)) => self.smoke2 = s,
            _ => return Err(KindMismatch { sensor }),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KindMismatch {
    pub sensor: SensorId,
}

/// ADC code a sensor's reading is compared against.
pub fn threshold_code(sensor: SensorId, thresholds: &ThresholdSetting) -> AdcCode {
    let volts = match thresholds.get(sensor) {
        ThresholdValue::Temp(t) => t.volts(),
        ThresholdValue::Smoke(s) => s.volts(),
    };
    adc_sample(volts).expect("threshold voltages are positive")
}

/// Threshold-range buttons on port B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RangeButton {
    PB0,
    PB1,
    PB2,
    PB3,
    PB4,
    PB5,
    PB6,
    PB7,
}

impl RangeButton {
    pub fn value(self) -> ThresholdValue {
        use RangeButton::*;
        let temp = |c| ThresholdValue::Temp(TempThreshold(c));
        match self {
            PB0 => temp(35),
            PB1 => temp(45),
            PB2 => temp(55),
            PB3 => temp(65),
            PB4 => temp(75),
            PB5 => ThresholdValue::Smoke(SmokeClass::High),
            PB6 => ThresholdValue::Smoke(SmokeClass::Medium),
            PB7 => ThresholdValue::Smoke(SmokeClass::Low),
        }
    }
}

/// Remote command characters 'A'..='P' and the threshold change each one requests.
pub fn remote_threshold_command(cmd: u8) -> Option<(SensorId, ThresholdValue)> {
    let temp = |c| ThresholdValue::Temp(TempThreshold(c));
    let smoke = ThresholdValue::Smoke;
    let levels = TempThreshold::LEVELS;
    let classes = [SmokeClass::High, SmokeClass::Medium, SmokeClass::Low];
    match cmd {
        b'A'..=b'E' => Some((SensorId::Temp1, temp(levels[(cmd - b'A') as usize]))),
        b'F'..=b'J' => Some((SensorId::Temp2, temp(levels[(cmd - b'F') as usize]))),
        b'K'..=b'M' => Some((SensorId::Smoke1, smoke(classes[(cmd - b'K') as usize]))),
        b'N'..=b'P' => Some((SensorId::Smoke2, smoke(classes[(cmd - b'N') as usize]))),
        _ => None,
    }
}

/// Level of the seven password buttons (bit i = button on PCi pressed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct PasswordLatch(u8);

impl PasswordLatch {
    pub const DEFAULT: PasswordLatch = PasswordLatch(0x3F);

    pub fn new(bits: u8) -> Option<Self> {
        (bits < 0x80).then_some(PasswordLatch(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for PasswordLatch {
    type Error = String;

    fn try_from(bits: u8) -> Result<Self, Self::Error> {
        PasswordLatch::new(bits).ok_or_else(|| format!("password latch {bits:#x} exceeds 7 bits"))
    }
}

impl From<PasswordLatch> for u8 {
    fn from(p: PasswordLatch) -> u8 {
        p.0
    }
}

/// LEDs on pins 21 (password mode), 19 (change failed) and 20 (change succeeded).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Leds {
    pub mode_led: bool,
    pub fail_led: bool,
    pub ok_led: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalThresholdOutcome {
    Applied {
        sensor: SensorId,
        value: ThresholdValue,
    },
    WrongPassword,
    InvalidSelect,
    KindMismatch {
        sensor: SensorId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirmwareState {
    pub stored_password: PasswordLatch,
    pub thresholds: ThresholdSetting,
    pub pw_mode_until: Option<u64>,
    pub leds: Leds,
    pub adc_codes: [AdcCode; 4],
}

impl Default for FirmwareState {
    fn default() -> Self {
        Self {
            stored_password: PasswordLatch::DEFAULT,
            thresholds: ThresholdSetting::default(),
            pw_mode_until: None,
            leds: Leds::default(),
            adc_codes: [AdcCode::default(); 4],
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Firmware {
    state: FirmwareState,
}

impl Firmware {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_state(state: FirmwareState) -> Self {
        Self { state }
    }

    pub fn state(&self) -> &FirmwareState {
        &self.state
    }

    /// One pass of the main loop: sample all channels and return the alert
    /// bytes for every sensor whose threshold is surpassed right now.
    pub fn tick(&mut self, now: u64, inputs: [f64; 4]) -> Result<Vec<u8>, DomainError> {
        if let Some(until) = self.state.pw_mode_until {
            if now >= until {
                self.state.pw_mode_until = None;
                self.state.leds.mode_led = false;
            }
        }

        let mut codes = [AdcCode::default(); 4];
        for (code, &v) in codes.iter_mut().zip(inputs.iter()) {
            *code = adc_sample(v)?;
        }
        self.state.adc_codes = codes;

        let thresholds = &self.state.thresholds;
        let emitted = SensorId::ALL
            .into_iter()
            .filter(|&s| {
                let code = codes[s.channel()];
                let limit = threshold_code(s, thresholds);
                if s.is_temp() {
                    code >= limit
                } else {
                    code < limit
                }
            })
            .map(SensorId::alert_byte)
            .collect();
        Ok(emitted)
    }

    /// Password-mode button. Opens (or restarts) the change window when the
    /// latch matches the stored password.
    pub fn press_password_mode(&mut self, now: u64, latch: PasswordLatch) -> bool {
        if latch != self.state.stored_password {
            return false;
        }
        self.state.pw_mode_until = Some(now + PASSWORD_WINDOW_MS);
        self.state.leds.mode_led = true;
        true
    }

    /// Stores `latch` as the new password if the change window is open.
    pub fn commit_new_password(&mut self, now: u64, latch: PasswordLatch) -> bool {
        let open = matches!(self.state.pw_mode_until, Some(until) if now < until);
        let leds = &mut self.state.leds;
        if open {
            self.state.stored_password = latch;
            leds.ok_led = true;
            leds.fail_led = false;
        } else {
            leds.ok_led = false;
            leds.fail_led = true;
        }
        leds.mode_led = false;
        self.state.pw_mode_until = None;
        open
    }

    pub fn set_threshold_local(
        &mut self,
        latch: PasswordLatch,
        select: u8,
        range: RangeButton,
    ) -> LocalThresholdOutcome {
        if latch != self.state.stored_password {
            return LocalThresholdOutcome::WrongPassword;
        }
        let Some(sensor) = SensorId::from_select_code(select) else {
            return LocalThresholdOutcome::InvalidSelect;
        };
        let value = range.value();
        match self.state.thresholds.set(sensor, value) {
            Ok(()) => LocalThresholdOutcome::Applied { sensor, value },
            Err(KindMismatch { sensor }) => LocalThresholdOutcome::KindMismatch { sensor },
        }
    }

    /// USART receive handler. Returns the applied change, or `None` if the
    /// byte is not a threshold command.
    pub fn handle_serial_byte(&mut self, b: u8) -> Option<(SensorId, ThresholdValue)> {
        let (sensor, value) = remote_threshold_command(b)?;
        self.state
            .thresholds
            .set(sensor, value)
            .expect("command table pairs sensors with matching kinds");
        Some((sensor, value))
    }
}
