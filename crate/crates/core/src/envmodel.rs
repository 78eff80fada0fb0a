//! Environment state and the analog transducer chains the firmware samples.
//!
//! Temperature channels use an ideal LM35 (10 mV/°C). Smoke channels model
//! the scattering chamber as a light fraction reaching an LDR, which sits on
//! the top of a voltage divider feeding a non-inverting amplifier that clips
//! at the measured no-smoke output.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, DomainError};

/// Lowest temperature the transducer model is valid for.
pub const TEMP_MIN_C: f64 = -40.0;
/// Highest temperature the transducer model is valid for.
pub const TEMP_MAX_C: f64 = 150.0;

/// LM35 transfer slope.
pub const LM35_VOLTS_PER_C: f64 = 0.010;

/// Chain output at full smoke density.
///
/// Centre of ADC code 613, the bucket directly below the 3.0 V default
/// threshold code (614). This keeps the full-density output within a few
/// millivolts of 3.0 V while still reading as "below 3.0 V" on a 10-bit
/// converter referenced to 5 V.
pub const FULL_DENSITY_TARGET_V: f64 = 613.5 * 5.0 / 1024.0;

/// Ground-truth environment: two temperature sensors and two smoke sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub temp_c: [f64; 2],
    pub smoke_density: [f64; 2],
}

impl Default for EnvState {
    fn default() -> Self {
        Self {
            temp_c: [25.0, 25.0],
            smoke_density: [0.0, 0.0],
        }
    }
}

impl EnvState {
    pub fn validate(&self) -> Result<(), DomainError> {
        for &t in &self.temp_c {
            check_range("temperature", t, TEMP_MIN_C, TEMP_MAX_C)?;
        }
        for &d in &self.smoke_density {
            check_range("smoke density", d, 0.0, 1.0)?;
        }
        Ok(())
    }

    pub fn set_temp(&mut self, index: usize, celsius: f64) -> Result<(), DomainError> {
        self.temp_c[index] = check_range("temperature", celsius, TEMP_MIN_C, TEMP_MAX_C)?;
        Ok(())
    }

    pub fn set_smoke(&mut self, index: usize, density: f64) -> Result<(), DomainError> {
        self.smoke_density[index] = check_range("smoke density", density, 0.0, 1.0)?;
        Ok(())
    }

    /// Voltages presented to ADC0..ADC3 (temp1, temp2, smoke1, smoke2).
    pub fn channel_voltages(&self, chain: &SmokeChainParams) -> Result<[f64; 4], DomainError> {
        Ok([
            lm35_output(self.temp_c[0], chain.v_sat),
            lm35_output(self.temp_c[1], chain.v_sat),
            chain.output(self.smoke_density[0])?,
            chain.output(self.smoke_density[1])?,
        ])
    }
}

/// Ideal LM35 output, clamped to `[0, v_sat]`.
pub fn lm35_output(temp_c: f64, v_sat: f64) -> f64 {
    (LM35_VOLTS_PER_C * temp_c).clamp(0.0, v_sat)
}

/// Electrical parameters of one smoke sensing chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmokeChainParams {
    pub r_dark: f64,
    pub r_bright: f64,
    pub r_fixed: f64,
    pub vcc: f64,
    pub gain: f64,
    pub v_sat: f64,
    pub k_scatter: f64,
}

impl Default for SmokeChainParams {
    fn default() -> Self {
        let mut params = Self {
            r_dark: 430e6,
            r_bright: 11e3,
            r_fixed: 9e6,
            vcc: 5.0,
            // 1 + 0.5 kΩ / 1 kΩ
            gain: 1.0 + 0.5 / 1.0,
            v_sat: 5.5,
            k_scatter: 0.0,
        };
        params.k_scatter = params.calibrate_k_scatter(FULL_DENSITY_TARGET_V);
        params
    }
}

impl SmokeChainParams {
    /// Scattering constant that makes full density produce `target_v` at the
    /// amplifier output.
    ///
    /// Inverts the amplifier and divider to get the LDR resistance, then
    /// inverts the log-linear LDR curve to get the light fraction.
    pub fn calibrate_k_scatter(&self, target_v: f64) -> f64 {
        let divider_v = target_v / self.gain;
        let r_ldr = self.r_fixed * divider_v / (self.vcc - divider_v);
        (self.r_dark.log10() - r_ldr.log10()) / (self.r_dark.log10() - self.r_bright.log10())
    }

    /// LDR resistance for a fraction of full illumination, log-linear
    /// between the dark and bright resistances.
    pub fn ldr_resistance(&self, light_fraction: f64) -> Result<f64, DomainError> {
        let f = check_range("light fraction", light_fraction, 0.0, 1.0)?;
        if f == 0.0 {
            return Ok(self.r_dark);
        }
        if f == 1.0 {
            return Ok(self.r_bright);
        }
        let log_dark = self.r_dark.log10();
        let log_r = log_dark - f * (log_dark - self.r_bright.log10());
        Ok(10f64.powf(log_r))
    }

    pub fn scatter_fraction(&self, density: f64) -> Result<f64, DomainError> {
        let d = check_range("smoke density", density, 0.0, 1.0)?;
        Ok(self.k_scatter * d)
    }

    /// Voltage across the LDR in the divider with the fixed resistor.
    pub fn divider_voltage(&self, r_ldr: f64) -> Result<f64, DomainError> {
        if r_ldr.is_nan() || r_ldr <= 0.0 || !r_ldr.is_finite() {
            return Err(DomainError::NonPositive {
                quantity: "LDR resistance",
                value: r_ldr,
            });
        }
        Ok(self.vcc * r_ldr / (r_ldr + self.r_fixed))
    }

    pub fn amplify(&self, v: f64) -> f64 {
        (self.gain * v).min(self.v_sat)
    }

    /// Full chain: density -> scattered light -> LDR -> divider -> amplifier.
    pub fn output(&self, density: f64) -> Result<f64, DomainError> {
        let light = self.scatter_fraction(density)?;
        let r = self.ldr_resistance(light)?;
        Ok(self.amplify(self.divider_voltage(r)?))
    }

    /// Chain output over a density grid.
    pub fn transfer_curve(&self, densities: &[f64]) -> Result<Vec<f64>, DomainError> {
        densities.iter().map(|&d| self.output(d)).collect()
    }
}
