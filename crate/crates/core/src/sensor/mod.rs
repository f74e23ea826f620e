//! Register-level model of a shunt current / bus voltage monitor.
//!
//! The model covers the parts of the chip that matter for energy accounting:
//! quantization of shunt and bus voltage, the programmable gain ranges, the
//! conversion timing and the conversion-ready handshake. A simulated register
//! backend ([`SensorModel`]) implements [`RegisterBus`]; real hardware would
//! implement the same trait.

mod model;
mod registers;
mod timing;

pub use model::{AnalogSource, FrontEnd, LoadPoint, SensorModel, WARMUP_CONVERSIONS};
pub use registers::{
    decode_config, encode_config, RegisterBus, RegisterFile, BUS_CNVR, BUS_OVF, REG_BUS_VOLTAGE,
    REG_CONFIG, REG_SHUNT_VOLTAGE,
};
pub use timing::ConversionTimingModel;

use crate::error::{Error, Result};

/// Shunt ADC step at 12-bit resolution and unity PGA divider.
pub const SHUNT_LSB_12BIT: f64 = 10e-6;
/// Shunt full-scale voltage with the PGA divider at 1.
pub const SHUNT_FULL_SCALE: f64 = 0.040;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PgaDivider {
    Div1,
    Div2,
    Div4,
    Div8,
}

impl PgaDivider {
    pub fn factor(self) -> u32 {
        match self {
            PgaDivider::Div1 => 1,
            PgaDivider::Div2 => 2,
            PgaDivider::Div4 => 4,
            PgaDivider::Div8 => 8,
        }
    }

    pub fn from_factor(factor: u32) -> Result<Self> {
        match factor {
            1 => Ok(PgaDivider::Div1),
            2 => Ok(PgaDivider::Div2),
            4 => Ok(PgaDivider::Div4),
            8 => Ok(PgaDivider::Div8),
            other => Err(Error::Config(format!("PGA divider must be 1, 2, 4 or 8, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resolution {
    Bits9,
    Bits12,
}

impl Resolution {
    pub fn bits(self) -> u32 {
        match self {
            Resolution::Bits9 => 9,
            Resolution::Bits12 => 12,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            9 => Ok(Resolution::Bits9),
            12 => Ok(Resolution::Bits12),
            other => Err(Error::Config(format!("resolution must be 9 or 12 bits, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusRange {
    V16,
    V32,
}

impl BusRange {
    pub fn volts(self) -> f64 {
        match self {
            BusRange::V16 => 16.0,
            BusRange::V32 => 32.0,
        }
    }

    pub fn from_volts(volts: u32) -> Result<Self> {
        match volts {
            16 => Ok(BusRange::V16),
            32 => Ok(BusRange::V32),
            other => Err(Error::Config(format!("bus range must be 16 or 32 V, got {other}"))),
        }
    }
}

/// Supply rail of the sensor chip itself (not of the device under test).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SupplyVoltage {
    V3_3,
    V5,
}

impl SupplyVoltage {
    pub fn volts(self) -> f64 {
        match self {
            SupplyVoltage::V3_3 => 3.3,
            SupplyVoltage::V5 => 5.0,
        }
    }

    pub fn millivolts(self) -> u16 {
        match self {
            SupplyVoltage::V3_3 => 3300,
            SupplyVoltage::V5 => 5000,
        }
    }

    pub fn from_volts(volts: f64) -> Result<Self> {
        if (volts - 3.3).abs() < 1e-6 {
            Ok(SupplyVoltage::V3_3)
        } else if (volts - 5.0).abs() < 1e-6 {
            Ok(SupplyVoltage::V5)
        } else {
            Err(Error::Config(format!("supply must be 3.3 or 5 V, got {volts}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    /// Ohms.
    pub shunt_resistance: f64,
    pub pga_divider: PgaDivider,
    pub resolution: Resolution,
    pub bus_range: BusRange,
    pub supply: SupplyVoltage,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            shunt_resistance: 0.1,
            pga_divider: PgaDivider::Div1,
            resolution: Resolution::Bits12,
            bus_range: BusRange::V16,
            supply: SupplyVoltage::V5,
        }
    }
}

/// A register count together with whether the input had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantized {
    pub count: i32,
    pub saturated: bool,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shunt_resistance.is_finite() && self.shunt_resistance > 0.0) {
            return Err(Error::Config(format!(
                "shunt resistance must be positive, got {}",
                self.shunt_resistance
            )));
        }
        Ok(())
    }

    /// Volts per shunt register count. Coarser resolutions drop low bits,
    /// so 9-bit steps are 8x the 12-bit step.
    pub fn shunt_lsb(&self) -> f64 {
        let drop = 1u32 << (12 - self.resolution.bits());
        SHUNT_LSB_12BIT * f64::from(drop) * f64::from(self.pga_divider.factor())
    }

    pub fn current_lsb(&self) -> f64 {
        self.shunt_lsb() / self.shunt_resistance
    }

    pub fn full_scale_shunt(&self) -> f64 {
        SHUNT_FULL_SCALE * f64::from(self.pga_divider.factor())
    }

    pub fn full_scale_current(&self) -> f64 {
        self.full_scale_shunt() / self.shunt_resistance
    }

    pub fn shunt_full_scale_count(&self) -> i32 {
        (self.full_scale_shunt() / self.shunt_lsb()).round() as i32
    }

    /// Volts per bus register count: range / (2^bits - 1).
    pub fn bus_lsb(&self) -> f64 {
        self.bus_range.volts() / f64::from(self.bus_full_scale_count())
    }

    pub fn bus_full_scale_count(&self) -> u32 {
        (1u32 << self.resolution.bits()) - 1
    }

    /// Maps a current to the signed shunt register count (nearest step).
    /// Inputs beyond full scale clamp and report saturation.
    pub fn quantize_shunt(&self, current: f64) -> Quantized {
        let exact = current * self.shunt_resistance / self.shunt_lsb();
        let fs = self.shunt_full_scale_count();
        if !exact.is_finite() {
            return Quantized {
                count: if exact.is_sign_negative() { -fs } else { fs },
                saturated: true,
            };
        }
        let limit = f64::from(fs) + 1e-9;
        if exact > limit {
            Quantized { count: fs, saturated: true }
        } else if exact < -limit {
            Quantized { count: -fs, saturated: true }
        } else {
            Quantized { count: exact.round() as i32, saturated: false }
        }
    }

    pub fn dequantize_shunt(&self, count: i32) -> f64 {
        f64::from(count) * self.current_lsb()
    }

    /// Maps a bus voltage to its register count (nearest step). Negative
    /// input reads as zero; input above the range clamps and saturates.
    pub fn quantize_bus(&self, voltage: f64) -> Quantized {
        let fs = self.bus_full_scale_count() as i32;
        if voltage.is_nan() {
            return Quantized { count: 0, saturated: true };
        }
        if voltage > self.bus_range.volts() * (1.0 + 1e-12) {
            return Quantized { count: fs, saturated: true };
        }
        let exact = (voltage / self.bus_lsb()).max(0.0);
        Quantized {
            count: (exact.round() as i32).min(fs),
            saturated: false,
        }
    }

    pub fn dequantize_bus(&self, count: i32) -> f64 {
        f64::from(count) * self.bus_lsb()
    }
}
