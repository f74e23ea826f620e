//! Register map of the simulated monitor.
//!
//! | addr | name          | layout                                                     |
//! |------|---------------|------------------------------------------------------------|
//! | 0x00 | configuration | bit 13 bus range (0 = 16 V), bits 12-11 PGA (/1,/2,/4,/8), |
//! |      |               | bits 10-7 bus ADC, bits 6-3 shunt ADC (0b0000 = 9 bit,     |
//! |      |               | 0b0011 = 12 bit), bits 2-0 mode (0b111 continuous)         |
//! | 0x01 | shunt voltage | signed 16-bit count of shunt steps                         |
//! | 0x02 | bus voltage   | bits 15-3 count, bit 1 conversion ready, bit 0 overflow    |
//!
//! Reading 0x02 clears the conversion-ready bit.

use super::{BusRange, PgaDivider, Resolution, SensorConfig};
use crate::error::{Error, Result};

pub const REG_CONFIG: u8 = 0x00;
pub const REG_SHUNT_VOLTAGE: u8 = 0x01;
pub const REG_BUS_VOLTAGE: u8 = 0x02;

pub const BUS_CNVR: u16 = 1 << 1;
pub const BUS_OVF: u16 = 1 << 0;

const ADC_9BIT: u16 = 0b0000;
const ADC_12BIT: u16 = 0b0011;
const MODE_CONTINUOUS: u16 = 0b111;

/// Bus abstraction over which the sampler talks to the monitor. The
/// simulated [`SensorModel`](super::SensorModel) implements it; a hardware
/// backend (I2C device file or memory-mapped controller) would too.
pub trait RegisterBus {
    fn read_register(&mut self, addr: u8) -> Result<u16>;
    fn write_register(&mut self, addr: u8, value: u16) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegisterFile {
    pub config: u16,
    pub shunt_voltage: i16,
    pub bus_voltage: u16,
}

impl RegisterFile {
    pub fn conversion_ready(&self) -> bool {
        self.bus_voltage & BUS_CNVR != 0
    }

    pub fn overflow(&self) -> bool {
        self.bus_voltage & BUS_OVF != 0
    }

    pub fn bus_count(&self) -> i32 {
        i32::from(self.bus_voltage >> 3)
    }
}

pub fn encode_config(config: &SensorConfig) -> u16 {
    let brng = match config.bus_range {
        BusRange::V16 => 0,
        BusRange::V32 => 1,
    };
    let pg = match config.pga_divider {
        PgaDivider::Div1 => 0b00,
        PgaDivider::Div2 => 0b01,
        PgaDivider::Div4 => 0b10,
        PgaDivider::Div8 => 0b11,
    };
    let adc = match config.resolution {
        Resolution::Bits9 => ADC_9BIT,
        Resolution::Bits12 => ADC_12BIT,
    };
    (brng << 13) | (pg << 11) | (adc << 7) | (adc << 3) | MODE_CONTINUOUS
}

/// Applies a configuration word on top of `base` (shunt value and chip
/// supply are not part of the register).
pub fn decode_config(word: u16, base: &SensorConfig) -> Result<SensorConfig> {
    let bus_range = if word & (1 << 13) != 0 { BusRange::V32 } else { BusRange::V16 };
    let pga_divider = match (word >> 11) & 0b11 {
        0b00 => PgaDivider::Div1,
        0b01 => PgaDivider::Div2,
        0b10 => PgaDivider::Div4,
        _ => PgaDivider::Div8,
    };
    let badc = (word >> 7) & 0b1111;
    let sadc = (word >> 3) & 0b1111;
    if badc != sadc {
        return Err(Error::Config(format!(
            "bus and shunt ADC settings must match (0x{badc:x} vs 0x{sadc:x})"
        )));
    }
    let resolution = match sadc {
        ADC_9BIT => Resolution::Bits9,
        ADC_12BIT => Resolution::Bits12,
        other => {
            return Err(Error::Config(format!("unsupported ADC setting 0b{other:04b}")));
        }
    };
    if word & 0b111 != MODE_CONTINUOUS {
        return Err(Error::Config("only continuous shunt+bus mode is modelled".into()));
    }
    Ok(SensorConfig {
        bus_range,
        pga_divider,
        resolution,
        ..*base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::SupplyVoltage;

    #[test]
    fn config_word_round_trips() {
        for div in [PgaDivider::Div1, PgaDivider::Div2, PgaDivider::Div4, PgaDivider::Div8] {
            for res in [Resolution::Bits9, Resolution::Bits12] {
                for range in [BusRange::V16, BusRange::V32] {
                    let c = SensorConfig {
                        pga_divider: div,
                        resolution: res,
                        bus_range: range,
                        supply: SupplyVoltage::V3_3,
                        shunt_resistance: 0.05,
                    };
                    let back = decode_config(encode_config(&c), &c).unwrap();
                    assert_eq!(back, c);
                }
            }
        }
    }

    #[test]
    fn default_word_is_frozen() {
        // 16 V, /1, 12-bit both ADCs, continuous
        assert_eq!(encode_config(&SensorConfig::default()), 0x019F);
    }

    #[test]
    fn rejects_unsupported_words() {
        let base = SensorConfig::default();
        assert!(decode_config(0x019F & !0b111, &base).is_err());
        // 10-bit shunt ADC
        assert!(decode_config((0b0001 << 7) | (0b0001 << 3) | 0b111, &base).is_err());
        // mismatched ADCs
        assert!(decode_config((0b0011 << 7) | 0b111, &base).is_err());
    }
}
