use super::{Resolution, SensorConfig, SupplyVoltage};

/// Time from the start of a conversion window until its result is latched.
///
/// The defaults are fitted so that the simulated sampler reaches roughly
/// 1000 samples/s at 12 bits and 4000 samples/s at 9 bits; the datasheet
/// figures (532-586 us and 84-93 us) are lower than what the chip delivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionTimingModel {
    pub base_12bit_us: f64,
    pub base_9bit_us: f64,
    /// Added when the chip runs from 3.3 V.
    pub low_voltage_penalty_us: f64,
}

impl Default for ConversionTimingModel {
    fn default() -> Self {
        ConversionTimingModel {
            base_12bit_us: 960.0,
            base_9bit_us: 230.0,
            low_voltage_penalty_us: 64.0,
        }
    }
}

impl ConversionTimingModel {
    pub fn conversion_time_us(&self, config: &SensorConfig) -> f64 {
        let base = match config.resolution {
            Resolution::Bits12 => self.base_12bit_us,
            Resolution::Bits9 => self.base_9bit_us,
        };
        match config.supply {
            SupplyVoltage::V5 => base,
            SupplyVoltage::V3_3 => base + self.low_voltage_penalty_us,
        }
    }
}
