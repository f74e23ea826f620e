use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::registers::{encode_config, decode_config, RegisterBus, RegisterFile};
use super::registers::{BUS_CNVR, BUS_OVF, REG_BUS_VOLTAGE, REG_CONFIG, REG_SHUNT_VOLTAGE};
use super::{ConversionTimingModel, PgaDivider, SensorConfig, SupplyVoltage};
use crate::error::{Error, Result};

/// Conversions after power-on whose averages have not settled yet.
pub const WARMUP_CONVERSIONS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadPoint {
    /// Amperes.
    pub current: f64,
    /// Volts.
    pub voltage: f64,
}

/// An analog signal the sensor can integrate over a conversion window.
pub trait AnalogSource {
    /// Mean current and mean voltage over `[t0, t1]` (seconds).
    fn window_average(&self, t0: f64, t1: f64) -> LoadPoint;
}

/// Analog error of a particular board between the load and the ADC input:
/// `i_e = quadratic * i_a^2 + linear * i_a`, `v_e = v_a - voltage_offset`,
/// plus white noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontEnd {
    pub current_linear: f64,
    pub current_quadratic: f64,
    pub voltage_offset: f64,
    /// Standard deviation, amperes.
    pub current_noise: f64,
    /// Standard deviation, volts.
    pub voltage_noise: f64,
}

impl Default for FrontEnd {
    fn default() -> Self {
        FrontEnd::ideal()
    }
}

impl FrontEnd {
    pub fn ideal() -> Self {
        FrontEnd {
            current_linear: 1.0,
            current_quadratic: 0.0,
            voltage_offset: 0.0,
            current_noise: 0.0,
            voltage_noise: 0.0,
        }
    }

    /// Purpose-built shield with short shunt traces: linear gain error.
    pub fn shield(divider: PgaDivider, supply: SupplyVoltage) -> Self {
        let wide = divider != PgaDivider::Div1;
        let linear = match (wide, supply) {
            (false, SupplyVoltage::V3_3) => 0.9957,
            (false, SupplyVoltage::V5) => 0.9963,
            (true, SupplyVoltage::V3_3) => 0.9949,
            (true, SupplyVoltage::V5) => 0.9956,
        };
        FrontEnd {
            current_linear: linear,
            current_quadratic: 0.0,
            voltage_offset: 0.027,
            current_noise: 50e-6,
            voltage_noise: 1e-3,
        }
    }

    /// Off-the-shelf breakout board: quadratic error above ~300 mA.
    pub fn breakout(divider: PgaDivider, supply: SupplyVoltage) -> Self {
        let wide = divider != PgaDivider::Div1;
        let (quadratic, linear) = match (wide, supply) {
            (false, SupplyVoltage::V3_3) => (0.0, 0.9853),
            (false, SupplyVoltage::V5) => (0.0, 0.9869),
            (true, SupplyVoltage::V3_3) => (0.0079, 0.9816),
            (true, SupplyVoltage::V5) => (0.0074, 0.982),
        };
        FrontEnd {
            current_linear: linear,
            current_quadratic: quadratic,
            voltage_offset: 0.097,
            current_noise: 50e-6,
            voltage_noise: 1e-3,
        }
    }

    pub fn sense_current(&self, actual: f64) -> f64 {
        self.current_quadratic * actual * actual + self.current_linear * actual
    }

    pub fn sense_voltage(&self, actual: f64) -> f64 {
        actual - self.voltage_offset
    }
}

/// Simulated monitor running in continuous mode. Conversion `k` averages the
/// analog input over `[epoch + k*T, epoch + (k+1)*T]` and latches the result
/// into the registers at the end of the window.
#[derive(Debug, Clone)]
pub struct SensorModel {
    config: SensorConfig,
    timing: ConversionTimingModel,
    front_end: FrontEnd,
    rng: ChaCha8Rng,
    regs: RegisterFile,
    conversion_ns: f64,
    epoch: f64,
    completed: u64,
    since_power_on: u64,
    now: f64,
    acc: LoadPoint,
    ready_reads: u64,
}

impl SensorModel {
    pub fn new(config: SensorConfig, timing: ConversionTimingModel, front_end: FrontEnd, seed: u64) -> Result<Self> {
        config.validate()?;
        let conversion_ns = timing.conversion_time_us(&config) * 1e3;
        Ok(SensorModel {
            regs: RegisterFile {
                config: encode_config(&config),
                ..RegisterFile::default()
            },
            config,
            timing,
            front_end,
            rng: ChaCha8Rng::seed_from_u64(seed),
            conversion_ns,
            epoch: 0.0,
            completed: 0,
            since_power_on: 0,
            now: 0.0,
            acc: LoadPoint::default(),
            ready_reads: 0,
        })
    }

    pub fn ideal(config: SensorConfig) -> Result<Self> {
        Self::new(config, ConversionTimingModel::default(), FrontEnd::ideal(), 0)
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    pub fn front_end(&self) -> &FrontEnd {
        &self.front_end
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.regs
    }

    pub fn conversion_time_ns(&self) -> f64 {
        self.conversion_ns
    }

    /// Nanoseconds since power-on.
    pub fn now_ns(&self) -> f64 {
        self.now
    }

    /// Conversions completed since power-on.
    pub fn conversions(&self) -> u64 {
        self.since_power_on
    }

    /// Number of bus-register reads that observed (and cleared) the ready bit.
    pub fn ready_observations(&self) -> u64 {
        self.ready_reads
    }

    fn next_boundary(&self) -> f64 {
        self.epoch + (self.completed + 1) as f64 * self.conversion_ns
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < self.now {
            return Err(Error::NonMonotoneTime {
                prev: self.now.round() as u64,
                next: t.round() as u64,
            });
        }
        Ok(())
    }

    /// Advances to `now_ns` with `load` held constant since the previous call.
    pub fn step(&mut self, load: LoadPoint, now_ns: u64) -> Result<()> {
        let t = now_ns as f64;
        self.check_time(t)?;
        loop {
            let boundary = self.next_boundary();
            if boundary > t {
                break;
            }
            let dt = boundary - self.now;
            self.acc.current += load.current * dt;
            self.acc.voltage += load.voltage * dt;
            self.now = boundary;
            let avg = LoadPoint {
                current: self.acc.current / self.conversion_ns,
                voltage: self.acc.voltage / self.conversion_ns,
            };
            self.acc = LoadPoint::default();
            self.latch(avg);
        }
        let dt = t - self.now;
        self.acc.current += load.current * dt;
        self.acc.voltage += load.voltage * dt;
        self.now = t;
        Ok(())
    }

    /// Advances to `t` (nanoseconds since power-on), completing every
    /// conversion window that ends on or before `t` with the exact window
    /// mean of `source`.
    pub fn advance<S: AnalogSource + ?Sized>(&mut self, source: &S, t: f64) -> Result<()> {
        self.check_time(t)?;
        loop {
            let boundary = self.next_boundary();
            if boundary > t {
                break;
            }
            let avg = source.window_average((boundary - self.conversion_ns) * 1e-9, boundary * 1e-9);
            self.now = boundary;
            self.latch(avg);
        }
        self.now = t;
        Ok(())
    }

    fn latch(&mut self, avg: LoadPoint) {
        let settle = if self.since_power_on < WARMUP_CONVERSIONS {
            (self.since_power_on + 1) as f64 / (WARMUP_CONVERSIONS + 1) as f64
        } else {
            1.0
        };
        let mut current = self.front_end.sense_current(avg.current * settle);
        let mut voltage = self.front_end.sense_voltage(avg.voltage * settle);
        if self.front_end.current_noise > 0.0 {
            let n = Normal::new(0.0, self.front_end.current_noise).expect("finite sigma");
            current += n.sample(&mut self.rng);
        }
        if self.front_end.voltage_noise > 0.0 {
            let n = Normal::new(0.0, self.front_end.voltage_noise).expect("finite sigma");
            voltage += n.sample(&mut self.rng);
        }
        let shunt = self.config.quantize_shunt(current);
        let bus = self.config.quantize_bus(voltage);
        let mut bus_word = ((bus.count as u16) << 3) | BUS_CNVR;
        if shunt.saturated || bus.saturated {
            bus_word |= BUS_OVF;
        }
        self.regs.shunt_voltage = shunt.count as i16;
        self.regs.bus_voltage = bus_word;
        self.completed += 1;
        self.since_power_on += 1;
    }

    pub fn shunt_current(&self) -> f64 {
        self.config.dequantize_shunt(i32::from(self.regs.shunt_voltage))
    }

    pub fn bus_voltage(&self) -> f64 {
        self.config.dequantize_bus(self.regs.bus_count())
    }
}

impl RegisterBus for SensorModel {
    fn read_register(&mut self, addr: u8) -> Result<u16> {
        match addr {
            REG_CONFIG => Ok(self.regs.config),
            REG_SHUNT_VOLTAGE => Ok(self.regs.shunt_voltage as u16),
            REG_BUS_VOLTAGE => {
                let word = self.regs.bus_voltage;
                if word & BUS_CNVR != 0 {
                    self.ready_reads += 1;
                    self.regs.bus_voltage &= !BUS_CNVR;
                }
                Ok(word)
            }
            other => Err(Error::Config(format!("register 0x{other:02x} is not modelled"))),
        }
    }

    fn write_register(&mut self, addr: u8, value: u16) -> Result<()> {
        if addr != REG_CONFIG {
            return Err(Error::Config(format!("register 0x{addr:02x} is read-only")));
        }
        let config = decode_config(value, &self.config)?;
        self.config = config;
        self.regs.config = value;
        self.regs.bus_voltage &= !BUS_CNVR;
        self.conversion_ns = self.timing.conversion_time_us(&config) * 1e3;
        // a config write restarts the conversion in progress
        self.epoch = self.now;
        self.completed = 0;
        self.acc = LoadPoint::default();
        Ok(())
    }
}
