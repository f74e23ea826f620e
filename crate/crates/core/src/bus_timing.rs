//! Transaction latency of the sensor bus and the polling behaviour it causes.
//!
//! The sampler loop is modelled as: poll the bus-voltage register until the
//! conversion-ready bit is seen, read bus and shunt voltage (two more
//! transactions), take a timestamp and loop. The chip converts continuously,
//! so while one loop iteration is shorter than a conversion the sampler gets
//! one sample per conversion and spends the remainder polling; once it is
//! longer, every first poll succeeds and throughput is bounded by the bus.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::sensor::{ConversionTimingModel, SensorConfig, SupplyVoltage};

/// Time the sampler spends between collecting a sample and the next poll.
pub const SAMPLER_OVERHEAD_US: f64 = 0.46;
/// Cost of reading the monotonic clock for a timestamp.
pub const TIMESTAMP_US: f64 = 0.445;

/// Per-speed read delays fitted against the polling table and the measured
/// sampling rates (see the README for the fit).
pub const DEFAULT_DRIVER_PROFILES: &str = "\
# mean read delay in microseconds, key = driver.speed_khz
bcm.2500 = 20.4
bcm.800 = 56.4
bcm.500 = 78.0
bcm.200 = 191.8
bcm.jitter = 4
linux.2500 = 40.5
linux.800 = 87.2
linux.500 = 105.0
linux.200 = 239.8
linux.jitter = 22
";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Driver {
    /// Memory-mapped controller access, no system calls after init.
    Bcm,
    /// Kernel device file, one system call per transaction.
    Linux,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Bcm => "bcm",
            Driver::Linux => "linux",
        }
    }
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Driver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bcm" => Ok(Driver::Bcm),
            "linux" => Ok(Driver::Linux),
            other => Err(Error::Config(format!("unknown driver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BusSpeed {
    K200,
    K500,
    K800,
    K2500,
}

impl BusSpeed {
    pub const ALL: [BusSpeed; 4] = [BusSpeed::K2500, BusSpeed::K800, BusSpeed::K500, BusSpeed::K200];

    pub fn khz(self) -> u32 {
        match self {
            BusSpeed::K200 => 200,
            BusSpeed::K500 => 500,
            BusSpeed::K800 => 800,
            BusSpeed::K2500 => 2500,
        }
    }

    pub fn from_khz(khz: u32) -> Result<Self> {
        match khz {
            200 => Ok(BusSpeed::K200),
            500 => Ok(BusSpeed::K500),
            800 => Ok(BusSpeed::K800),
            2500 => Ok(BusSpeed::K2500),
            other => Err(Error::Config(format!("unsupported bus speed {other} kHz"))),
        }
    }

    fn index(self) -> usize {
        match self {
            BusSpeed::K200 => 0,
            BusSpeed::K500 => 1,
            BusSpeed::K800 => 2,
            BusSpeed::K2500 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverProfile {
    pub driver: Driver,
    /// Mean read delay in microseconds, indexed 200/500/800/2500 kHz.
    delays_us: [f64; 4],
    /// Full width of the (uniform) delay spread in microseconds.
    pub jitter_us: f64,
    /// Every transaction pays a kernel round trip.
    pub syscall_per_transaction: bool,
}

impl DriverProfile {
    pub fn new(driver: Driver, delays: [(BusSpeed, f64); 4], jitter_us: f64) -> Result<Self> {
        let mut delays_us = [f64::NAN; 4];
        for (speed, d) in delays {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("{driver}.{} delay must be positive", speed.khz())));
            }
            delays_us[speed.index()] = d;
        }
        if delays_us.iter().any(|d| d.is_nan()) {
            return Err(Error::Config(format!("{driver}: every bus speed needs a delay")));
        }
        if !(jitter_us.is_finite() && jitter_us >= 0.0) {
            return Err(Error::Config(format!("{driver}.jitter must be non-negative")));
        }
        Ok(DriverProfile {
            driver,
            delays_us,
            jitter_us,
            syscall_per_transaction: driver == Driver::Linux,
        })
    }

    pub fn mean_delay_us(&self, speed: BusSpeed) -> f64 {
        self.delays_us[speed.index()]
    }

    pub fn bcm() -> Self {
        DriverProfiles::default().bcm
    }

    pub fn linux() -> Self {
        DriverProfiles::default().linux
    }
}

/// The pair of driver profiles loaded from a `driver.speed = us` file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverProfiles {
    pub bcm: DriverProfile,
    pub linux: DriverProfile,
}

impl Default for DriverProfiles {
    fn default() -> Self {
        DriverProfiles::parse(DEFAULT_DRIVER_PROFILES).expect("embedded driver profiles parse")
    }
}

impl DriverProfiles {
    pub fn get(&self, driver: Driver) -> &DriverProfile {
        match driver {
            Driver::Bcm => &self.bcm,
            Driver::Linux => &self.linux,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut delays = [[None::<f64>; 4]; 2];
        let mut jitter = [None::<f64>; 2];
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            let (driver, field) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| Error::parse(line_no, "key must be `driver.speed`"))?;
            let d = match driver {
                "bcm" => 0,
                "linux" => 1,
                other => return Err(Error::parse(line_no, format!("unknown driver `{other}`"))),
            };
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad number `{}`", value.trim())))?;
            if !value.is_finite() {
                return Err(Error::parse(line_no, "value must be finite"));
            }
            if field == "jitter" {
                jitter[d] = Some(value);
            } else {
                let khz: u32 = field
                    .parse()
                    .map_err(|_| Error::parse(line_no, format!("bad speed `{field}`")))?;
                let speed = BusSpeed::from_khz(khz).map_err(|e| Error::parse(line_no, e.to_string()))?;
                delays[d][speed.index()] = Some(value);
            }
        }
        let build = |d: usize, driver: Driver, default_jitter: f64| -> Result<DriverProfile> {
            let mut pairs = [(BusSpeed::K200, 0.0); 4];
            for speed in BusSpeed::ALL {
                let v = delays[d][speed.index()]
                    .ok_or_else(|| Error::Config(format!("missing {driver}.{}", speed.khz())))?;
                pairs[speed.index()] = (speed, v);
            }
            DriverProfile::new(driver, pairs, jitter[d].unwrap_or(default_jitter))
        };
        Ok(DriverProfiles {
            bcm: build(0, Driver::Bcm, 4.0)?,
            linux: build(1, Driver::Linux, 22.0)?,
        })
    }

    pub fn to_config_text(&self) -> String {
        let mut out = String::from("# mean read delay in microseconds, key = driver.speed_khz\n");
        for p in [&self.bcm, &self.linux] {
            for speed in BusSpeed::ALL {
                out.push_str(&format!("{}.{} = {}\n", p.driver, speed.khz(), p.mean_delay_us(speed)));
            }
            out.push_str(&format!("{}.jitter = {}\n", p.driver, p.jitter_us));
        }
        out
    }
}

pub fn check_operating_point(speed: BusSpeed, supply: SupplyVoltage) -> Result<()> {
    if speed == BusSpeed::K2500 && supply == SupplyVoltage::V3_3 {
        return Err(Error::UnsupportedOperatingPoint {
            speed_khz: speed.khz(),
            supply: supply.volts(),
        });
    }
    Ok(())
}

/// Draws one read delay in microseconds, uniform within the jitter band.
pub fn read_delay<R: Rng + ?Sized>(
    profile: &DriverProfile,
    speed: BusSpeed,
    supply: SupplyVoltage,
    rng: &mut R,
) -> Result<f64> {
    check_operating_point(speed, supply)?;
    let mean = profile.mean_delay_us(speed);
    if profile.jitter_us == 0.0 {
        return Ok(mean);
    }
    let half = profile.jitter_us / 2.0;
    Ok(rng.gen_range(mean - half..=mean + half))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PollingStats {
    /// Expected number of ready-bit polls per collected sample (>= 1).
    pub mean_polls: f64,
    pub samples_per_second: f64,
}

impl PollingStats {
    pub fn polls_per_sample(&self) -> u32 {
        self.mean_polls.round().max(1.0) as u32
    }
}

/// Steady-state polling expectation using mean delays.
pub fn expected_polls(
    profile: &DriverProfile,
    speed: BusSpeed,
    config: &SensorConfig,
    timing: &ConversionTimingModel,
) -> Result<PollingStats> {
    check_operating_point(speed, config.supply)?;
    let d = profile.mean_delay_us(speed);
    let conversion = timing.conversion_time_us(config);
    let overhead = SAMPLER_OVERHEAD_US + TIMESTAMP_US;
    let busy = 3.0 * d + overhead;
    let (mean_polls, period) = if busy >= conversion {
        (1.0, busy)
    } else {
        ((conversion - 2.0 * d - overhead) / d, conversion)
    };
    Ok(PollingStats {
        mean_polls,
        samples_per_second: 1e6 / period,
    })
}
