//! Binary trace files: a 64-byte header followed by 16-byte records, all
//! little-endian.
//!
//! ```text
//! header  0..4   magic "EMP1"
//!         4..6   format version (u16)
//!         6..8   header length (u16, 64)
//!         8..16  shunt resistance in ohms (f64)
//!         16     PGA divider (1, 2, 4, 8)
//!         17     ADC resolution in bits
//!         18     bus range in volts (16, 32)
//!         19     reserved
//!         20..22 sensor supply in mV (u16)
//!         22..24 bus speed in kHz (u16)
//!         24..32 driver name, ASCII, zero padded
//!         32..40 start wall clock, ns since the Unix epoch (u64)
//!         40..64 zero
//! record  0..8   timestamp ns (u64)
//!         8..12  bus voltage uV (i32)
//!         12..16 current uA (i32)
//! ```

use std::fmt::Write as _;

use crate::bus_timing::{BusSpeed, Driver};
use crate::error::{Error, Result};
use crate::sampler::{Sample, TraceHeader};
use crate::sensor::{BusRange, PgaDivider, Resolution, SensorConfig, SupplyVoltage};

pub const MAGIC: [u8; 4] = *b"EMP1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;
pub const RECORD_LEN: usize = 16;

/// A record with this timestamp marks samples lost to an overrun; its
/// current field holds how many.
pub const GAP_TIMESTAMP: u64 = u64::MAX;
pub const GAP_VOLTAGE: i32 = i32::MIN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub timestamp: u64,
    /// Microvolts.
    pub bus_voltage: i32,
    /// Microamperes.
    pub current: i32,
}

impl TraceRecord {
    pub fn from_sample(s: &Sample) -> Self {
        let micro = |x: f64| (x * 1e6).round().clamp(i32::MIN as f64 + 1.0, i32::MAX as f64) as i32;
        TraceRecord {
            timestamp: s.timestamp,
            bus_voltage: micro(s.bus_voltage),
            current: micro(s.current),
        }
    }

    pub fn gap(dropped: u32) -> Self {
        TraceRecord {
            timestamp: GAP_TIMESTAMP,
            bus_voltage: GAP_VOLTAGE,
            current: dropped.min(i32::MAX as u32) as i32,
        }
    }

    pub fn is_gap(&self) -> bool {
        self.timestamp == GAP_TIMESTAMP && self.bus_voltage == GAP_VOLTAGE
    }

    /// Samples lost before this record, if it is a gap marker.
    pub fn dropped(&self) -> Option<u32> {
        self.is_gap().then_some(self.current as u32)
    }

    pub fn to_sample(&self) -> Sample {
        Sample::new(self.timestamp, f64::from(self.bus_voltage) * 1e-6, f64::from(self.current) * 1e-6)
    }

    pub fn encode(&self) -> [u8; RECORD_LEN] {
        let mut b = [0u8; RECORD_LEN];
        b[0..8].copy_from_slice(&self.timestamp.to_le_bytes());
        b[8..12].copy_from_slice(&self.bus_voltage.to_le_bytes());
        b[12..16].copy_from_slice(&self.current.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8; RECORD_LEN]) -> Self {
        TraceRecord {
            timestamp: u64::from_le_bytes(b[0..8].try_into().expect("8 bytes")),
            bus_voltage: i32::from_le_bytes(b[8..12].try_into().expect("4 bytes")),
            current: i32::from_le_bytes(b[12..16].try_into().expect("4 bytes")),
        }
    }
}

pub fn encode_header(h: &TraceHeader) -> [u8; HEADER_LEN] {
    let mut b = [0u8; HEADER_LEN];
    b[0..4].copy_from_slice(&MAGIC);
    b[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    b[6..8].copy_from_slice(&(HEADER_LEN as u16).to_le_bytes());
    b[8..16].copy_from_slice(&h.config.shunt_resistance.to_le_bytes());
    b[16] = h.config.pga_divider.factor() as u8;
    b[17] = h.config.resolution.bits() as u8;
    b[18] = h.config.bus_range.volts() as u8;
    b[20..22].copy_from_slice(&h.config.supply.millivolts().to_le_bytes());
    b[22..24].copy_from_slice(&(h.speed.khz() as u16).to_le_bytes());
    let name = h.driver.name().as_bytes();
    b[24..24 + name.len()].copy_from_slice(name);
    b[32..40].copy_from_slice(&h.start_wall_clock_ns.to_le_bytes());
    b
}

pub fn decode_header(b: &[u8]) -> Result<TraceHeader> {
    if b.len() < HEADER_LEN {
        return Err(Error::Format(format!("header needs {HEADER_LEN} bytes, got {}", b.len())));
    }
    if b[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([b[4], b[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let len = u16::from_le_bytes([b[6], b[7]]) as usize;
    if len != HEADER_LEN {
        return Err(Error::Format(format!("unsupported header length {len}")));
    }
    if b[19] != 0 || b[40..HEADER_LEN].iter().any(|&x| x != 0) {
        return Err(Error::Format("reserved header bytes must be zero".into()));
    }
    let shunt = f64::from_le_bytes(b[8..16].try_into().expect("8 bytes"));
    let supply_mv = u16::from_le_bytes([b[20], b[21]]);
    let supply = match supply_mv {
        3300 => SupplyVoltage::V3_3,
        5000 => SupplyVoltage::V5,
        other => return Err(Error::Format(format!("bad supply {other} mV"))),
    };
    let config = SensorConfig {
        shunt_resistance: shunt,
        pga_divider: PgaDivider::from_factor(u32::from(b[16]))?,
        resolution: Resolution::from_bits(u32::from(b[17]))?,
        bus_range: BusRange::from_volts(u32::from(b[18]))?,
        supply,
    };
    config.validate()?;
    let speed = BusSpeed::from_khz(u32::from(u16::from_le_bytes([b[22], b[23]])))?;
    let name_bytes = &b[24..32];
    let end = name_bytes.iter().position(|&c| c == 0).unwrap_or(8);
    if name_bytes[end..].iter().any(|&c| c != 0) {
        return Err(Error::Format("driver name not zero padded".into()));
    }
    let name = std::str::from_utf8(&name_bytes[..end]).map_err(|_| Error::Format("driver name not ASCII".into()))?;
    let driver: Driver = name.parse().map_err(|_| Error::Format(format!("unknown driver `{name}`")))?;
    let start_wall_clock_ns = u64::from_le_bytes(b[32..40].try_into().expect("8 bytes"));
    Ok(TraceHeader { config, driver, speed, start_wall_clock_ns })
}

/// A trace file as stored: header plus raw records, gap markers included.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.records.len());
        out.extend_from_slice(&encode_header(&self.header));
        for r in &self.records {
            out.extend_from_slice(&r.encode());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = decode_header(bytes)?;
        let body = &bytes[HEADER_LEN..];
        if !body.len().is_multiple_of(RECORD_LEN) {
            return Err(Error::Format(format!("body of {} bytes is not whole records", body.len())));
        }
        let records = body
            .chunks_exact(RECORD_LEN)
            .map(|c| TraceRecord::decode(c.try_into().expect("16 bytes")))
            .collect();
        Ok(TraceFile { header, records })
    }

    /// Samples in file order, gap markers skipped.
    pub fn samples(&self) -> Vec<Sample> {
        self.records.iter().filter(|r| !r.is_gap()).map(TraceRecord::to_sample).collect()
    }

    pub fn dropped_samples(&self) -> u64 {
        self.records.iter().filter_map(|r| r.dropped()).map(u64::from).sum()
    }

    /// `timestamp_ns,bus_mV,current_mA`, one line per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp_ns,bus_mV,current_mA\n");
        for r in self.records.iter().filter(|r| !r.is_gap()) {
            let _ = writeln!(
                out,
                "{},{},{}",
                r.timestamp,
                f64::from(r.bus_voltage) / 1e3,
                f64::from(r.current) / 1e3
            );
        }
        out
    }
}
