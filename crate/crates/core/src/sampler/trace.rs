use crate::bus_timing::{BusSpeed, Driver};
use crate::sensor::SensorConfig;

use super::{PowerModeEvent, Sample};

/// Acquisition settings stored alongside the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub config: SensorConfig,
    pub driver: Driver,
    pub speed: BusSpeed,
    /// Wall clock at engine start, ns since the Unix epoch.
    pub start_wall_clock_ns: u64,
}

impl Default for TraceHeader {
    fn default() -> Self {
        TraceHeader {
            config: SensorConfig::default(),
            driver: Driver::Bcm,
            speed: BusSpeed::K2500,
            start_wall_clock_ns: 0,
        }
    }
}

/// Samples plus the context needed to account for them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub header: TraceHeader,
    pub samples: Vec<Sample>,
    /// Measurement windows `[start, stop]` in ns. Empty means the whole trace.
    pub windows: Vec<(u64, u64)>,
    pub mode_events: Vec<PowerModeEvent>,
}

impl Trace {
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        Trace {
            samples,
            ..Trace::default()
        }
    }

    /// Windows to integrate over; a trace without explicit windows spans its
    /// first to last sample.
    pub fn effective_windows(&self) -> Vec<(u64, u64)> {
        if !self.windows.is_empty() {
            return self.windows.clone();
        }
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => vec![(a.timestamp, b.timestamp)],
            _ => Vec::new(),
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.effective_windows()
            .iter()
            .map(|(a, b)| (b - a) as f64 * 1e-9)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
