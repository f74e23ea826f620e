//! The sampling loop and energy accounting.
//!
//! [`run_measurement`] drives a [`SensorModel`](crate::sensor::SensorModel)
//! through the bus timing model the way the sampler thread drives the real
//! chip: poll the ready bit, read both values, timestamp, integrate, hand the
//! sample to the writer.

mod energy;
mod engine;
mod events;
mod trace;

pub use energy::{
    compute_energy, hybrid_energy, naive_energy, sleep_intervals, trapezoid_energy, EnergyAccumulator,
    SleepInterval,
};
pub use engine::{
    run_measurement, MeasurementOptions, MeasurementOutcome, MeasurementStatus, NullSink, SampleCorrection,
    SampleSink,
};
pub use events::{
    format_mode_events, format_trigger_edges, parse_mode_events, parse_trigger_edges,
    ModeEventKind, PowerModeEvent, PowerSaveMode, TriggerEdge, TriggerEdgeKind, TriggerSpec,
};
pub use trace::{Trace, TraceHeader};

/// Number of post-start samples flagged as warm-up and kept out of the energy.
pub const DEFAULT_WARMUP_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleFlags {
    pub saturated: bool,
    pub warmup: bool,
    pub power_save_active: bool,
}

/// One timestamped reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Nanoseconds since the start of the measurement engine.
    pub timestamp: u64,
    /// Volts.
    pub bus_voltage: f64,
    /// Amperes.
    pub current: f64,
    pub flags: SampleFlags,
}

impl Sample {
    pub fn new(timestamp: u64, bus_voltage: f64, current: f64) -> Self {
        Sample {
            timestamp,
            bus_voltage,
            current,
            flags: SampleFlags::default(),
        }
    }

    pub fn power(&self) -> f64 {
        self.bus_voltage * self.current
    }

    pub fn seconds(&self) -> f64 {
        self.timestamp as f64 * 1e-9
    }
}
