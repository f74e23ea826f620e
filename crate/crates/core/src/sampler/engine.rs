use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bus_timing::{check_operating_point, read_delay, BusSpeed, DriverProfile, SAMPLER_OVERHEAD_US, TIMESTAMP_US};
use crate::error::{Error, Result};
use crate::sensor::{AnalogSource, RegisterBus, SensorModel, BUS_CNVR, BUS_OVF, REG_BUS_VOLTAGE, REG_SHUNT_VOLTAGE};

use super::energy::{hybrid_energy, sleep_intervals, EnergyAccumulator};
use super::{
    PowerModeEvent, PowerSaveMode, Sample, SampleFlags, Trace, TraceHeader, TriggerEdgeKind, TriggerSpec,
    DEFAULT_WARMUP_SAMPLES,
};

/// Receives samples as they are produced.
pub trait SampleSink {
    fn accept(&mut self, sample: &Sample) -> Result<()>;
}

impl SampleSink for Vec<Sample> {
    fn accept(&mut self, sample: &Sample) -> Result<()> {
        self.push(*sample);
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl SampleSink for NullSink {
    fn accept(&mut self, _: &Sample) -> Result<()> {
        Ok(())
    }
}

/// Maps raw readings to corrected ones (a calibration curve).
pub trait SampleCorrection: Send + Sync {
    fn correct_current(&self, measured: f64) -> f64;
    fn correct_voltage(&self, measured: f64) -> f64;
}

#[derive(Clone)]
pub struct MeasurementOptions {
    pub profile: DriverProfile,
    pub speed: BusSpeed,
    pub trigger: TriggerSpec,
    pub warmup_samples: usize,
    pub modes: Vec<PowerSaveMode>,
    pub mode_events: Vec<PowerModeEvent>,
    pub correction: Option<Arc<dyn SampleCorrection>>,
    /// Seeds the bus jitter.
    pub seed: u64,
    /// A window whose stop edge never arrives is closed this long after its
    /// start.
    pub unterminated_timeout_s: f64,
    pub start_wall_clock_ns: u64,
}

impl MeasurementOptions {
    pub fn new(profile: DriverProfile, speed: BusSpeed, trigger: TriggerSpec) -> Self {
        MeasurementOptions {
            profile,
            speed,
            trigger,
            warmup_samples: DEFAULT_WARMUP_SAMPLES,
            modes: Vec::new(),
            mode_events: Vec::new(),
            correction: None,
            seed: 0,
            unterminated_timeout_s: 10.0,
            start_wall_clock_ns: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementStatus {
    Completed,
    /// The edge stream ended inside an open window.
    Unterminated,
}

#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    pub trace: Trace,
    /// Hybrid energy in joules (plain trapezoid when no modes are declared).
    pub energy: f64,
    /// Trapezoid over the same samples ignoring power-save events.
    pub naive_energy: f64,
    pub status: MeasurementStatus,
    pub polls: u64,
    /// Conversions finished while no sample was being collected.
    pub conversions: u64,
}

impl MeasurementOutcome {
    pub fn samples_per_second(&self) -> f64 {
        let d = self.trace.duration_seconds();
        if d > 0.0 {
            self.trace.samples.len() as f64 / d
        } else {
            0.0
        }
    }
}

fn windows_for(trigger: &TriggerSpec, timeout_ns: u64) -> (Vec<(u64, u64)>, MeasurementStatus) {
    match trigger {
        TriggerSpec::Duration(s) => (vec![(0, (s * 1e9).round() as u64)], MeasurementStatus::Completed),
        TriggerSpec::SampleCount(_) => (vec![(0, u64::MAX)], MeasurementStatus::Completed),
        TriggerSpec::ExternalEdges(edges) => {
            let mut out = Vec::new();
            let mut open = None;
            for e in edges {
                match e.kind {
                    TriggerEdgeKind::Fall => open = Some(e.timestamp),
                    TriggerEdgeKind::Rise => {
                        if let Some(start) = open.take() {
                            out.push((start, e.timestamp));
                        }
                    }
                }
            }
            match open {
                Some(start) => {
                    out.push((start, start.saturating_add(timeout_ns)));
                    (out, MeasurementStatus::Unterminated)
                }
                None => (out, MeasurementStatus::Completed),
            }
        }
    }
}

/// Runs the sampler loop against a simulated sensor until the trigger says
/// stop.
///
/// Each iteration polls the bus-voltage register until the ready bit is set,
/// then reads bus and shunt voltage, takes a timestamp and hands the sample
/// on. Engine time is the sensor's clock. Samples outside the trigger windows
/// are read but discarded.
pub fn run_measurement<S: AnalogSource + ?Sized>(
    sensor: &mut SensorModel,
    source: &S,
    opts: &MeasurementOptions,
    sink: &mut dyn SampleSink,
) -> Result<MeasurementOutcome> {
    opts.trigger.validate()?;
    check_operating_point(opts.speed, sensor.config().supply)?;
    let intervals = sleep_intervals(&opts.mode_events, &opts.modes)?;
    let timeout_ns = (opts.unterminated_timeout_s * 1e9).round() as u64;
    let (windows, status) = windows_for(&opts.trigger, timeout_ns);
    let target_count = match opts.trigger {
        TriggerSpec::SampleCount(n) => Some(n),
        _ => None,
    };
    let end = windows.last().map(|w| w.1).unwrap_or(0);

    let supply = sensor.config().supply;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let overhead_ns = (SAMPLER_OVERHEAD_US + TIMESTAMP_US) * 1e3;
    let start_conversions = sensor.conversions();
    let mut t = sensor.now_ns();
    let mut polls = 0u64;
    let mut collected = 0usize;
    let mut window_idx = 0usize;
    let mut samples = Vec::new();
    let mut acc = EnergyAccumulator::new();
    let mut naive = 0.0;

    let mut transaction = |sensor: &mut SensorModel, t: &mut f64, reg: u8| -> Result<u16> {
        *t += read_delay(&opts.profile, opts.speed, supply, &mut rng)? * 1e3;
        sensor.advance(source, *t)?;
        sensor.read_register(reg)
    };

    while window_idx < windows.len() {
        let word = loop {
            polls += 1;
            let w = transaction(sensor, &mut t, REG_BUS_VOLTAGE)?;
            if w & BUS_CNVR != 0 {
                break w;
            }
        };
        let bus_word = transaction(sensor, &mut t, REG_BUS_VOLTAGE)?;
        let shunt_word = transaction(sensor, &mut t, REG_SHUNT_VOLTAGE)?;
        t += TIMESTAMP_US * 1e3;
        let timestamp = t.round() as u64;
        t += overhead_ns - TIMESTAMP_US * 1e3;
        sensor.advance(source, t)?;

        let warmup = collected < opts.warmup_samples;
        collected += 1;

        while window_idx < windows.len() && timestamp > windows[window_idx].1 {
            window_idx += 1;
            acc.break_chain();
        }
        if window_idx >= windows.len() {
            break;
        }
        if timestamp < windows[window_idx].0 {
            continue;
        }

        let cfg = sensor.config();
        let mut voltage = cfg.dequantize_bus(i32::from(bus_word >> 3));
        let mut current = cfg.dequantize_shunt(i32::from(shunt_word as i16));
        if let Some(c) = &opts.correction {
            voltage = c.correct_voltage(voltage);
            current = c.correct_current(current);
        }
        let mut sample = Sample::new(timestamp, voltage.max(0.0), current.max(0.0));
        sample.flags = SampleFlags {
            saturated: (word | bus_word) & BUS_OVF != 0,
            warmup,
            power_save_active: intervals.iter().any(|iv| iv.strictly_contains(timestamp)),
        };
        if let Some(prev) = samples.last() {
            let prev: &Sample = prev;
            if prev.timestamp >= timestamp {
                return Err(Error::NonMonotoneTime { prev: prev.timestamp, next: timestamp });
            }
        }
        if !warmup {
            naive += acc.push(&sample)?;
        }
        sink.accept(&sample)?;
        samples.push(sample);

        if let Some(n) = target_count {
            if samples.len() >= n {
                break;
            }
        }
        if t > end as f64 && window_idx + 1 >= windows.len() && timestamp >= windows[window_idx].1 {
            break;
        }
    }

    let mut windows = windows;
    if target_count.is_some() {
        windows = vec![(0, samples.last().map(|s| s.timestamp).unwrap_or(0))];
    }
    let trace = Trace {
        header: TraceHeader {
            config: *sensor.config(),
            driver: opts.profile.driver,
            speed: opts.speed,
            start_wall_clock_ns: opts.start_wall_clock_ns,
        },
        samples,
        windows,
        mode_events: opts.mode_events.clone(),
    };
    let energy = hybrid_energy(&trace, &opts.modes)?;
    let conversions = sensor.conversions() - start_conversions;
    Ok(MeasurementOutcome {
        trace,
        energy,
        naive_energy: naive,
        status,
        polls,
        conversions,
    })
}
