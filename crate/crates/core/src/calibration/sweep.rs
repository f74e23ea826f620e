use crate::error::{Error, Result};
use crate::sampler::{run_measurement, MeasurementOptions, MeasurementOutcome, NullSink, Sample, TriggerSpec};
use crate::sensor::{AnalogSource, SensorModel};
use crate::workload::{LoadProfile, ReferenceMeter, Source};

use super::fit::MeasurementPair;
use super::load::{LoadProgram, ProgrammableLoad};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSetup {
    pub load: ProgrammableLoad,
    pub source: Source,
    pub reference: ReferenceMeter,
    /// Reference clock minus device clock, nanoseconds.
    pub reference_skew_ns: i64,
}

impl SweepSetup {
    pub fn new(source: Source) -> Self {
        SweepSetup {
            load: ProgrammableLoad::default(),
            source,
            reference: ReferenceMeter::default(),
            reference_skew_ns: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub pairs: Vec<MeasurementPair>,
    /// One line per skipped settling instant.
    pub warnings: Vec<String>,
    pub profile: LoadProfile,
    pub outcome: MeasurementOutcome,
}

/// Reference reading (current, voltage) for the aperture nearest `t` on the
/// meter's own sample grid.
pub fn reference_reading(meter: &ReferenceMeter, profile: &LoadProfile, t: f64) -> (f64, f64) {
    let h = meter.aperture();
    let start = (t / h - 0.5).round().max(0.0) * h;
    let avg = profile.window_average(start, start + h);
    (meter.quantize_current(avg.current), avg.voltage)
}

fn nearest(samples: &[Sample], t: u64) -> Option<&Sample> {
    let idx = samples.partition_point(|s| s.timestamp < t);
    let after = samples.get(idx);
    let before = idx.checked_sub(1).and_then(|i| samples.get(i));
    match (before, after) {
        (Some(b), Some(a)) => Some(if t - b.timestamp <= a.timestamp - t { b } else { a }),
        (b, a) => b.or(a),
    }
}

/// Pairs the device sample nearest each settling instant with the reference
/// reading nearest the same instant on the reference clock. Instants without
/// a device sample inside half a dwell, or whose skewed reference reading
/// falls outside the dwell, are skipped with a warning. Warm-up samples are
/// never used.
pub fn pair_readings(
    program: &LoadProgram,
    samples: &[Sample],
    skew_ns: i64,
    reference: impl Fn(f64) -> (f64, f64),
) -> (Vec<MeasurementPair>, Vec<String>) {
    let usable: Vec<Sample> = samples.iter().filter(|s| !s.flags.warmup).copied().collect();
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (k, (instant, step)) in program.settling_instants().into_iter().zip(&program.steps).enumerate() {
        let half = step.dwell / 2;
        if skew_ns.unsigned_abs() >= half {
            warnings.push(format!("step {k}: reference skew {skew_ns} ns exceeds half the dwell"));
            continue;
        }
        let device = match nearest(&usable, instant) {
            Some(s) if s.timestamp.abs_diff(instant) < half => s,
            _ => {
                warnings.push(format!("step {k}: no device sample within {half} ns of {instant} ns"));
                continue;
            }
        };
        // the reference clock reads `instant` at true time instant - skew
        let true_time = (instant as i128 - i128::from(skew_ns)) as f64 * 1e-9;
        let (current, voltage) = reference(true_time);
        pairs.push(MeasurementPair {
            reference_current: current,
            device_current: device.current,
            reference_voltage: voltage,
            device_voltage: device.bus_voltage,
        });
    }
    (pairs, warnings)
}

/// Drives the programmed load through the device pipeline and the reference
/// meter from one start edge and pairs their readings at the settling
/// instants. The device runs uncorrected.
pub fn run_calibration_sweep(
    program: &LoadProgram,
    setup: &SweepSetup,
    sensor: &mut SensorModel,
    opts: &MeasurementOptions,
) -> Result<SweepResult> {
    if program.steps.is_empty() {
        return Err(Error::Empty("load program"));
    }
    let profile = program.to_profile(&setup.load, setup.source)?;
    let mut opts = opts.clone();
    opts.trigger = TriggerSpec::Duration(program.duration());
    opts.correction = None;
    opts.modes.clear();
    opts.mode_events.clear();
    let outcome = run_measurement(sensor, &profile, &opts, &mut NullSink)?;
    let (pairs, warnings) = pair_readings(program, &outcome.trace.samples, setup.reference_skew_ns, |t| {
        reference_reading(&setup.reference, &profile, t)
    });
    Ok(SweepResult { pairs, warnings, profile, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus_timing::{BusSpeed, DriverProfile};
    use crate::calibration::{CalibrationCurve, FitOptions, LoadStep};
    use crate::sensor::{ConversionTimingModel, FrontEnd, PgaDivider, SensorConfig, SupplyVoltage};

    fn config() -> SensorConfig {
        SensorConfig { pga_divider: PgaDivider::Div8, ..SensorConfig::default() }
    }

    fn opts() -> MeasurementOptions {
        MeasurementOptions::new(DriverProfile::bcm(), BusSpeed::K2500, TriggerSpec::SampleCount(1))
    }

    #[test]
    fn constant_load_gives_identical_pairs() {
        let step = LoadStep { code: 0, mask: 0x3, dwell: 50_000_000 };
        let program = LoadProgram { steps: vec![step; 3] };
        let setup = SweepSetup::new(Source::Supply { volts: 5.0 });
        let mut sensor = SensorModel::ideal(config()).unwrap();
        let r = run_calibration_sweep(&program, &setup, &mut sensor, &opts()).unwrap();
        assert_eq!(r.pairs.len(), 3);
        assert!(r.warnings.is_empty());
        assert!(r.pairs.iter().all(|p| *p == r.pairs[0]));
    }

    #[test]
    fn staircase_covers_range() {
        let load = ProgrammableLoad::default();
        let program = LoadProgram::staircase(&load, 0.8, 20_000_000).unwrap();
        let setup = SweepSetup::new(Source::Supply { volts: 5.0 });
        let mut sensor = SensorModel::ideal(config()).unwrap();
        let r = run_calibration_sweep(&program, &setup, &mut sensor, &opts()).unwrap();
        assert_eq!(r.pairs.len(), program.steps.len());
        let mut xs: Vec<f64> = r.pairs.iter().map(|p| p.reference_current).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0]));
        xs.insert(0, 0.0);
        assert!(xs.windows(2).all(|w| w[1] - w[0] <= 0.0201), "{xs:?}");
        assert!(*xs.last().unwrap() >= 0.79);
    }

    // readings inside one constant step differ only by rounding
    fn same_pairs(a: &[MeasurementPair], b: &[MeasurementPair]) {
        assert_eq!(a.len(), b.len());
        let meter = ReferenceMeter::default();
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.device_current, y.device_current);
            assert_eq!(x.device_voltage, y.device_voltage);
            let lsb = 2.0 * 1.0 / f64::from(1u32 << meter.bits);
            assert!((x.reference_current - y.reference_current).abs() <= lsb, "{x:?} {y:?}");
            assert!((x.reference_voltage - y.reference_voltage).abs() < 1e-12);
        }
    }

    #[test]
    fn skew_leaves_pairs_unchanged() {
        let load = ProgrammableLoad::default();
        let program = LoadProgram::staircase(&load, 0.4, 50_000_000).unwrap();
        let mut setup = SweepSetup::new(Source::Supply { volts: 5.0 });
        let fe = FrontEnd::shield(PgaDivider::Div8, SupplyVoltage::V5);
        let mut a = SensorModel::new(config(), ConversionTimingModel::default(), fe, 4).unwrap();
        let mut b = a.clone();
        let straight = run_calibration_sweep(&program, &setup, &mut a, &opts()).unwrap();
        setup.reference_skew_ns = 5_000_000;
        let skewed = run_calibration_sweep(&program, &setup, &mut b, &opts()).unwrap();
        same_pairs(&straight.pairs, &skewed.pairs);
        setup.reference_skew_ns = -5_000_000;
        let mut c = SensorModel::new(config(), ConversionTimingModel::default(), fe, 4).unwrap();
        same_pairs(&run_calibration_sweep(&program, &setup, &mut c, &opts()).unwrap().pairs, &straight.pairs);
    }

    #[test]
    fn missing_samples_are_skipped() {
        let step = LoadStep { code: 0, mask: 0, dwell: 10_000_000 };
        let program = LoadProgram { steps: vec![step; 4] };
        let samples = vec![Sample::new(5_000_000, 5.0, 0.02), Sample::new(35_000_000, 5.0, 0.02)];
        let (pairs, warnings) = pair_readings(&program, &samples, 0, |_| (0.02, 5.0));
        assert_eq!(pairs.len(), 2);
        assert_eq!(warnings.len(), 2);
        let (pairs, warnings) = pair_readings(&program, &samples, 6_000_000, |_| (0.02, 5.0));
        assert!(pairs.is_empty());
        assert_eq!(warnings.len(), 4);
    }

    #[test]
    fn sweep_and_fit_recover_the_shield() {
        let load = ProgrammableLoad::default();
        let program = LoadProgram::staircase(&load, 0.8, 20_000_000).unwrap();
        let setup = SweepSetup::new(Source::Supply { volts: 5.0 });
        let fe = FrontEnd::shield(PgaDivider::Div8, SupplyVoltage::V5);
        let mut sensor = SensorModel::new(config(), ConversionTimingModel::default(), fe, 11).unwrap();
        let r = run_calibration_sweep(&program, &setup, &mut sensor, &opts()).unwrap();
        let curve = CalibrationCurve::fit(&r.pairs, &FitOptions::default()).unwrap();
        assert!((curve.current.slope() - fe.current_linear).abs() < 0.002, "{curve:?}");
        assert!((curve.voltage_offset - fe.voltage_offset).abs() < 2e-3, "{curve:?}");
    }
}
