use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::bus_timing::{BusSpeed, DriverProfile};
use crate::calibration::{run_calibration_sweep, CalibrationCurve, FitOptions, LoadProgram, SweepResult, SweepSetup};
use crate::error::{Error, Result};
use crate::sampler::{run_measurement, MeasurementOptions, MeasurementOutcome, NullSink, SampleSink, TriggerSpec};
use crate::sensor::{ConversionTimingModel, FrontEnd, PgaDivider, Resolution, SensorConfig, SensorModel, SupplyVoltage};
use crate::workload::{battery_source, preset_spec, Device, LoadProfile, ReferenceMeter, Source, Workload};

use super::report::ExperimentReport;

/// Simulated time of one experiment, seconds.
pub const DEFAULT_EXPERIMENT_S: f64 = 30.0;
/// Runs per preset when taking medians.
pub const DEFAULT_RUNS: usize = 10;
/// Dwell of each calibration step, nanoseconds.
pub const CALIBRATION_DWELL_NS: u64 = 20_000_000;
/// Calibration sweeps stop below this share of the shunt full scale.
const CALIBRATION_HEADROOM: f64 = 0.9;
const CALIBRATION_MAX_CURRENT: f64 = 0.8;

// keeps the calibration run's noise independent of the experiment's
const CALIBRATION_SEED_SALT: u64 = 0x5eed_ca1b;

/// Analog front end between the load and the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Board {
    #[default]
    Shield,
    Breakout,
    Ideal,
}

impl Board {
    pub fn name(self) -> &'static str {
        match self {
            Board::Shield => "shield",
            Board::Breakout => "breakout",
            Board::Ideal => "ideal",
        }
    }

    pub fn front_end(self, divider: PgaDivider, supply: SupplyVoltage) -> FrontEnd {
        match self {
            Board::Shield => FrontEnd::shield(divider, supply),
            Board::Breakout => FrontEnd::breakout(divider, supply),
            Board::Ideal => FrontEnd::ideal(),
        }
    }
}

impl fmt::Display for Board {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Board {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shield" => Ok(Board::Shield),
            "breakout" => Ok(Board::Breakout),
            "ideal" => Ok(Board::Ideal),
            other => Err(Error::Config(format!("unknown board `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub device: Device,
    pub workload: Workload,
    pub resolution: Resolution,
    pub driver: DriverProfile,
    pub speed: BusSpeed,
    pub supply: SupplyVoltage,
    pub board: Board,
    /// Battery instead of a bench supply.
    pub battery: bool,
    /// Seconds; also sets the profile length.
    pub duration_s: f64,
    /// Defaults to measuring for `duration_s`.
    pub trigger: Option<TriggerSpec>,
    pub calibration: Option<CalibrationCurve>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(device: Device, workload: Workload) -> Self {
        ExperimentConfig {
            device,
            workload,
            resolution: Resolution::Bits12,
            driver: DriverProfile::bcm(),
            speed: BusSpeed::K2500,
            supply: SupplyVoltage::V5,
            board: Board::Shield,
            battery: false,
            duration_s: DEFAULT_EXPERIMENT_S,
            trigger: None,
            calibration: None,
            seed: 0,
        }
    }

    pub fn sensor_config(&self) -> SensorConfig {
        SensorConfig {
            pga_divider: self.device.divider(),
            resolution: self.resolution,
            supply: self.supply,
            ..SensorConfig::default()
        }
    }

    pub fn front_end(&self) -> FrontEnd {
        self.board.front_end(self.device.divider(), self.supply)
    }

    pub fn trigger(&self) -> TriggerSpec {
        self.trigger.clone().unwrap_or(TriggerSpec::Duration(self.duration_s))
    }

    /// The workload, long enough to outlast the trigger.
    pub fn profile(&self) -> Result<LoadProfile> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::OutOfRange { what: "experiment duration", value: self.duration_s });
        }
        let mut length = self.duration_s;
        if let TriggerSpec::ExternalEdges(edges) = self.trigger() {
            if let Some(last) = edges.last() {
                length = length.max(last.timestamp as f64 * 1e-9);
            }
        }
        let source = self.battery.then(|| battery_source(self.device));
        // slack for the conversions that straddle the end
        preset_spec(self.device, self.workload, length + 2.0, source).compile(self.seed)
    }

    pub fn sensor(&self, seed: u64) -> Result<SensorModel> {
        SensorModel::new(self.sensor_config(), ConversionTimingModel::default(), self.front_end(), seed)
    }

    pub fn options(&self) -> MeasurementOptions {
        let mut opts = MeasurementOptions::new(self.driver, self.speed, self.trigger());
        opts.seed = self.seed;
        opts
    }

    fn describe(&self, report: ExperimentReport) -> ExperimentReport {
        let trigger = match self.trigger() {
            TriggerSpec::Duration(s) => format!("duration:{s}"),
            TriggerSpec::SampleCount(n) => format!("count:{n}"),
            TriggerSpec::ExternalEdges(e) => format!("edges:{}", e.len()),
        };
        report
            .with("device", self.device)
            .with("workload", self.workload.index())
            .with("res", self.resolution.bits())
            .with("driver", self.driver.driver)
            .with("speed", self.speed.khz())
            .with("supply", self.supply.volts())
            .with("board", self.board)
            .with("source", if self.battery { "battery" } else { "supply" })
            .with("trigger", trigger)
            .with("seed", self.seed)
            .with(
                "calibration",
                match &self.calibration {
                    Some(c) if c.current.curvature() != 0.0 => "quadratic",
                    Some(_) => "linear",
                    None => "none",
                },
            )
    }
}

pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub outcome: MeasurementOutcome,
    pub profile: LoadProfile,
}

/// One pipeline run on a preset, scored against the reference meter over
/// the same trigger windows.
pub fn run_experiment(cfg: &ExperimentConfig, sink: &mut dyn SampleSink) -> Result<ExperimentRun> {
    let profile = cfg.profile()?;
    let mut sensor = cfg.sensor(cfg.seed)?;
    let mut opts = cfg.options();
    opts.modes = profile.modes().to_vec();
    opts.mode_events = profile.mode_events().to_vec();
    opts.correction = cfg
        .calibration
        .map(|c| Arc::new(c) as Arc<dyn crate::sampler::SampleCorrection>);
    let outcome = run_measurement(&mut sensor, &profile, &opts, sink)?;
    if outcome.trace.samples.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let windows: Vec<(f64, f64)> = outcome
        .trace
        .effective_windows()
        .iter()
        .map(|&(a, b)| (a as f64 * 1e-9, b as f64 * 1e-9))
        .collect();
    let reference = ReferenceMeter::default().energy(&profile, &windows);
    let report = ExperimentReport::new(
        outcome.energy,
        reference,
        outcome.naive_energy,
        outcome.trace.samples.len() as u64,
    )?;
    Ok(ExperimentRun { report: cfg.describe(report), outcome, profile })
}

/// Sweeps the programmable load through this configuration's sensor and
/// board and fits a curve to the pairs.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<(CalibrationCurve, SweepResult)> {
    let setup = SweepSetup::new(Source::Supply { volts: 5.0 });
    let full_scale = cfg.sensor_config().full_scale_current();
    let top = CALIBRATION_MAX_CURRENT.min(CALIBRATION_HEADROOM * full_scale);
    let program = LoadProgram::staircase(&setup.load, top, CALIBRATION_DWELL_NS)?;
    let mut sensor = cfg.sensor(cfg.seed ^ CALIBRATION_SEED_SALT)?;
    let mut opts = cfg.options();
    opts.seed = cfg.seed ^ CALIBRATION_SEED_SALT;
    let sweep = run_calibration_sweep(&program, &setup, &mut sensor, &opts)?;
    let curve = CalibrationCurve::fit(&sweep.pairs, &FitOptions::default())?;
    Ok((curve, sweep))
}

/// `runs` experiments with consecutive seeds.
pub fn repeat_experiment(cfg: &ExperimentConfig, runs: usize) -> Result<Vec<ExperimentReport>> {
    (0..runs as u64)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(k);
            run_experiment(&c, &mut NullSink).map(|r| r.report)
        })
        .collect()
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
