use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use shuntmeter::analysis::{
    calibrate, ecdf, ecdf_csv, run_experiment, voltage_effect, Board, ExperimentConfig, DEFAULT_EXPERIMENT_S,
};
use shuntmeter::buffer_io::{
    format_flush_log, Backpressure, BufferPolicy, OverheadModel, TraceFile, TraceWriter, BITS_PER_SAMPLE,
};
use shuntmeter::bus_timing::{BusSpeed, Driver, DriverProfiles};
use shuntmeter::calibration::CalibrationCurve;
use shuntmeter::sampler::{parse_trigger_edges, NullSink, Trace, TraceHeader, TriggerSpec};
use shuntmeter::sensor::{Resolution, SupplyVoltage};
use shuntmeter::workload::{Device, Workload};

#[derive(Parser)]
#[command(name = "shuntmeter", version, about = "Simulated shunt-monitor energy measurement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure a device preset and score it against the reference meter.
    Sample(SampleArgs),
    /// Sweep the programmable load and fit a calibration curve.
    Calibrate(CalibrateArgs),
    /// Empirical CDF of the current in a trace.
    Ecdf(EcdfArgs),
    /// Energy with per-sample voltage against energy with mean voltage.
    VoltageEffect(VoltageArgs),
    /// Host power spent on buffering and writing samples.
    Overhead(OverheadArgs),
    /// Convert a binary trace to CSV.
    ExportCsv(ExportArgs),
}

#[derive(Args, Clone)]
struct SetupArgs {
    /// cc2650, bcm4343w, cyw43907, rpizw or rpi3
    #[arg(long, default_value = "cc2650")]
    preset: Device,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=4))]
    workload: u32,
    /// ADC resolution, 9 or 12 bits
    #[arg(long, default_value_t = 12)]
    res: u32,
    /// bcm or linux
    #[arg(long, default_value = "bcm")]
    driver: Driver,
    /// Bus speed in kHz: 200, 500, 800 or 2500
    #[arg(long, default_value_t = 2500)]
    speed: u32,
    /// Sensor supply rail, 3.3 or 5
    #[arg(long, default_value_t = 5.0)]
    supply: f64,
    /// shield, breakout or ideal
    #[arg(long, default_value = "shield")]
    board: Board,
    /// Power the device from a battery instead of a bench supply.
    #[arg(long)]
    battery: bool,
    /// Driver delay table (`driver.speed = us` lines) replacing the defaults.
    #[arg(long, value_name = "FILE")]
    driver_profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SetupArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let profiles = match &self.driver_profiles {
            Some(p) => DriverProfiles::parse(&read_text(p)?).with_context(|| format!("reading {}", p.display()))?,
            None => DriverProfiles::default(),
        };
        let mut cfg = ExperimentConfig::new(self.preset, Workload::from_index(self.workload)?);
        cfg.resolution = Resolution::from_bits(self.res)?;
        cfg.driver = *profiles.get(self.driver);
        cfg.speed = BusSpeed::from_khz(self.speed)?;
        cfg.supply = SupplyVoltage::from_volts(self.supply)?;
        cfg.board = self.board;
        cfg.battery = self.battery;
        cfg.seed = self.seed;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    setup: SetupArgs,
    /// duration:<s>, count:<n> or edges:<file>
    #[arg(long, conflicts_with = "duration")]
    trigger: Option<String>,
    /// Seconds to measure; shorthand for --trigger duration:<s>
    #[arg(long)]
    duration: Option<f64>,
    /// two[:N] or circular[:N]
    #[arg(long, default_value = "two")]
    buffering: BufferPolicy,
    /// Calibration curve to apply.
    #[arg(long, value_name = "FILE")]
    calib: Option<PathBuf>,
    /// Trace file; the report and flush log are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    setup: SetupArgs,
    /// Curve file to write; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the measurement pairs as CSV.
    #[arg(long, value_name = "FILE")]
    pairs: Option<PathBuf>,
}

#[derive(Args)]
struct EcdfArgs {
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a gnuplot script plotting the CSV.
    #[arg(long, value_name = "FILE", requires = "out")]
    gnuplot: Option<PathBuf>,
}

#[derive(Args)]
struct VoltageArgs {
    /// Trace file; without it a preset is simulated.
    trace: Option<PathBuf>,
    #[command(flatten)]
    setup: SetupArgs,
    /// Seconds to simulate when no trace is given.
    #[arg(long, default_value_t = DEFAULT_EXPERIMENT_S)]
    duration: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OverheadArgs {
    /// Watts while only buffering.
    #[arg(long)]
    buffering_power: f64,
    /// Watts while buffering and writing.
    #[arg(long)]
    writing_power: f64,
    /// Bits per second.
    #[arg(long)]
    write_speed: f64,
    /// Samples per second.
    #[arg(long)]
    sample_rate: f64,
    #[arg(long, default_value_t = BITS_PER_SAMPLE)]
    bits_per_sample: f64,
    /// Samples per buffer.
    #[arg(long, default_value_t = 1024)]
    buffer_samples: usize,
    /// Buffer periods to simulate.
    #[arg(long, default_value_t = 1000)]
    periods: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => match io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_trace(path: &Path) -> Result<TraceFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    TraceFile::decode(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn parse_trigger(arg: &str) -> Result<TriggerSpec> {
    let Some((kind, value)) = arg.split_once(':') else {
        bail!("trigger must be duration:<s>, count:<n> or edges:<file>");
    };
    let spec = match kind {
        "duration" => TriggerSpec::Duration(value.parse().context("trigger duration")?),
        "count" => TriggerSpec::SampleCount(value.parse().context("trigger count")?),
        "edges" => TriggerSpec::ExternalEdges(
            parse_trigger_edges(&read_text(Path::new(value))?).with_context(|| format!("parsing {value}"))?,
        ),
        other => bail!("unknown trigger kind `{other}`"),
    };
    spec.validate()?;
    Ok(spec)
}

fn cmd_sample(args: &SampleArgs) -> Result<()> {
    let mut cfg = args.setup.config()?;
    let trigger = match (&args.trigger, args.duration) {
        (Some(t), _) => parse_trigger(t)?,
        (None, Some(d)) => TriggerSpec::Duration(d),
        (None, None) => TriggerSpec::Duration(DEFAULT_EXPERIMENT_S),
    };
    trigger.validate()?;
    cfg.duration_s = match &trigger {
        TriggerSpec::Duration(d) => *d,
        _ => DEFAULT_EXPERIMENT_S,
    };
    cfg.trigger = Some(trigger);
    if let Some(p) = &args.calib {
        let curve = CalibrationCurve::parse(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?;
        cfg.calibration = Some(curve);
    }

    let (run, overruns) = match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let header = TraceHeader {
                config: cfg.sensor_config(),
                driver: cfg.driver.driver,
                speed: cfg.speed,
                start_wall_clock_ns: 0,
            };
            // offline replay outruns any real sensor, so wait for the writer
            let mut writer = TraceWriter::new(BufWriter::new(file), &header, args.buffering, Backpressure::Wait)?;
            let run = run_experiment(&cfg, &mut writer)?;
            let written = writer.finish()?;
            written.inner.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            fs::write(with_suffix(path, ".flush"), format_flush_log(&written.flush_log))?;
            (run, written.overruns)
        }
        None => (run_experiment(&cfg, &mut NullSink)?, 0),
    };
    let mut report = run.report.with("buffering", buffering_name(args.buffering));
    report.overrun_count = overruns;
    if let Some(path) = &args.out {
        fs::write(with_suffix(path, ".report"), report.to_text())?;
    }

    println!("device           {}", cfg.device);
    println!("workload         {}", cfg.workload.index());
    println!("samples          {} ({:.0} per second)", report.sample_count, run.outcome.samples_per_second());
    println!("energy           {:.6} J", report.pipeline_energy);
    println!("naive energy     {:.6} J", report.naive_energy);
    println!("reference energy {:.6} J", report.reference_energy);
    println!("error            {:.4} %", report.error_percent);
    println!("overruns         {}", report.overrun_count);
    if let Some(path) = &args.out {
        println!("trace            {}", path.display());
    }
    Ok(())
}

fn buffering_name(policy: BufferPolicy) -> String {
    match policy {
        BufferPolicy::TwoBuffer(n) => format!("two-buffer:{n}"),
        BufferPolicy::Circular(n) => format!("circular:{n}"),
    }
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let cfg = args.setup.config()?;
    let (curve, sweep) = calibrate(&cfg)?;
    for w in &sweep.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &args.pairs {
        let mut csv = String::from("reference_A,device_A,reference_V,device_V\n");
        for q in &sweep.pairs {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                q.reference_current, q.device_current, q.reference_voltage, q.device_voltage
            ));
        }
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(args.out.as_deref(), &curve.to_text())?;
    if args.out.is_some() {
        eprintln!(
            "{} pairs, a = {:.6}, b = {:.6}, offset = {:.4} V, R² = {:.6}",
            sweep.pairs.len(),
            curve.current.slope(),
            curve.current.curvature(),
            curve.voltage_offset,
            curve.r_squared
        );
    }
    Ok(())
}

fn cmd_ecdf(args: &EcdfArgs) -> Result<()> {
    let file = load_trace(&args.trace)?;
    let currents: Vec<f64> = file.samples().iter().map(|s| s.current).collect();
    let points = ecdf(&currents)?;
    emit(args.out.as_deref(), &ecdf_csv(&points))?;
    if let (Some(script), Some(csv)) = (&args.gnuplot, &args.out) {
        let text = format!(
            "set datafile separator ','\nset key off\nset xlabel 'current (A)'\nset ylabel 'cumulative probability'\n\
             plot '{}' every ::1 using 1:2 with steps\n",
            csv.display()
        );
        fs::write(script, text).with_context(|| format!("writing {}", script.display()))?;
    }
    Ok(())
}

fn cmd_voltage_effect(args: &VoltageArgs) -> Result<()> {
    let trace = match &args.trace {
        Some(p) => Trace::from_samples(load_trace(p)?.samples()),
        None => {
            let mut cfg = args.setup.config()?;
            cfg.duration_s = args.duration;
            run_experiment(&cfg, &mut NullSink)?.outcome.trace
        }
    };
    let e = voltage_effect(&trace)?;
    let text = format!(
        "per_sample_energy = {}\nmean_voltage_energy = {}\nmean_voltage = {}\ndelta_percent = {}\n",
        e.per_sample_energy, e.mean_voltage_energy, e.mean_voltage, e.delta_percent
    );
    emit(args.out.as_deref(), &text)
}

fn cmd_overhead(args: &OverheadArgs) -> Result<()> {
    let mut model = OverheadModel::new(
        args.buffering_power,
        args.writing_power,
        args.write_speed,
        args.sample_rate,
        args.buffer_samples,
    );
    model.bits_per_sample = args.bits_per_sample;
    model.validate()?;
    let sim = model.simulate(args.periods)?;
    let mut text = format!(
        "buffer_time_s = {}\nwrite_time_s = {}\n",
        model.buffer_time(),
        model.write_time()
    );
    match (model.schedule_power(), model.closed_form_power()) {
        (Ok(schedule), Ok(closed)) => {
            text.push_str(&format!("schedule_power_w = {schedule}\nclosed_form_power_w = {closed}\n"));
            text.push_str(&format!("simulated_power_w = {}\n", sim.average_power));
            text.push_str(&format!(
                "schedule_vs_closed_form = {}\nsimulated_vs_closed_form = {}\n",
                ((schedule - closed) / closed).abs(),
                ((sim.average_power - closed) / closed).abs()
            ));
            text.push_str("sustained_overrun = false\n");
        }
        _ => {
            text.push_str(&format!("simulated_power_w = {}\n", sim.average_power));
            text.push_str("sustained_overrun = true\n");
        }
    }
    text.push_str(&format!("simulated_flushes = {}\nsimulated_overruns = {}\n", sim.flushes, sim.overruns));
    emit(args.out.as_deref(), &text)
}

fn cmd_export_csv(args: &ExportArgs) -> Result<()> {
    let file = load_trace(&args.trace)?;
    emit(args.out.as_deref(), &file.to_csv())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Ecdf(a) => cmd_ecdf(a),
        Command::VoltageEffect(a) => cmd_voltage_effect(a),
        Command::Overhead(a) => cmd_overhead(a),
        Command::ExportCsv(a) => cmd_export_csv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
