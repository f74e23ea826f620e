//! One pass/fail line per acceptance criterion. Runs as a plain binary so the
//! lines are always printed; exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shuntmeter::analysis::{calibrate, median, repeat_experiment, run_experiment, voltage_effect, ExperimentConfig};
use shuntmeter::buffer_io::{OverheadModel, TraceFile, TraceRecord};
use shuntmeter::bus_timing::{BusSpeed, Driver, DriverProfile};
use shuntmeter::calibration::{
    CalibrationCurve, CurrentFit, FitOptions, LoadProgram, MeasurementPair, PotentiometerModel, ProgrammableLoad,
};
use shuntmeter::sampler::{
    run_measurement, trapezoid_energy, MeasurementOptions, NullSink, Sample, TraceHeader, TriggerSpec,
};
use shuntmeter::sensor::{BusRange, PgaDivider, Resolution, SensorConfig, SensorModel, SupplyVoltage};
use shuntmeter::workload::{Device, LoadProfile, Source, Workload};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn trapezoid() -> Verdict {
    let start = Instant::now();
    // p(t) = 1 + 0.5 sin(2 pi t) W at 1 V; 10 whole periods integrate to 10 J
    let samples: Vec<Sample> = (0..=10_000u64)
        .map(|k| {
            let t = k as f64 * 1e-3;
            Sample::new(k * 1_000_000, 1.0, 1.0 + 0.5 * (2.0 * PI * t).sin())
        })
        .collect();
    let sine = trapezoid_energy(&samples).unwrap();
    let sine_err = rel(sine, 10.0);

    // ramp up, hold, ramp down, sampled only at the breakpoints
    let knots = [(0u64, 0.0), (2_000_000_000, 4.0), (5_000_000_000, 4.0), (6_000_000_000, 1.0)];
    let samples: Vec<Sample> = knots.iter().map(|&(t, p)| Sample::new(t, 2.0, p / 2.0)).collect();
    let exact = 0.5 * 2.0 * 4.0 + 3.0 * 4.0 + 0.5 * (4.0 + 1.0) * 1.0;
    let linear_err = rel(trapezoid_energy(&samples).unwrap(), exact);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        sine_err < 1e-3 && linear_err < 1e-12 && secs < 1.0,
        format!("sine rel err {sine_err:.2e} (< 1e-3), piecewise-linear rel err {linear_err:.1e}, {secs:.3}s"),
    )
}

fn overhead_equations() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 100_000 {
        let p_b = rng.gen_range(0.1..5.0);
        let m = OverheadModel::new(
            p_b,
            p_b + rng.gen_range(0.0..3.0),
            10f64.powf(rng.gen_range(4.0..9.0)),
            rng.gen_range(10.0..10_000.0),
            rng.gen_range(1..100_000),
        );
        let (Ok(a), Ok(b)) = (m.schedule_power(), m.closed_form_power()) else { continue };
        worst = worst.max(rel(a, b));
        checked += 1;
    }
    let mut sim_worst = 0.0f64;
    for lb in [64, 1024, 65536] {
        let m = OverheadModel::new(1.26, 1.5, 256_000.0, 1000.0, lb);
        let sim = m.simulate(200).unwrap();
        sim_worst = sim_worst.max(rel(sim.average_power, m.closed_form_power().unwrap()));
    }
    let degenerate = [(1e6, 1000.0), (5e7, 3000.0)].iter().all(|&(w, r)| {
        let m = OverheadModel::new(1.26, 1.26, w, r, 1024);
        m.schedule_power().unwrap() == 1.26 && m.closed_form_power().unwrap() == 1.26
    });
    verdict(
        worst < 1e-12 && sim_worst < 0.01 && degenerate,
        format!("max rel diff {worst:.1e} over 1e5 sets, simulation within {:.3}%, degenerate exact: {degenerate}", sim_worst * 100.0),
    )
}

fn polling_table() -> Verdict {
    const SPEEDS: [BusSpeed; 4] = [BusSpeed::K2500, BusSpeed::K800, BusSpeed::K500, BusSpeed::K200];
    let table: [(Resolution, Driver, [u32; 4]); 4] = [
        (Resolution::Bits12, Driver::Bcm, [45, 15, 9, 3]),
        (Resolution::Bits12, Driver::Linux, [23, 9, 6, 2]),
        (Resolution::Bits9, Driver::Bcm, [9, 2, 1, 1]),
        (Resolution::Bits9, Driver::Linux, [4, 1, 1, 1]),
    ];
    let run = |res: Resolution, driver: Driver, speed: BusSpeed| {
        let config = SensorConfig { resolution: res, ..SensorConfig::default() };
        let mut sensor = SensorModel::ideal(config).unwrap();
        let profile = if driver == Driver::Bcm { DriverProfile::bcm() } else { DriverProfile::linux() };
        let opts = MeasurementOptions::new(profile, speed, TriggerSpec::Duration(2.0));
        let load = LoadProfile::constant(Source::Supply { volts: 5.0 }, 0.05, 3.0);
        let out = run_measurement(&mut sensor, &load, &opts, &mut NullSink).unwrap();
        (out.polls as f64 / out.trace.samples.len() as f64, out.samples_per_second())
    };
    let mut misses = Vec::new();
    for (res, driver, row) in table {
        for (speed, want) in SPEEDS.iter().zip(row) {
            let (polls, _) = run(res, driver, *speed);
            if (polls.round() - f64::from(want)).abs() > 1.0 {
                misses.push(format!("{}-bit {driver} {} kHz: {polls:.1} vs {want}", res.bits(), speed.khz()));
            }
        }
    }
    let (_, bcm9) = run(Resolution::Bits9, Driver::Bcm, BusSpeed::K500);
    let (_, linux9) = run(Resolution::Bits9, Driver::Linux, BusSpeed::K500);
    let (_, bcm12) = run(Resolution::Bits12, Driver::Bcm, BusSpeed::K2500);
    let rates = rel(bcm9, 4350.0) <= 0.10 && rel(linux9, 3360.0) <= 0.10 && (900.0..=1100.0).contains(&bcm12);
    verdict(
        misses.is_empty() && rates,
        format!(
            "{} of 16 cells within 1 poll {misses:?}; 9-bit bcm {bcm9:.0} sps, 9-bit linux {linux9:.0} sps, 12-bit bcm {bcm12:.0} sps",
            16 - misses.len()
        ),
    )
}

fn synthetic_pairs(f: impl Fn(f64) -> f64, seed: u64) -> Vec<MeasurementPair> {
    let load = ProgrammableLoad::default();
    let program = LoadProgram::staircase(&load, 0.8, 20_000_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let current_noise = Normal::new(0.0, 100e-6).unwrap();
    let voltage_noise = Normal::new(0.0, 1e-3).unwrap();
    program
        .currents(&load)
        .unwrap()
        .into_iter()
        .map(|i| MeasurementPair {
            reference_current: i,
            device_current: f(i) + current_noise.sample(&mut rng),
            reference_voltage: 5.0,
            device_voltage: 5.0 - 0.027 + voltage_noise.sample(&mut rng),
        })
        .collect()
}

fn calibration_recovery() -> Verdict {
    let start = Instant::now();
    let lin = CalibrationCurve::fit(&synthetic_pairs(|i| 0.9956 * i, 4), &FitOptions::default()).unwrap();
    let quad = CalibrationCurve::fit(&synthetic_pairs(|i| 0.0074 * i * i + 0.982 * i, 5), &FitOptions::default()).unwrap();
    let lin_ok = matches!(lin.current, CurrentFit::Linear { .. }) && (lin.current.slope() - 0.9956).abs() <= 0.001;
    let (qa, qb) = (quad.current.slope(), quad.current.curvature());
    let quad_ok = matches!(quad.current, CurrentFit::Quadratic { .. }) && rel(qa, 0.982) <= 0.05 && rel(qb, 0.0074) <= 0.05;
    let r2 = lin.r_squared.min(quad.r_squared);
    let offset = (lin.voltage_offset - 0.027).abs().max((quad.voltage_offset - 0.027).abs());
    let secs = start.elapsed().as_secs_f64();
    verdict(
        lin_ok && quad_ok && r2 >= 0.999 && offset <= 1e-3 && secs < 5.0,
        format!(
            "a = {:.5}; quadratic ({qb:.5}, {qa:.5}); min R² {r2:.6}; offset error {:.2} mV; {secs:.2}s",
            lin.current.slope(),
            offset * 1e3
        ),
    )
}

struct Medians {
    twelve: f64,
    nine: f64,
    naive: f64,
}

fn preset_medians(device: Device) -> Medians {
    let mut twelve = ExperimentConfig::new(device, Workload::W1);
    twelve.calibration = Some(calibrate(&twelve).unwrap().0);
    let runs = repeat_experiment(&twelve, 10).unwrap();
    let mut nine = ExperimentConfig::new(device, Workload::W1);
    nine.resolution = Resolution::Bits9;
    nine.calibration = Some(calibrate(&nine).unwrap().0);
    let nine_runs = repeat_experiment(&nine, 10).unwrap();
    let pick = |r: &[shuntmeter::analysis::ExperimentReport], naive: bool| {
        let v: Vec<f64> = r.iter().map(|x| if naive { x.naive_error_percent() } else { x.error_percent }).collect();
        median(&v).unwrap()
    };
    Medians { twelve: pick(&runs, false), nine: pick(&nine_runs, false), naive: pick(&runs, true) }
}

fn end_to_end(all: &[(Device, Medians)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, m) in all {
        let bound = if d.is_low_power() { 3.5 } else { 2.5 };
        ok &= m.twelve <= bound;
        parts.push(format!("{d} {:.3}%", m.twelve));
    }
    let (_, cc) = all.iter().find(|(d, _)| d.is_low_power()).unwrap();
    let margin = cc.naive - cc.twelve;
    ok &= margin > 0.0;
    verdict(ok, format!("medians {}; cc2650 hybrid beats naive by {margin:.4} pp", parts.join(", ")))
}

fn voltage_neglect() -> Verdict {
    let delta = |battery: bool, workload: Workload| {
        let mut cfg = ExperimentConfig::new(Device::Cyw43907, workload);
        cfg.battery = battery;
        let run = run_experiment(&cfg, &mut NullSink).unwrap();
        voltage_effect(&run.outcome.trace).unwrap().delta_percent
    };
    let battery = Workload::ALL.iter().map(|w| delta(true, *w)).fold(0.0, f64::max);
    let supply = Workload::ALL.iter().map(|w| delta(false, *w)).fold(0.0, f64::max);
    verdict(
        battery > 0.2 && battery <= 0.5 && supply < 0.05,
        format!("cyw43907 battery up to {battery:.3}% (0.2, 0.5], supply up to {supply:.4}% (< 0.05)"),
    )
}

fn resolution_tradeoff(all: &[(Device, Medians)]) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (d, m) in all {
        let gap = m.nine - m.twelve;
        if d.is_low_power() {
            ok &= m.nine >= m.twelve;
        } else {
            ok &= gap.abs() <= 0.5;
        }
        parts.push(format!("{d} {:+.3} pp", gap));
    }
    verdict(ok, format!("9-bit minus 12-bit median error: {}", parts.join(", ")))
}

fn random_header(rng: &mut ChaCha8Rng) -> TraceHeader {
    let dividers = [PgaDivider::Div1, PgaDivider::Div2, PgaDivider::Div4, PgaDivider::Div8];
    let speeds = [BusSpeed::K200, BusSpeed::K500, BusSpeed::K800, BusSpeed::K2500];
    TraceHeader {
        config: SensorConfig {
            shunt_resistance: rng.gen_range(0.001..10.0),
            pga_divider: dividers[rng.gen_range(0..4)],
            resolution: if rng.gen() { Resolution::Bits9 } else { Resolution::Bits12 },
            bus_range: if rng.gen() { BusRange::V16 } else { BusRange::V32 },
            supply: if rng.gen() { SupplyVoltage::V3_3 } else { SupplyVoltage::V5 },
        },
        driver: if rng.gen() { Driver::Bcm } else { Driver::Linux },
        speed: speeds[rng.gen_range(0..4)],
        start_wall_clock_ns: rng.gen(),
    }
}

fn format_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(0..40);
        let records = (0..n)
            .map(|_| {
                if rng.gen_ratio(1, 20) {
                    TraceRecord::gap(rng.gen())
                } else {
                    TraceRecord { timestamp: rng.gen(), bus_voltage: rng.gen(), current: rng.gen() }
                }
            })
            .collect();
        let file = TraceFile { header: random_header(&mut rng), records };
        let bytes = file.encode();
        match TraceFile::decode(&bytes) {
            Ok(back) if back == file && back.encode() == bytes => {}
            _ => failures += 1,
        }
    }
    let golden: [u8; 16] = [0x00, 0x2f, 0x68, 0x59, 0, 0, 0, 0, 0x40, 0x4b, 0x4c, 0x00, 0x10, 0x27, 0, 0];
    let record = TraceRecord::from_sample(&Sample::new(1_500_000_000, 5.0, 0.010));
    let golden_ok = record.encode() == golden && TraceRecord::decode(&golden) == record;
    verdict(
        failures == 0 && golden_ok,
        format!("{failures} of 10000 random traces failed; golden record matches: {golden_ok}"),
    )
}

fn load_constants() -> Verdict {
    let pot = PotentiometerModel::default();
    // resolution between adjacent codes, evaluated directly from R(x) = x/256·R_max + R_w
    let r = |x: u32| f64::from(x) / 256.0 * pot.max_resistance + pot.wiper_resistance;
    let finest = (1..=256)
        .map(|x| (r(x) - r(x - 1)) / (r(x) * r(x - 1)) * pot.input_voltage)
        .fold(f64::INFINITY, f64::min);
    let minimum = pot.input_voltage / r(256);
    let load = ProgrammableLoad::default();
    let mut exact = true;
    let mut mask = 0u16;
    for j in 0..load.switches.branches.len() {
        let before = load.max_current(mask).unwrap();
        mask |= 1 << j;
        let step = load.max_current(mask).unwrap() - before;
        exact &= rel(step, 5.0 / load.switches.branches[j]) < 1e-12;
    }
    let total = load.max_current(mask).unwrap();
    verdict(
        (finest * 1e6 - 1.82).abs() < 0.005 && (minimum * 1e3 - 0.476).abs() < 0.0005 && exact && total <= 1.0,
        format!(
            "finest step {:.4} µA, minimum {:.4} mA (R_w {:.2} Ω), branch additivity exact: {exact}, total {:.1} mA",
            finest * 1e6,
            minimum * 1e3,
            pot.wiper_resistance,
            total * 1e3
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let medians: Vec<(Device, Medians)> = Device::ALL.iter().map(|&d| (d, preset_medians(d))).collect();
    let results = [
        ("1 trapezoid correctness", trapezoid()),
        ("2 overhead equations agree", overhead_equations()),
        ("3 polling table and throughput", polling_table()),
        ("4 calibration recovery", calibration_recovery()),
        ("5 end-to-end accuracy", end_to_end(&medians)),
        ("6 voltage neglect", voltage_neglect()),
        ("7 9-bit vs 12-bit", resolution_tradeoff(&medians)),
        ("8 trace format round trip", format_round_trip()),
        ("9 load model constants", load_constants()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("[{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed ({:.1}s)", results.len() - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

