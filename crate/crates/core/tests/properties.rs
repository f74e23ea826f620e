use proptest::prelude::*;

use shuntmeter::analysis::{ecdf, ExperimentReport};
use shuntmeter::buffer_io::{format_flush_log, parse_flush_log, FlushEntry, OverheadModel, RingBuffer, TraceFile, TraceRecord};
use shuntmeter::bus_timing::{BusSpeed, Driver, DriverProfiles};
use shuntmeter::calibration::{CalibrationCurve, CurrentFit, LoadProgram, LoadStep, ProgrammableLoad};
use shuntmeter::sampler::{
    naive_energy, parse_mode_events, parse_trigger_edges, trapezoid_energy, EnergyAccumulator, Sample, Trace,
    TraceHeader,
};
use shuntmeter::workload::ProfileSpec;
use shuntmeter::sensor::{BusRange, PgaDivider, Resolution, SensorConfig, SupplyVoltage};

fn header() -> impl Strategy<Value = TraceHeader> {
    (
        0.001f64..10.0,
        prop::sample::select(vec![PgaDivider::Div1, PgaDivider::Div2, PgaDivider::Div4, PgaDivider::Div8]),
        prop::bool::ANY,
        prop::bool::ANY,
        prop::bool::ANY,
        prop::bool::ANY,
        prop::sample::select(BusSpeed::ALL.to_vec()),
        any::<u64>(),
    )
        .prop_map(|(r, div, nine, wide, low, linux, speed, clock)| TraceHeader {
            config: SensorConfig {
                shunt_resistance: r,
                pga_divider: div,
                resolution: if nine { Resolution::Bits9 } else { Resolution::Bits12 },
                bus_range: if wide { BusRange::V32 } else { BusRange::V16 },
                supply: if low { SupplyVoltage::V3_3 } else { SupplyVoltage::V5 },
            },
            driver: if linux { Driver::Linux } else { Driver::Bcm },
            speed,
            start_wall_clock_ns: clock,
        })
}

fn record() -> impl Strategy<Value = TraceRecord> {
    prop_oneof![
        9 => (any::<u64>(), any::<i32>(), any::<i32>())
            .prop_map(|(timestamp, bus_voltage, current)| TraceRecord { timestamp, bus_voltage, current }),
        1 => any::<u32>().prop_map(TraceRecord::gap),
    ]
}

/// Strictly increasing timestamps with bounded steps.
fn samples(max: usize) -> impl Strategy<Value = Vec<Sample>> {
    prop::collection::vec((1u64..5_000_000, 0.0f64..6.0, 0.0f64..2.0), 2..max).prop_map(|steps| {
        let mut t = 0;
        steps
            .into_iter()
            .map(|(dt, v, i)| {
                t += dt;
                Sample::new(t, v, i)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn trace_file_round_trip(header in header(), records in prop::collection::vec(record(), 0..32)) {
        let file = TraceFile { header, records };
        let bytes = file.encode();
        let back = TraceFile::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.encode(), bytes);
    }
}

proptest! {
    #[test]
    fn energy_is_additive_over_a_split(s in samples(60), cut in 0usize..60) {
        let cut = 1 + cut % (s.len() - 1);
        let whole = trapezoid_energy(&s).unwrap();
        let left = trapezoid_energy(&s[..=cut]).unwrap();
        let right = trapezoid_energy(&s[cut..]).unwrap();
        prop_assert!((whole - (left + right)).abs() <= 1e-9 * whole.abs().max(1e-12));
    }

    #[test]
    fn trapezoid_exact_on_linear_power(a in 0.0f64..5.0, b in -0.5f64..0.5, s in samples(40)) {
        // p(t) = a + b t with volts fixed at 1, kept non-negative
        let t_end = s.last().unwrap().timestamp as f64 * 1e-9;
        let b = if a + b * t_end < 0.0 { 0.0 } else { b };
        let linear: Vec<Sample> = s
            .iter()
            .map(|x| {
                let t = x.timestamp as f64 * 1e-9;
                Sample::new(x.timestamp, 1.0, a + b * t)
            })
            .collect();
        let t0 = linear[0].timestamp as f64 * 1e-9;
        let exact = a * (t_end - t0) + 0.5 * b * (t_end * t_end - t0 * t0);
        let got = trapezoid_energy(&linear).unwrap();
        prop_assert!((got - exact).abs() <= 1e-9 * exact.abs().max(1e-9), "{} vs {}", got, exact);
    }

    #[test]
    fn energy_only_counts_samples_inside_windows(s in samples(60), lo in 0.0f64..1.0, width in 0.0f64..1.0) {
        let end = s.last().unwrap().timestamp;
        let a = (lo * end as f64) as u64;
        let b = a + (width * (end - a) as f64) as u64;
        let mut trace = Trace::from_samples(s.clone());
        trace.windows = vec![(a, b)];
        let inside: Vec<Sample> = s.iter().filter(|x| x.timestamp >= a && x.timestamp <= b).copied().collect();
        let expect = if inside.len() < 2 { 0.0 } else { trapezoid_energy(&inside).unwrap() };
        let got = naive_energy(&trace).unwrap();
        prop_assert!((got - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn accumulator_rejects_time_going_backwards(s in samples(10)) {
        let mut acc = EnergyAccumulator::new();
        for x in &s {
            acc.push(x).unwrap();
        }
        let stale = Sample::new(s[0].timestamp, 1.0, 1.0);
        prop_assert!(acc.push(&stale).is_err());
    }

    #[test]
    fn shunt_quantization_round_trip(
        div in prop::sample::select(vec![PgaDivider::Div1, PgaDivider::Div2, PgaDivider::Div4, PgaDivider::Div8]),
        nine in prop::bool::ANY,
        frac in -1.0f64..1.0,
    ) {
        let cfg = SensorConfig {
            pga_divider: div,
            resolution: if nine { Resolution::Bits9 } else { Resolution::Bits12 },
            ..SensorConfig::default()
        };
        let current = frac * cfg.full_scale_current();
        let q = cfg.quantize_shunt(current);
        prop_assert!(!q.saturated);
        let back = cfg.dequantize_shunt(q.count);
        prop_assert!((back - current).abs() <= cfg.current_lsb() / 2.0 + 1e-15);
        prop_assert_eq!(cfg.quantize_shunt(back).count, q.count);
    }

    #[test]
    fn bus_quantization_round_trip(nine in prop::bool::ANY, v in 0.0f64..16.0) {
        let cfg = SensorConfig {
            resolution: if nine { Resolution::Bits9 } else { Resolution::Bits12 },
            ..SensorConfig::default()
        };
        let q = cfg.quantize_bus(v);
        prop_assert!((cfg.dequantize_bus(q.count) - v).abs() <= cfg.bus_lsb() / 2.0 + 1e-12);
    }

    #[test]
    fn calibration_inverse_is_exact(a in 0.9f64..1.1, b in -0.05f64..0.05, frac in 0.0f64..1.0) {
        let curve = CalibrationCurve {
            current: CurrentFit::Quadratic { a, b },
            voltage_offset: 0.027,
            rmse: 0.0,
            r_squared: 1.0,
            voltage_rmse: 0.0,
            current_range: 0.8,
            voltage_range: 5.0,
        };
        let truth = frac * 0.8;
        let got = curve.apply(curve.current.forward(truth));
        prop_assert!(!got.extrapolated || truth == 0.8);
        prop_assert!((got.value - truth).abs() <= 1e-9 * truth.max(1e-3));
    }

    #[test]
    fn settling_instants_sit_inside_their_dwell(dwells in prop::collection::vec(2u64..1_000_000_000, 1..20)) {
        let program = LoadProgram {
            steps: dwells.iter().map(|&d| LoadStep { code: 0, mask: 0, dwell: d }).collect(),
        };
        let mut start = 0;
        for (instant, d) in program.settling_instants().into_iter().zip(&dwells) {
            prop_assert!(instant > start && instant < start + d);
            start += d;
        }
        prop_assert_eq!(LoadProgram::parse(&program.to_text()).unwrap(), program);
    }

    #[test]
    fn branch_current_adds_exactly(mask in 0u16..(1 << 13), j in 0usize..13) {
        let load = ProgrammableLoad::default();
        let without = mask & !(1 << j);
        let with = without | (1 << j);
        let step = load.max_current(with).unwrap() - load.max_current(without).unwrap();
        prop_assert!((step - load.switches.branch_current(j)).abs() < 1e-12);
    }

    #[test]
    fn schedule_equals_closed_form(
        p_b in 0.1f64..5.0,
        extra in 0.0f64..3.0,
        w_exp in 4.0f64..9.0,
        rate in 10.0f64..10_000.0,
        lb in 1usize..100_000,
    ) {
        let m = OverheadModel::new(p_b, p_b + extra, 10f64.powf(w_exp), rate, lb);
        match (m.schedule_power(), m.closed_form_power()) {
            (Ok(x), Ok(y)) => prop_assert!(((x - y) / y).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "disagree on sustainability: {:?}", other),
        }
    }

    #[test]
    fn ring_buffer_conserves_samples(ops in prop::collection::vec(0u8..4, 1..400), cap in 1usize..16) {
        let mut ring = RingBuffer::new(cap).unwrap();
        let mut pushed = 0u64;
        let mut out = Vec::new();
        for op in ops {
            if op == 0 {
                out.extend(ring.pop());
            } else {
                ring.push(TraceRecord { timestamp: pushed, bus_voltage: 0, current: 0 });
                pushed += 1;
            }
        }
        while let Some(r) = ring.pop() {
            out.push(r);
        }
        let kept: Vec<u64> = out.iter().filter(|r| !r.is_gap()).map(|r| r.timestamp).collect();
        let lost: u64 = out.iter().filter_map(|r| r.dropped()).map(u64::from).sum();
        prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(kept.len() as u64 + lost, pushed);
    }

    #[test]
    fn ecdf_matches_counting(values in prop::collection::vec(0u32..50, 1..200)) {
        let xs: Vec<f64> = values.iter().map(|&v| f64::from(v) * 1e-3).collect();
        let points = ecdf(&xs).unwrap();
        for (x, p) in &points {
            let below = xs.iter().filter(|v| *v <= x).count();
            prop_assert_eq!(*p, below as f64 / xs.len() as f64);
        }
        prop_assert_eq!(points.last().unwrap().1, 1.0);
    }

    #[test]
    fn text_parsers_never_panic(text in "\\PC{0,200}") {
        let _ = parse_trigger_edges(&text);
        let _ = parse_mode_events(&text);
        let _ = LoadProgram::parse(&text);
        let _ = CalibrationCurve::parse(&text);
        let _ = ProfileSpec::parse(&text);
        let _ = DriverProfiles::parse(&text);
        let _ = ExperimentReport::parse(&text);
        let _ = parse_flush_log(&text);
    }

    #[test]
    fn flush_log_round_trip(steps in prop::collection::vec((0u64..1_000_000_000, 0usize..100_000), 0..50)) {
        let mut t = 0;
        let entries: Vec<FlushEntry> = steps
            .into_iter()
            .map(|(dt, records)| {
                t += dt;
                FlushEntry { timestamp: t, records }
            })
            .collect();
        prop_assert_eq!(parse_flush_log(&format_flush_log(&entries)).unwrap(), entries);
    }

    #[test]
    fn report_round_trip(
        reference in 1e-6f64..1e4,
        rel in -0.2f64..0.2,
        naive in 0.0f64..1e4,
        samples in any::<u64>(),
        overruns in any::<u64>(),
        settings in prop::collection::btree_map("[a-z_][a-z0-9_.-]{0,12}", "[ -~]{0,20}", 0..8),
    ) {
        let mut report = ExperimentReport::new(reference * (1.0 + rel), reference, naive, samples).unwrap();
        report.overrun_count = overruns;
        for (k, v) in &settings {
            report = report.with(k, v.trim());
        }
        prop_assert_eq!(ExperimentReport::parse(&report.to_text()).unwrap(), report);
    }
}
