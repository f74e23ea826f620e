//! Device presets reconstructed from the published current levels. Waveform
//! details (spike widths, burst rates) are plausible guesses, not
//! measurements.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sampler::PowerSaveMode;
use crate::sensor::PgaDivider;

use super::profile::{Layer, LoadProfile, ProfileSpec, Segment, SegmentKind, Source};

/// Every state lasts this long before the device moves on.
pub const STATE_DWELL_S: f64 = 0.5;
/// Generated profiles cover a 30 s experiment plus slack for the last
/// conversions.
pub const DEFAULT_PROFILE_S: f64 = 32.0;
/// Internal resistance of the battery used for the voltage-neglect runs.
pub const DEFAULT_BATTERY_RESISTANCE: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Device {
    Cc2650,
    Bcm4343w,
    Cyw43907,
    RpiZeroW,
    Rpi3,
}

impl Device {
    pub const ALL: [Device; 5] = [Device::Cc2650, Device::Bcm4343w, Device::Cyw43907, Device::RpiZeroW, Device::Rpi3];

    pub fn name(self) -> &'static str {
        match self {
            Device::Cc2650 => "cc2650",
            Device::Bcm4343w => "bcm4343w",
            Device::Cyw43907 => "cyw43907",
            Device::RpiZeroW => "rpizw",
            Device::Rpi3 => "rpi3",
        }
    }

    /// 802.15.4 radio as opposed to 802.11.
    pub fn is_low_power(self) -> bool {
        self == Device::Cc2650
    }

    pub fn supply_volts(self) -> f64 {
        if self.is_low_power() {
            3.3
        } else {
            5.0
        }
    }

    /// Divider giving the finest current step that still covers the peaks.
    pub fn divider(self) -> PgaDivider {
        if self.is_low_power() {
            PgaDivider::Div1
        } else {
            PgaDivider::Div2
        }
    }

    fn modes(self) -> Vec<PowerSaveMode> {
        if self.is_low_power() {
            vec![PowerSaveMode { mode_index: 0, constant_current: 1e-6, nominal_voltage: 3.3 }]
        } else {
            Vec::new()
        }
    }

    fn state(self, state: State) -> SegmentKind {
        let ma = |x: f64| x * 1e-3;
        let beacon = |idle: f64, peak: f64| SegmentKind::Active {
            base: ma(idle),
            layers: vec![Layer::Spikes { amplitude: ma(peak), width: 0.002, period: 0.1, phase: 0.05 }],
        };
        let bursty = |base: f64, lo: f64, hi: f64, min_w: f64, max_w: f64, rate: f64| SegmentKind::Active {
            base: ma(base),
            layers: vec![Layer::Bursts { min_level: ma(lo), max_level: ma(hi), min_width: min_w, max_width: max_w, rate }],
        };
        match (self, state) {
            (Device::Cc2650, State::Sleep) => SegmentKind::Sleep { mode: 0 },
            (Device::Cc2650, State::Encrypt) => bursty(3.26, 3.6, 4.2, 0.0005, 0.002, 80.0),
            (Device::Cc2650, State::Send) => SegmentKind::Active {
                base: ma(6.1),
                layers: vec![Layer::Spikes { amplitude: ma(30.0), width: 0.001, period: 0.003, phase: 0.0005 }],
            },
            (Device::Bcm4343w, State::Sleep) => beacon(10.0, 120.0),
            (Device::Bcm4343w, State::Encrypt) => bursty(40.0, 45.0, 60.0, 0.002, 0.01, 20.0),
            (Device::Bcm4343w, State::Send) => bursty(40.0, 150.0, 350.0, 0.001, 0.004, 60.0),
            (Device::Cyw43907, State::Sleep) => beacon(96.0, 250.0),
            (Device::Cyw43907, State::Encrypt) => bursty(140.0, 145.0, 160.0, 0.002, 0.01, 20.0),
            (Device::Cyw43907, State::Send) => bursty(140.0, 200.0, 400.0, 0.001, 0.004, 60.0),
            (Device::RpiZeroW, State::Sleep) => beacon(130.0, 180.0),
            (Device::RpiZeroW, State::Encrypt) => bursty(180.0, 185.0, 200.0, 0.002, 0.01, 20.0),
            (Device::RpiZeroW, State::Send) => bursty(180.0, 220.0, 300.0, 0.001, 0.004, 60.0),
            (Device::Rpi3, State::Sleep) => beacon(280.0, 330.0),
            (Device::Rpi3, State::Encrypt) => bursty(330.0, 340.0, 380.0, 0.002, 0.01, 20.0),
            (Device::Rpi3, State::Send) => bursty(330.0, 400.0, 500.0, 0.001, 0.004, 60.0),
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Device {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Device::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Sleep,
    Encrypt,
    Send,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Workload {
    /// Sleep, encrypt, send.
    W1,
    /// Send and sleep.
    W2,
    /// Encrypt and sleep.
    W3,
    /// Encrypt and send.
    W4,
}

impl Workload {
    pub const ALL: [Workload; 4] = [Workload::W1, Workload::W2, Workload::W3, Workload::W4];

    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(Workload::W1),
            2 => Ok(Workload::W2),
            3 => Ok(Workload::W3),
            4 => Ok(Workload::W4),
            _ => Err(Error::Config(format!("workload must be 1..4, got {i}"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Workload::W1 => 1,
            Workload::W2 => 2,
            Workload::W3 => 3,
            Workload::W4 => 4,
        }
    }

    fn cycle(self) -> &'static [State] {
        match self {
            Workload::W1 => &[State::Sleep, State::Encrypt, State::Send],
            Workload::W2 => &[State::Send, State::Sleep],
            Workload::W3 => &[State::Encrypt, State::Sleep],
            Workload::W4 => &[State::Encrypt, State::Send],
        }
    }
}

/// The state cycle of `workload` on `device`, repeated for `duration`
/// seconds. `source` defaults to a bench supply at the device voltage.
pub fn preset_spec(device: Device, workload: Workload, duration: f64, source: Option<Source>) -> ProfileSpec {
    let cycle = workload.cycle();
    let n = (duration / STATE_DWELL_S).ceil().max(1.0) as usize;
    let segments = (0..n)
        .map(|i| Segment { duration: STATE_DWELL_S, kind: device.state(cycle[i % cycle.len()]) })
        .collect();
    ProfileSpec {
        source: source.unwrap_or(Source::Supply { volts: device.supply_volts() }),
        modes: device.modes(),
        segments,
    }
}

pub fn generate_profile(device: Device, workload: Workload, seed: u64) -> LoadProfile {
    preset_spec(device, workload, DEFAULT_PROFILE_S, None)
        .compile(seed)
        .expect("presets are valid")
}

/// Battery-powered variant used to study the effect of ignoring voltage.
pub fn battery_source(device: Device) -> Source {
    Source::Battery { volts: device.supply_volts(), resistance: DEFAULT_BATTERY_RESISTANCE }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_two_is_send_and_sleep_only() {
        let spec = preset_spec(Device::Cc2650, Workload::W2, 5.0, None);
        assert_eq!(spec.segments.len(), 10);
        for (i, s) in spec.segments.iter().enumerate() {
            let sleeping = matches!(s.kind, SegmentKind::Sleep { .. });
            assert_eq!(sleeping, i % 2 == 1);
        }
    }

    #[test]
    fn sleep_current_of_low_power_preset() {
        let p = generate_profile(Device::Cc2650, Workload::W1, 1);
        assert_eq!(p.current_at(0.25), 1e-6);
        assert_eq!(p.modes()[0].constant_current, 1e-6);
        let (_, hi) = p.current_range();
        assert!((hi - 0.030).abs() < 1e-12);
    }

    #[test]
    fn anchors_of_wifi_presets() {
        let cases = [
            (Device::Cyw43907, 0.096, 0.400),
            (Device::Rpi3, 0.280, 0.500),
            (Device::RpiZeroW, 0.130, 0.300),
            (Device::Bcm4343w, 0.010, 0.350),
        ];
        for (dev, lo_expect, hi_bound) in cases {
            let p = generate_profile(dev, Workload::W1, 2);
            let (lo, hi) = p.current_range();
            assert!((lo - lo_expect).abs() < 1e-12, "{dev}: {lo}");
            assert!(hi <= hi_bound + 1e-12 && hi > 0.8 * hi_bound, "{dev}: {hi}");
            assert!(p.mode_events().is_empty());
        }
    }

    #[test]
    fn wifi_range_is_much_wider() {
        let narrow = generate_profile(Device::Cc2650, Workload::W1, 3).current_range();
        for dev in &Device::ALL[1..] {
            let wide = generate_profile(*dev, Workload::W1, 3).current_range();
            assert!((wide.1 - wide.0) > 1.5 * (narrow.1 - narrow.0), "{dev}");
        }
        let cyw = generate_profile(Device::Cyw43907, Workload::W1, 3).current_range();
        let bcm = generate_profile(Device::Bcm4343w, Workload::W1, 3).current_range();
        assert!(cyw.1.max(bcm.1) / narrow.1 > 10.0);
    }

    #[test]
    fn names_parse() {
        for d in Device::ALL {
            assert_eq!(d.name().parse::<Device>().unwrap(), d);
        }
        assert!("esp32".parse::<Device>().is_err());
        assert!(Workload::from_index(5).is_err());
    }
}
