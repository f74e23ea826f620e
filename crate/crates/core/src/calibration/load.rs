use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::workload::{LoadProfile, Piece, Source};

/// Published figures of the load the default potentiometer is fitted to.
pub const PUBLISHED_MIN_CURRENT: f64 = 0.476e-3;
pub const PUBLISHED_FINEST_RESOLUTION: f64 = 1.82e-6;

/// Voltage-side figures of the load, quoted without a circuit model.
pub const MIN_VOLTAGE_OUTPUT: f64 = 0.06e-3;
pub const MIN_VOLTAGE_RESOLUTION: f64 = 0.01e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentiometerModel {
    pub bits: u32,
    /// Ohms end to end.
    pub max_resistance: f64,
    pub wiper_resistance: f64,
    /// Volts across the potentiometer branch.
    pub input_voltage: f64,
}

impl Default for PotentiometerModel {
    fn default() -> Self {
        Self::fitted(8, 10_000.0, PUBLISHED_MIN_CURRENT, PUBLISHED_FINEST_RESOLUTION)
    }
}

impl PotentiometerModel {
    /// Solves wiper resistance and input voltage from the smallest output
    /// current (full code) and the finest step (between the two top codes):
    /// their ratio is `step / R(top - 1)`, which fixes the wiper, and the
    /// smallest output then fixes the voltage.
    pub fn fitted(bits: u32, max_resistance: f64, min_current: f64, finest_resolution: f64) -> Self {
        let steps = f64::from(1u32 << bits);
        let step = max_resistance / steps;
        let below_top = step * min_current / finest_resolution;
        let wiper_resistance = below_top - (steps - 1.0) * step;
        PotentiometerModel {
            bits,
            max_resistance,
            wiper_resistance,
            input_voltage: min_current * (max_resistance + wiper_resistance),
        }
    }

    pub fn steps(&self) -> u32 {
        1 << self.bits
    }

    pub fn resistance(&self, code: u32) -> Result<f64> {
        if code > self.steps() {
            return Err(Error::OutOfRange { what: "potentiometer code", value: f64::from(code) });
        }
        Ok(f64::from(code) / f64::from(self.steps()) * self.max_resistance + self.wiper_resistance)
    }

    pub fn current(&self, code: u32) -> Result<f64> {
        Ok(self.input_voltage / self.resistance(code)?)
    }

    /// Current change between `code - 1` and `code`.
    pub fn current_resolution(&self, code: u32) -> Result<f64> {
        if code == 0 {
            return Err(Error::OutOfRange { what: "potentiometer code", value: 0.0 });
        }
        let hi = self.resistance(code)?;
        let lo = self.resistance(code - 1)?;
        Ok((hi - lo) / (hi * lo) * self.input_voltage)
    }

    /// Largest current, at code 0.
    pub fn max_current(&self) -> f64 {
        self.input_voltage / self.wiper_resistance
    }

    pub fn min_current(&self) -> f64 {
        self.input_voltage / (self.max_resistance + self.wiper_resistance)
    }

    /// Finest step over all codes.
    pub fn finest_resolution(&self) -> f64 {
        (1..=self.steps())
            .filter_map(|c| self.current_resolution(c).ok())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Fixed resistors switched in parallel with the potentiometer.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchNetwork {
    pub input_voltage: f64,
    /// Ohms, bit `j` of a switch mask enables branch `j`.
    pub branches: Vec<f64>,
}

/// Four 20 mA branches then nine 100 mA branches at 5 V.
impl Default for SwitchNetwork {
    fn default() -> Self {
        let mut branches = vec![250.0; 4];
        branches.extend([50.0; 9]);
        SwitchNetwork { input_voltage: 5.0, branches }
    }
}

impl SwitchNetwork {
    pub fn branch_current(&self, j: usize) -> f64 {
        self.input_voltage / self.branches[j]
    }

    pub fn current(&self, mask: u16) -> Result<f64> {
        if self.branches.len() < 16 && u32::from(mask) >> self.branches.len() != 0 {
            return Err(Error::Config(format!("switch mask {mask:#06x} enables missing branches")));
        }
        Ok((0..self.branches.len())
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| self.branch_current(j))
            .sum())
    }

    pub fn all_on(&self) -> u16 {
        ((1u32 << self.branches.len()) - 1) as u16
    }
}

/// Potentiometer plus switch network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProgrammableLoad {
    pub pot: PotentiometerModel,
    pub switches: SwitchNetwork,
}

impl ProgrammableLoad {
    pub fn current(&self, code: u32, mask: u16) -> Result<f64> {
        Ok(self.pot.current(code)? + self.switches.current(mask)?)
    }

    /// Pot at code 0 plus every enabled branch.
    pub fn max_current(&self, mask: u16) -> Result<f64> {
        Ok(self.pot.max_current() + self.switches.current(mask)?)
    }

    /// Mask enabling `n20` of the 20 mA branches and `n100` of the 100 mA ones.
    fn mask_for(&self, n20: usize, n100: usize) -> Option<u16> {
        let small: Vec<usize> = (0..self.switches.branches.len()).filter(|&j| self.switches.branches[j] >= 100.0).collect();
        let large: Vec<usize> = (0..self.switches.branches.len()).filter(|&j| self.switches.branches[j] < 100.0).collect();
        if n20 > small.len() || n100 > large.len() {
            return None;
        }
        let mut mask = 0u16;
        for &j in small.iter().take(n20).chain(large.iter().take(n100)) {
            mask |= 1 << j;
        }
        Some(mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadStep {
    pub code: u32,
    pub mask: u16,
    /// Nanoseconds.
    pub dwell: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadProgram {
    pub steps: Vec<LoadStep>,
}

impl LoadProgram {
    /// Mid-dwell instants in ns, where the output is known to be stable.
    pub fn settling_instants(&self) -> Vec<u64> {
        let mut t = 0u64;
        self.steps
            .iter()
            .map(|s| {
                let mid = t + s.dwell / 2;
                t += s.dwell;
                mid
            })
            .collect()
    }

    /// Seconds.
    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.dwell).sum::<u64>() as f64 * 1e-9
    }

    /// Lines of `<code> <switch_mask_hex> <dwell_ms>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let [code, mask, dwell] = toks[..] else {
                return Err(Error::parse(line, "expected `<code> <switch_mask_hex> <dwell_ms>`"));
            };
            let code: u32 = code.parse().map_err(|_| Error::parse(line, format!("bad code `{code}`")))?;
            let hex = mask.trim_start_matches("0x").trim_start_matches("0X");
            let mask = u16::from_str_radix(hex, 16).map_err(|_| Error::parse(line, format!("bad mask `{mask}`")))?;
            let dwell_ns = dwell
                .parse::<f64>()
                .ok()
                .map(|ms| (ms * 1e6).round())
                .filter(|ns| *ns >= 2.0 && *ns < 1e15)
                .ok_or_else(|| Error::parse(line, format!("bad dwell `{dwell}`")))?;
            steps.push(LoadStep { code, mask, dwell: dwell_ns as u64 });
        }
        Ok(LoadProgram { steps })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            let _ = writeln!(out, "{} {:04x} {}", s.code, s.mask, s.dwell as f64 / 1e6);
        }
        out
    }

    /// Increasing staircase up to `max_current`: every 20 mA base level
    /// reachable with the switches, each followed through a few potentiometer
    /// codes that fill the gap to the next level.
    pub fn staircase(load: &ProgrammableLoad, max_current: f64, dwell_ns: u64) -> Result<Self> {
        const CODES: [u32; 5] = [256, 96, 40, 12, 0];
        let mut steps = Vec::new();
        let mut level = 0usize;
        loop {
            let n100 = level / 5;
            let n20 = level % 5;
            let Some(mask) = load.mask_for(n20, n100) else { break };
            let base = load.switches.current(mask)?;
            if base + load.pot.min_current() > max_current {
                break;
            }
            for code in CODES {
                if base + load.pot.current(code)? <= max_current {
                    steps.push(LoadStep { code, mask, dwell: dwell_ns });
                }
            }
            level += 1;
        }
        if steps.is_empty() {
            return Err(Error::Config("staircase has no step below the requested maximum".into()));
        }
        Ok(LoadProgram { steps })
    }

    /// Programmed current per step.
    pub fn currents(&self, load: &ProgrammableLoad) -> Result<Vec<f64>> {
        self.steps.iter().map(|s| load.current(s.code, s.mask)).collect()
    }

    /// The program as a current profile behind `source`.
    pub fn to_profile(&self, load: &ProgrammableLoad, source: Source) -> Result<LoadProfile> {
        let mut pieces = Vec::with_capacity(self.steps.len());
        let mut t = 0u64;
        for (s, current) in self.steps.iter().zip(self.currents(load)?) {
            pieces.push(Piece { start: t as f64 * 1e-9, end: (t + s.dwell) as f64 * 1e-9, current });
            t += s.dwell;
        }
        Ok(LoadProfile::from_pieces(source, Vec::new(), pieces, Vec::new()))
    }
}
