use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative energy error in percent.
pub fn error_percent(measured: f64, reference: f64) -> f64 {
    (measured - reference).abs() / reference * 100.0
}

/// Pipeline energy against the reference meter for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Joules, hybrid model.
    pub pipeline_energy: f64,
    /// Joules, reference meter.
    pub reference_energy: f64,
    /// Joules, trapezoid ignoring power-save events.
    pub naive_energy: f64,
    pub error_percent: f64,
    pub sample_count: u64,
    pub overrun_count: u64,
    /// Settings that produced the run.
    pub config: BTreeMap<String, String>,
}

const NUMERIC_KEYS: [&str; 6] = [
    "pipeline_energy",
    "reference_energy",
    "naive_energy",
    "error_percent",
    "sample_count",
    "overrun_count",
];

impl ExperimentReport {
    pub fn new(pipeline_energy: f64, reference_energy: f64, naive_energy: f64, sample_count: u64) -> Result<Self> {
        if !(reference_energy.is_finite() && reference_energy > 0.0) {
            return Err(Error::OutOfRange { what: "reference energy", value: reference_energy });
        }
        if !pipeline_energy.is_finite() || !naive_energy.is_finite() {
            return Err(Error::Config("non-finite pipeline energy".into()));
        }
        Ok(ExperimentReport {
            pipeline_energy,
            reference_energy,
            naive_energy,
            error_percent: error_percent(pipeline_energy, reference_energy),
            sample_count,
            overrun_count: 0,
            config: BTreeMap::new(),
        })
    }

    pub fn naive_error_percent(&self) -> f64 {
        error_percent(self.naive_energy, self.reference_energy)
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    /// `key = value` lines; settings appear as `config.<name>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pipeline_energy = {}", self.pipeline_energy);
        let _ = writeln!(out, "reference_energy = {}", self.reference_energy);
        let _ = writeln!(out, "naive_energy = {}", self.naive_energy);
        let _ = writeln!(out, "error_percent = {}", self.error_percent);
        let _ = writeln!(out, "sample_count = {}", self.sample_count);
        let _ = writeln!(out, "overrun_count = {}", self.overrun_count);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k} = {v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut nums: [Option<&str>; 6] = [None; 6];
        let mut config = BTreeMap::new();
        let mut last = 1;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            last = line_no;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            if let Some(name) = key.strip_prefix("config.") {
                let valid = !name.is_empty()
                    && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
                if !valid {
                    return Err(Error::parse(line_no, format!("bad setting name `{name}`")));
                }
                if config.insert(name.to_string(), value.to_string()).is_some() {
                    return Err(Error::parse(line_no, format!("duplicate `{key}`")));
                }
                continue;
            }
            let idx = NUMERIC_KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::parse(line_no, format!("unknown key `{key}`")))?;
            if nums[idx].replace(value).is_some() {
                return Err(Error::parse(line_no, format!("duplicate `{key}`")));
            }
        }
        let field = |i: usize| nums[i].ok_or_else(|| Error::parse(last, format!("missing `{}`", NUMERIC_KEYS[i])));
        let float = |i: usize| -> Result<f64> {
            let v = field(i)?;
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(last, format!("bad `{}` value `{v}`", NUMERIC_KEYS[i])))
        };
        let count = |i: usize| -> Result<u64> {
            let v = field(i)?;
            v.parse()
                .map_err(|_| Error::parse(last, format!("bad `{}` value `{v}`", NUMERIC_KEYS[i])))
        };
        let mut report = ExperimentReport::new(float(0)?, float(1)?, float(2)?, count(4)?)?;
        let stated = float(3)?;
        let tolerance = 1e-9 * report.error_percent.abs().max(1e-3);
        if (stated - report.error_percent).abs() > tolerance {
            return Err(Error::parse(last, "error_percent disagrees with the energies"));
        }
        report.error_percent = stated;
        report.overrun_count = count(5)?;
        report.config = config;
        Ok(report)
    }
}
