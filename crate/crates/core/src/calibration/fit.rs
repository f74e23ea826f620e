use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sampler::SampleCorrection;

/// RMSE improvement the quadratic needs before [`FitForm::Auto`] prefers it.
pub const DEFAULT_SELECTION_THRESHOLD: f64 = 0.25;
pub const DEFAULT_MIN_PAIRS: usize = 10;

/// Reference and device readings taken at the same settling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementPair {
    pub reference_current: f64,
    pub device_current: f64,
    pub reference_voltage: f64,
    pub device_voltage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitForm {
    Linear,
    Quadratic,
    /// Linear unless the quadratic cuts RMSE by more than the threshold.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub form: FitForm,
    pub selection_threshold: f64,
    pub min_pairs: usize,
    /// Upper end of the current range the curve must cover. Defaults to the
    /// largest reference current.
    pub valid_range: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            form: FitForm::Auto,
            selection_threshold: DEFAULT_SELECTION_THRESHOLD,
            min_pairs: DEFAULT_MIN_PAIRS,
            valid_range: None,
        }
    }
}

/// Device current as a function of true current, through the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurrentFit {
    /// `i_e = a·i_a`
    Linear { a: f64 },
    /// `i_e = b·i_a² + a·i_a`
    Quadratic { a: f64, b: f64 },
}

impl CurrentFit {
    pub fn slope(&self) -> f64 {
        match *self {
            CurrentFit::Linear { a } | CurrentFit::Quadratic { a, .. } => a,
        }
    }

    pub fn curvature(&self) -> f64 {
        match *self {
            CurrentFit::Linear { .. } => 0.0,
            CurrentFit::Quadratic { b, .. } => b,
        }
    }

    pub fn forward(&self, reference: f64) -> f64 {
        self.curvature() * reference * reference + self.slope() * reference
    }

    fn name(&self) -> &'static str {
        match self {
            CurrentFit::Linear { .. } => "linear",
            CurrentFit::Quadratic { .. } => "quadratic",
        }
    }
}

/// A corrected reading; `extrapolated` marks inputs outside the fitted range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedValue {
    pub value: f64,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationCurve {
    pub current: CurrentFit,
    /// Volts added to the device reading.
    pub voltage_offset: f64,
    pub rmse: f64,
    pub r_squared: f64,
    pub voltage_rmse: f64,
    /// Largest true current the fit covers, amperes.
    pub current_range: f64,
    /// Largest device voltage the fit covers, volts.
    pub voltage_range: f64,
}

struct Diagnostics {
    rmse: f64,
    r_squared: f64,
}

fn diagnostics(pairs: &[MeasurementPair], fit: &CurrentFit) -> Diagnostics {
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.device_current).sum::<f64>() / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for p in pairs {
        let r = p.device_current - fit.forward(p.reference_current);
        ss_res += r * r;
        ss_tot += (p.device_current - mean).powi(2);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Diagnostics { rmse: (ss_res / n).sqrt(), r_squared }
}

fn fit_linear(pairs: &[MeasurementPair]) -> Result<CurrentFit> {
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for p in pairs {
        sxx += p.reference_current * p.reference_current;
        sxy += p.reference_current * p.device_current;
    }
    if sxx <= 0.0 {
        return Err(Error::RankDeficient("every reference current is zero".into()));
    }
    Ok(CurrentFit::Linear { a: sxy / sxx })
}

fn fit_quadratic(pairs: &[MeasurementPair]) -> Result<CurrentFit> {
    let (mut s2, mut s3, mut s4, mut sxy, mut sx2y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pairs {
        let x = p.reference_current;
        let y = p.device_current;
        let x2 = x * x;
        s2 += x2;
        s3 += x2 * x;
        s4 += x2 * x2;
        sxy += x * y;
        sx2y += x2 * y;
    }
    let det = s2 * s4 - s3 * s3;
    if det.is_nan() || det <= 1e-12 * s2 * s4 {
        return Err(Error::RankDeficient("quadratic needs two distinct nonzero currents".into()));
    }
    let a = (sxy * s4 - s3 * sx2y) / det;
    let b = (s2 * sx2y - s3 * sxy) / det;
    Ok(CurrentFit::Quadratic { a, b })
}

fn distinct_currents(pairs: &[MeasurementPair]) -> usize {
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.reference_current).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.len()
}

/// Least-squares current fit through the origin.
pub fn fit_current(pairs: &[MeasurementPair], opts: &FitOptions) -> Result<CalibrationCurve> {
    if pairs
        .iter()
        .any(|p| !(p.reference_current.is_finite() && p.device_current.is_finite()))
    {
        return Err(Error::Config("non-finite current in calibration pairs".into()));
    }
    if distinct_currents(pairs) < 2 {
        return Err(Error::RankDeficient("all pairs share one reference current".into()));
    }
    if pairs.len() < opts.min_pairs {
        return Err(Error::InsufficientData(format!(
            "{} pairs, need at least {}",
            pairs.len(),
            opts.min_pairs
        )));
    }
    let lo = pairs.iter().map(|p| p.reference_current).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.reference_current).fold(f64::NEG_INFINITY, f64::max);
    let range = opts.valid_range.unwrap_or(hi);
    if hi - lo < 0.5 * range {
        return Err(Error::InsufficientData(format!(
            "pairs span {:.6} A of a {:.6} A range",
            hi - lo,
            range
        )));
    }

    let current = match opts.form {
        FitForm::Linear => fit_linear(pairs)?,
        FitForm::Quadratic => fit_quadratic(pairs)?,
        FitForm::Auto => {
            let lin = fit_linear(pairs)?;
            match fit_quadratic(pairs) {
                Ok(quad) => {
                    let l = diagnostics(pairs, &lin).rmse;
                    let q = diagnostics(pairs, &quad).rmse;
                    if q < (1.0 - opts.selection_threshold) * l {
                        quad
                    } else {
                        lin
                    }
                }
                Err(_) => lin,
            }
        }
    };
    let d = diagnostics(pairs, &current);
    let curve = CalibrationCurve {
        current,
        voltage_offset: 0.0,
        rmse: d.rmse,
        r_squared: d.r_squared,
        voltage_rmse: 0.0,
        current_range: range.max(hi),
        voltage_range: pairs.iter().map(|p| p.device_voltage).fold(0.0, f64::max),
    };
    curve.validate()?;
    Ok(curve)
}

/// Mean of `v_a - v_e` and the RMSE left after removing it.
pub fn fit_voltage_offset(pairs: &[MeasurementPair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Empty("calibration pairs"));
    }
    let n = pairs.len() as f64;
    let offset = pairs.iter().map(|p| p.reference_voltage - p.device_voltage).sum::<f64>() / n;
    if !offset.is_finite() {
        return Err(Error::Config("non-finite voltage in calibration pairs".into()));
    }
    let ss: f64 = pairs
        .iter()
        .map(|p| (p.reference_voltage - p.device_voltage - offset).powi(2))
        .sum();
    Ok((offset, (ss / n).sqrt()))
}

impl CalibrationCurve {
    /// Current fit plus voltage offset.
    pub fn fit(pairs: &[MeasurementPair], opts: &FitOptions) -> Result<Self> {
        let mut curve = fit_current(pairs, opts)?;
        let (offset, rmse) = fit_voltage_offset(pairs)?;
        curve.voltage_offset = offset;
        curve.voltage_rmse = rmse;
        Ok(curve)
    }

    /// Slope positive and the forward function increasing over the range,
    /// so the inverse is unique.
    pub fn validate(&self) -> Result<()> {
        let a = self.current.slope();
        let b = self.current.curvature();
        let finite = [a, b, self.voltage_offset, self.current_range, self.voltage_range]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("non-finite calibration coefficient".into()));
        }
        if a <= 0.0 {
            return Err(Error::OutOfRange { what: "calibration slope", value: a });
        }
        if a + 2.0 * b * self.current_range <= 0.0 {
            return Err(Error::OutOfRange { what: "calibration curvature", value: b });
        }
        if self.current_range <= 0.0 || self.voltage_range < 0.0 {
            return Err(Error::Config("calibration range must be positive".into()));
        }
        Ok(())
    }

    /// Largest device reading inside the fitted range.
    pub fn device_range(&self) -> f64 {
        self.current.forward(self.current_range)
    }

    /// True current for a device reading.
    pub fn apply(&self, device_current: f64) -> CalibratedValue {
        let extrapolated = device_current < 0.0 || device_current > self.device_range() * (1.0 + 1e-12);
        let value = match self.current {
            CurrentFit::Linear { a } => device_current / a,
            CurrentFit::Quadratic { a, b } => {
                let disc = a * a + 4.0 * b * device_current;
                if disc < 0.0 {
                    // beyond the turning point of a concave fit
                    -a / (2.0 * b)
                } else {
                    // root of b i² + a i - i_e nearest zero, without cancellation
                    2.0 * device_current / (a + disc.sqrt())
                }
            }
        };
        CalibratedValue { value, extrapolated }
    }

    pub fn apply_voltage(&self, device_voltage: f64) -> CalibratedValue {
        CalibratedValue {
            value: device_voltage + self.voltage_offset,
            extrapolated: device_voltage < 0.0 || device_voltage > self.voltage_range,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "form = {}", self.current.name());
        let _ = writeln!(out, "a = {}", self.current.slope());
        if let CurrentFit::Quadratic { b, .. } = self.current {
            let _ = writeln!(out, "b = {b}");
        }
        let _ = writeln!(out, "voltage_offset = {}", self.voltage_offset);
        let _ = writeln!(out, "rmse = {}", self.rmse);
        let _ = writeln!(out, "r_squared = {}", self.r_squared);
        let _ = writeln!(out, "voltage_rmse = {}", self.voltage_rmse);
        let _ = writeln!(out, "current_range = {}", self.current_range);
        let _ = writeln!(out, "voltage_range = {}", self.voltage_range);
        out
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        const KEYS: [&str; 9] = [
            "form",
            "a",
            "b",
            "voltage_offset",
            "rmse",
            "r_squared",
            "voltage_rmse",
            "current_range",
            "voltage_range",
        ];
        let mut form = None;
        let mut nums: [Option<f64>; 9] = [None; 9];
        let mut last_line = 0;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            last_line = line_no;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            let idx = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| Error::parse(line_no, format!("unknown key `{key}`")))?;
            if idx == 0 {
                if form.is_some() {
                    return Err(Error::parse(line_no, "duplicate `form`"));
                }
                form = Some(match value {
                    "linear" => FitForm::Linear,
                    "quadratic" => FitForm::Quadratic,
                    other => return Err(Error::parse(line_no, format!("unknown form `{other}`"))),
                });
                continue;
            }
            if nums[idx].is_some() {
                return Err(Error::parse(line_no, format!("duplicate `{key}`")));
            }
            let v: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::parse(line_no, format!("bad number `{value}`")))?;
            nums[idx] = Some(v);
        }
        let end = last_line.max(1);
        let need = |i: usize| nums[i].ok_or_else(|| Error::parse(end, format!("missing `{}`", KEYS[i])));
        let form = form.ok_or_else(|| Error::parse(end, "missing `form`"))?;
        let a = need(1)?;
        let current = match form {
            FitForm::Quadratic => CurrentFit::Quadratic { a, b: need(2)? },
            _ => {
                if nums[2].is_some_and(|b| b != 0.0) {
                    return Err(Error::parse(end, "linear curve with nonzero `b`"));
                }
                CurrentFit::Linear { a }
            }
        };
        let curve = CalibrationCurve {
            current,
            voltage_offset: need(3)?,
            rmse: need(4)?,
            r_squared: need(5)?,
            voltage_rmse: need(6)?,
            current_range: need(7)?,
            voltage_range: need(8)?,
        };
        curve.validate()?;
        Ok(curve)
    }
}

impl SampleCorrection for CalibrationCurve {
    fn correct_current(&self, measured: f64) -> f64 {
        self.apply(measured).value
    }

    fn correct_voltage(&self, measured: f64) -> f64 {
        self.apply_voltage(measured).value
    }
}
