use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Modes drawing at least this much cannot be declared: the sensor resolves
/// them directly.
pub const MAX_MODE_CURRENT: f64 = 100e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeEventKind {
    Enter,
    Exit,
}

/// Device-reported transition into or out of a power-save mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowerModeEvent {
    pub kind: ModeEventKind,
    pub mode_index: usize,
    /// Nanoseconds, same clock as sample timestamps.
    pub timestamp: u64,
}

/// A sleep state whose draw is below one current step and is therefore
/// accounted as a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSaveMode {
    pub mode_index: usize,
    /// Amperes.
    pub constant_current: f64,
    /// Volts.
    pub nominal_voltage: f64,
}

impl PowerSaveMode {
    pub fn new(mode_index: usize, constant_current: f64, nominal_voltage: f64) -> Result<Self> {
        if !(0.0..MAX_MODE_CURRENT).contains(&constant_current) {
            return Err(Error::Config(format!(
                "power-save mode {mode_index}: {constant_current} A is not below one current step (100 uA)"
            )));
        }
        if !(nominal_voltage.is_finite() && nominal_voltage > 0.0) {
            return Err(Error::Config(format!(
                "power-save mode {mode_index}: nominal voltage must be positive"
            )));
        }
        Ok(PowerSaveMode {
            mode_index,
            constant_current,
            nominal_voltage,
        })
    }

    pub fn power(&self) -> f64 {
        self.constant_current * self.nominal_voltage
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerEdgeKind {
    /// Start of a measurement window.
    Fall,
    /// End of a measurement window.
    Rise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerEdge {
    pub kind: TriggerEdgeKind,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerSpec {
    /// Measure from engine start for this many seconds.
    Duration(f64),
    /// Measure from engine start until this many samples were taken.
    SampleCount(usize),
    /// Falling edge starts, rising edge stops; may contain several windows.
    ExternalEdges(Vec<TriggerEdge>),
}

impl TriggerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TriggerSpec::Duration(s) if !(s.is_finite() && *s > 0.0) => {
                Err(Error::Config(format!("trigger duration must be positive, got {s}")))
            }
            TriggerSpec::SampleCount(0) => Err(Error::Config("trigger sample count must be positive".into())),
            TriggerSpec::ExternalEdges(edges) => {
                let mut open = false;
                let mut last = 0u64;
                for e in edges {
                    if e.timestamp < last {
                        return Err(Error::Config("trigger edges must be time ordered".into()));
                    }
                    last = e.timestamp;
                    match (e.kind, open) {
                        (TriggerEdgeKind::Fall, false) => open = true,
                        (TriggerEdgeKind::Rise, true) => open = false,
                        (TriggerEdgeKind::Fall, true) => {
                            return Err(Error::Config(format!("falling edge at {} inside an open window", e.timestamp)))
                        }
                        (TriggerEdgeKind::Rise, false) => {
                            return Err(Error::Config(format!("rising edge at {} without a start", e.timestamp)))
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn parse_timestamp(tok: Option<&str>, line: usize) -> Result<u64> {
    let tok = tok.ok_or_else(|| Error::parse(line, "missing timestamp"))?;
    tok.parse().map_err(|_| Error::parse(line, format!("bad timestamp `{tok}`")))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses lines of `<ns> fall|rise`.
pub fn parse_trigger_edges(text: &str) -> Result<Vec<TriggerEdge>> {
    let mut edges = Vec::new();
    let mut last = 0u64;
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        let timestamp = parse_timestamp(toks.next(), line)?;
        let kind = match toks.next() {
            Some("fall") => TriggerEdgeKind::Fall,
            Some("rise") => TriggerEdgeKind::Rise,
            Some(other) => return Err(Error::parse(line, format!("expected fall|rise, got `{other}`"))),
            None => return Err(Error::parse(line, "missing edge kind")),
        };
        if toks.next().is_some() {
            return Err(Error::parse(line, "trailing tokens"));
        }
        if timestamp < last {
            return Err(Error::parse(line, "timestamps must not decrease"));
        }
        last = timestamp;
        edges.push(TriggerEdge { kind, timestamp });
    }
    Ok(edges)
}

pub fn format_trigger_edges(edges: &[TriggerEdge]) -> String {
    let mut out = String::new();
    for e in edges {
        let kind = match e.kind {
            TriggerEdgeKind::Fall => "fall",
            TriggerEdgeKind::Rise => "rise",
        };
        let _ = writeln!(out, "{} {kind}", e.timestamp);
    }
    out
}

/// Parses lines of `<ns> enter|exit <mode_index>`.
pub fn parse_mode_events(text: &str) -> Result<Vec<PowerModeEvent>> {
    let mut events = Vec::new();
    let mut last = 0u64;
    for (line, content) in content_lines(text) {
        let mut toks = content.split_whitespace();
        let timestamp = parse_timestamp(toks.next(), line)?;
        let kind = match toks.next() {
            Some("enter") => ModeEventKind::Enter,
            Some("exit") => ModeEventKind::Exit,
            Some(other) => return Err(Error::parse(line, format!("expected enter|exit, got `{other}`"))),
            None => return Err(Error::parse(line, "missing event kind")),
        };
        let mode_tok = toks.next().ok_or_else(|| Error::parse(line, "missing mode index"))?;
        let mode_index = mode_tok
            .parse()
            .map_err(|_| Error::parse(line, format!("bad mode index `{mode_tok}`")))?;
        if toks.next().is_some() {
            return Err(Error::parse(line, "trailing tokens"));
        }
        if timestamp < last {
            return Err(Error::parse(line, "timestamps must not decrease"));
        }
        last = timestamp;
        events.push(PowerModeEvent { kind, mode_index, timestamp });
    }
    Ok(events)
}

pub fn format_mode_events(events: &[PowerModeEvent]) -> String {
    let mut out = String::new();
    for e in events {
        let kind = match e.kind {
            ModeEventKind::Enter => "enter",
            ModeEventKind::Exit => "exit",
        };
        let _ = writeln!(out, "{} {kind} {}", e.timestamp, e.mode_index);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_current_must_be_below_one_step() {
        assert!(PowerSaveMode::new(0, 1e-6, 3.3).is_ok());
        assert!(PowerSaveMode::new(1, 100e-9, 3.3).is_ok());
        assert!(PowerSaveMode::new(2, 100e-6, 3.3).is_err());
        assert!(PowerSaveMode::new(2, -1e-6, 3.3).is_err());
        assert!(PowerSaveMode::new(2, 1e-6, 0.0).is_err());
    }

    #[test]
    fn edges_round_trip_and_validate() {
        let text = "# window\n0 fall\n500000000 rise\n";
        let edges = parse_trigger_edges(text).unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(parse_trigger_edges(&format_trigger_edges(&edges)).unwrap(), edges);
        TriggerSpec::ExternalEdges(edges).validate().unwrap();
        let bad = parse_trigger_edges("0 rise\n").unwrap();
        assert!(TriggerSpec::ExternalEdges(bad).validate().is_err());
        let bad = parse_trigger_edges("0 fall\n10 fall\n").unwrap();
        assert!(TriggerSpec::ExternalEdges(bad).validate().is_err());
    }

    #[test]
    fn edge_parse_errors_carry_line() {
        let err = parse_trigger_edges("0 fall\n12 sideways\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_trigger_edges("x fall").is_err());
        assert!(parse_trigger_edges("5 fall\n4 rise").is_err());
        assert!(parse_trigger_edges("5 fall extra").is_err());
    }

    #[test]
    fn mode_events_round_trip() {
        let text = "100 enter 0\n200 exit 0\n300 enter 1\n400 exit 1\n";
        let events = parse_mode_events(text).unwrap();
        assert_eq!(events[2], PowerModeEvent { kind: ModeEventKind::Enter, mode_index: 1, timestamp: 300 });
        assert_eq!(format_mode_events(&events), text);
        assert!(parse_mode_events("100 enter").is_err());
        assert!(parse_mode_events("100 nap 0").is_err());
    }

    #[test]
    fn trigger_spec_rejects_degenerate() {
        assert!(TriggerSpec::Duration(0.0).validate().is_err());
        assert!(TriggerSpec::Duration(f64::NAN).validate().is_err());
        assert!(TriggerSpec::SampleCount(0).validate().is_err());
        assert!(TriggerSpec::SampleCount(3).validate().is_ok());
    }
}
