use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::sampler::{ModeEventKind, PowerModeEvent, PowerSaveMode};
use crate::sensor::{AnalogSource, LoadPoint};

/// Output resistance of a bench supply; keeps the rail inside a 2 mV band
/// for currents up to 1 A.
pub const SUPPLY_OUTPUT_RESISTANCE: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Supply { volts: f64 },
    /// Sags linearly with current through its internal resistance.
    Battery { volts: f64, resistance: f64 },
}

impl Source {
    pub fn open_circuit_volts(&self) -> f64 {
        match *self {
            Source::Supply { volts } | Source::Battery { volts, .. } => volts,
        }
    }

    pub fn resistance(&self) -> f64 {
        match *self {
            Source::Supply { .. } => SUPPLY_OUTPUT_RESISTANCE,
            Source::Battery { resistance, .. } => resistance,
        }
    }

    pub fn terminal_voltage(&self, current: f64) -> f64 {
        self.open_circuit_volts() - self.resistance() * current
    }
}

/// Rectangular excursions drawn on top of a segment's base current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    /// Regular train. `amplitude` is the current level during a spike.
    Spikes { amplitude: f64, width: f64, period: f64, phase: f64 },
    /// Poisson arrivals with uniformly drawn level and width.
    Bursts { min_level: f64, max_level: f64, min_width: f64, max_width: f64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentKind {
    /// Device in a declared power-save mode drawing its constant current.
    Sleep { mode: usize },
    Active { base: f64, layers: Vec<Layer> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Seconds.
    pub duration: f64,
    pub kind: SegmentKind,
}

/// Textual description of a load, compiled with a seed into a [`LoadProfile`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub source: Source,
    pub modes: Vec<PowerSaveMode>,
    pub segments: Vec<Segment>,
}

fn positive(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, value: v })
    }
}

fn non_negative(what: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange { what, value: v })
    }
}

impl Layer {
    fn validate(&self) -> Result<()> {
        match *self {
            Layer::Spikes { amplitude, width, period, phase } => {
                non_negative("spike amplitude", amplitude)?;
                positive("spike width", width)?;
                positive("spike period", period)?;
                non_negative("spike phase", phase)?;
                if width > period {
                    return Err(Error::Config("spike width exceeds period".into()));
                }
            }
            Layer::Bursts { min_level, max_level, min_width, max_width, rate } => {
                non_negative("burst level", min_level)?;
                non_negative("burst level", max_level)?;
                positive("burst width", min_width)?;
                positive("burst width", max_width)?;
                non_negative("burst rate", rate)?;
                if min_level > max_level || min_width > max_width {
                    return Err(Error::Config("burst minimum exceeds maximum".into()));
                }
            }
        }
        Ok(())
    }

    /// Rectangles `(start, end, level)` inside `[0, duration)`, relative to
    /// the segment start.
    fn rectangles(&self, duration: f64, rng: &mut ChaCha8Rng, out: &mut Vec<(f64, f64, f64)>) {
        match *self {
            Layer::Spikes { amplitude, width, period, phase } => {
                let mut n = 0u64;
                loop {
                    let start = phase + n as f64 * period;
                    if start >= duration {
                        break;
                    }
                    out.push((start, (start + width).min(duration), amplitude));
                    n += 1;
                }
            }
            Layer::Bursts { min_level, max_level, min_width, max_width, rate } => {
                if rate <= 0.0 {
                    return;
                }
                let gap = Exp::new(rate).expect("positive rate");
                let mut t = gap.sample(rng);
                while t < duration {
                    let width = rng.gen_range(min_width..=max_width);
                    let level = rng.gen_range(min_level..=max_level);
                    out.push((t, (t + width).min(duration), level));
                    t += width + gap.sample(rng);
                }
            }
        }
    }
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        match self.source {
            Source::Supply { volts } => positive("supply voltage", volts)?,
            Source::Battery { volts, resistance } => {
                positive("battery voltage", volts)?;
                non_negative("battery resistance", resistance)?;
            }
        }
        for (i, m) in self.modes.iter().enumerate() {
            PowerSaveMode::new(m.mode_index, m.constant_current, m.nominal_voltage)?;
            if self.modes[..i].iter().any(|o| o.mode_index == m.mode_index) {
                return Err(Error::Config(format!("mode {} declared twice", m.mode_index)));
            }
        }
        if self.segments.is_empty() {
            return Err(Error::Empty("profile segments"));
        }
        for seg in &self.segments {
            positive("segment duration", seg.duration)?;
            match &seg.kind {
                SegmentKind::Sleep { mode } => {
                    if !self.modes.iter().any(|m| m.mode_index == *mode) {
                        return Err(Error::Config(format!("sleep segment uses undeclared mode {mode}")));
                    }
                }
                SegmentKind::Active { base, layers } => {
                    non_negative("base current", *base)?;
                    for l in layers {
                        l.validate()?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Expands layers into piecewise-constant current. Burst placement is a
    /// pure function of `seed`.
    pub fn compile(&self, seed: u64) -> Result<LoadProfile> {
        self.validate()?;
        let mut pieces: Vec<Piece> = Vec::new();
        let mut events = Vec::new();
        let mut open_mode: Option<usize> = None;
        let mut t0 = 0.0;
        for (idx, seg) in self.segments.iter().enumerate() {
            let t1 = t0 + seg.duration;
            match &seg.kind {
                SegmentKind::Sleep { mode } => {
                    if open_mode != Some(*mode) {
                        if let Some(m) = open_mode {
                            events.push(mode_event(ModeEventKind::Exit, m, t0));
                        }
                        events.push(mode_event(ModeEventKind::Enter, *mode, t0));
                        open_mode = Some(*mode);
                    }
                    let current = self.modes.iter().find(|m| m.mode_index == *mode).map(|m| m.constant_current).unwrap_or(0.0);
                    push_piece(&mut pieces, t0, t1, current);
                }
                SegmentKind::Active { base, layers } => {
                    if let Some(m) = open_mode.take() {
                        events.push(mode_event(ModeEventKind::Exit, m, t0));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    let mut rects = Vec::new();
                    for l in layers {
                        l.rectangles(seg.duration, &mut rng, &mut rects);
                    }
                    overlay(&mut pieces, t0, seg.duration, *base, &rects);
                }
            }
            t0 = t1;
        }
        if let Some(m) = open_mode {
            events.push(mode_event(ModeEventKind::Exit, m, t0));
        }
        Ok(LoadProfile::from_pieces(self.source, self.modes.clone(), pieces, events))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut source = None;
        let mut modes = Vec::new();
        let mut segments = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                let tok = toks.get(i).ok_or_else(|| Error::parse(line, "missing value"))?;
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line, format!("bad number `{tok}`")))
            };
            let index = |i: usize| -> Result<usize> {
                let tok = toks.get(i).ok_or_else(|| Error::parse(line, "missing index"))?;
                tok.parse().map_err(|_| Error::parse(line, format!("bad index `{tok}`")))
            };
            match toks[0] {
                "source" => {
                    let s = match toks.get(1).copied() {
                        Some("supply") if toks.len() == 3 => Source::Supply { volts: num(2)? },
                        Some("battery") if toks.len() == 4 => Source::Battery { volts: num(2)?, resistance: num(3)? },
                        _ => return Err(Error::parse(line, "expected `source supply V` or `source battery V R`")),
                    };
                    if source.replace(s).is_some() {
                        return Err(Error::parse(line, "source given twice"));
                    }
                }
                "mode" => {
                    if toks.len() != 4 {
                        return Err(Error::parse(line, "expected `mode INDEX AMPS VOLTS`"));
                    }
                    let m = PowerSaveMode::new(index(1)?, num(2)?, num(3)?).map_err(|e| Error::parse(line, e.to_string()))?;
                    modes.push(m);
                }
                "segment" => {
                    let duration = num(1)?;
                    let kind = match toks.get(2).copied() {
                        Some("sleep") if toks.len() == 4 => SegmentKind::Sleep { mode: index(3)? },
                        Some("active") => {
                            let base = num(3)?;
                            let mut layers = Vec::new();
                            let mut i = 4;
                            while i < toks.len() {
                                match toks[i] {
                                    "spikes" => {
                                        layers.push(Layer::Spikes {
                                            amplitude: num(i + 1)?,
                                            width: num(i + 2)?,
                                            period: num(i + 3)?,
                                            phase: num(i + 4)?,
                                        });
                                        i += 5;
                                    }
                                    "bursts" => {
                                        layers.push(Layer::Bursts {
                                            min_level: num(i + 1)?,
                                            max_level: num(i + 2)?,
                                            min_width: num(i + 3)?,
                                            max_width: num(i + 4)?,
                                            rate: num(i + 5)?,
                                        });
                                        i += 6;
                                    }
                                    other => return Err(Error::parse(line, format!("unknown layer `{other}`"))),
                                }
                            }
                            SegmentKind::Active { base, layers }
                        }
                        _ => return Err(Error::parse(line, "expected `sleep MODE` or `active BASE [layers]`")),
                    };
                    segments.push(Segment { duration, kind });
                }
                other => return Err(Error::parse(line, format!("unknown directive `{other}`"))),
            }
        }
        let spec = ProfileSpec {
            source: source.ok_or(Error::Parse { line: 0, msg: "missing source line".into() })?,
            modes,
            segments,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self.source {
            Source::Supply { volts } => writeln!(out, "source supply {volts}"),
            Source::Battery { volts, resistance } => writeln!(out, "source battery {volts} {resistance}"),
        }
        .ok();
        for m in &self.modes {
            writeln!(out, "mode {} {} {}", m.mode_index, m.constant_current, m.nominal_voltage).ok();
        }
        for s in &self.segments {
            match &s.kind {
                SegmentKind::Sleep { mode } => writeln!(out, "segment {} sleep {mode}", s.duration).ok(),
                SegmentKind::Active { base, layers } => {
                    write!(out, "segment {} active {base}", s.duration).ok();
                    for l in layers {
                        match *l {
                            Layer::Spikes { amplitude, width, period, phase } => {
                                write!(out, " spikes {amplitude} {width} {period} {phase}")
                            }
                            Layer::Bursts { min_level, max_level, min_width, max_width, rate } => {
                                write!(out, " bursts {min_level} {max_level} {min_width} {max_width} {rate}")
                            }
                        }
                        .ok();
                    }
                    writeln!(out).ok()
                }
            };
        }
        out
    }
}

fn mode_event(kind: ModeEventKind, mode_index: usize, t: f64) -> PowerModeEvent {
    PowerModeEvent { kind, mode_index, timestamp: (t * 1e9).round() as u64 }
}

fn push_piece(pieces: &mut Vec<Piece>, start: f64, end: f64, current: f64) {
    if end <= start {
        return;
    }
    if let Some(last) = pieces.last_mut() {
        if last.current == current {
            last.end = end;
            return;
        }
    }
    pieces.push(Piece { start, end, current });
}

/// Current at every instant is the highest of the base and all rectangles
/// covering it.
fn overlay(pieces: &mut Vec<Piece>, offset: f64, duration: f64, base: f64, rects: &[(f64, f64, f64)]) {
    let mut cuts: Vec<f64> = Vec::with_capacity(rects.len() * 2 + 2);
    cuts.push(0.0);
    cuts.push(duration);
    for &(a, b, _) in rects {
        cuts.push(a);
        cuts.push(b);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut level = vec![base; cuts.len() - 1];
    for &(a, b, l) in rects {
        let i0 = cuts.partition_point(|&c| c < a);
        let i1 = cuts.partition_point(|&c| c < b);
        for v in &mut level[i0..i1] {
            *v = v.max(l);
        }
    }
    for (i, &l) in level.iter().enumerate() {
        push_piece(pieces, offset + cuts[i], offset + cuts[i + 1], l);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    /// Seconds.
    pub start: f64,
    pub end: f64,
    /// Amperes.
    pub current: f64,
}

/// Piecewise-constant device current behind a source with linear sag.
/// Outside `[0, duration]` the device draws nothing.
#[derive(Debug, Clone)]
pub struct LoadProfile {
    source: Source,
    modes: Vec<PowerSaveMode>,
    pieces: Vec<Piece>,
    /// Charge and squared-current integrals up to each piece start.
    cum_q: Vec<f64>,
    cum_q2: Vec<f64>,
    events: Vec<PowerModeEvent>,
}

impl LoadProfile {
    pub fn from_pieces(source: Source, modes: Vec<PowerSaveMode>, pieces: Vec<Piece>, events: Vec<PowerModeEvent>) -> Self {
        let mut cum_q = Vec::with_capacity(pieces.len() + 1);
        let mut cum_q2 = Vec::with_capacity(pieces.len() + 1);
        let (mut q, mut q2) = (0.0, 0.0);
        for p in &pieces {
            cum_q.push(q);
            cum_q2.push(q2);
            let dt = p.end - p.start;
            q += p.current * dt;
            q2 += p.current * p.current * dt;
        }
        cum_q.push(q);
        cum_q2.push(q2);
        LoadProfile { source, modes, pieces, cum_q, cum_q2, events }
    }

    /// A single constant current for `duration` seconds.
    pub fn constant(source: Source, current: f64, duration: f64) -> Self {
        Self::from_pieces(source, Vec::new(), vec![Piece { start: 0.0, end: duration, current }], Vec::new())
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn modes(&self) -> &[PowerSaveMode] {
        &self.modes
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Power-mode transitions in ns, ready for the sampler.
    pub fn mode_events(&self) -> &[PowerModeEvent] {
        &self.events
    }

    pub fn duration(&self) -> f64 {
        self.pieces.last().map(|p| p.end).unwrap_or(0.0)
    }

    fn piece_index(&self, t: f64) -> Option<usize> {
        let i = self.pieces.partition_point(|p| p.end <= t);
        (i < self.pieces.len() && self.pieces[i].start <= t).then_some(i)
    }

    pub fn current_at(&self, t: f64) -> f64 {
        self.piece_index(t).map(|i| self.pieces[i].current).unwrap_or(0.0)
    }

    pub fn voltage_at(&self, t: f64) -> f64 {
        self.source.terminal_voltage(self.current_at(t))
    }

    fn cumulative(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 || self.pieces.is_empty() {
            return (0.0, 0.0);
        }
        let i = self.pieces.partition_point(|p| p.end <= t);
        if i >= self.pieces.len() {
            return (self.cum_q[i], self.cum_q2[i]);
        }
        let p = &self.pieces[i];
        let dt = (t - p.start).max(0.0);
        (self.cum_q[i] + p.current * dt, self.cum_q2[i] + p.current * p.current * dt)
    }

    /// Coulombs drawn in `[t0, t1]`.
    pub fn charge(&self, t0: f64, t1: f64) -> f64 {
        self.cumulative(t1).0 - self.cumulative(t0).0
    }

    /// Joules delivered to the device in `[t0, t1]`, closed form.
    pub fn exact_energy(&self, t0: f64, t1: f64) -> f64 {
        let (q0, s0) = self.cumulative(t0);
        let (q1, s1) = self.cumulative(t1);
        self.source.open_circuit_volts() * (q1 - q0) - self.source.resistance() * (s1 - s0)
    }

    /// Lowest and highest current over the profile.
    pub fn current_range(&self) -> (f64, f64) {
        self.pieces.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.current), hi.max(p.current)))
    }
}

impl AnalogSource for LoadProfile {
    fn window_average(&self, t0: f64, t1: f64) -> LoadPoint {
        if t1 <= t0 {
            let i = self.current_at(t0);
            return LoadPoint { current: i, voltage: self.source.terminal_voltage(i) };
        }
        let current = self.charge(t0, t1) / (t1 - t0);
        LoadPoint { current, voltage: self.source.terminal_voltage(current) }
    }
}
