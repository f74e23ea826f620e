use crate::error::{Error, Result};

use super::{ModeEventKind, PowerModeEvent, PowerSaveMode, Sample, Trace};

/// Trapezoid between two consecutive samples, in joules.
pub fn compute_energy(prev: &Sample, new: &Sample) -> Result<f64> {
    if new.timestamp <= prev.timestamp {
        return Err(Error::NonMonotoneTime {
            prev: prev.timestamp,
            next: new.timestamp,
        });
    }
    let dt = (new.timestamp - prev.timestamp) as f64 * 1e-9;
    let (p0, p1) = (prev.power(), new.power());
    Ok(p1 * dt - (p1 - p0) * dt / 2.0)
}

/// Running trapezoid sum, fed one sample at a time by the sampler loop.
#[derive(Debug, Clone, Default)]
pub struct EnergyAccumulator {
    energy: f64,
    prev: Option<Sample>,
}

impl EnergyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a sample and returns the increment it contributed.
    pub fn push(&mut self, sample: &Sample) -> Result<f64> {
        let inc = match &self.prev {
            Some(prev) => compute_energy(prev, sample)?,
            None => 0.0,
        };
        self.energy += inc;
        self.prev = Some(*sample);
        Ok(inc)
    }

    /// Forgets the previous sample so the next one starts a new chain.
    pub fn break_chain(&mut self) {
        self.prev = None;
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn prev_sample(&self) -> Option<&Sample> {
        self.prev.as_ref()
    }
}

/// Plain trapezoid over every sample in order, flags ignored.
pub fn trapezoid_energy(samples: &[Sample]) -> Result<f64> {
    let mut acc = EnergyAccumulator::new();
    for s in samples {
        acc.push(s)?;
    }
    Ok(acc.energy())
}

/// One validated stretch of a power-save mode. `end` is `u64::MAX` when the
/// trace never reports the exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SleepInterval {
    pub start: u64,
    pub end: u64,
    pub mode: PowerSaveMode,
}

impl SleepInterval {
    pub fn strictly_contains(&self, t: u64) -> bool {
        self.start < t && t < self.end
    }
}

/// Pairs enter/exit events into intervals, checking they reference declared
/// modes, alternate per mode and do not overlap across modes.
pub fn sleep_intervals(events: &[PowerModeEvent], modes: &[PowerSaveMode]) -> Result<Vec<SleepInterval>> {
    let mut out: Vec<SleepInterval> = Vec::new();
    let mut open: Option<(usize, u64, PowerSaveMode)> = None;
    let mut last = 0u64;
    for (i, ev) in events.iter().enumerate() {
        if ev.timestamp < last {
            return Err(Error::Events(format!("event {i} goes back in time")));
        }
        last = ev.timestamp;
        let mode = modes
            .iter()
            .find(|m| m.mode_index == ev.mode_index)
            .copied()
            .ok_or_else(|| Error::Events(format!("event {i} references undeclared mode {}", ev.mode_index)))?;
        match (ev.kind, open) {
            (ModeEventKind::Enter, None) => open = Some((ev.mode_index, ev.timestamp, mode)),
            (ModeEventKind::Enter, Some((idx, _, _))) if idx == ev.mode_index => {
                return Err(Error::Events(format!("event {i}: mode {idx} entered twice")))
            }
            (ModeEventKind::Enter, Some((idx, _, _))) => {
                return Err(Error::Events(format!(
                    "event {i}: mode {} overlaps open mode {idx}",
                    ev.mode_index
                )))
            }
            (ModeEventKind::Exit, Some((idx, start, m))) if idx == ev.mode_index => {
                if ev.timestamp <= start {
                    return Err(Error::Events(format!("event {i}: exit not after its enter")));
                }
                out.push(SleepInterval { start, end: ev.timestamp, mode: m });
                open = None;
            }
            (ModeEventKind::Exit, _) => {
                return Err(Error::Events(format!("event {i}: exit of mode {} that is not active", ev.mode_index)))
            }
        }
    }
    if let Some((_, start, mode)) = open {
        out.push(SleepInterval { start, end: u64::MAX, mode });
    }
    Ok(out)
}

fn in_window(s: &Sample, (w0, w1): (u64, u64)) -> bool {
    s.timestamp >= w0 && s.timestamp <= w1 && !s.flags.warmup
}

fn seconds(a: u64, b: u64) -> f64 {
    b.saturating_sub(a) as f64 * 1e-9
}

/// Trapezoid over all non-warm-up samples of each window, ignoring power-save
/// events.
pub fn naive_energy(trace: &Trace) -> Result<f64> {
    let mut total = 0.0;
    for w in trace.effective_windows() {
        let mut acc = EnergyAccumulator::new();
        for s in trace.samples.iter().filter(|s| in_window(s, w)) {
            acc.push(s)?;
        }
        total += acc.energy();
    }
    Ok(total)
}

/// Measured samples where the device is awake, declared constants where it
/// sleeps.
///
/// Samples strictly inside a sleep interval are dropped. Between an awake
/// sample and the sleep interval next to it, the awake sample's power is
/// held up to the interval edge; gaps between two sleep intervals with no
/// awake sample in them use the mean of the neighbouring awake powers.
pub fn hybrid_energy(trace: &Trace, modes: &[PowerSaveMode]) -> Result<f64> {
    let intervals = sleep_intervals(&trace.mode_events, modes)?;
    let mut total = 0.0;
    for w in trace.effective_windows() {
        let clipped: Vec<SleepInterval> = intervals
            .iter()
            .filter_map(|iv| {
                let start = iv.start.max(w.0);
                let end = iv.end.min(w.1);
                (start < end).then_some(SleepInterval { start, end, mode: iv.mode })
            })
            .collect();
        for iv in &clipped {
            total += seconds(iv.start, iv.end) * iv.mode.power();
        }
        let awake: Vec<&Sample> = trace
            .samples
            .iter()
            .filter(|s| in_window(s, w) && !intervals.iter().any(|iv| iv.strictly_contains(s.timestamp)))
            .collect();
        total += awake_energy(&awake, &clipped)?;
    }
    Ok(total)
}

fn awake_energy(awake: &[&Sample], sleeps: &[SleepInterval]) -> Result<f64> {
    let (Some(first), Some(last)) = (awake.first(), awake.last()) else {
        return Ok(0.0);
    };
    let mut energy = 0.0;
    let mut k = 0;

    // sleeps before the first awake sample
    let mut prev_end = None;
    while k < sleeps.len() && sleeps[k].end <= first.timestamp {
        if let Some(e) = prev_end {
            energy += seconds(e, sleeps[k].start) * first.power();
        }
        prev_end = Some(sleeps[k].end);
        k += 1;
    }
    if let Some(e) = prev_end {
        energy += seconds(e, first.timestamp) * first.power();
    }

    for pair in awake.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let from = k;
        while k < sleeps.len() && sleeps[k].end <= b.timestamp {
            k += 1;
        }
        let between = &sleeps[from..k];
        if between.is_empty() {
            energy += compute_energy(a, b)?;
            continue;
        }
        if b.timestamp <= a.timestamp {
            return Err(Error::NonMonotoneTime {
                prev: a.timestamp,
                next: b.timestamp,
            });
        }
        energy += seconds(a.timestamp, between[0].start) * a.power();
        let mid = (a.power() + b.power()) / 2.0;
        for g in between.windows(2) {
            energy += seconds(g[0].end, g[1].start) * mid;
        }
        energy += seconds(between[between.len() - 1].end, b.timestamp) * b.power();
    }

    // sleeps after the last awake sample
    let mut cursor = last.timestamp;
    for iv in &sleeps[k..] {
        energy += seconds(cursor, iv.start) * last.power();
        cursor = iv.end;
    }
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S: u64 = 1_000_000_000;

    fn watts(t: u64, p: f64) -> Sample {
        Sample::new(t, 1.0, p)
    }

    fn ev(kind: ModeEventKind, mode_index: usize, timestamp: u64) -> PowerModeEvent {
        PowerModeEvent { kind, mode_index, timestamp }
    }

    #[test]
    fn constant_and_linear_segments() {
        assert!((compute_energy(&watts(0, 1.0), &watts(S, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((compute_energy(&watts(0, 1.0), &watts(2 * S, 3.0)).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_monotone_time() {
        assert!(matches!(
            compute_energy(&watts(10, 1.0), &watts(10, 1.0)),
            Err(Error::NonMonotoneTime { prev: 10, next: 10 })
        ));
        assert!(trapezoid_energy(&[watts(5, 1.0), watts(4, 1.0)]).is_err());
    }

    #[test]
    fn first_sample_contributes_nothing() {
        let mut acc = EnergyAccumulator::new();
        assert_eq!(acc.push(&watts(0, 5.0)).unwrap(), 0.0);
        assert_eq!(acc.energy(), 0.0);
    }

    #[test]
    fn matches_fine_riemann_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = 0u64;
        let samples: Vec<Sample> = (0..1000)
            .map(|_| {
                t += rng.gen_range(200_000..2_000_000);
                watts(t, rng.gen_range(0.0..2.0))
            })
            .collect();
        let got = trapezoid_energy(&samples).unwrap();
        // midpoint sum on a grid 1000x finer than the sample spacing
        let mut oracle = 0.0;
        for pair in samples.windows(2) {
            let dt = (pair[1].timestamp - pair[0].timestamp) as f64 * 1e-9;
            let h = dt / 1000.0;
            for k in 0..1000 {
                let frac = (k as f64 + 0.5) / 1000.0;
                oracle += (pair[0].current + (pair[1].current - pair[0].current) * frac) * h;
            }
        }
        assert!(((got - oracle) / oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn hybrid_without_events_is_trapezoid() {
        let samples: Vec<Sample> = (0..20).map(|i| watts(i * 1_000_000, (i % 3) as f64)).collect();
        let trace = Trace::from_samples(samples.clone());
        let plain = trapezoid_energy(&samples).unwrap();
        assert_eq!(hybrid_energy(&trace, &[]).unwrap(), plain);
        assert_eq!(naive_energy(&trace).unwrap(), plain);
    }

    #[test]
    fn standby_ten_seconds() {
        let mode = PowerSaveMode::new(0, 1e-6, 3.3).unwrap();
        let samples: Vec<Sample> = (0..=10).map(|i| Sample::new(i * S, 3.3, 0.0)).collect();
        let mut trace = Trace::from_samples(samples);
        trace.mode_events = vec![ev(ModeEventKind::Enter, 0, 0), ev(ModeEventKind::Exit, 0, 10 * S)];
        let e = hybrid_energy(&trace, &[mode]).unwrap();
        assert!((e - 33e-6).abs() < 1e-15, "{e}");
    }

    #[test]
    fn hold_pieces_at_sleep_edges() {
        // awake at 2 W until 1.5 s, asleep to 3.5 s, awake at 4 W after
        let mode = PowerSaveMode::new(0, 0.0, 1.0).unwrap();
        let samples: Vec<Sample> = (0..=5).map(|i| watts(i * S, if i < 2 { 2.0 } else if i < 4 { 0.0 } else { 4.0 })).collect();
        let mut trace = Trace::from_samples(samples);
        trace.mode_events = vec![
            ev(ModeEventKind::Enter, 0, 3 * S / 2),
            ev(ModeEventKind::Exit, 0, 7 * S / 2),
        ];
        // [0,1] 2 J, [1,1.5] 1 J held, [3.5,4] 2 J held, [4,5] 4 J
        let e = hybrid_energy(&trace, &[mode]).unwrap();
        assert!((e - 9.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn warmup_samples_are_skipped() {
        let mut samples: Vec<Sample> = (0..=10).map(|i| watts(i * S / 10, 1.0)).collect();
        for s in samples.iter_mut().take(5) {
            s.flags.warmup = true;
        }
        let trace = Trace::from_samples(samples);
        assert!((naive_energy(&trace).unwrap() - 0.5).abs() < 1e-12);
        assert!((hybrid_energy(&trace, &[]).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn windows_break_the_chain_and_truncate_sleep() {
        let mode = PowerSaveMode::new(0, 50e-6, 2.0).unwrap();
        let samples: Vec<Sample> = (0..=10).map(|i| watts(i * S, 1.0)).collect();
        let mut trace = Trace::from_samples(samples);
        trace.windows = vec![(0, 2 * S), (5 * S, 7 * S)];
        assert!((naive_energy(&trace).unwrap() - 4.0).abs() < 1e-12);
        // unmatched enter at 6.5 s runs to the stop edge at 7 s
        trace.mode_events = vec![ev(ModeEventKind::Enter, 0, 13 * S / 2)];
        let e = hybrid_energy(&trace, &[mode]).unwrap();
        let expect = 2.0 + 1.5 + 0.5 * 100e-6;
        assert!((e - expect).abs() < 1e-12, "{e} vs {expect}");
    }

    #[test]
    fn malformed_events_are_rejected() {
        let modes = [PowerSaveMode::new(0, 1e-6, 3.3).unwrap(), PowerSaveMode::new(1, 1e-7, 3.3).unwrap()];
        let bad = [
            vec![ev(ModeEventKind::Enter, 7, 0)],
            vec![ev(ModeEventKind::Exit, 0, 0)],
            vec![ev(ModeEventKind::Enter, 0, 0), ev(ModeEventKind::Enter, 0, 5)],
            vec![ev(ModeEventKind::Enter, 0, 0), ev(ModeEventKind::Enter, 1, 5)],
            vec![ev(ModeEventKind::Enter, 0, 5), ev(ModeEventKind::Exit, 0, 5)],
        ];
        for events in bad {
            assert!(sleep_intervals(&events, &modes).is_err(), "{events:?}");
        }
        let ok = [
            ev(ModeEventKind::Enter, 0, 0),
            ev(ModeEventKind::Exit, 0, 5),
            ev(ModeEventKind::Enter, 1, 5),
        ];
        let iv = sleep_intervals(&ok, &modes).unwrap();
        assert_eq!(iv.len(), 2);
        assert_eq!(iv[1].end, u64::MAX);
    }
}
