use crate::error::{Error, Result};
use crate::sampler::{Sample, Trace};

/// Energy of a trace with its measured voltage against the same trace with
/// the voltage replaced by its mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageEffect {
    /// Joules using each sample's own voltage.
    pub per_sample_energy: f64,
    /// Joules using the mean voltage throughout.
    pub mean_voltage_energy: f64,
    /// Volts.
    pub mean_voltage: f64,
    pub delta_percent: f64,
}

fn usable(trace: &Trace) -> Vec<Vec<&Sample>> {
    let windows = trace.effective_windows();
    windows
        .iter()
        .map(|&(a, b)| {
            trace
                .samples
                .iter()
                .filter(|s| !s.flags.warmup && s.timestamp >= a && s.timestamp <= b)
                .collect()
        })
        .collect()
}

/// Trapezoid over the non-warm-up samples of each window.
pub fn voltage_effect(trace: &Trace) -> Result<VoltageEffect> {
    let runs = usable(trace);
    let all: Vec<&Sample> = runs.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::Empty("trace"));
    }
    let mean_voltage = all.iter().map(|s| s.bus_voltage).sum::<f64>() / all.len() as f64;
    let (mut per_sample, mut mean_v) = (0.0, 0.0);
    for run in &runs {
        for pair in run.windows(2) {
            let dt = (pair[1].timestamp - pair[0].timestamp) as f64 * 1e-9;
            per_sample += 0.5 * (pair[0].power() + pair[1].power()) * dt;
            mean_v += 0.5 * mean_voltage * (pair[0].current + pair[1].current) * dt;
        }
    }
    let delta_percent = if per_sample > 0.0 {
        (mean_v - per_sample).abs() / per_sample * 100.0
    } else if mean_v == per_sample {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(VoltageEffect { per_sample_energy: per_sample, mean_voltage_energy: mean_v, mean_voltage, delta_percent })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_voltage_has_no_effect() {
        let samples = (0..100).map(|k| Sample::new(k * 1_000_000, 5.0, 0.01 * (k % 7) as f64)).collect();
        let e = voltage_effect(&Trace::from_samples(samples)).unwrap();
        assert_eq!(e.delta_percent, 0.0);
        assert_eq!(e.mean_voltage, 5.0);
    }

    #[test]
    fn three_samples_by_hand() {
        // one second apart: (4 V, 1 A), (2 V, 2 A), (3 V, 1 A)
        let samples = vec![
            Sample::new(0, 4.0, 1.0),
            Sample::new(1_000_000_000, 2.0, 2.0),
            Sample::new(2_000_000_000, 3.0, 1.0),
        ];
        let e = voltage_effect(&Trace::from_samples(samples)).unwrap();
        // powers 4, 4, 3 -> 4 + 3.5; mean voltage 3 over charge 1.5 + 1.5
        assert!((e.per_sample_energy - 7.5).abs() < 1e-12);
        assert!((e.mean_voltage_energy - 9.0).abs() < 1e-12);
        assert!((e.delta_percent - 20.0).abs() < 1e-10);
    }

    #[test]
    fn empty_trace() {
        assert!(voltage_effect(&Trace::from_samples(Vec::new())).is_err());
    }
}
