use crate::error::{Error, Result};

/// Bits per stored sample (16-byte record).
pub const BITS_PER_SAMPLE: f64 = 128.0;

/// Average power of the measuring host while it buffers samples and
/// periodically writes full buffers out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadModel {
    /// Watts while only buffering.
    pub buffering_power: f64,
    /// Watts while buffering and writing.
    pub writing_power: f64,
    /// File write speed, bits per second.
    pub write_speed: f64,
    /// Samples per second.
    pub sample_rate: f64,
    pub bits_per_sample: f64,
    /// Samples per buffer.
    pub buffer_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSimulation {
    pub average_power: f64,
    pub flushes: u64,
    /// Buffers that filled while the writer was still busy.
    pub overruns: u64,
}

impl OverheadModel {
    pub fn new(buffering_power: f64, writing_power: f64, write_speed: f64, sample_rate: f64, buffer_samples: usize) -> Self {
        OverheadModel {
            buffering_power,
            writing_power,
            write_speed,
            sample_rate,
            bits_per_sample: BITS_PER_SAMPLE,
            buffer_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |what: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::OutOfRange { what, value: v })
            }
        };
        pos("buffering power", self.buffering_power)?;
        pos("writing power", self.writing_power)?;
        pos("sample rate", self.sample_rate)?;
        pos("bits per sample", self.bits_per_sample)?;
        if self.write_speed == 0.0 {
            return Err(Error::OutOfRange { what: "write speed", value: 0.0 });
        }
        pos("write speed", self.write_speed)?;
        if self.buffer_samples == 0 {
            return Err(Error::Config("buffer must hold at least one sample".into()));
        }
        if self.writing_power < self.buffering_power {
            return Err(Error::Config("writing power below buffering power".into()));
        }
        Ok(())
    }

    /// Seconds to fill one buffer.
    pub fn buffer_time(&self) -> f64 {
        self.buffer_samples as f64 / self.sample_rate
    }

    /// Seconds to write one buffer.
    pub fn write_time(&self) -> f64 {
        self.buffer_samples as f64 * self.bits_per_sample / self.write_speed
    }

    fn check_sustainable(&self) -> Result<()> {
        let (t_b, t_w) = (self.buffer_time(), self.write_time());
        if t_w > t_b {
            return Err(Error::SustainedOverrun { t_wb: t_w, t_b });
        }
        Ok(())
    }

    /// Time-weighted average over one fill/write cycle.
    pub fn schedule_power(&self) -> Result<f64> {
        self.validate()?;
        self.check_sustainable()?;
        let (t_b, t_w) = (self.buffer_time(), self.write_time());
        // p_b (t_b - t_w)/t_b + p_wb t_w/t_b, grouped so equal powers cancel exactly
        Ok(self.buffering_power + (self.writing_power - self.buffering_power) * (t_w / t_b))
    }

    /// The same average with the buffer length cancelled out.
    pub fn closed_form_power(&self) -> Result<f64> {
        self.validate()?;
        self.check_sustainable()?;
        let extra = self.writing_power - self.buffering_power;
        Ok(self.buffering_power + self.bits_per_sample * self.sample_rate * extra / self.write_speed)
    }

    /// Replays `buffers` fill periods: each full buffer starts a write if
    /// the writer is idle, otherwise it is an overrun. Writes still running
    /// at the horizon count up to the horizon.
    pub fn simulate(&self, buffers: u64) -> Result<ScheduleSimulation> {
        self.validate()?;
        if buffers == 0 {
            return Err(Error::Config("simulate at least one buffer period".into()));
        }
        let (t_b, t_w) = (self.buffer_time(), self.write_time());
        let horizon = buffers as f64 * t_b;
        let mut writer_free_at = 0.0f64;
        let mut busy = 0.0;
        let mut flushes = 0u64;
        let mut overruns = 0u64;
        // buffer k is full at k*t_b; the one full at the horizon is flushed
        // on close and falls outside the window
        for k in 1..buffers {
            let full_at = k as f64 * t_b;
            if full_at < writer_free_at {
                overruns += 1;
                continue;
            }
            flushes += 1;
            writer_free_at = full_at + t_w;
            busy += writer_free_at.min(horizon) - full_at;
        }
        let energy = self.buffering_power * (horizon - busy) + self.writing_power * busy;
        Ok(ScheduleSimulation { average_power: energy / horizon, flushes, overruns })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_equal_powers() {
        for (w, r) in [(1e6, 1000.0), (5e7, 4000.0), (2e5, 10.0)] {
            let m = OverheadModel::new(1.26, 1.26, w, r, 1024);
            assert_eq!(m.schedule_power().unwrap(), 1.26);
            assert_eq!(m.closed_form_power().unwrap(), 1.26);
        }
    }

    #[test]
    fn infinite_write_speed_limit() {
        let m = OverheadModel::new(1.26, 2.0, 1e300, 1000.0, 64);
        assert!((m.schedule_power().unwrap() - 1.26).abs() < 1e-12);
    }

    #[test]
    fn constructed_scenario() {
        // 128 bits * 1000 sps over 256 kbit/s keeps the writer busy half the time
        let m = OverheadModel::new(1.26, 1.5, 256_000.0, 1000.0, 1024);
        assert!((m.closed_form_power().unwrap() - 1.38).abs() < 1e-12);
        assert!((m.schedule_power().unwrap() - 1.38).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let m = OverheadModel::new(1.0, 2.0, 0.0, 1000.0, 64);
        assert!(m.closed_form_power().is_err());
        let m = OverheadModel::new(1.0, 2.0, 1000.0, 1000.0, 64);
        assert!(matches!(m.schedule_power(), Err(Error::SustainedOverrun { .. })));
        let m = OverheadModel::new(2.0, 1.0, 1e6, 1000.0, 64);
        assert!(m.schedule_power().is_err());
    }

    #[test]
    fn more_samples_cost_more() {
        let a = OverheadModel::new(1.0, 1.5, 1e6, 1000.0, 64).closed_form_power().unwrap();
        let b = OverheadModel::new(1.0, 1.5, 1e6, 4000.0, 64).closed_form_power().unwrap();
        assert!(b > a);
    }

    #[test]
    fn simulation_agrees_with_closed_form() {
        for lb in [64, 1024, 65536] {
            let m = OverheadModel::new(1.26, 1.5, 256_000.0, 1000.0, lb);
            let sim = m.simulate(200).unwrap();
            let closed = m.closed_form_power().unwrap();
            assert!(((sim.average_power - closed) / closed).abs() < 0.01, "{lb}");
            assert_eq!(sim.overruns, 0);
        }
        let slow = OverheadModel::new(1.0, 2.0, 64_000.0, 1000.0, 64);
        assert!(slow.simulate(10).unwrap().overruns > 0);
    }
}
