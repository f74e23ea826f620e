//! Persisting samples: the trace file format and the two writer strategies.

mod circular;
mod format;
mod overhead;
mod two_buffer;

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

pub use circular::{CircularWriter, RingBuffer};
pub use format::{
    decode_header, encode_header, TraceFile, TraceRecord, FORMAT_VERSION, GAP_TIMESTAMP, GAP_VOLTAGE, HEADER_LEN,
    MAGIC, RECORD_LEN,
};
pub use overhead::{OverheadModel, ScheduleSimulation, BITS_PER_SAMPLE};
pub use two_buffer::TwoBufferWriter;

use crate::error::{Error, Result};
use crate::sampler::{Sample, SampleSink, TraceHeader};

/// What the producer does when the writer falls behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backpressure {
    /// Never wait: drop data and leave a gap marker. Live sampling.
    #[default]
    Drop,
    /// Wait for the writer. Offline replay, where the producer runs faster
    /// than any real sensor.
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferPolicy {
    /// Two buffers of this many samples each.
    TwoBuffer(usize),
    /// One ring of this many records.
    Circular(usize),
}

impl BufferPolicy {
    pub fn capacity(&self) -> usize {
        match *self {
            BufferPolicy::TwoBuffer(n) | BufferPolicy::Circular(n) => n,
        }
    }
}

impl FromStr for BufferPolicy {
    type Err = Error;

    /// `two-buffer[:N]` (or `two`) or `circular[:N]`; N defaults to 1024.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, size) = match s.split_once(':') {
            Some((k, n)) => (k, n.parse().map_err(|_| Error::Config(format!("bad buffer size `{n}`")))?),
            None => (s, 1024),
        };
        if size == 0 {
            return Err(Error::Config("buffer size must be at least 1".into()));
        }
        match kind {
            "two-buffer" | "two" => Ok(BufferPolicy::TwoBuffer(size)),
            "circular" => Ok(BufferPolicy::Circular(size)),
            other => Err(Error::Config(format!("unknown buffering `{other}`"))),
        }
    }
}

/// One completed write: the timestamp of the sample that triggered it and
/// how many records went out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlushEntry {
    pub timestamp: u64,
    pub records: usize,
}

/// Lines of `<ns> flush <n_records>`.
pub fn format_flush_log(entries: &[FlushEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{} flush {}", e.timestamp, e.records);
    }
    out
}

pub fn parse_flush_log(text: &str) -> Result<Vec<FlushEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [ts, "flush", count] = toks[..] else {
            return Err(Error::parse(line_no, "expected `<ns> flush <n>`"));
        };
        let timestamp = ts.parse().map_err(|_| Error::parse(line_no, format!("bad timestamp `{ts}`")))?;
        let records = count.parse().map_err(|_| Error::parse(line_no, format!("bad count `{count}`")))?;
        if out.last().is_some_and(|p: &FlushEntry| p.timestamp > timestamp) {
            return Err(Error::parse(line_no, "flush timestamps must not decrease"));
        }
        out.push(FlushEntry { timestamp, records });
    }
    Ok(out)
}

#[derive(Debug)]
pub struct WriterReport<W> {
    pub inner: W,
    pub flush_log: Vec<FlushEntry>,
    /// Records written, gap markers included.
    pub records_written: u64,
    pub overruns: u64,
    pub dropped_samples: u64,
}

/// Either writer behind one interface.
pub enum TraceWriter<W: Write + Send + 'static> {
    TwoBuffer(TwoBufferWriter<W>),
    Circular(CircularWriter<W>),
}

impl<W: Write + Send + 'static> TraceWriter<W> {
    pub fn new(out: W, header: &TraceHeader, policy: BufferPolicy, backpressure: Backpressure) -> Result<Self> {
        Ok(match policy {
            BufferPolicy::TwoBuffer(n) => TraceWriter::TwoBuffer(TwoBufferWriter::new(out, header, n, backpressure)?),
            BufferPolicy::Circular(n) => TraceWriter::Circular(CircularWriter::new(out, header, n, backpressure)?),
        })
    }

    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        match self {
            TraceWriter::TwoBuffer(w) => w.push(record),
            TraceWriter::Circular(w) => w.push(record),
        }
    }

    pub fn finish(self) -> Result<WriterReport<W>> {
        match self {
            TraceWriter::TwoBuffer(w) => w.finish(),
            TraceWriter::Circular(w) => w.finish(),
        }
    }
}

impl<W: Write + Send + 'static> SampleSink for TraceWriter<W> {
    fn accept(&mut self, sample: &Sample) -> Result<()> {
        self.push(TraceRecord::from_sample(sample))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_parsing() {
        assert_eq!("two-buffer:4".parse::<BufferPolicy>().unwrap(), BufferPolicy::TwoBuffer(4));
        assert_eq!("circular".parse::<BufferPolicy>().unwrap(), BufferPolicy::Circular(1024));
        assert_eq!("two".parse::<BufferPolicy>().unwrap(), BufferPolicy::TwoBuffer(1024));
        assert!("circular:0".parse::<BufferPolicy>().is_err());
        assert!("triple".parse::<BufferPolicy>().is_err());
    }

    #[test]
    fn flush_log_round_trip() {
        let entries = vec![FlushEntry { timestamp: 4000, records: 4 }, FlushEntry { timestamp: 8000, records: 4 }];
        let text = format_flush_log(&entries);
        assert_eq!(text, "4000 flush 4\n8000 flush 4\n");
        assert_eq!(parse_flush_log(&text).unwrap(), entries);
        assert!(parse_flush_log("5 flush 1\n4 flush 1\n").is_err());
        assert!(parse_flush_log("5 write 1\n").is_err());
    }

    #[test]
    fn writer_as_sample_sink() {
        let mut w = TraceWriter::new(Vec::new(), &TraceHeader::default(), BufferPolicy::TwoBuffer(3), Backpressure::Wait).unwrap();
        for i in 0..7u64 {
            w.accept(&Sample::new(i * 1000, 5.0, 0.01)).unwrap();
        }
        let report = w.finish().unwrap();
        let file = TraceFile::decode(&report.inner).unwrap();
        assert_eq!(file.records.len(), 7);
        assert_eq!(file.records[6].current, 10_000);
        assert_eq!(format_flush_log(&report.flush_log), "2000 flush 3\n5000 flush 3\n6000 flush 1\n");
    }
}
