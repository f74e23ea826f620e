use std::io::Write;
use std::mem;
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread::{self, JoinHandle};

use crate::error::{Error, Result};
use crate::sampler::TraceHeader;

use super::format::{encode_header, TraceRecord};
use super::{Backpressure, FlushEntry, WriterReport};

struct Batch {
    records: Vec<TraceRecord>,
    /// Timestamp of the sample that completed the batch.
    trigger: u64,
}

type Consumer<W> = JoinHandle<Result<(W, Vec<FlushEntry>, u64)>>;

/// Batched writer: the producer fills one buffer while a writer thread
/// flushes the other. With [`Backpressure::Drop`] handing over a full buffer
/// never waits; if the writer still holds the other buffer, the full one is
/// discarded and a gap marker opens the next batch.
pub struct TwoBufferWriter<W: Write + Send + 'static> {
    capacity: usize,
    backpressure: Backpressure,
    current: Vec<TraceRecord>,
    samples_in_current: usize,
    pending_gap: u32,
    last_timestamp: u64,
    to_writer: Option<Sender<Batch>>,
    spare: Receiver<Vec<TraceRecord>>,
    consumer: Option<Consumer<W>>,
    overruns: u64,
    dropped: u64,
}

impl<W: Write + Send + 'static> TwoBufferWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader, capacity: usize, backpressure: Backpressure) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be at least 1".into()));
        }
        let (to_writer, batches) = mpsc::channel::<Batch>();
        let (give_back, spare) = mpsc::channel::<Vec<TraceRecord>>();
        // the second buffer starts out idle on the writer side
        give_back
            .send(Vec::with_capacity(capacity + 1))
            .expect("receiver alive");
        let header = encode_header(header);
        let consumer = thread::Builder::new()
            .name("sample-writer".into())
            .spawn(move || -> Result<(W, Vec<FlushEntry>, u64)> {
                out.write_all(&header)?;
                let mut log = Vec::new();
                let mut written = 0u64;
                let mut bytes = Vec::new();
                for batch in batches {
                    bytes.clear();
                    for r in &batch.records {
                        bytes.extend_from_slice(&r.encode());
                    }
                    out.write_all(&bytes)?;
                    out.flush()?;
                    written += batch.records.len() as u64;
                    log.push(FlushEntry { timestamp: batch.trigger, records: batch.records.len() });
                    // the producer may already be gone at close
                    let _ = give_back.send(batch.records);
                }
                Ok((out, log, written))
            })?;
        Ok(TwoBufferWriter {
            capacity,
            backpressure,
            current: Vec::with_capacity(capacity + 1),
            samples_in_current: 0,
            pending_gap: 0,
            last_timestamp: 0,
            to_writer: Some(to_writer),
            spare,
            consumer: Some(consumer),
            overruns: 0,
            dropped: 0,
        })
    }

    pub fn overruns(&self) -> u64 {
        self.overruns
    }

    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        if self.current.is_empty() && self.pending_gap > 0 {
            self.current.push(TraceRecord::gap(self.pending_gap));
            self.pending_gap = 0;
        }
        self.current.push(record);
        self.samples_in_current += 1;
        self.last_timestamp = record.timestamp;
        if self.samples_in_current == self.capacity {
            self.hand_off()?;
        }
        Ok(())
    }

    fn hand_off(&mut self) -> Result<()> {
        let spare = match self.backpressure {
            Backpressure::Drop => self.spare.try_recv(),
            Backpressure::Wait => self.spare.recv().map_err(|_| TryRecvError::Disconnected),
        };
        match spare {
            Ok(mut empty) => {
                empty.clear();
                let full = mem::replace(&mut self.current, empty);
                self.send(Batch { records: full, trigger: self.last_timestamp })?;
            }
            Err(TryRecvError::Empty) => {
                let carried = self.current.first().and_then(TraceRecord::dropped).unwrap_or(0);
                self.overruns += 1;
                self.dropped += self.samples_in_current as u64;
                self.pending_gap = self
                    .pending_gap
                    .saturating_add(carried)
                    .saturating_add(self.samples_in_current as u32);
                self.current.clear();
            }
            Err(TryRecvError::Disconnected) => return Err(self.consumer_failure()),
        }
        self.samples_in_current = 0;
        Ok(())
    }

    fn send(&mut self, batch: Batch) -> Result<()> {
        let ok = self.to_writer.as_ref().map(|tx| tx.send(batch).is_ok()).unwrap_or(false);
        if ok {
            Ok(())
        } else {
            Err(self.consumer_failure())
        }
    }

    fn consumer_failure(&mut self) -> Error {
        self.to_writer = None;
        match self.consumer.take().map(JoinHandle::join) {
            Some(Ok(Err(e))) => e,
            _ => Error::Writer("writer thread stopped".into()),
        }
    }

    /// Flushes the partial buffer and waits for the writer thread.
    pub fn finish(mut self) -> Result<WriterReport<W>> {
        if self.current.is_empty() && self.pending_gap > 0 {
            self.current.push(TraceRecord::gap(self.pending_gap));
            self.pending_gap = 0;
        }
        if !self.current.is_empty() {
            let rest = mem::take(&mut self.current);
            self.send(Batch { records: rest, trigger: self.last_timestamp })?;
        }
        self.to_writer = None;
        let consumer = self.consumer.take().ok_or_else(|| Error::Writer("writer already closed".into()))?;
        let (inner, flush_log, records_written) = consumer
            .join()
            .map_err(|_| Error::Writer("writer thread panicked".into()))??;
        Ok(WriterReport {
            inner,
            flush_log,
            records_written,
            overruns: self.overruns,
            dropped_samples: self.dropped,
        })
    }
}
