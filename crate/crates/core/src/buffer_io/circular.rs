use std::collections::VecDeque;
use std::io::Write;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};

use crate::error::{Error, Result};
use crate::sampler::TraceHeader;

use super::format::{encode_header, TraceRecord};
use super::{Backpressure, FlushEntry, WriterReport};

/// Fixed-capacity ring that overwrites its oldest entry when full. The
/// overwritten entries come back out as one gap marker in their place.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    buf: VecDeque<TraceRecord>,
    capacity: usize,
    dropped_before_front: u32,
    overwrites: u64,
}

impl RingBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("ring capacity must be at least 1".into()));
        }
        Ok(RingBuffer {
            buf: VecDeque::with_capacity(capacity),
            capacity,
            dropped_before_front: 0,
            overwrites: 0,
        })
    }

    pub fn push(&mut self, record: TraceRecord) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
            self.dropped_before_front = self.dropped_before_front.saturating_add(1);
            self.overwrites += 1;
        }
        self.buf.push_back(record);
    }

    pub fn pop(&mut self) -> Option<TraceRecord> {
        if self.dropped_before_front > 0 {
            let n = std::mem::take(&mut self.dropped_before_front);
            return Some(TraceRecord::gap(n));
        }
        self.buf.pop_front()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty() && self.dropped_before_front == 0
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    pub fn overwrites(&self) -> u64 {
        self.overwrites
    }
}

struct Shared {
    state: Mutex<(RingBuffer, bool)>,
    ready: Condvar,
    space: Condvar,
}

type Consumer<W> = JoinHandle<Result<(W, Vec<FlushEntry>, u64)>>;

/// Continuous writer: every sample goes into a locked ring and wakes the
/// writer thread, which drains whatever has accumulated. With
/// [`Backpressure::Drop`] a full ring overwrites its oldest entry.
pub struct CircularWriter<W: Write + Send + 'static> {
    shared: Arc<Shared>,
    backpressure: Backpressure,
    consumer: Option<Consumer<W>>,
}

impl<W: Write + Send + 'static> CircularWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader, capacity: usize, backpressure: Backpressure) -> Result<Self> {
        let shared = Arc::new(Shared {
            state: Mutex::new((RingBuffer::new(capacity)?, false)),
            ready: Condvar::new(),
            space: Condvar::new(),
        });
        let theirs = Arc::clone(&shared);
        let header = encode_header(header);
        let consumer = thread::Builder::new()
            .name("sample-writer".into())
            .spawn(move || -> Result<(W, Vec<FlushEntry>, u64)> {
                out.write_all(&header)?;
                let mut log = Vec::new();
                let mut written = 0u64;
                let mut bytes = Vec::new();
                loop {
                    bytes.clear();
                    let mut last = None;
                    let mut n = 0usize;
                    let closed = {
                        let mut guard = theirs.state.lock().map_err(|_| Error::Writer("ring lock poisoned".into()))?;
                        while guard.0.is_empty() && !guard.1 {
                            guard = theirs.ready.wait(guard).map_err(|_| Error::Writer("ring lock poisoned".into()))?;
                        }
                        while let Some(r) = guard.0.pop() {
                            bytes.extend_from_slice(&r.encode());
                            if !r.is_gap() {
                                last = Some(r.timestamp);
                            }
                            n += 1;
                        }
                        guard.1
                    };
                    theirs.space.notify_one();
                    if n > 0 {
                        out.write_all(&bytes)?;
                        out.flush()?;
                        written += n as u64;
                        log.push(FlushEntry { timestamp: last.unwrap_or(0), records: n });
                    }
                    if closed {
                        return Ok((out, log, written));
                    }
                }
            })?;
        Ok(CircularWriter { shared, backpressure, consumer: Some(consumer) })
    }

    pub fn push(&mut self, record: TraceRecord) -> Result<()> {
        let mut guard = self
            .shared
            .state
            .lock()
            .map_err(|_| Error::Writer("ring lock poisoned".into()))?;
        if self.backpressure == Backpressure::Wait {
            while guard.0.is_full() {
                if self.consumer.as_ref().is_some_and(|c| c.is_finished()) {
                    drop(guard);
                    return Err(self.consumer_failure());
                }
                guard = self
                    .shared
                    .space
                    .wait_timeout(guard, std::time::Duration::from_millis(50))
                    .map_err(|_| Error::Writer("ring lock poisoned".into()))?
                    .0;
            }
        }
        guard.0.push(record);
        drop(guard);
        self.shared.ready.notify_one();
        if self.consumer.as_ref().is_some_and(|c| c.is_finished()) {
            return Err(self.consumer_failure());
        }
        Ok(())
    }

    fn consumer_failure(&mut self) -> Error {
        match self.consumer.take().map(JoinHandle::join) {
            Some(Ok(Err(e))) => e,
            _ => Error::Writer("writer thread stopped".into()),
        }
    }

    pub fn finish(mut self) -> Result<WriterReport<W>> {
        let overruns = {
            let mut guard = self
                .shared
                .state
                .lock()
                .map_err(|_| Error::Writer("ring lock poisoned".into()))?;
            guard.1 = true;
            guard.0.overwrites()
        };
        self.shared.ready.notify_one();
        let consumer = self.consumer.take().ok_or_else(|| Error::Writer("writer already closed".into()))?;
        let (inner, flush_log, records_written) = consumer
            .join()
            .map_err(|_| Error::Writer("writer thread panicked".into()))??;
        Ok(WriterReport {
            inner,
            flush_log,
            records_written,
            overruns,
            dropped_samples: overruns,
        })
    }
}
