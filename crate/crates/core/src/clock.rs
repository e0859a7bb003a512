//! Deterministic discrete-event clock. Events are dequeued strictly in
//! (time, sequence) order, so identical enqueue sequences replay identically
//! and simultaneous events resolve in first-scheduled order.

use alloc::collections::BinaryHeap;
use core::cmp::{Ordering, Reverse};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    JobSubmitted,
    JobStarted,
    TrainingDone,
    UploadDone,
    DownloadDone,
    Aggregation,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::JobSubmitted => "job_submitted",
            Self::JobStarted => "job_started",
            Self::TrainingDone => "training_done",
            Self::UploadDone => "upload_done",
            Self::DownloadDone => "download_done",
            Self::Aggregation => "aggregation",
        }
    }
}

impl core::fmt::Display for EventKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Placeholder client id for events not tied to any client, such as
/// server-side aggregations in the trace.
pub const NO_CLIENT: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time_s: f64,
    /// Monotonic enqueue counter; ties in time dequeue in enqueue order.
    pub sequence: u64,
    pub kind: EventKind,
    pub client_id: usize,
    /// Client round index, or the new global version for aggregations.
    pub round: u64,
}

#[derive(Debug, Clone)]
struct QueuedEvent(SimEvent);

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.0.sequence == other.0.sequence
    }
}
impl Eq for QueuedEvent {}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .time_s
            .total_cmp(&other.0.time_s)
            .then_with(|| self.0.sequence.cmp(&other.0.sequence))
    }
}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimClock {
    now_s: f64,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_s(&self) -> f64 {
        self.now_s
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Time of the next event without dequeuing it.
    pub fn peek_time(&self) -> Option<f64> {
        self.queue.peek().map(|Reverse(q)| q.0.time_s)
    }

    /// Enqueues an event `delay_s` after the current time.
    pub fn schedule(
        &mut self,
        delay_s: f64,
        kind: EventKind,
        client_id: usize,
        round: u64,
    ) -> Result<(), Error> {
        if !(delay_s >= 0.0) || !delay_s.is_finite() {
            return Err(Error::InvalidDelay(delay_s));
        }
        let event = SimEvent {
            time_s: self.now_s + delay_s,
            sequence: self.next_sequence,
            kind,
            client_id,
            round,
        };
        self.next_sequence += 1;
        self.queue.push(Reverse(QueuedEvent(event)));
        Ok(())
    }

    /// Pops the earliest event and advances the clock to its time.
    pub fn next_event(&mut self) -> Result<SimEvent, Error> {
        let Reverse(QueuedEvent(event)) = self.queue.pop().ok_or(Error::EmptyQueue)?;
        debug_assert!(event.time_s >= self.now_s);
        self.now_s = event.time_s;
        Ok(event)
    }
}
